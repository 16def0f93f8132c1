"""Location-variable convolution (LVC) vocoder engine.

Modules: ``numerics`` (tape autodiff, convolutions), ``lvc`` (kernel
predictor and LVC layer), ``generator`` (LVCNet and the Parallel WaveGAN
baseline), ``audio`` (WAV, STFT, log-mel), ``training`` (losses,
discriminator, toy training), ``bench`` and ``cli``.
"""

from .generator import (
    GeneratorConfig,
    PWGConfig,
    count_params,
    generator_forward,
    init_params,
    receptive_field,
)
from .lvc import KernelPredictorConfig, KernelSet, lvc_forward, predict_kernels, split_intervals
from .params import ParamStore, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
