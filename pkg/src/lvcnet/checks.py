"""Standard gradient-check problems, shared by the CLI and the test suite.

Each problem draws its inputs from a fixed seed, contracts the op output
with a fixed random tensor to get a scalar, and returns the worst relative
error from :func:`numerics.grad_check` (64-bit, eps = 1e-5).
"""

from __future__ import annotations

import numpy as np

from .generator import GeneratorConfig, generator_forward, init_params
from .lvc import KernelPredictorConfig, KernelSet, lvc_forward, predict_kernels
from .lvc import predictor_param_shapes
from .numerics import conv1d, grad_check, mul, tsum, weight_norm
from .training import (
    DiscriminatorConfig,
    StftLossConfig,
    discriminator_forward,
    gan_losses,
    init_discriminator,
    multires_stft_loss,
)

TINY_GENERATOR = GeneratorConfig(
    blocks=2,
    layers_per_block=3,
    residual_channels=2,
    cond_channels=4,
    hop=64,
    predictor_hidden=6,
)


def _proj(y, r):
    return tsum(mul(y, r))


def check_linear(seed: int = 0) -> float:
    """1x1 convolution on small positive integers.

    With a power-of-two step every perturbed value, product and sum is exact,
    so the central difference reproduces the gradient to the last bit.
    """
    rng = np.random.default_rng(seed)
    r = rng.integers(1, 4, (2, 3, 16)).astype(float)
    inputs = {
        "x": rng.integers(1, 4, (2, 4, 16)).astype(float),
        "w": rng.integers(1, 4, (3, 4, 1)).astype(float),
    }
    return grad_check(lambda P: _proj(conv1d(P["x"], P["w"]), r), inputs, eps=2.0**-16)


def check_conv1d(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((2, 4, 32))
    inputs = {
        "x": rng.standard_normal((2, 3, 32)),
        "v": rng.standard_normal((4, 3, 3)),
        "g": rng.uniform(0.5, 1.5, 4),
        "b": rng.standard_normal(4),
    }

    def f(P):
        return _proj(conv1d(P["x"], weight_norm(P["v"], P["g"]), P["b"], dilation=4), r)

    return grad_check(f, inputs)


def check_lvc(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    B, C, F, hop, K = 1, 3, 4, 8, 3
    r = rng.standard_normal((B, C, F * hop))
    inputs = {
        "x": rng.standard_normal((B, C, F * hop)),
        "wf": 0.5 * rng.standard_normal((B, F, C, C, K)),
        "wg": 0.5 * rng.standard_normal((B, F, C, C, K)),
        "bf": rng.standard_normal((B, F, C)),
        "bg": rng.standard_normal((B, F, C)),
    }

    def f(P):
        ks = KernelSet(P["wf"], P["wg"], P["bf"], P["bg"])
        return _proj(lvc_forward(P["x"], ks, dilation=3, hop=hop), r)

    return grad_check(f, inputs)


def check_predictor(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    cfg = KernelPredictorConfig(cond_channels=4, hidden_channels=5, layers=2, targets=[(2, 2, 3)] * 2)
    m = 9
    inputs = {"h": rng.standard_normal((1, 4, m))}
    for name, shape in predictor_param_shapes(cfg, "pred"):
        inputs[name] = rng.standard_normal(shape) * (0.5 if name.endswith(".b") else 1.0)
        if name.endswith(".g"):
            inputs[name] = rng.uniform(0.5, 1.5, shape)
    frames = m - cfg.entry_kernel + 1
    hop = 4
    x = rng.standard_normal((1, 2, frames * hop))
    r = rng.standard_normal((1, 2, frames * hop))

    def f(P):
        y = x
        for d, ks in zip((1, 2), predict_kernels(P["h"], cfg, P, prefix="pred")):
            y = lvc_forward(y, ks, d, hop)
        return _proj(y, r)

    return grad_check(f, inputs, max_entries=12)


def check_generator_tiny(seed: int = 0, max_entries: int = 4) -> float:
    """Tiny LVCNet (2 blocks x 3 layers, 2 channels) on a 1x1x512 input."""
    cfg = TINY_GENERATOR
    rng = np.random.default_rng(seed)
    params = init_params(cfg, seed)
    m = 512 // cfg.hop + cfg.context_frames
    mel = rng.standard_normal((1, cfg.cond_channels, m))
    noise = rng.standard_normal((1, 1, 512))
    r = rng.standard_normal((1, 1, 512))
    inputs = dict(params.items())
    inputs["noise"] = noise
    inputs["mel"] = mel

    def f(P):
        return _proj(generator_forward(P["noise"], P["mel"], P, cfg), r)

    return grad_check(f, inputs, max_entries=max_entries, seed=seed)


def check_discriminator(seed: int = 0) -> float:
    cfg = DiscriminatorConfig(layers=4, channels=3)
    rng = np.random.default_rng(seed)
    inputs = dict(init_discriminator(cfg, seed).items())
    for k in inputs:
        if k.endswith(".b"):
            inputs[k] = 0.1 * rng.standard_normal(inputs[k].shape)
    inputs["x"] = rng.standard_normal((1, 1, 64))
    r = rng.standard_normal((1, 1, 64))
    return grad_check(lambda P: _proj(discriminator_forward(P["x"], P, cfg), r), inputs, max_entries=10)


SMALL_STFT = StftLossConfig(resolutions=((64, 16, 48), (32, 8, 24)))


def check_stft_loss(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    inputs = {"y": rng.standard_normal((1, 1, 96)), "y_hat": rng.standard_normal((1, 1, 96))}

    def sc(P):
        return multires_stft_loss(P["y"], P["y_hat"], SMALL_STFT)[0]

    def mag(P):
        return multires_stft_loss(P["y"], P["y_hat"], SMALL_STFT)[1]

    return max(grad_check(sc, inputs, max_entries=24), grad_check(mag, inputs, max_entries=24))


def check_gan_loss(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    inputs = {"real": rng.standard_normal((1, 1, 20)), "fake": rng.standard_normal((1, 1, 20))}
    d = grad_check(lambda P: gan_losses(P["real"], P["fake"])[0], inputs)
    g = grad_check(lambda P: gan_losses(P["real"], P["fake"])[1], inputs, names=["fake"])
    return max(d, g)


CHECKS = {
    "linear-only": check_linear,
    "conv1d": check_conv1d,
    "lvc": check_lvc,
    "predictor": check_predictor,
    "generator-tiny": check_generator_tiny,
    "discriminator": check_discriminator,
    "stft-loss": check_stft_loss,
    "gan-loss": check_gan_loss,
}
