"""LVCNet waveform generator and the Parallel WaveGAN baseline generator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .lvc import KernelPredictorConfig, lvc_forward, predict_kernels, predictor_param_shapes
from .numerics import (
    Tensor,
    check_finite,
    conv1d,
    relu,
    repeat_time,
    sigmoid,
    tanh,
    weight_norm,
)
from .params import ParamStore, init_wn_conv, wn_conv_count


@dataclass(frozen=True)
class GeneratorConfig:
    """LVCNet hyperparameters.  Layer ``j`` of every block uses dilation ``dilation_base**j``."""

    blocks: int = 3
    layers_per_block: int = 10
    residual_channels: int = 8
    kernel_size: int = 3
    dilation_base: int = 2
    cond_channels: int = 80
    hop: int = 256
    first_block_residual: bool = False
    predictor_hidden: int = 64
    predictor_layers: int = 3
    predictor_entry_kernel: int = 5
    leaky_alpha: float = 0.1

    @property
    def dilations(self) -> list[int]:
        return [self.dilation_base**j for j in range(self.layers_per_block)]

    @property
    def context_frames(self) -> int:
        return self.predictor_entry_kernel - 1

    def predictor_config(self) -> KernelPredictorConfig:
        c, k = self.residual_channels, self.kernel_size
        return KernelPredictorConfig(
            cond_channels=self.cond_channels,
            hidden_channels=self.predictor_hidden,
            layers=self.predictor_layers,
            entry_kernel=self.predictor_entry_kernel,
            leaky_alpha=self.leaky_alpha,
            targets=[(c, c, k)] * self.layers_per_block,
        )


@dataclass(frozen=True)
class PWGConfig:
    """Parallel WaveGAN generator: WaveNet-style non-causal stack with skip connections."""

    residual_channels: int = 64
    layers: int = 30
    stacks: int = 3
    kernel_size: int = 3
    cond_channels: int = 80
    hop: int = 256
    upsample_scales: tuple[int, ...] = (4, 4, 4, 4)
    aux_context_window: int = 2

    @property
    def gate_channels(self) -> int:
        return 2 * self.residual_channels

    @property
    def skip_channels(self) -> int:
        return self.residual_channels

    @property
    def dilations(self) -> list[int]:
        per = self.layers // self.stacks
        return [2 ** (j % per) for j in range(self.layers)]

    @property
    def context_frames(self) -> int:
        return 2 * self.aux_context_window


def lvcnet_config(width: int, **kw) -> GeneratorConfig:
    return GeneratorConfig(residual_channels=width, **kw)


def pwg_config(width: int, **kw) -> PWGConfig:
    return PWGConfig(residual_channels=width, **kw)


# -- parameters ------------------------------------------------------------
def init_params(cfg: GeneratorConfig | PWGConfig, seed: int = 0) -> ParamStore:
    """Deterministic random initialisation (float64)."""
    rng = np.random.default_rng(seed)
    store = ParamStore()
    if isinstance(cfg, PWGConfig):
        _init_pwg(store, cfg, rng)
        return store
    C = cfg.residual_channels
    init_wn_conv(store, "entry", C, 1, 1, rng)
    pcfg = cfg.predictor_config()
    for b in range(cfg.blocks):
        p = f"block{b}.pred"
        init_wn_conv(store, f"{p}.entry", pcfg.hidden_channels, pcfg.cond_channels, pcfg.entry_kernel, rng)
        for j in range(pcfg.layers):
            init_wn_conv(store, f"{p}.res{j}", pcfg.hidden_channels, pcfg.hidden_channels, 1, rng)
        # small output scale keeps predicted kernels away from tanh saturation at init
        init_wn_conv(store, f"{p}.out", pcfg.output_channels, pcfg.hidden_channels, 1, rng, scale=0.5)
    init_wn_conv(store, "exit", 1, C, 1, rng)
    return store


def _init_pwg(store: ParamStore, cfg: PWGConfig, rng: np.random.Generator) -> None:
    A = cfg.cond_channels
    R, G, S = cfg.residual_channels, cfg.gate_channels, cfg.skip_channels
    init_wn_conv(store, "upsample.conv_in", A, A, 2 * cfg.aux_context_window + 1, rng, bias=False)
    for i, s in enumerate(cfg.upsample_scales):
        v = np.full((1, 1, 2 * s + 1), 1.0 / (2 * s + 1))
        store.add(f"upsample.stage{i}.v", v)
        store.add(f"upsample.stage{i}.g", np.sqrt((v * v).sum(axis=(1, 2))))
    init_wn_conv(store, "first", R, 1, 1, rng)
    for j in range(cfg.layers):
        p = f"layer{j}"
        init_wn_conv(store, f"{p}.conv", G, R, cfg.kernel_size, rng)
        init_wn_conv(store, f"{p}.aux", G, A, 1, rng, bias=False)
        init_wn_conv(store, f"{p}.out", R, G // 2, 1, rng)
        init_wn_conv(store, f"{p}.skip", S, G // 2, 1, rng)
    init_wn_conv(store, "last1", S, S, 1, rng)
    init_wn_conv(store, "last2", 1, S, 1, rng)


def param_breakdown(cfg: GeneratorConfig | PWGConfig) -> dict[str, int]:
    """Closed-form scalar counts per top-level module."""
    if isinstance(cfg, PWGConfig):
        A = cfg.cond_channels
        R, G, S = cfg.residual_channels, cfg.gate_channels, cfg.skip_channels
        layer = (
            wn_conv_count(G, R, cfg.kernel_size)
            + wn_conv_count(G, A, 1, bias=False)
            + wn_conv_count(R, G // 2, 1)
            + wn_conv_count(S, G // 2, 1)
        )
        out = {
            "upsample": wn_conv_count(A, A, 2 * cfg.aux_context_window + 1, bias=False)
            + sum(wn_conv_count(1, 1, 2 * s + 1, bias=False) for s in cfg.upsample_scales),
            "first": wn_conv_count(R, 1, 1),
        }
        out.update({f"layer{j}": layer for j in range(cfg.layers)})
        out["last1"] = wn_conv_count(S, S, 1)
        out["last2"] = wn_conv_count(1, S, 1)
        return out
    C = cfg.residual_channels
    pcfg = cfg.predictor_config()
    H = pcfg.hidden_channels
    predictor = (
        wn_conv_count(H, pcfg.cond_channels, pcfg.entry_kernel)
        + pcfg.layers * wn_conv_count(H, H, 1)
        + wn_conv_count(pcfg.output_channels, H, 1)
    )
    out = {"entry": wn_conv_count(C, 1, 1)}
    out.update({f"block{b}": predictor for b in range(cfg.blocks)})
    out["exit"] = wn_conv_count(1, C, 1)
    return out


def count_params(cfg: GeneratorConfig | PWGConfig) -> int:
    return sum(param_breakdown(cfg).values())


def receptive_field(cfg: GeneratorConfig | PWGConfig) -> int:
    """One-sided radius, in samples, of the waveform-to-waveform dependency."""
    half = (cfg.kernel_size - 1) // 2
    if isinstance(cfg, PWGConfig):
        return sum(half * d for d in cfg.dilations)
    return cfg.blocks * sum(half * d for d in cfg.dilations)


# -- forward passes --------------------------------------------------------
def _conv(params: Mapping[str, Tensor], name: str, x: Tensor, dilation=1, padding="same"):
    w = weight_norm(params[f"{name}.v"], params[f"{name}.g"])
    return conv1d(x, w, params.get(f"{name}.b"), dilation, padding)


def lvcnet_block(
    x: Tensor,
    h: Tensor,
    params: Mapping[str, Tensor],
    block_idx: int,
    cfg: GeneratorConfig,
) -> Tensor:
    kernels = predict_kernels(h, cfg.predictor_config(), params, prefix=f"block{block_idx}.pred")
    frames = kernels[0].frames
    if x.shape[-1] != frames * cfg.hop:
        raise ValueError(
            f"block input has {x.shape[-1]} samples but kernels cover {frames}*{cfg.hop}"
        )
    y = x
    for ks, d in zip(kernels, cfg.dilations):
        y = lvc_forward(y, ks, d, cfg.hop)
    if block_idx > 0 or cfg.first_block_residual:
        y = x + y
    return y


def _as_input(a, dtype) -> Tensor:
    if isinstance(a, Tensor):
        return a
    return Tensor(np.asarray(a, dtype=dtype))


def generator_forward(noise, mel, params: Mapping[str, Tensor], cfg: GeneratorConfig) -> Tensor:
    """Noise (B, 1, T) and mel (B, cond, m) to waveform (B, 1, T), ``T == (m-4)*hop``."""
    dtype = next(iter(params.values())).dtype
    noise, mel = _as_input(noise, dtype), _as_input(mel, dtype)
    m = mel.shape[-1]
    if m < cfg.predictor_entry_kernel:
        raise ValueError(f"need at least {cfg.predictor_entry_kernel} mel frames, got {m}")
    expected = (m - cfg.context_frames) * cfg.hop
    if noise.shape[-1] != expected:
        raise ValueError(
            f"alignment violation: noise has {noise.shape[-1]} samples, "
            f"expected ({m}-{cfg.context_frames})*{cfg.hop} = {expected}"
        )
    check_finite(noise, "noise")
    check_finite(mel, "mel")
    x = _conv(params, "entry", noise)
    for b in range(cfg.blocks):
        x = lvcnet_block(x, mel, params, b, cfg)
    return tanh(_conv(params, "exit", x))


def upsample_conditioning(mel, params: Mapping[str, Tensor], cfg: PWGConfig) -> Tensor:
    """(B, cond, m) mel to (B, cond, (m-4)*hop) sample-rate conditioning."""
    dtype = next(iter(params.values())).dtype
    mel = _as_input(mel, dtype)
    c = _conv(params, "upsample.conv_in", mel, padding="valid")
    B, A, F = c.shape
    c = c.reshape(B * A, 1, F)
    for i, s in enumerate(cfg.upsample_scales):
        c = _conv(params, f"upsample.stage{i}", repeat_time(c, s))
    return c.reshape(B, A, c.shape[-1])


def baseline_pwg_generator(noise, mel_upsampled, params: Mapping[str, Tensor], cfg: PWGConfig) -> Tensor:
    dtype = next(iter(params.values())).dtype
    x, c = _as_input(noise, dtype), _as_input(mel_upsampled, dtype)
    if x.shape[-1] != c.shape[-1]:
        raise ValueError(
            f"noise length {x.shape[-1]} != upsampled conditioning length {c.shape[-1]}"
        )
    half = cfg.gate_channels // 2
    x = _conv(params, "first", x)
    skips = None
    for j, d in enumerate(cfg.dilations):
        p = f"layer{j}"
        a = _conv(params, f"{p}.conv", x, dilation=d) + _conv(params, f"{p}.aux", c)
        z = tanh(a[:, :half]) * sigmoid(a[:, half:])
        s = _conv(params, f"{p}.skip", z)
        skips = s if skips is None else skips + s
        x = (_conv(params, f"{p}.out", z) + x) * math.sqrt(0.5)
    y = relu(skips * math.sqrt(1.0 / cfg.layers))
    y = relu(_conv(params, "last1", y))
    return _conv(params, "last2", y)


def pwg_forward(noise, mel, params: Mapping[str, Tensor], cfg: PWGConfig) -> Tensor:
    c = upsample_conditioning(mel, params, cfg)
    return baseline_pwg_generator(noise, c, params, cfg)


def synthesize(noise, mel, params: Mapping[str, Tensor], cfg: GeneratorConfig | PWGConfig) -> Tensor:
    if isinstance(cfg, PWGConfig):
        return pwg_forward(noise, mel, params, cfg)
    return generator_forward(noise, mel, params, cfg)
