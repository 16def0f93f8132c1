"""Location-variable convolution and its kernel predictor."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .numerics import Tensor, as_tensor, concat, conv1d, leaky_relu, sigmoid, tanh, weight_norm


def split_intervals(x: np.ndarray | Tensor, frames: int, hop: int) -> list:
    """Cut the time axis of ``x`` into ``frames`` contiguous pieces of ``hop`` samples."""
    T = x.shape[-1]
    if frames < 1 or hop < 1 or T != frames * hop:
        raise ValueError(f"time length {T} is not frames*hop = {frames}*{hop}")
    return [x[..., i * hop : (i + 1) * hop] for i in range(frames)]


@dataclass
class KernelSet:
    """Per-frame gated-convolution parameters for one LVC layer.

    Shapes (with a leading batch axis): ``wf``/``wg`` are
    (B, frames, out_ch, in_ch, kernel_size); ``bf``/``bg`` are (B, frames, out_ch).
    """

    wf: Tensor
    wg: Tensor
    bf: Tensor
    bg: Tensor

    @property
    def frames(self) -> int:
        return self.wf.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.wf.shape[-1]


@dataclass
class KernelPredictorConfig:
    cond_channels: int = 80
    hidden_channels: int = 64
    layers: int = 3
    entry_kernel: int = 5
    leaky_alpha: float = 0.1
    # (out_ch, in_ch, kernel_size) for every LVC layer served, in block order
    targets: Sequence[tuple[int, int, int]] = field(default_factory=list)

    @property
    def output_channels(self) -> int:
        return sum(2 * o * i * k + 2 * o for o, i, k in self.targets)


def predictor_param_shapes(cfg: KernelPredictorConfig, prefix: str) -> list[tuple[str, tuple]]:
    """Ordered (name, shape) list of the predictor's weight-normalised convs."""
    H, C = cfg.hidden_channels, cfg.cond_channels
    shapes: list[tuple[str, tuple]] = []

    def conv(name, co, ci, k):
        shapes.extend([(f"{name}.v", (co, ci, k)), (f"{name}.g", (co,)), (f"{name}.b", (co,))])

    conv(f"{prefix}.entry", H, C, cfg.entry_kernel)
    for j in range(cfg.layers):
        conv(f"{prefix}.res{j}", H, H, 1)
    conv(f"{prefix}.out", cfg.output_channels, H, 1)
    return shapes


def _wn_conv(params: Mapping[str, Tensor], name: str, x: Tensor, padding="same", dilation=1):
    w = weight_norm(params[f"{name}.v"], params[f"{name}.g"])
    return conv1d(x, w, params.get(f"{name}.b"), dilation, padding)


def predict_kernels(
    h: Tensor,
    cfg: KernelPredictorConfig,
    params: Mapping[str, Tensor],
    prefix: str = "pred",
) -> list[KernelSet]:
    """Map conditioning frames (B, cond, m) to one KernelSet per target layer.

    The entry convolution is unpadded, so each KernelSet carries
    ``m - entry_kernel + 1`` frames.  Output channels are carved per target
    as ``[wf, wg, bf, bg]`` in target order.
    """
    B, Cc, m = h.shape
    if Cc != cfg.cond_channels:
        raise ValueError(f"conditioning has {Cc} channels, predictor expects {cfg.cond_channels}")
    if m < cfg.entry_kernel:
        raise ValueError(
            f"conditioning of {m} frames is shorter than the entry kernel ({cfg.entry_kernel})"
        )
    a = cfg.leaky_alpha
    y = leaky_relu(_wn_conv(params, f"{prefix}.entry", h, padding="valid"), a)
    for j in range(cfg.layers):
        y = y + leaky_relu(_wn_conv(params, f"{prefix}.res{j}", y), a)
    out = _wn_conv(params, f"{prefix}.out", y)  # (B, W, F)
    F = out.shape[-1]

    sets = []
    off = 0
    for o, i, k in cfg.targets:
        n = o * i * k

        def kern(start):
            return out[:, start : start + n, :].reshape(B, o, i, k, F).transpose(0, 4, 1, 2, 3)

        def bias(start):
            return out[:, start : start + o, :].transpose(0, 2, 1)

        wf, wg = kern(off), kern(off + n)
        bf, bg = bias(off + 2 * n), bias(off + 2 * n + o)
        sets.append(KernelSet(wf, wg, bf, bg))
        off += 2 * n + 2 * o
    return sets


def lvc_conv(x: Tensor, kernels: Tensor, bias: Tensor, dilation: int, hop: int) -> Tensor:
    """Linear location-variable convolution.

    ``x`` is (B, Ci, T), ``kernels`` (B, F, Co, Ci, K), ``bias`` (B, F, Co) with
    ``T == F * hop``.  Output sample ``t`` uses kernel set ``t // hop``; taps
    read the whole zero-padded sequence, so they cross interval edges.
    """
    x = as_tensor(x)
    B, Ci, T = x.shape
    kB, F, Co, kCi, K = kernels.shape
    if kCi != Ci or kB != B:
        raise ValueError(f"kernel shape {kernels.shape} incompatible with input {x.shape}")
    if K % 2 == 0:
        raise ValueError("location-variable convolution needs an odd kernel size")
    if T != F * hop:
        raise ValueError(f"input length {T} != frames*hop = {F}*{hop}")
    pad = (K - 1) * dilation // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad))) if pad else x.data
    # patches[b, f, i*K + k, s] = xp[b, i, f*hop + s + k*dilation]
    taps = np.stack([xp[:, :, k * dilation : k * dilation + T] for k in range(K)], axis=2)
    patches = taps.reshape(B, Ci * K, F, hop).transpose(0, 2, 1, 3)
    wmat = np.ascontiguousarray(kernels.data).reshape(B, F, Co, Ci * K)
    out = np.matmul(wmat, patches)
    out += bias.data[..., None]
    y = out.transpose(0, 2, 1, 3).reshape(B, Co, T)

    def bw(g):
        gr = g.reshape(B, Co, F, hop).transpose(0, 2, 1, 3)
        dw = np.matmul(gr, patches.transpose(0, 1, 3, 2)).reshape(kernels.shape)
        db = gr.sum(axis=-1)
        dp = np.matmul(wmat.transpose(0, 1, 3, 2), gr)
        dtaps = dp.transpose(0, 2, 1, 3).reshape(B, Ci, K, T)
        dxp = np.zeros_like(xp)
        for k in range(K):
            dxp[:, :, k * dilation : k * dilation + T] += dtaps[:, :, k]
        dx = dxp[:, :, pad : pad + T] if pad else dxp
        return dx, dw, db

    return Tensor._make(y, (x, kernels, bias), bw, "lvc_conv")


def lvc_forward(x: Tensor, kernels: KernelSet, dilation: int, hop: int) -> Tensor:
    """Gated LVC layer: ``tanh(Wf*x + bf) * sigmoid(Wg*x + bg)`` per interval."""
    x = as_tensor(x)
    co = kernels.wf.shape[2]
    w = concat([kernels.wf, kernels.wg], axis=2)
    b = concat([kernels.bf, kernels.bg], axis=2)
    a = lvc_conv(x, w, b, dilation, hop)
    return tanh(a[:, :co]) * sigmoid(a[:, co:])
