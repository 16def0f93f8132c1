"""Minimal reverse-mode tensor core.

Every op builds its output eagerly and, when any input requires a gradient,
records a closure that maps the output adjoint back to its inputs.  The
tape is rebuilt on every forward pass (define-by-run) and walked once in
reverse topological order by :func:`backward`.

Arrays are laid out (batch, channels, time) with time contiguous.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

DTYPES = {"float32": np.float32, "float64": np.float64}


class Tensor:
    """A value plus its adjoint and the op that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        data = np.asarray(data)
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float64)
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    # -- construction ----------------------------------------------------
    @staticmethod
    def _make(data, parents: Sequence["Tensor"], backward, op: str) -> "Tensor":
        out = Tensor(data, op=op)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op!r})"

    # -- operators -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    # Tensor() keeps float32/float64 and promotes anything else to float64
    return Tensor(np.asarray(x, dtype=dtype))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    # scalars adopt the dtype of the tensor operand
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def check_finite(x: Tensor | np.ndarray, what: str = "tensor") -> None:
    data = x.data if isinstance(x, Tensor) else x
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values in {what}")


# -- elementwise -----------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data
    return Tensor._make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor._make(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    # tanh form avoids exp overflow for large |x|
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return Tensor._make(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def leaky_relu(x: Tensor, alpha: float) -> Tensor:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"leaky_relu alpha must lie in (0, 1), got {alpha}")
    pos = x.data > 0
    slope = np.where(pos, 1.0, alpha).astype(x.dtype)
    return Tensor._make(x.data * slope, (x,), lambda g: (g * slope,), "leaky_relu")


def relu(x: Tensor) -> Tensor:
    mask = (x.data > 0).astype(x.dtype)
    return Tensor._make(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def square(x: Tensor) -> Tensor:
    return Tensor._make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    return Tensor._make(y, (x,), lambda g: (0.5 * g / y,), "sqrt")


def log(x: Tensor) -> Tensor:
    return Tensor._make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def absolute(x: Tensor) -> Tensor:
    return Tensor._make(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


def l2norm(x: Tensor) -> Tensor:
    """Euclidean norm over all entries; the gradient at zero is taken as zero."""
    n = np.sqrt((x.data * x.data).sum())

    def bw(g):
        if n == 0:
            return (np.zeros_like(x.data),)
        return (g * x.data / n,)

    return Tensor._make(np.asarray(n, dtype=x.dtype), (x,), bw, "l2norm")


def clamp_min(x: Tensor, floor: float) -> Tensor:
    keep = x.data > floor
    return Tensor._make(
        np.where(keep, x.data, floor).astype(x.dtype), (x,), lambda g: (g * keep,), "clamp_min"
    )


def pointwise(x: Tensor, f: str, alpha: float = 0.1) -> Tensor:
    """Dispatch by name: ``tanh``, ``sigmoid`` or ``leaky_relu``."""
    if f == "tanh":
        return tanh(x)
    if f == "sigmoid":
        return sigmoid(x)
    if f == "leaky_relu":
        return leaky_relu(x, alpha)
    raise ValueError(f"unknown pointwise function {f!r}")


# -- reductions and shape ops ----------------------------------------------
def tsum(x: Tensor, axis=None) -> Tensor:
    out = x.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return Tensor._make(np.asarray(out), (x,), bw, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis) * (1.0 / float(n))


def reshape(x: Tensor, shape) -> Tensor:
    return Tensor._make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return Tensor._make(
        x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),), "transpose"
    )


def getitem(x: Tensor, idx) -> Tensor:
    def bw(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        return (full,)

    return Tensor._make(x.data[idx], (x,), bw, "getitem")


def concat(xs: Sequence[Tensor], axis: int) -> Tensor:
    sizes = [t.shape[axis] for t in xs]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return Tensor._make(np.concatenate([t.data for t in xs], axis=axis), tuple(xs), bw, "concat")


def repeat_time(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbour upsampling along the last axis."""
    out = np.repeat(x.data, factor, axis=-1)

    def bw(g):
        return (g.reshape(*x.shape, factor).sum(axis=-1),)

    return Tensor._make(out, (x,), bw, "repeat_time")


# -- convolution -----------------------------------------------------------
def weight_norm(v: Tensor, g: Tensor) -> Tensor:
    """Effective weight ``g * v / ||v||`` with the norm taken per output channel."""
    axes = tuple(range(1, v.ndim))
    norm = np.sqrt((v.data * v.data).sum(axis=axes, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    gb = g.data.reshape((-1,) + (1,) * (v.ndim - 1))
    w = gb * v.data / safe

    def bw(G):
        dot = (G * v.data).sum(axis=axes, keepdims=True)
        dg = (dot / safe).reshape(g.shape)
        dv = gb / safe * (G - dot / (safe * safe) * v.data)
        return dv, dg

    return Tensor._make(w, (v, g), bw, "weight_norm")


def conv_output_length(length: int, kernel_size: int, dilation: int, padding: str) -> int:
    if padding == "same":
        return length
    return length - (kernel_size - 1) * dilation


def conv1d(
    x: Tensor,
    w: Tensor,
    bias: Tensor | None = None,
    dilation: int = 1,
    padding: str = "same",
) -> Tensor:
    """Dilated 1-D convolution of ``x`` (B, Ci, T) with ``w`` (Co, Ci, K).

    ``padding="same"`` zero-pads ``(K-1)*dilation/2`` samples per side and
    needs an odd kernel; ``"valid"`` pads nothing.
    """
    B, Ci, T = x.shape
    Co, wCi, K = w.shape
    if wCi != Ci:
        raise ValueError(f"conv1d channel mismatch: input has {Ci}, weight expects {wCi}")
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    if T == 0:
        raise ValueError("conv1d on empty time axis")
    if padding == "same":
        if K % 2 == 0:
            raise ValueError("same padding needs an odd kernel size")
        pad = (K - 1) * dilation // 2
    elif padding == "valid":
        pad = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    To = T + 2 * pad - (K - 1) * dilation
    if To <= 0:
        raise ValueError(f"input of length {T} too short for kernel {K} at dilation {dilation}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad))) if pad else x.data
    # per-tap weight matrices must be contiguous to stay on the BLAS fast path
    taps = np.ascontiguousarray(w.data.transpose(2, 0, 1))
    out = np.empty((B, Co, To), dtype=np.result_type(x.data, w.data))
    for b in range(B):
        np.matmul(taps[0], xp[b, :, 0:To], out=out[b])
        for k in range(1, K):
            s = k * dilation
            out[b] += taps[k] @ xp[b, :, s : s + To]
    if bias is not None:
        out += bias.data[:, None]

    def bw(g):
        dxp = np.zeros_like(xp)
        dtaps = np.zeros_like(taps)
        for b in range(B):
            for k in range(K):
                s = k * dilation
                dtaps[k] += g[b] @ xp[b, :, s : s + To].T
                dxp[b, :, s : s + To] += taps[k].T @ g[b]
        dw = dtaps.transpose(1, 2, 0)
        dx = dxp[:, :, pad : pad + T] if pad else dxp
        grads = [dx, dw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return grads

    parents = (x, w) if bias is None else (x, w, bias)
    return Tensor._make(out, parents, bw, "conv1d")


@dataclass
class ConvWeight:
    """Weight-normalised convolution parameters."""

    v: Tensor
    g: Tensor
    bias: Tensor | None = None
    dilation: int = 1

    def weight(self) -> Tensor:
        return weight_norm(self.v, self.g)

    def __call__(self, x: Tensor, padding: str = "same") -> Tensor:
        return conv1d(x, self.weight(), self.bias, self.dilation, padding)


# -- backward --------------------------------------------------------------
def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        key = id(node)
        if expanded:
            state[key] = 2
            order.append(node)
            continue
        if state.get(key) == 2:
            continue
        assert state.get(key) != 1, "cycle in provenance graph"
        state[key] = 1
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and state.get(id(p)) != 2:
                stack.append((p, False))
    return order


def backward(loss: Tensor, seed: np.ndarray | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring grad.

    ``loss`` must be scalar unless ``seed`` supplies the output adjoint.
    """
    if seed is None:
        if loss.data.size != 1:
            raise ValueError("backward() needs a scalar loss or an explicit seed")
        seed = np.ones_like(loss.data)
    if not loss.requires_grad:
        return
    order = _topological(loss)
    adj: dict[int, np.ndarray] = {id(loss): np.asarray(seed, dtype=loss.dtype)}
    for node in reversed(order):
        g = adj.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for p, gp in zip(node._parents, node._backward(g)):
            if gp is None or not p.requires_grad:
                continue
            k = id(p)
            if k in adj:
                adj[k] = adj[k] + gp
            else:
                adj[k] = gp


def gradients(loss: Tensor, leaves: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Run :func:`backward` and return a name -> gradient map for ``leaves``."""
    for t in leaves.values():
        t.grad = None
    backward(loss)
    return {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in leaves.items()
    }


# -- gradient checking -----------------------------------------------------
def grad_check(
    fn: Callable[[Mapping[str, Tensor]], Tensor],
    inputs: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
    names: Iterable[str] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` receives a dict of leaf tensors and returns a scalar.  With
    ``max_entries`` set, each input is checked on a random subset of that
    many entries.  Error per entry is
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    arrays = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    leaves = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    analytic = gradients(fn(leaves), leaves)
    check = list(names) if names is not None else list(arrays)
    rng = np.random.default_rng(seed)

    def value() -> float:
        return float(fn({k: Tensor(v) for k, v in arrays.items()}).data)

    worst = 0.0
    for name in check:
        arr = arrays[name]
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        ga = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = value()
            flat[i] = orig - eps
            fm = value()
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            a = ga[i]
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
