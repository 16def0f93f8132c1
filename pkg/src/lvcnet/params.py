"""Named parameter storage and the ``LVC1`` checkpoint format.

Checkpoint layout (all integers little-endian u32)::

    b"LVC1" | count | count * (name_len | name utf-8 | rank | dims... | f32 data)
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterator

import numpy as np

from .numerics import Tensor

MAGIC = b"LVC1"


class CheckpointError(ValueError):
    pass


class ParamStore:
    """Ordered name -> array map.  Iteration order is insertion order.

    Weight-normalised convolutions contribute three entries, ``<conv>.v``,
    ``<conv>.g`` and (optionally) ``<conv>.b``.
    """

    def __init__(self, entries: dict[str, np.ndarray] | None = None):
        self._d: dict[str, np.ndarray] = {}
        for k, v in (entries or {}).items():
            self.add(k, v)

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self._d:
            raise KeyError(f"duplicate parameter name {name!r}")
        self._d[name] = np.asarray(value)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._d[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        if name not in self._d:
            raise KeyError(name)
        self._d[name] = np.asarray(value)

    def __contains__(self, name: object) -> bool:
        return name in self._d

    def __iter__(self) -> Iterator[str]:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def items(self):
        return self._d.items()

    def names(self) -> list[str]:
        return list(self._d)

    def count(self) -> int:
        return int(sum(v.size for v in self._d.values()))

    def breakdown(self, depth: int = 1) -> dict[str, int]:
        """Scalar counts grouped by the first ``depth`` dotted name components."""
        out: dict[str, int] = {}
        for name, v in self._d.items():
            key = ".".join(name.split(".")[:depth])
            out[key] = out.get(key, 0) + int(v.size)
        return out

    def astype(self, dtype) -> "ParamStore":
        return ParamStore({k: v.astype(dtype) for k, v in self._d.items()})

    def copy(self) -> "ParamStore":
        return ParamStore({k: v.copy() for k, v in self._d.items()})

    def zeros_like(self) -> "ParamStore":
        return ParamStore({k: np.zeros_like(v) for k, v in self._d.items()})

    def bind(self, requires_grad: bool = False) -> dict[str, Tensor]:
        """Wrap every array as a leaf tensor for one forward pass."""
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self._d.items()}

    def check_shapes(self, expected: "ParamStore") -> None:
        """Raise naming the first tensor whose presence or dims disagree."""
        for name, ref in expected.items():
            if name not in self._d:
                raise CheckpointError(f"checkpoint is missing tensor {name!r}")
            if self._d[name].shape != ref.shape:
                raise CheckpointError(
                    f"tensor {name!r} has shape {self._d[name].shape}, expected {ref.shape}"
                )
        for name in self._d:
            if name not in expected:
                raise CheckpointError(f"checkpoint has unexpected tensor {name!r}")


def init_wn_conv(
    store: ParamStore,
    name: str,
    out_ch: int,
    in_ch: int,
    kernel: int,
    rng: np.random.Generator,
    bias: bool = True,
    scale: float = 1.0,
) -> None:
    v = rng.standard_normal((out_ch, in_ch, kernel)) * (scale / np.sqrt(in_ch * kernel))
    store.add(f"{name}.v", v)
    store.add(f"{name}.g", np.sqrt((v * v).sum(axis=(1, 2))))
    if bias:
        store.add(f"{name}.b", np.zeros(out_ch))


def wn_conv_count(out_ch: int, in_ch: int, kernel: int, bias: bool = True) -> int:
    return out_ch * in_ch * kernel + out_ch + (out_ch if bias else 0)


def encode_checkpoint(store: ParamStore) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(store))]
    for name, arr in store.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> ParamStore:
    if buf[:4] != MAGIC:
        raise CheckpointError("not an LVC1 checkpoint (bad magic)")
    pos = 4

    def u32s(n):
        nonlocal pos
        if pos + 4 * n > len(buf):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(f"<{n}I", buf, pos)
        pos += 4 * n
        return vals

    (count,) = u32s(1)
    store = ParamStore()
    for _ in range(count):
        (nlen,) = u32s(1)
        name = buf[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = u32s(1)
        dims = u32s(rank) if rank else ()
        n = int(np.prod(dims)) if dims else 1
        if pos + 4 * n > len(buf):
            raise CheckpointError(f"truncated data for tensor {name!r}")
        arr = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(dims)
        pos += 4 * n
        store.add(name, arr.astype(np.float32))
    if pos != len(buf):
        raise CheckpointError("trailing bytes after last tensor")
    return store


def save_checkpoint(path: str | Path, store: ParamStore) -> None:
    Path(path).write_bytes(encode_checkpoint(store))


def load_checkpoint(path: str | Path) -> ParamStore:
    return decode_checkpoint(Path(path).read_bytes())
