"""Minimal fp64 tensor substrate with a reverse-mode tape.

Covers exactly what the network needs: dense matmul, sparse-dense
products, elementwise ops, column concat, reductions, Adam, and a
versioned checkpoint container. A Tape plus its Tensors form one
single-threaded unit of work.
"""
from __future__ import annotations

import math
from typing import Dict, Iterable, List, Optional, Union

import numpy as np
import scipy.sparse as sp

from .sparse import SparseMatrix

CHECK_FINITE = False  # debug switch: verify op outputs are finite

_ACTIVE_TAPE: Optional["Tape"] = None


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None):
        self.value = np.asarray(value, dtype=np.float64)
        if CHECK_FINITE and not np.all(np.isfinite(self.value)):
            raise FloatingPointError(f"non-finite tensor {name or ''}")
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of backward closures, replayed in reverse."""

    def __init__(self):
        self._records: List = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise TapeError("nested tapes are not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def record(self, fn) -> None:
        self._records.append(fn)

    def backward(self, loss: Tensor) -> None:
        if not self._records:
            raise TapeError("backward called before any recorded forward op")
        if loss.value.size != 1:
            raise TapeError("backward requires a scalar loss")
        loss.grad = np.ones_like(loss.value)
        for fn in reversed(self._records):
            fn()


def _record(fn) -> None:
    if _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE.record(fn)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _out(value, *parents: Tensor) -> Tensor:
    t = Tensor(value, requires_grad=any(p.requires_grad for p in parents))
    if CHECK_FINITE and not np.all(np.isfinite(t.value)):
        raise FloatingPointError("non-finite op output")
    return t


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _out(a.value + b.value, a, b)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            _accum(a, _unbroadcast(out.grad, a.value.shape))
            _accum(b, _unbroadcast(out.grad, b.value.shape))
        _record(bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _out(a.value - b.value, a, b)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            _accum(a, _unbroadcast(out.grad, a.value.shape))
            _accum(b, _unbroadcast(-out.grad, b.value.shape))
        _record(bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _out(a.value * b.value, a, b)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            _accum(a, _unbroadcast(out.grad * b.value, a.value.shape))
            _accum(b, _unbroadcast(out.grad * a.value, b.value.shape))
        _record(bwd)
    return out


def scale(a: Tensor, k: float) -> Tensor:
    a = as_tensor(a)
    out = _out(a.value * k, a)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            _accum(a, out.grad * k)
        _record(bwd)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.shape[-1] != b.value.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.value.shape} @ {b.value.shape}")
    out = _out(a.value @ b.value, a, b)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            _accum(a, out.grad @ b.value.T)
            _accum(b, a.value.T @ out.grad)
        _record(bwd)
    return out


def spmm(s: Union[SparseMatrix, sp.spmatrix], d: Tensor) -> Tensor:
    """Sparse @ dense; the sparse operand is a constant."""
    csr = s.to_csr() if isinstance(s, SparseMatrix) else s.tocsr()
    d = as_tensor(d)
    if csr.shape[1] != d.value.shape[0]:
        raise ValueError(f"spmm shape mismatch: {csr.shape} @ {d.value.shape}")
    out = _out(csr @ d.value, d)
    if out.requires_grad:
        csr_t = csr.T.tocsr()
        def bwd():
            if out.grad is None:
                return
            _accum(d, csr_t @ out.grad)
        _record(bwd)
    return out


def concat_cols(tensors: Iterable[Tensor]) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = _out(np.concatenate([t.value for t in ts], axis=1), *ts)
    if out.requires_grad:
        widths = [t.value.shape[1] for t in ts]
        def bwd():
            if out.grad is None:
                return
            start = 0
            for t, w in zip(ts, widths):
                _accum(t, out.grad[:, start : start + w])
                start += w
        _record(bwd)
    return out


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    out = _out(a.value * mask, a)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            _accum(a, out.grad * mask)
        _record(bwd)
    return out


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    v = np.empty_like(a.value)
    pos = a.value >= 0
    v[pos] = 1.0 / (1.0 + np.exp(-a.value[pos]))
    ev = np.exp(a.value[~pos])
    v[~pos] = ev / (1.0 + ev)
    out = _out(v, a)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            _accum(a, out.grad * v * (1.0 - v))
        _record(bwd)
    return out


def log(a: Tensor, floor: Optional[float] = None) -> Tensor:
    a = as_tensor(a)
    base = np.maximum(a.value, floor) if floor is not None else a.value
    out = _out(np.log(base), a)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            _accum(a, out.grad / base)
        _record(bwd)
    return out


def sum_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = _out(np.array(a.value.sum()), a)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            _accum(a, np.full_like(a.value, float(out.grad)))
        _record(bwd)
    return out


def mean_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    return scale(sum_all(a), 1.0 / a.value.size)


class Adam:
    """Standard Adam with bias correction; lr is mutable for schedules."""

    def __init__(
        self,
        params: Dict[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.value) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in self.params.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


CHECKPOINT_MAGIC = "lhnnckpt"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str, tensors: Dict[str, np.ndarray]) -> None:
    """Flat named-tensor container; values stored as exact hex floats."""
    with open(path, "w") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
        for name, arr in tensors.items():
            if " " in name:
                raise ValueError(f"tensor name {name!r} may not contain spaces")
            arr = np.asarray(arr, dtype=np.float64)
            dims = " ".join(str(d) for d in arr.shape)
            values = " ".join(float(v).hex() for v in arr.reshape(-1))
            fh.write(f"{name} {arr.ndim} {dims} {values}".rstrip() + "\n")


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        if int(header[1]) != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header[1]}")
        out: Dict[str, np.ndarray] = {}
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            name = parts[0]
            ndim = int(parts[1])
            shape = tuple(int(d) for d in parts[2 : 2 + ndim])
            values = [float.fromhex(tok) for tok in parts[2 + ndim :]]
            out[name] = np.array(values, dtype=np.float64).reshape(shape)
    return out
