"""Dense float64 tensors with reverse-mode automatic differentiation.

Every primitive records a node on the thread-local active tape (when one is
open and an input requires a gradient). Creation order is a topological
order, so the backward pass is a single reverse sweep. Tapes live for one
forward/backward pass and are discarded afterwards.

Broadcasting is deliberately restricted: the only mismatched-shape operation
allowed is adding a 1-D bias to a 2-D tensor along its trailing axis. Every
other mismatch raises ShapeMismatch so wiring bugs surface immediately.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    EmptyAxis,
    EvenKernel,
    NonFiniteValue,
    NonScalarLoss,
    ShapeMismatch,
)

# Additive softmax-mask surrogate for minus infinity. Large enough that the
# masked entry underflows to exactly 0 after exp, small enough to stay finite.
NEG_INF = -1e30

LOG_FLOOR = 1e-12

_STATE = threading.local()


def active_tape() -> "Tape | None":
    return getattr(_STATE, "tape", None)


class Tensor:
    """Dense n-d float64 array, optionally carrying a gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Per-forward-pass record of primitive applications.

    Nodes are appended in creation order; parents always precede children,
    so reversed iteration is a valid backward schedule.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def __enter__(self) -> "Tape":
        if active_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _STATE.tape = self
        return self

    def __exit__(self, *exc) -> bool:
        _STATE.tape = None
        self._nodes.clear()
        return False

    def record(self, out: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
        self._nodes.append((out, backward_fn))

    def backward(self, loss: Tensor) -> None:
        """Populate .grad on every requires_grad tensor reachable from loss."""
        if loss.shape != ():
            raise NonScalarLoss(f"loss must be a scalar, got shape {loss.shape}")
        loss._accumulate(np.ones((), dtype=np.float64))
        for out, fn in reversed(self._nodes):
            if out.grad is not None:
                fn(out.grad)
        self._nodes.clear()


def backward(loss: Tensor) -> None:
    """Run the backward pass of the tape currently active on this thread."""
    tape = active_tape()
    if tape is None:
        raise RuntimeError("backward() requires an active tape")
    tape.backward(loss)


def _record(out: Tensor, parents: Sequence[Tensor], backward_fn) -> Tensor:
    # out.requires_grad is already the OR over parents for every primitive
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, backward_fn)
    return out


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeMismatch(f"matmul needs 1-D/2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data, a.requires_grad or b.requires_grad)
    ad, bd = a.data, b.data

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            if ad.ndim == 2 and bd.ndim == 2:
                a._accumulate(g @ bd.T)
            elif ad.ndim == 2 and bd.ndim == 1:
                a._accumulate(g[:, None] * bd[None, :])
            elif ad.ndim == 1 and bd.ndim == 2:
                a._accumulate(bd @ g)
            else:
                a._accumulate(g * bd)
        if b.requires_grad:
            if ad.ndim == 2 and bd.ndim == 2:
                b._accumulate(ad.T @ g)
            elif ad.ndim == 2 and bd.ndim == 1:
                b._accumulate(ad.T @ g)
            elif ad.ndim == 1 and bd.ndim == 2:
                b._accumulate(ad[:, None] * g[None, :])
            else:
                b._accumulate(g * ad)

    return _record(out, (a, b), back)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeMismatch(f"transpose needs a 2-D tensor, got {a.shape}")
    out = Tensor(a.data.T.copy(), a.requires_grad)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g.T)

    return _record(out, (a,), back)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts (m, n) + (m,) as a column-wise bias."""
    if a.shape == b.shape:
        out = Tensor(a.data + b.data, a.requires_grad or b.requires_grad)
        bias = False
    elif a.ndim == 2 and b.ndim == 1 and a.shape[0] == b.shape[0]:
        out = Tensor(a.data + b.data[:, None], a.requires_grad or b.requires_grad)
        bias = True
    else:
        raise ShapeMismatch(f"add shapes {a.shape} + {b.shape}")

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=1) if bias else g)

    return _record(out, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product; shapes must match exactly."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"hadamard shapes {a.shape} * {b.shape}")
    out = Tensor(a.data * b.data, a.requires_grad or b.requires_grad)
    ad, bd = a.data, b.data

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * bd)
        if b.requires_grad:
            b._accumulate(g * ad)

    return _record(out, (a, b), back)


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c, a.requires_grad)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * c)

    return _record(out, (a,), back)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if not parts:
        raise ShapeMismatch("concat of zero tensors")
    nd = parts[0].ndim
    if axis < 0 or axis >= nd:
        raise ShapeMismatch(f"concat axis {axis} out of range for ndim {nd}")
    for p in parts:
        if p.ndim != nd:
            raise ShapeMismatch("concat rank mismatch")
        for ax in range(nd):
            if ax != axis and p.shape[ax] != parts[0].shape[ax]:
                raise ShapeMismatch(f"concat shapes {[q.shape for q in parts]}")
    out = Tensor(
        np.concatenate([p.data for p in parts], axis=axis),
        any(p.requires_grad for p in parts),
    )
    sizes = [p.shape[axis] for p in parts]

    def back(g: np.ndarray) -> None:
        off = 0
        for p, s in zip(parts, sizes):
            if p.requires_grad:
                sl = [slice(None)] * nd
                sl[axis] = slice(off, off + s)
                p._accumulate(g[tuple(sl)])
            off += s

    return _record(out, tuple(parts), back)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise ShapeMismatch(f"reshape {a.shape} -> {shape}")
    out = Tensor(a.data.reshape(shape).copy(), a.requires_grad)
    orig = a.shape

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g.reshape(orig))

    return _record(out, (a,), back)


def tile_columns(a: Tensor, n: int) -> Tensor:
    """Copy a (d,) vector into every column of a (d, n) tensor."""
    if a.ndim != 1:
        raise ShapeMismatch(f"tile_columns needs a 1-D tensor, got {a.shape}")
    if n < 1:
        raise ShapeMismatch(f"tile_columns needs n >= 1, got {n}")
    out = Tensor(np.repeat(a.data[:, None], n, axis=1), a.requires_grad)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g.sum(axis=1))

    return _record(out, (a,), back)


def slice1d(a: Tensor, start: int, stop: int) -> Tensor:
    if a.ndim != 1:
        raise ShapeMismatch(f"slice1d needs a 1-D tensor, got {a.shape}")
    if not (0 <= start <= stop <= a.shape[0]):
        raise ShapeMismatch(f"slice [{start}:{stop}] of length-{a.shape[0]} tensor")
    out = Tensor(a.data[start:stop].copy(), a.requires_grad)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            buf[start:stop] = g
            a._accumulate(buf)

    return _record(out, (a,), back)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0), a.requires_grad)
    gate = a.data > 0.0

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * gate)

    return _record(out, (a,), back)


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data), a.requires_grad)
    y = out.data

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * (1.0 - y * y))

    return _record(out, (a,), back)


def sigmoid(a: Tensor) -> Tensor:
    out = Tensor(1.0 / (1.0 + np.exp(-a.data)), a.requires_grad)
    y = out.data

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * y * (1.0 - y))

    return _record(out, (a,), back)


def softmax(a: Tensor, mask: "Tensor | np.ndarray | None" = None) -> Tensor:
    """Row-wise softmax (last axis) with an optional additive mask.

    Mask entries are 0 for kept positions and NEG_INF for excluded ones;
    excluded positions come out exactly 0 and receive zero gradient.
    """
    if a.ndim not in (1, 2):
        raise ShapeMismatch(f"softmax needs a 1-D or 2-D tensor, got {a.shape}")
    z = a.data
    if mask is not None:
        mdata = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=np.float64)
        if mdata.shape != a.shape:
            raise ShapeMismatch(f"softmax mask shape {mdata.shape} != logits {a.shape}")
        z = z + mdata
    zmax = z.max(axis=-1, keepdims=True)
    e = np.exp(z - zmax)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, a.requires_grad)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            inner = (g * y).sum(axis=-1, keepdims=True)
            a._accumulate(y * (g - inner))

    return _record(out, (a,), back)


def _check_axis(a: Tensor, axis: int | None) -> None:
    if axis is None:
        if a.size == 0:
            raise EmptyAxis("reduction over an empty tensor")
        return
    if axis < 0 or axis >= a.ndim:
        raise ShapeMismatch(f"axis {axis} out of range for shape {a.shape}")
    if a.shape[axis] == 0:
        raise EmptyAxis(f"reduction over size-0 axis {axis} of {a.shape}")


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    _check_axis(a, axis)
    out = Tensor(a.data.sum(axis=axis), a.requires_grad)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.full_like(a.data, float(g)))
            else:
                a._accumulate(np.repeat(np.expand_dims(g, axis), a.shape[axis], axis=axis))

    return _record(out, (a,), back)


def reduce_mean(a: Tensor, axis: int | None = None) -> Tensor:
    _check_axis(a, axis)
    n = a.size if axis is None else a.shape[axis]
    out = Tensor(a.data.mean(axis=axis), a.requires_grad)

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.full_like(a.data, float(g) / n))
            else:
                a._accumulate(np.repeat(np.expand_dims(g / n, axis), n, axis=axis))

    return _record(out, (a,), back)


def lookup(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather rows of a 2-D table; gradients scatter-add back into it."""
    if table.ndim != 2:
        raise ShapeMismatch(f"lookup table must be 2-D, got {table.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeMismatch("lookup indices must be a flat sequence")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeMismatch(f"lookup index out of range for table {table.shape}")
    out = Tensor(table.data[idx], table.requires_grad)

    def back(g: np.ndarray) -> None:
        if table.requires_grad:
            buf = np.zeros_like(table.data)
            np.add.at(buf, idx, g)
            table._accumulate(buf)

    return _record(out, (table,), back)


def frobenius_sq(a: Tensor) -> Tensor:
    """Squared Frobenius norm: sum of squared entries, as a scalar."""
    out = Tensor(np.sum(a.data * a.data), a.requires_grad)
    ad = a.data

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(2.0 * float(g) * ad)

    return _record(out, (a,), back)


def log_floored(a: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """Elementwise log with the argument clamped to `floor` from below."""
    clamped = np.maximum(a.data, floor)
    out = Tensor(np.log(clamped), a.requires_grad)
    gate = a.data >= floor

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * gate / clamped)

    return _record(out, (a,), back)


def smooth_l1(a: Tensor) -> Tensor:
    """Elementwise 0.5*x^2 for |x| < 1, |x| - 0.5 otherwise."""
    ax = np.abs(a.data)
    quad = ax < 1.0
    out = Tensor(np.where(quad, 0.5 * a.data * a.data, ax - 0.5), a.requires_grad)
    dydx = np.where(quad, a.data, np.sign(a.data))

    def back(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * dydx)

    return _record(out, (a,), back)


def conv1d_same(seq: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Same-padded temporal convolution.

    seq: (d, T); kernels: (d_out, d, k) with k odd; bias: (d_out,).
    Output position t is the kernel-weighted sum over the zero-padded window
    of width k centered at t, so the output length is exactly T.
    """
    if seq.ndim != 2 or kernels.ndim != 3 or bias.ndim != 1:
        raise ShapeMismatch(
            f"conv1d_same shapes seq={seq.shape} kernels={kernels.shape} bias={bias.shape}"
        )
    d_out, d_in, k = kernels.shape
    d, t_len = seq.shape
    if k % 2 == 0:
        raise EvenKernel(f"kernel width {k} must be odd")
    if d_in != d or bias.shape[0] != d_out:
        raise ShapeMismatch(
            f"conv1d_same shapes seq={seq.shape} kernels={kernels.shape} bias={bias.shape}"
        )
    if t_len < 1:
        raise ShapeMismatch("conv1d_same needs at least one time step")
    pad = (k - 1) // 2
    padded = np.zeros((d, t_len + k - 1), dtype=np.float64)
    padded[:, pad:pad + t_len] = seq.data
    # im2col: columns of width-k windows, contiguous so both passes are matmuls
    windows = sliding_window_view(padded, k, axis=1)               # (d, T, k)
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1)).reshape(d * k, t_len)
    kflat = kernels.data.reshape(d_out, d * k)
    data = kflat @ cols + bias.data[:, None]
    out = Tensor(data, seq.requires_grad or kernels.requires_grad or bias.requires_grad)

    def back(g: np.ndarray) -> None:
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=1))
        if kernels.requires_grad:
            kernels._accumulate((g @ cols.T).reshape(d_out, d, k))
        if seq.requires_grad:
            gcols = (kflat.T @ g).reshape(d, k, t_len)
            gpad = np.zeros_like(padded)
            for j in range(k):
                gpad[:, j:j + t_len] += gcols[:, j, :]
            seq._accumulate(gpad[:, pad:pad + t_len])

    return _record(out, (seq, kernels, bias), back)


PRIMITIVES: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "transpose": transpose,
    "add": add,
    "hadamard": mul,
    "scalar_mul": scalar_mul,
    "concat": concat,
    "reshape": reshape,
    "tile_columns": tile_columns,
    "slice": slice1d,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softmax": softmax,
    "sum": reduce_sum,
    "mean": reduce_mean,
    "lookup": lookup,
    "frobenius_sq": frobenius_sq,
    "log": log_floored,
    "smooth_l1": smooth_l1,
    "conv1d_same": conv1d_same,
}


def primitive_forward(op_kind: str, *inputs, **kwargs) -> Tensor:
    """Apply a primitive by name. Unknown kinds raise ValueError."""
    try:
        fn = PRIMITIVES[op_kind]
    except KeyError:
        raise ValueError(f"unknown primitive {op_kind!r}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# gradient oracle
# ---------------------------------------------------------------------------

def grad_check(f: Callable[[Tensor], Tensor], point: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is |analytic - numeric| divided by
    max(1, |analytic|, |numeric|). `f` must map a tensor to a scalar tensor
    and be evaluable at point +/- eps per coordinate.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError(f"eps {eps} outside [1e-7, 1e-3]")
    x = Tensor(np.array(point.data, copy=True), requires_grad=True)
    with Tape() as tape:
        y = f(x)
        if y.shape != ():
            raise NonScalarLoss(f"grad_check target returned shape {y.shape}")
        if not np.isfinite(y.data):
            raise NonFiniteValue("function value is not finite at the probe point")
        tape.backward(y)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad
    if not np.all(np.isfinite(analytic)):
        raise NonFiniteValue("analytic gradient is not finite")

    # Probe evaluations run without a tape; mutating the probe buffer in
    # place is safe because f rebuilds its graph from scratch on every call.
    probe = Tensor(np.array(point.data, copy=True))
    flat = probe.data.reshape(-1)
    numeric = np.zeros(flat.size, dtype=np.float64)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(probe).item()
        flat[i] = orig - eps
        lo = f(probe).item()
        flat[i] = orig
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise NonFiniteValue(f"non-finite probe value at coordinate {i}")
        numeric[i] = (hi - lo) / (2.0 * eps)

    a = analytic.reshape(-1)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(numeric)))
    if flat.size == 0:
        return 0.0
    return float(np.max(np.abs(a - numeric) / denom))
