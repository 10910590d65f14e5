"""Tape-based reverse-mode differentiation over dense float64 matrices.

Every value is a 2-D array; scalars are ``1x1``. Operations record a pullback
on the tape shared by their inputs and :meth:`Tape.backward` replays the tape
in exact reverse recording order.

    tape = Tape()
    w = tape.variable(np.eye(2))
    loss = frobenius_sq(w)
    grads = tape.backward(loss)   # {w.node_id: 2 * I}
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    def __init__(self, op: str):
        self.op = op
        super().__init__(f"non-finite value produced by {op}")


class Tensor:
    __slots__ = ("tape", "node_id", "value", "requires_grad")

    def __init__(self, tape: "Tape", node_id: int, value: np.ndarray, requires_grad: bool):
        self.tape = tape
        self.node_id = node_id
        self.value = value
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.value[0, 0])

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return hadamard(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"Tensor(id={self.node_id}, shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of operations; one tape per forward/backward pass."""

    def __init__(self):
        self._parents: list[tuple[int, ...]] = []
        self._pullbacks: list[Optional[Callable]] = []
        self._tensors: list[Tensor] = []

    def __len__(self):
        return len(self._tensors)

    def _record(self, value, parents, pullback, requires_grad) -> Tensor:
        t = Tensor(self, len(self._tensors), value, requires_grad)
        self._tensors.append(t)
        self._parents.append(tuple(p.node_id for p in parents))
        self._pullbacks.append(pullback if requires_grad else None)
        return t

    def variable(self, value, requires_grad: bool = True) -> Tensor:
        arr = _as_matrix(value)
        _check_finite(arr, "variable")
        return self._record(arr, (), None, requires_grad)

    def constant(self, value) -> Tensor:
        return self.variable(value, requires_grad=False)

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Gradients of a scalar ``loss`` for every ``requires_grad`` leaf."""
        if loss.tape is not self:
            raise ValueError("loss was recorded on a different tape")
        if loss.shape != (1, 1):
            raise ShapeError(f"backward needs a 1x1 scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.node_id: np.ones((1, 1))}
        for nid in range(loss.node_id, -1, -1):
            g = grads.get(nid)
            pullback = self._pullbacks[nid]
            if g is None or pullback is None:
                continue
            for pid, pg in zip(self._parents[nid], pullback(g)):
                if pg is None or not self._tensors[pid].requires_grad:
                    continue
                if pid in grads:
                    grads[pid] = grads[pid] + pg
                else:
                    grads[pid] = pg
        out = {}
        for t in self._tensors:
            if t.requires_grad and not self._parents[t.node_id] and self._pullbacks[t.node_id] is None:
                out[t.node_id] = grads.get(t.node_id, np.zeros_like(t.value))
        return out


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected a matrix, got {arr.ndim}-d array")
    return arr


def _check_finite(arr: np.ndarray, op: str):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(op)


def _lift(*xs) -> tuple[Tape, list[Tensor]]:
    tape = next((x.tape for x in xs if isinstance(x, Tensor)), None)
    if tape is None:
        raise TypeError("at least one operand must be a Tensor")
    out = []
    for x in xs:
        if isinstance(x, Tensor):
            if x.tape is not tape:
                raise ValueError("operands live on different tapes")
            out.append(x)
        else:
            out.append(tape.constant(x))
    return tape, out


def _emit(op: str, value: np.ndarray, parents: list[Tensor], pullback) -> Tensor:
    _check_finite(value, op)
    tape = parents[0].tape
    return tape._record(value, parents, pullback, any(p.requires_grad for p in parents))


def _same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a, b) -> Tensor:
    _, (a, b) = _lift(a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    av, bv = a.value, b.value
    ra, rb = a.requires_grad, b.requires_grad

    def pullback(g):
        # constant operands (filters, eigenbases) are large; skip their gradients
        return (g @ bv.T if ra else None, av.T @ g if rb else None)

    return _emit("matmul", av @ bv, [a, b], pullback)


def transpose(a: Tensor) -> Tensor:
    return _emit("transpose", a.value.T.copy(), [a], lambda g: (g.T,))


def add(a, b) -> Tensor:
    _, (a, b) = _lift(a, b)
    _same_shape("add", a, b)
    return _emit("add", a.value + b.value, [a, b], lambda g: (g, g))


def subtract(a, b) -> Tensor:
    _, (a, b) = _lift(a, b)
    _same_shape("subtract", a, b)
    return _emit("subtract", a.value - b.value, [a, b], lambda g: (g, -g))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _emit("scale", s * a.value, [a], lambda g: (s * g,))


def hadamard(a, b) -> Tensor:
    _, (a, b) = _lift(a, b)
    _same_shape("hadamard", a, b)
    av, bv = a.value, b.value
    return _emit("hadamard", av * bv, [a, b], lambda g: (g * bv, g * av))


def scale_rows(a: Tensor, v) -> Tensor:
    """``diag(v) @ a`` for a constant vector ``v``."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape[0] != a.shape[0]:
        raise ShapeError(f"scale_rows: vector length {v.shape[0]} vs shape {a.shape}")
    col = v[:, None]
    return _emit("scale_rows", a.value * col, [a], lambda g: (g * col,))


def scale_cols(a: Tensor, v) -> Tensor:
    """``a @ diag(v)`` for a constant vector ``v``."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape[0] != a.shape[1]:
        raise ShapeError(f"scale_cols: vector length {v.shape[0]} vs shape {a.shape}")
    row = v[None, :]
    return _emit("scale_cols", a.value * row, [a], lambda g: (g * row,))


def concat_cols(*parts) -> Tensor:
    _, parts = _lift(*parts)
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ: {[p.shape for p in parts]}")
    widths = np.cumsum([0] + [p.shape[1] for p in parts])

    def pullback(g):
        return tuple(g[:, widths[i]:widths[i + 1]] for i in range(len(parts)))

    return _emit("concat_cols", np.concatenate([p.value for p in parts], axis=1), parts, pullback)


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _emit("relu", np.where(mask, a.value, 0.0), [a], lambda g: (g * mask,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.value)
    return _emit("sigmoid", s, [a], lambda g: (g * s * (1.0 - s),))


def frobenius_sq(a: Tensor) -> Tensor:
    av = a.value
    return _emit("frobenius_sq", np.array([[np.sum(av * av)]]), [a], lambda g: (2.0 * g[0, 0] * av,))


def bce_mean(logits, targets) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against ``targets``.

    Evaluated as ``max(x, 0) - x t + log(1 + exp(-|x|))``, which never
    overflows.
    """
    _, (x, t) = _lift(logits, targets)
    _same_shape("bce_mean", x, t)
    xv, tv = x.value, t.value
    loss = np.maximum(xv, 0.0) - xv * tv + np.log1p(np.exp(-np.abs(xv)))
    size = xv.size

    rt = t.requires_grad

    def pullback(g):
        s = _sigmoid(xv)
        c = g[0, 0] / size
        return c * (s - tv), (c * (-xv) if rt else None)

    return _emit("bce_mean", np.array([[loss.mean()]]), [x, t], pullback)


def row_l2_normalize(a: Tensor, eps: float = 1e-12) -> Tensor:
    av = a.value
    norms = np.maximum(np.linalg.norm(av, axis=1, keepdims=True), eps)
    y = av / norms

    def pullback(g):
        return ((g - y * np.sum(g * y, axis=1, keepdims=True)) / norms,)

    return _emit("row_l2_normalize", y, [a], pullback)
