"""Dense-matrix reverse-mode automatic differentiation.

Every differentiable quantity is a ``Value``: a 2-D float64 numpy array plus
an accumulated gradient. Operations are methods on a ``Tape``; each call
computes the result eagerly, appends a node with its local gradient rule,
and ``Tape.backward`` replays the nodes in reverse to populate gradients for
every reachable leaf. A tape is built fresh for each forward pass
(define-by-run) and is single-threaded.

Scalars are represented as 1x1 matrices so the whole engine has one shape
discipline.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

_LOG_FLOOR = 1e-12


def _as_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected a scalar, vector, or matrix, got ndim={arr.ndim}")
    return np.ascontiguousarray(arr)


class Value:
    """A matrix on (or feeding) a tape.

    Leaves are created directly (``Value(data, requires_grad=True)`` for
    trainable parameters, ``requires_grad=False`` for constants). Interior
    nodes are created by tape operations and carry a closure that routes the
    incoming gradient to their parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_matrix(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents: tuple[Value, ...] = ()

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() requires a 1x1 value, got {self.data.shape}")
        return float(self.data[0, 0])

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Value(shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data) -> Value:
    """A trainable leaf: accumulates gradient across backward passes."""
    return Value(data, requires_grad=True)


def constant(data) -> Value:
    """A non-trainable leaf; gradients never flow into it."""
    return Value(data, requires_grad=False)


class Tape:
    """Ordered record of operations for one forward pass."""

    def __init__(self, check_finite: bool = True):
        self._nodes: list[Value] = []
        self.check_finite = check_finite

    def __len__(self) -> int:
        return len(self._nodes)

    # -- recording ---------------------------------------------------------

    def _record(self, data: np.ndarray, parents: tuple[Value, ...], backward) -> Value:
        if self.check_finite and not np.all(np.isfinite(data)):
            raise NumericError("operation produced non-finite values")
        out = Value(data)
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = parents
        if out.requires_grad:
            out._backward = backward
        self._nodes.append(out)
        return out

    # -- core operations ----------------------------------------------------

    def matmul(self, a: Value, b: Value) -> Value:
        if a.cols != b.rows:
            raise ShapeError(f"matmul: inner dimensions differ ({a.shape} x {b.shape})")

        def backward(g):
            if a.requires_grad:
                a.accumulate(g @ b.data.T)
            if b.requires_grad:
                b.accumulate(a.data.T @ g)

        return self._record(a.data @ b.data, (a, b), backward)

    def add(self, a: Value, b: Value) -> Value:
        self._require_same_shape("add", a, b)

        def backward(g):
            if a.requires_grad:
                a.accumulate(g)
            if b.requires_grad:
                b.accumulate(g)

        return self._record(a.data + b.data, (a, b), backward)

    def sub(self, a: Value, b: Value) -> Value:
        self._require_same_shape("sub", a, b)

        def backward(g):
            if a.requires_grad:
                a.accumulate(g)
            if b.requires_grad:
                b.accumulate(-g)

        return self._record(a.data - b.data, (a, b), backward)

    def mul(self, a: Value, b: Value) -> Value:
        self._require_same_shape("mul", a, b)

        def backward(g):
            if a.requires_grad:
                a.accumulate(g * b.data)
            if b.requires_grad:
                b.accumulate(g * a.data)

        return self._record(a.data * b.data, (a, b), backward)

    def scale(self, a: Value, c: float) -> Value:
        c = float(c)

        def backward(g):
            a.accumulate(c * g)

        return self._record(c * a.data, (a,), backward)

    def exp(self, a: Value) -> Value:
        out_data = np.exp(a.data)

        def backward(g):
            a.accumulate(g * out_data)

        return self._record(out_data, (a,), backward)

    def log(self, a: Value) -> Value:
        # Argument clamped below at 1e-12; the clamped region has zero gradient.
        clamped = np.maximum(a.data, _LOG_FLOOR)

        def backward(g):
            a.accumulate(np.where(a.data > _LOG_FLOOR, g / clamped, 0.0))

        return self._record(np.log(clamped), (a,), backward)

    def sigmoid(self, a: Value) -> Value:
        x = a.data
        out_data = np.empty_like(x)
        pos = x >= 0
        out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out_data[~pos] = ex / (1.0 + ex)

        def backward(g):
            a.accumulate(g * out_data * (1.0 - out_data))

        return self._record(out_data, (a,), backward)

    def relu(self, a: Value) -> Value:
        def backward(g):
            a.accumulate(g * (a.data > 0))

        return self._record(np.maximum(a.data, 0.0), (a,), backward)

    def softplus(self, a: Value) -> Value:
        out_data = np.logaddexp(0.0, a.data)

        def backward(g):
            a.accumulate(g / (1.0 + np.exp(-a.data)))

        return self._record(out_data, (a,), backward)

    def reciprocal(self, a: Value) -> Value:
        out_data = 1.0 / a.data

        def backward(g):
            a.accumulate(-g * out_data * out_data)

        return self._record(out_data, (a,), backward)

    def transpose(self, a: Value) -> Value:
        def backward(g):
            a.accumulate(g.T)

        return self._record(a.data.T.copy(), (a,), backward)

    def concat_cols(self, a: Value, b: Value) -> Value:
        if a.rows != b.rows:
            raise ShapeError(f"concat_cols: row counts differ ({a.shape} vs {b.shape})")
        split = a.cols

        def backward(g):
            if a.requires_grad:
                a.accumulate(g[:, :split])
            if b.requires_grad:
                b.accumulate(g[:, split:])

        return self._record(np.concatenate([a.data, b.data], axis=1), (a, b), backward)

    def rowscale(self, col: Value, m: Value) -> Value:
        """out_ij = col_i * m_ij, where col is Nx1."""
        if col.cols != 1 or col.rows != m.rows:
            raise ShapeError(f"rowscale: expected ({m.rows}x1) column, got {col.shape}")

        def backward(g):
            if col.requires_grad:
                col.accumulate((g * m.data).sum(axis=1, keepdims=True))
            if m.requires_grad:
                m.accumulate(g * col.data)

        return self._record(col.data * m.data, (col, m), backward)

    def broadcast(self, s: Value, rows: int, cols: int) -> Value:
        """Spread a 1x1 value to a rows x cols matrix."""
        if s.shape != (1, 1):
            raise ShapeError(f"broadcast: expected a 1x1 value, got {s.shape}")

        def backward(g):
            s.accumulate(np.array([[g.sum()]]))

        return self._record(np.full((rows, cols), s.data[0, 0]), (s,), backward)

    def sum_all(self, a: Value) -> Value:
        def backward(g):
            a.accumulate(np.full_like(a.data, g[0, 0]))

        return self._record(np.array([[a.data.sum()]]), (a,), backward)

    def sum_rows(self, a: Value) -> Value:
        """Sum over the row index: out is 1 x cols."""

        def backward(g):
            a.accumulate(np.broadcast_to(g, a.data.shape).copy())

        return self._record(a.data.sum(axis=0, keepdims=True), (a,), backward)

    def masked_softmax(self, scores: Value, mask: np.ndarray) -> Value:
        """Row-wise softmax over masked-in entries; zeros elsewhere.

        ``mask`` is a constant {0,1} array of the same shape. Rows are
        stabilized by subtracting the row max over masked-in entries. A row
        with no masked-in entry is an error (self-loops are expected to make
        every row non-empty).
        """
        mask = np.asarray(mask)
        if mask.shape != scores.shape:
            raise ShapeError(
                f"masked_softmax: mask shape {mask.shape} != scores shape {scores.shape}"
            )
        inmask = mask != 0
        if not inmask.any(axis=1).all():
            raise ShapeError("masked_softmax: a row has an all-zero mask")
        neg_inf = np.where(inmask, scores.data, -np.inf)
        row_max = neg_inf.max(axis=1, keepdims=True)
        ex = np.exp(np.where(inmask, scores.data - row_max, -np.inf))
        denom = ex.sum(axis=1, keepdims=True)
        out_data = ex / denom

        def backward(g):
            # Softmax Jacobian per row, restricted to masked-in entries.
            dot = (g * out_data).sum(axis=1, keepdims=True)
            scores.accumulate(out_data * (g - dot))

        return self._record(out_data, (scores,), backward)

    def dropout(self, a: Value, rate: float, rng: np.random.Generator) -> Value:
        """Inverted dropout; the kept mask is a constant drawn from ``rng``."""
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0,1), got {rate}")
        keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)

        def backward(g):
            a.accumulate(g * keep)

        return self._record(a.data * keep, (a,), backward)

    # -- backward ------------------------------------------------------------

    def backward(self, loss: Value) -> None:
        """Populate gradients of ``loss`` w.r.t. every reachable leaf.

        ``loss`` must be a 1x1 value recorded on this tape. Node gradients are
        local to the tape; leaf gradients accumulate until ``zero_grad``.
        """
        if loss.data.shape != (1, 1):
            raise ShapeError(f"backward: loss must be 1x1, got {loss.data.shape}")
        if loss._parents == () and loss._backward is None:
            # A bare leaf: its gradient w.r.t. itself is 1.
            loss.accumulate(np.ones((1, 1)))
            return
        loss.grad = np.ones((1, 1))
        for node in reversed(self._nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)

    def _require_same_shape(self, op: str, a: Value, b: Value) -> None:
        if a.shape != b.shape:
            raise ShapeError(f"{op}: shapes differ ({a.shape} vs {b.shape})")
