"""Gate-augmented, distance-aware graph attention layer.

One layer maps node features x (N x F) and an adjacency A (N x N, positive
diagonal) to updated features:

    x'  = x W                                  feature transform
    e   = x' E x'^T + (x' E x'^T)^T            symmetric attention scores
    a   = softmax over {j : A_ij > 0} of e, then scaled entrywise by A
    x'' = a x'                                 neighborhood aggregation
    z   = sigmoid([x | x'] u + b)              per-node gate in (0,1)
    out = z * x' + (1 - z) * x''

Everything runs on the differentiation tape, so gradients reach W, E, u, b
and the entries of A itself (which is how the learnable distance profile
behind the contact adjacency receives its gradient).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Value, constant, parameter
from .errors import ShapeError


@dataclass
class GatParams:
    w: Value  # F x F feature transform
    e: Value  # F x F attention bilinear form
    u: Value  # 2F x 1 gate weights
    b: Value  # 1 x 1 gate bias

    @property
    def dim(self) -> int:
        return self.w.rows

    def values(self) -> list[Value]:
        return [self.w, self.e, self.u, self.b]


def init_gat_params(dim: int, rng: np.random.Generator) -> GatParams:
    def glorot(rows, cols):
        bound = np.sqrt(6.0 / (rows + cols))
        return parameter(rng.uniform(-bound, bound, size=(rows, cols)))

    return GatParams(
        w=glorot(dim, dim),
        e=glorot(dim, dim),
        u=glorot(2 * dim, 1),
        b=parameter(np.zeros((1, 1))),
    )


def gat_forward(
    tape: Tape,
    x: Value,
    adj: Value,
    params: GatParams,
    internals: dict | None = None,
) -> Value:
    """Run one gated attention layer; returns the N x F output features.

    ``adj`` must be square with a strictly positive diagonal (self-loops);
    neighborhoods are read from its sparsity pattern. Pass ``internals`` to
    capture intermediate tape values (keys: scores, softmax, attention, gate).
    """
    n, f = x.shape
    if adj.shape != (n, n):
        raise ShapeError(f"adjacency {adj.shape} does not match {n} nodes")
    if params.w.shape != (f, f):
        raise ShapeError(f"layer width {params.w.shape} does not match feature dim {f}")
    if not (np.diagonal(adj.data) > 0).all():
        raise ShapeError("adjacency has a zero diagonal entry (missing self-loop)")

    xp = tape.matmul(x, params.w)
    half = tape.matmul(tape.matmul(xp, params.e), tape.transpose(xp))
    scores = tape.add(half, tape.transpose(half))

    softmax = tape.masked_softmax(scores, adj.data > 0)
    attention = tape.mul(softmax, adj)
    xpp = tape.matmul(attention, xp)

    gate_logit = tape.add(
        tape.matmul(tape.concat_cols(x, xp), params.u),
        tape.broadcast(params.b, n, 1),
    )
    z = tape.sigmoid(gate_logit)
    one_minus_z = tape.sub(constant(np.ones((n, 1))), z)
    out = tape.add(tape.rowscale(z, xp), tape.rowscale(one_minus_z, xpp))

    if internals is not None:
        internals.update(scores=scores, softmax=softmax, attention=attention, gate=z)
    return out
