"""The dual-adjacency classifier: shared gated attention over covalent and
contact graphs, branch subtraction, sum pooling, and an MLP head.

For every sample the contact adjacency is materialized on the tape as

    A2_ij = A1_ij                          where no intermolecular contact
    A2_ij = exp(-(d_ij - mu)^2 / sigma)    on contacts (opposite sides, d < 5 A)

with a single global learnable (mu, sigma) pair; sigma is stored as an
unconstrained scalar and passed through softplus plus a small floor so it
stays positive. Each attention layer is shared between the two branches, the
branch outputs are subtracted (so a complex with no contacts pools to an
exactly-zero vector), node features are summed into one graph vector, and a
small MLP with ReLU hidden activations and a final sigmoid produces the
activity probability.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Value, constant, parameter
from .errors import CheckpointError, NumericError, ShapeError
from .gat import GatParams, gat_forward, init_gat_params
from .graphs import GraphSample

SIGMA_FLOOR = 1e-3

CHECKPOINT_MAGIC = b"MOLGATCK"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    num_gat_layers: int = 4
    gat_dim: int = 140
    fc_dims: tuple[int, ...] = (128, 128, 1)
    dropout_rate: float = 0.3
    input_dim: int = 56

    def __post_init__(self):
        self.fc_dims = tuple(int(d) for d in self.fc_dims)
        if self.num_gat_layers < 1 or self.gat_dim < 1 or self.input_dim < 1:
            raise ValueError("all model dimensions must be positive")
        if any(d < 1 for d in self.fc_dims):
            raise ValueError("all fully connected dimensions must be positive")
        if self.fc_dims[-1] != 1:
            raise ValueError("the last fully connected layer must output a single unit")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


class ModelParams:
    """Every learnable quantity, in the fixed checkpoint order."""

    def __init__(self, embed: Value, layers: list[GatParams], mu: Value, sigma_raw: Value, fc):
        self.embed = embed
        self.layers = layers
        self.mu = mu
        self.sigma_raw = sigma_raw
        self.fc = fc  # list of (weight, bias) pairs

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> "ModelParams":
        def glorot(rows, cols):
            bound = np.sqrt(6.0 / (rows + cols))
            return parameter(rng.uniform(-bound, bound, size=(rows, cols)))

        embed = glorot(config.input_dim, config.gat_dim)
        layers = [init_gat_params(config.gat_dim, rng) for _ in range(config.num_gat_layers)]
        mu = parameter(np.array([[3.0]]))
        # softplus(raw) + floor == 2.0 at initialization
        sigma_raw = parameter(np.array([[np.log(np.expm1(2.0 - SIGMA_FLOOR))]]))
        fc = []
        prev = config.gat_dim
        for dim in config.fc_dims:
            fc.append((glorot(prev, dim), parameter(np.zeros((1, dim)))))
            prev = dim
        return cls(embed, layers, mu, sigma_raw, fc)

    def named_values(self) -> list[tuple[str, Value]]:
        named = [("embed", self.embed)]
        for k, layer in enumerate(self.layers):
            named += [
                (f"gat{k}.w", layer.w),
                (f"gat{k}.e", layer.e),
                (f"gat{k}.u", layer.u),
                (f"gat{k}.b", layer.b),
            ]
        named += [("mu", self.mu), ("sigma_raw", self.sigma_raw)]
        for k, (w, b) in enumerate(self.fc):
            named += [(f"fc{k}.w", w), (f"fc{k}.b", b)]
        return named

    def values(self) -> list[Value]:
        return [v for _, v in self.named_values()]

    def num_parameters(self) -> int:
        return sum(v.data.size for v in self.values())

    def zero_grad(self) -> None:
        for v in self.values():
            v.zero_grad()

    def sigma_on(self, tape: Tape) -> Value:
        """Positive sigma on the tape: softplus(raw) + floor."""
        return tape.add(tape.softplus(self.sigma_raw), constant([[SIGMA_FLOOR]]))

    def mu_value(self) -> float:
        return self.mu.item()

    def sigma_value(self) -> float:
        return float(np.logaddexp(0.0, self.sigma_raw.data[0, 0]) + SIGMA_FLOOR)


def materialize_a2(
    tape: Tape,
    dist: np.ndarray,
    inter_mask: np.ndarray,
    a1: Value,
    mu: Value,
    sigma: Value,
) -> Value:
    """Contact adjacency on the tape; gradients flow into mu and sigma.

    Because covalent and contact entries are disjoint, the result is exactly
    A1 plus the Gaussian weights on masked-in entries.
    """
    if sigma.item() <= 0:
        raise NumericError(f"sigma must be positive, got {sigma.item()}")
    n = dist.shape[0]
    diff = tape.sub(constant(dist), tape.broadcast(mu, n, n))
    sq = tape.mul(diff, diff)
    scaled = tape.mul(tape.scale(sq, -1.0), tape.broadcast(tape.reciprocal(sigma), n, n))
    gauss = tape.exp(scaled)
    return tape.add(a1, tape.mul(gauss, constant(inter_mask)))


def predict(
    tape: Tape,
    sample: GraphSample,
    params: ModelParams,
    config: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
    internals: dict | None = None,
) -> Value:
    """Forward pass for one sample; returns the 1x1 probability on the tape."""
    if sample.features.shape[1] != config.input_dim:
        raise ShapeError(
            f"sample feature width {sample.features.shape[1]} != input_dim {config.input_dim}"
        )
    if training and rng is None:
        raise ValueError("training mode needs an rng for dropout")

    a1 = constant(sample.a1)
    a2 = materialize_a2(
        tape, sample.dist, sample.inter_mask, a1, params.mu, params.sigma_on(tape)
    )

    h = tape.matmul(constant(sample.features), params.embed)
    for layer in params.layers:
        covalent = gat_forward(tape, h, a1, layer)
        contact = gat_forward(tape, h, a2, layer)
        h = tape.sub(contact, covalent)
        if training and config.dropout_rate > 0:
            h = tape.dropout(h, config.dropout_rate, rng)

    pooled = tape.sum_rows(h)
    y = pooled
    last = len(params.fc) - 1
    for k, (w, b) in enumerate(params.fc):
        y = tape.add(tape.matmul(y, w), b)
        if k < last:
            y = tape.relu(y)
            if training and config.dropout_rate > 0:
                y = tape.dropout(y, config.dropout_rate, rng)
    out = tape.sigmoid(y)
    if internals is not None:
        internals.update(a2=a2, pooled=pooled)
    return out


def score(sample: GraphSample, params: ModelParams, config: ModelConfig) -> float:
    """Deterministic inference probability (dropout off)."""
    return predict(Tape(), sample, params, config, training=False).item()


# ---------------------------------------------------------------------------
# Checkpoints
#
# Layout (little-endian):
#   magic             8 bytes b"MOLGATCK"
#   body:
#     version         u32
#     num_gat_layers  u32
#     gat_dim         u32
#     input_dim       u32
#     dropout_rate    f64
#     n_fc            u32
#     fc_dims         u32 * n_fc
#     iteration       u64
#     n_tensors       u32
#     per tensor:     u32 rows, u32 cols, rows*cols f64 (row-major)
#   crc32             u32 over the body
# ---------------------------------------------------------------------------

def _expected_shapes(config: ModelConfig) -> list[tuple[int, int]]:
    shapes = [(config.input_dim, config.gat_dim)]
    f = config.gat_dim
    for _ in range(config.num_gat_layers):
        shapes += [(f, f), (f, f), (2 * f, 1), (1, 1)]
    shapes += [(1, 1), (1, 1)]
    prev = f
    for dim in config.fc_dims:
        shapes += [(prev, dim), (1, dim)]
        prev = dim
    return shapes


def save_params(path, params: ModelParams, config: ModelConfig, iteration: int = 0) -> None:
    body = struct.pack(
        "<IIII", CHECKPOINT_VERSION, config.num_gat_layers, config.gat_dim, config.input_dim
    )
    body += struct.pack("<d", config.dropout_rate)
    body += struct.pack("<I", len(config.fc_dims))
    body += struct.pack(f"<{len(config.fc_dims)}I", *config.fc_dims)
    body += struct.pack("<Q", iteration)
    tensors = params.values()
    body += struct.pack("<I", len(tensors))
    for v in tensors:
        body += struct.pack("<II", v.rows, v.cols)
        body += v.data.astype("<f8").tobytes()
    blob = CHECKPOINT_MAGIC + body + struct.pack("<I", zlib.crc32(body))
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_params(path, expected_config: ModelConfig | None = None):
    """Load a checkpoint; returns ``(params, config, iteration)``.

    Verifies magic, version, checksum, and every tensor shape against the
    stored config; nothing is returned on failure (no partial loads). When
    ``expected_config`` is given it must match the stored config exactly.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 8 or blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, (crc,) = blob[len(CHECKPOINT_MAGIC) : -4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: checkpoint checksum mismatch")
    r_off = [0]

    def unpack(fmt):
        size = struct.calcsize(fmt)
        if r_off[0] + size > len(body):
            raise CheckpointError(f"{path}: checkpoint truncated")
        out = struct.unpack_from(fmt, body, r_off[0])
        r_off[0] += size
        return out

    (version,) = unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    num_layers, gat_dim, input_dim = unpack("<III")
    (dropout_rate,) = unpack("<d")
    (n_fc,) = unpack("<I")
    fc_dims = unpack(f"<{n_fc}I")
    config = ModelConfig(
        num_gat_layers=num_layers,
        gat_dim=gat_dim,
        fc_dims=fc_dims,
        dropout_rate=dropout_rate,
        input_dim=input_dim,
    )
    if expected_config is not None and expected_config != config:
        raise CheckpointError(
            f"{path}: checkpoint config {config} does not match expected {expected_config}"
        )
    (iteration,) = unpack("<Q")
    (n_tensors,) = unpack("<I")
    shapes = _expected_shapes(config)
    if n_tensors != len(shapes):
        raise CheckpointError(f"{path}: expected {len(shapes)} tensors, found {n_tensors}")
    tensors = []
    for expected in shapes:
        rows, cols = unpack("<II")
        if (rows, cols) != expected:
            raise CheckpointError(
                f"{path}: tensor shape ({rows},{cols}) does not match config shape {expected}"
            )
        count = rows * cols
        if r_off[0] + 8 * count > len(body):
            raise CheckpointError(f"{path}: checkpoint truncated")
        data = np.frombuffer(body, dtype="<f8", count=count, offset=r_off[0]).reshape(rows, cols)
        r_off[0] += 8 * count
        tensors.append(parameter(data.copy()))
    if r_off[0] != len(body):
        raise CheckpointError(f"{path}: trailing bytes in checkpoint")

    it = iter(tensors)
    embed = next(it)
    layers = [GatParams(w=next(it), e=next(it), u=next(it), b=next(it)) for _ in range(num_layers)]
    mu, sigma_raw = next(it), next(it)
    fc = [(next(it), next(it)) for _ in range(n_fc)]
    params = ModelParams(embed, layers, mu, sigma_raw, fc)
    return params, config, int(iteration)
