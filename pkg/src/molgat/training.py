"""Loss, balanced sampling, Adam, and the training loop.

Batches draw an equal number of samples from each category pool (with
replacement; the pools are wildly unequal in practice), every parameter is
updated by Adam, and checkpoints plus a CSV progress log are written
periodically. All randomness flows from one seeded generator, so a fixed
seed reproduces the run bit-for-bit on one machine.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Value, constant
from .errors import DataError, NumericError
from .metrics import auroc
from .model import ModelConfig, ModelParams, predict, save_params, score

TRAIN_CATEGORIES = ("dude_active", "dude_inactive", "pdbbind_positive", "pdbbind_negative")
SCREEN_CATEGORIES = ("dude_active", "dude_inactive")

LOG_COLUMNS = ("iteration", "train_loss", "val_auroc", "mu", "sigma", "wall_time")


@dataclass
class TrainConfig:
    batch_size: int = 32
    iterations: int = 150_000
    learning_rate: float = 1e-4
    seed: int = 0
    ratio: tuple[int, ...] = (1, 1, 1, 1)
    checkpoint_every: int = 1000

    def __post_init__(self):
        self.ratio = tuple(int(r) for r in self.ratio)
        if self.batch_size < 1 or self.iterations < 1 or self.checkpoint_every < 1:
            raise ValueError("batch_size, iterations, and checkpoint_every must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if any(r < 1 for r in self.ratio):
            raise ValueError("ratio entries must be positive")
        if self.batch_size % sum(self.ratio) != 0:
            raise ValueError(
                f"batch_size {self.batch_size} is not divisible by the ratio total {sum(self.ratio)}"
            )


def bce_loss(tape: Tape, pred: Value, label: int) -> Value:
    """Binary cross entropy of one prediction; logs clamped at 1e-12."""
    if label not in (0, 1):
        raise DataError(f"label must be 0 or 1, got {label!r}")
    log_p = tape.log(pred)
    log_not_p = tape.log(tape.sub(constant([[1.0]]), pred))
    weighted = tape.add(tape.scale(log_p, float(label)), tape.scale(log_not_p, 1.0 - label))
    return tape.scale(weighted, -1.0)


def mean_bce(tape: Tape, preds: list[Value], labels: list[int]) -> Value:
    total = None
    for pred, label in zip(preds, labels):
        term = bce_loss(tape, pred, label)
        total = term if total is None else tape.add(total, term)
    return tape.scale(total, 1.0 / len(preds))


def balanced_batches(pools: dict[str, list], cfg: TrainConfig, rng: np.random.Generator):
    """Endless stream of batches with a fixed per-category mix.

    Draws are uniform with replacement within each category. Deterministic
    given the generator state; categories are visited in sorted-key order.
    """
    names = sorted(pools)
    if len(names) != len(cfg.ratio):
        raise DataError(
            f"ratio has {len(cfg.ratio)} entries but {len(names)} category pools were given"
        )
    for name in names:
        if not pools[name]:
            raise DataError(f"category pool '{name}' is empty")
    unit = cfg.batch_size // sum(cfg.ratio)
    counts = {name: unit * r for name, r in zip(names, cfg.ratio)}
    while True:
        batch = []
        for name in names:
            pool = pools[name]
            idx = rng.integers(0, len(pool), size=counts[name])
            batch.extend(pool[int(i)] for i in idx)
        yield batch


class Adam:
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[int, np.ndarray] = {}
        self._v: dict[int, np.ndarray] = {}

    def step(self, values: list[Value]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for val in values:
            g = val.grad if val.grad is not None else np.zeros_like(val.data)
            key = id(val)
            m = self._m.setdefault(key, np.zeros_like(val.data))
            v = self._v.setdefault(key, np.zeros_like(val.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            val.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def split_by_protein(samples, val_fraction: float = 0.1, seed: int = 0):
    """Hold out a fraction of proteins (never individual samples) for validation."""
    proteins = sorted({s.protein_id for s in samples})
    if len(proteins) < 2 or val_fraction <= 0:
        return list(samples), []
    rng = np.random.default_rng(seed)
    shuffled = list(proteins)
    rng.shuffle(shuffled)
    n_val = max(1, int(round(val_fraction * len(proteins))))
    if n_val >= len(proteins):
        n_val = len(proteins) - 1
    held_out = set(shuffled[:n_val])
    train = [s for s in samples if s.protein_id not in held_out]
    val = [s for s in samples if s.protein_id in held_out]
    return train, val


@dataclass
class TrainResult:
    latest_path: str
    best_path: str | None
    log_path: str
    log_rows: list[dict] = field(default_factory=list)
    best_val_auroc: float | None = None
    final_loss: float | None = None


def _validation_auroc(val_samples, params, model_cfg) -> float:
    labeled = [s for s in val_samples if s.label is not None]
    labels = [s.label for s in labeled]
    if not labeled or len(set(labels)) < 2:
        return float("nan")
    scores = [score(s, params, model_cfg) for s in labeled]
    return auroc(scores, labels)


def train(
    train_pools: dict[str, list],
    val_samples: list,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir,
    params: ModelParams | None = None,
) -> TrainResult:
    """Run the optimization loop and write checkpoints plus a CSV log.

    ``train_pools`` maps category name to a list of labeled GraphSamples.
    A non-finite loss aborts immediately; the last written checkpoint stays
    on disk untouched.
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(train_cfg.seed)
    if params is None:
        params = ModelParams.initialize(model_cfg, rng)
    n_params = params.num_parameters()

    for name, pool in train_pools.items():
        for s in pool:
            if s.label is None:
                raise DataError(f"sample {s.complex_id} in pool '{name}' has no label")

    batches = balanced_batches(train_pools, train_cfg, rng)
    adam = Adam(train_cfg.learning_rate)

    latest_path = os.path.join(out_dir, "latest.ckpt")
    best_path = os.path.join(out_dir, "best.ckpt")
    log_path = os.path.join(out_dir, "train_log.csv")

    result = TrainResult(latest_path=latest_path, best_path=None, log_path=log_path)
    start = time.monotonic()

    with open(log_path, "w", newline="", encoding="utf-8") as log_fh:
        writer = csv.DictWriter(log_fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for iteration in range(1, train_cfg.iterations + 1):
            batch = next(batches)
            tape = Tape()
            preds = [
                predict(tape, s, params, model_cfg, training=True, rng=rng) for s in batch
            ]
            loss = mean_bce(tape, preds, [s.label for s in batch])
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise NumericError(
                    f"non-finite loss at iteration {iteration}; last checkpoint retained"
                )
            params.zero_grad()
            tape.backward(loss)
            adam.step(params.values())
            if params.num_parameters() != n_params:
                raise NumericError("parameter count changed during training")

            if iteration % train_cfg.checkpoint_every == 0 or iteration == train_cfg.iterations:
                val_auroc = _validation_auroc(val_samples, params, model_cfg)
                row = {
                    "iteration": iteration,
                    "train_loss": repr(loss_value),
                    "val_auroc": repr(val_auroc),
                    "mu": repr(params.mu_value()),
                    "sigma": repr(params.sigma_value()),
                    "wall_time": repr(time.monotonic() - start),
                }
                writer.writerow(row)
                log_fh.flush()
                result.log_rows.append(row)
                save_params(latest_path, params, model_cfg, iteration)
                if np.isfinite(val_auroc) and (
                    result.best_val_auroc is None or val_auroc > result.best_val_auroc
                ):
                    result.best_val_auroc = val_auroc
                    save_params(best_path, params, model_cfg, iteration)
                    result.best_path = best_path
            result.final_loss = loss_value

    return result
