"""Skip-gram style training of library vectors.

Each training pair looks up two rows of one shared embedding matrix, scores
them with ``sigmoid(u . v)`` and takes a plain SGD step on binary
cross-entropy. Positive and negative pairs are fed in equal numbers.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numba
import numpy as np

from ._io import atomic_write
from .errors import ConfigError, DataError, NumericalError
from .pairs import CooccurrenceRegistry, interleave, positive_pairs, sample_negatives

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-7


@dataclass
class TrainConfig:
    dim: int = 100
    epochs: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 0.0001
    seed: int = 1
    negative_ratio: float = 1.0
    tied: bool = True
    unique_pairs: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError("dim must be >= 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.learning_rate > 0 or self.min_learning_rate < 0:
            raise ConfigError("learning rates must be positive")
        if self.min_learning_rate > self.learning_rate:
            raise ConfigError("min_learning_rate exceeds learning_rate")
        if self.negative_ratio != 1.0:
            raise ConfigError("negative_ratio is fixed at 1.0 (one negative per positive)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass
class TrainResult:
    matrix: np.ndarray
    epoch_losses: list = field(default_factory=list)
    context_matrix: Optional[np.ndarray] = None
    n_updates: int = 0
    positives_per_epoch: int = 0
    negatives_per_epoch: int = 0


def init_matrix(n_rows: int, dim: int, seed) -> np.ndarray:
    """Uniform entries in ``[-0.5/dim, 0.5/dim]``, deterministic per seed."""
    if n_rows < 2 or dim < 2:
        raise ConfigError("embedding matrix needs at least 2 rows and 2 columns")
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.5 / dim, 0.5 / dim, size=(n_rows, dim))


def sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def pair_loss_and_grads(u: np.ndarray, v: np.ndarray, label: int):
    """Binary cross-entropy of ``sigmoid(u . v)`` against ``label`` and its gradients.

    The probability is clamped to ``[1e-7, 1 - 1e-7]`` inside the log only;
    gradients use the unclamped sigmoid.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    s = float(sigmoid(np.dot(u, v)))
    p = min(max(s, PROB_CLAMP), 1.0 - PROB_CLAMP)
    loss = -(label * np.log(p) + (1 - label) * np.log(1.0 - p))
    err = s - label
    return float(loss), err * v, err * u


@numba.njit(cache=True)
def _sigmoid_scalar(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    z = np.exp(x)
    return z / (1.0 + z)


@numba.njit(cache=True)
def _sgd_pass(W, C, targets, contexts, labels, lr0, lr1, step0, total):
    """Sequential SGD over one pair stream. Returns (loss sum, index of first bad pair or -1)."""
    d = W.shape[1]
    loss = 0.0
    span = lr0 - lr1
    for n in range(targets.shape[0]):
        t = targets[n]
        c = contexts[n]
        y = labels[n]
        dot = 0.0
        for k in range(d):
            dot += W[t, k] * C[c, k]
        if not np.isfinite(dot):
            return loss, n
        s = _sigmoid_scalar(dot)
        p = min(max(s, 1e-7), 1.0 - 1e-7)
        loss -= y * np.log(p) + (1.0 - y) * np.log(1.0 - p)
        lr = lr0 - span * (step0 + n) / total
        g = (s - y) * lr
        for k in range(d):
            wu = W[t, k]
            cv = C[c, k]
            W[t, k] = wu - g * cv
            C[c, k] = cv - g * wu
    return loss, -1


@numba.njit(parallel=True, cache=True)
def _sgd_pass_hogwild(W, C, targets, contexts, labels, lr0, lr1, step0, total, n_chunks):
    """Lock-free concurrent variant. Row updates may race; results are not reproducible."""
    n = targets.shape[0]
    chunk = (n + n_chunks - 1) // n_chunks
    losses = np.zeros(n_chunks)
    bad = np.full(n_chunks, -1)
    for ci in numba.prange(n_chunks):
        lo = ci * chunk
        hi = min(n, lo + chunk)
        if lo < hi:
            l, b = _sgd_pass(W, C, targets[lo:hi], contexts[lo:hi], labels[lo:hi],
                             lr0, lr1, step0 + lo, total)
            losses[ci] = l
            if b >= 0:
                bad[ci] = lo + b
    first_bad = -1
    for ci in range(n_chunks):
        if bad[ci] >= 0:
            first_bad = bad[ci]
            break
    return losses.sum(), first_bad


def train(positives: np.ndarray, negative_sampler: Callable, cfg: TrainConfig,
          n_rows: int, init: Optional[np.ndarray] = None) -> TrainResult:
    """Train an ``n_rows x cfg.dim`` embedding matrix.

    ``negative_sampler(count, rng)`` must return a ``(count, 2)`` array of true
    negative pairs. Each epoch shuffles ``positives``, interleaves them 1:1 with
    fresh negatives and applies one SGD update per pair to both rows involved.
    The learning rate decays linearly per update across all epochs.
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    if positives.shape[0] == 0:
        raise DataError("no positive pairs to train on")
    if np.any(positives[:, 0] == positives[:, 1]):
        raise DataError("positive pairs must join two distinct libraries")
    if positives.max() >= n_rows or positives.min() < 0:
        raise DataError("positive pair index out of range")

    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    W = init_matrix(n_rows, cfg.dim, seeds[0]) if init is None else np.array(init, dtype=float)
    if W.shape != (n_rows, cfg.dim):
        raise ConfigError(f"initial matrix has shape {W.shape}, expected {(n_rows, cfg.dim)}")
    C = W if cfg.tied else init_matrix(n_rows, cfg.dim, seeds[1])
    rng = np.random.default_rng(seeds[2])

    n_pos = positives.shape[0]
    total = float(cfg.epochs * 2 * n_pos)
    result = TrainResult(W, context_matrix=None if cfg.tied else C,
                         positives_per_epoch=n_pos, negatives_per_epoch=n_pos)
    for epoch in range(cfg.epochs):
        pos = positives[rng.permutation(n_pos)]
        neg = np.asarray(negative_sampler(n_pos, rng), dtype=np.int64)
        if neg.shape != (n_pos, 2):
            raise DataError("negative sampler returned the wrong number of pairs")
        targets, contexts, labels = interleave(pos, neg)

        step0 = float(epoch * 2 * n_pos)
        if cfg.workers > 1:
            loss, bad = _sgd_pass_hogwild(W, C, targets, contexts, labels, cfg.learning_rate,
                                          cfg.min_learning_rate, step0, total, cfg.workers)
        else:
            loss, bad = _sgd_pass(W, C, targets, contexts, labels, cfg.learning_rate,
                                  cfg.min_learning_rate, step0, total)
        if bad >= 0 or not np.isfinite(W).all() or not np.isfinite(C).all():
            lr = cfg.learning_rate - (cfg.learning_rate - cfg.min_learning_rate) * (step0 + max(bad, 0)) / total
            raise NumericalError(
                f"non-finite embedding values in epoch {epoch + 1}"
                + (f" at pair {bad} ({targets[bad]}, {contexts[bad]})" if bad >= 0 else "")
                + f"; learning rate {lr:.4g} is probably too high")
        mean_loss = loss / (2 * n_pos)
        result.epoch_losses.append(float(mean_loss))
        result.n_updates += 2 * n_pos
        logger.info("epoch %d/%d mean loss %.5f", epoch + 1, cfg.epochs, mean_loss)
    return result


def train_from_registry(registry: CooccurrenceRegistry, cfg: TrainConfig,
                        vocab_indices=None) -> TrainResult:
    """Convenience wrapper: positives from ``registry``, true negatives over ``vocab_indices``."""
    if vocab_indices is None:
        vocab_indices = range(registry.n_libraries)
    indices = sorted(vocab_indices)
    positives = positive_pairs(registry, unique=cfg.unique_pairs)
    return train(positives, lambda n, rng: sample_negatives(registry, indices, n, rng),
                 cfg, registry.n_libraries)


# ---------------------------------------------------------------------------
# Embedding files
# ---------------------------------------------------------------------------


def _check_matrix(names, matrix, source):
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != len(names):
        raise DataError(f"{source}: matrix shape {matrix.shape} does not match {len(names)} names")
    if not np.isfinite(matrix).all():
        raise DataError(f"{source}: embedding contains non-finite values")
    return matrix


def save_tsv(path, names, matrix) -> Path:
    """Text format: ``V d`` header, then ``name<TAB>f1<TAB>...<TAB>fd`` with 9 significant digits."""
    matrix = _check_matrix(names, matrix, path)
    with atomic_write(path) as f:
        f.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
        for name, row in zip(names, matrix):
            f.write(name + "\t" + "\t".join(f"{x:.9g}" for x in row) + "\n")
    return Path(path)


def load_tsv(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"embedding file {path} does not exist")
    with path.open(encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}: first line must be 'V d'")
        n, d = int(header[0]), int(header[1])
        names, rows = [], []
        for lineno, line in enumerate(f, 2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != d + 1:
                raise DataError(f"{path}:{lineno}: expected {d} values")
            names.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(names) != n:
        raise DataError(f"{path}: header says {n} rows, found {len(names)}")
    matrix = np.array(rows, dtype=float).reshape(n, d)
    return names, _check_matrix(names, matrix, path)


def save_binary(path, names, matrix) -> Path:
    """Little-endian: u32 V, u32 d, then per row u32 name length, name bytes, d float32."""
    matrix = _check_matrix(names, matrix, path)
    n, d = matrix.shape
    rows = matrix.astype("<f4")
    with atomic_write(path, "wb") as f:
        f.write(struct.pack("<II", n, d))
        for name, row in zip(names, rows):
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(row.tobytes())
    return Path(path)


def load_binary(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"embedding file {path} does not exist")
    data = path.read_bytes()
    try:
        n, d = struct.unpack_from("<II", data, 0)
        off = 8
        names = []
        matrix = np.empty((n, d), dtype=np.float32)
        for i in range(n):
            (ln,) = struct.unpack_from("<I", data, off)
            off += 4
            names.append(data[off:off + ln].decode("utf-8"))
            off += ln
            matrix[i] = np.frombuffer(data, dtype="<f4", count=d, offset=off)
            off += 4 * d
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: truncated or corrupt embedding file ({exc})") from exc
    if off != len(data):
        raise DataError(f"{path}: {len(data) - off} trailing bytes")
    return names, _check_matrix(names, matrix.astype(float), path)
