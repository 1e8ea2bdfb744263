"""Co-occurrence registry and training pair generation.

Two libraries co-occur when some single source file imports both. Positive
pairs are those co-occurrences; negative pairs are sampled uniformly from the
vocabulary and kept only if the pair never co-occurs anywhere in the corpus.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from ._io import atomic_write
from .errors import DataError, SamplingError
from .vocab import Vocabulary, file_libraries

MAX_CONSECUTIVE_REJECTIONS = 1000

PAIR_DTYPE = np.dtype([("target", "<u4"), ("context", "<u4"), ("label", "u1")])


class TrainingPair(NamedTuple):
    target: int
    context: int
    label: int


def canonical(i: int, j: int) -> tuple:
    return (i, j) if i < j else (j, i)


@dataclass
class CooccurrenceRegistry:
    n_libraries: int
    file_pair_counts: dict = field(default_factory=dict)
    project_pair_counts: dict = field(default_factory=dict)
    _keys: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    @property
    def pair_set(self):
        return self.file_pair_counts.keys()

    def __len__(self):
        return len(self.file_pair_counts)

    def __contains__(self, pair):
        i, j = pair
        return canonical(i, j) in self.file_pair_counts

    def sorted_keys(self) -> np.ndarray:
        """Pairs encoded as ``min * V + max``, sorted, for vectorised membership tests."""
        if self._keys is None:
            v = self.n_libraries
            keys = np.fromiter((i * v + j for i, j in self.file_pair_counts),
                               dtype=np.int64, count=len(self.file_pair_counts))
            keys.sort()
            self._keys = keys
        return self._keys

    def contains_many(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        lo = np.minimum(a, b).astype(np.int64)
        hi = np.maximum(a, b).astype(np.int64)
        q = lo * self.n_libraries + hi
        keys = self.sorted_keys()
        if keys.size == 0:
            return np.zeros(q.shape, dtype=bool)
        pos = np.searchsorted(keys, q)
        pos[pos == keys.size] = 0
        return keys[pos] == q


def build_registry(corpus, vocab: Vocabulary, train_filter=None,
                   mapping_index: Optional[dict] = None) -> CooccurrenceRegistry:
    """Register every unordered library pair imported together by some file.

    Raw imports are mapped to libraries, looked up in ``vocab`` and, when
    ``train_filter`` (a set of indices) is given, restricted to it. Files left
    with fewer than two libraries contribute nothing.
    """
    reg = CooccurrenceRegistry(len(vocab))
    file_counts = reg.file_pair_counts
    project_counts = reg.project_pair_counts
    for project in corpus:
        seen = set()
        for f in project.files:
            idx = set()
            for lib in file_libraries(f.raw_imports, project.ecosystem, mapping_index):
                i = vocab.index_of(lib)
                if i is not None and (train_filter is None or i in train_filter):
                    idx.add(i)
            if len(idx) < 2:
                continue
            for pair in combinations(sorted(idx), 2):
                file_counts[pair] = file_counts.get(pair, 0) + 1
                seen.add(pair)
        for pair in seen:
            project_counts[pair] = project_counts.get(pair, 0) + 1
    return reg


def positive_pairs(registry: CooccurrenceRegistry, unique: bool = False) -> np.ndarray:
    """All registered pairs as an ``(n, 2)`` array in canonical order.

    Each pair is repeated once per file it co-occurs in unless ``unique``.
    """
    items = sorted(registry.file_pair_counts.items())
    if not items:
        return np.empty((0, 2), dtype=np.int64)
    pairs = np.array([p for p, _ in items], dtype=np.int64)
    if unique:
        return pairs
    counts = np.array([c for _, c in items], dtype=np.int64)
    return np.repeat(pairs, counts, axis=0)


def sample_negatives(registry: CooccurrenceRegistry, vocab_indices, count: int,
                     seed=None) -> np.ndarray:
    """Draw ``count`` true-negative pairs uniformly from ``vocab_indices``.

    Each candidate ``(i, j)`` with ``i != j`` is drawn uniformly and redrawn
    while the pair co-occurs somewhere. ``seed`` may be an int or a
    ``numpy.random.Generator``. Raises :class:`SamplingError` after
    ``MAX_CONSECUTIVE_REJECTIONS`` rejections in a row.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    idx = np.asarray(sorted(vocab_indices), dtype=np.int64)
    if count <= 0:
        return np.empty((0, 2), dtype=np.int64)
    m = idx.size
    if m < 2:
        raise SamplingError("need at least 2 libraries to sample negative pairs")

    out = []
    need = count
    run = 0  # rejections carried over from the previous batch
    while need > 0:
        batch = max(2 * need, 1024)
        a = rng.integers(0, m, size=batch)
        b = rng.integers(0, m - 1, size=batch)
        b += b >= a
        t, c = idx[a], idx[b]
        good = np.flatnonzero(~registry.contains_many(t, c))
        take = good[:need]
        if take.size:
            gaps = np.diff(np.concatenate(([-1], take))) - 1
            gaps[0] += run
            longest = int(gaps.max())
        else:
            longest = run + batch
        if longest >= MAX_CONSECUTIVE_REJECTIONS:
            raise SamplingError(
                f"{MAX_CONSECUTIVE_REJECTIONS} consecutive candidate pairs co-occur; "
                f"the co-occurrence graph over {m} libraries ({len(registry)} pairs) "
                "is too dense for true-negative sampling")
        out.append(np.stack([t[take], c[take]], axis=1))
        need -= take.size
        run = run + batch if not good.size else batch - 1 - int(good[-1])
    return np.concatenate(out)


def epoch_stream(positives: np.ndarray, registry: CooccurrenceRegistry, vocab_indices,
                 rng: np.random.Generator):
    """One epoch of training pairs: shuffled positives interleaved 1:1 with fresh negatives.

    Returns ``(targets, contexts, labels)`` arrays of length ``2 * len(positives)``.
    """
    n = len(positives)
    pos = positives[rng.permutation(n)]
    neg = sample_negatives(registry, vocab_indices, n, rng)
    return interleave(pos, neg)


def interleave(pos: np.ndarray, neg: np.ndarray):
    """Alternate positive and negative pairs: ``pos[0], neg[0], pos[1], ...``."""
    n = len(pos)
    targets = np.empty(2 * n, dtype=np.int64)
    contexts = np.empty(2 * n, dtype=np.int64)
    labels = np.empty(2 * n, dtype=np.float64)
    targets[0::2], contexts[0::2], labels[0::2] = pos[:, 0], pos[:, 1], 1.0
    targets[1::2], contexts[1::2], labels[1::2] = neg[:, 0], neg[:, 1], 0.0
    return targets, contexts, labels


def write_pair_dump(path, targets, contexts, labels) -> Path:
    """Binary dump of ``(u32 target, u32 context, u8 label)`` little-endian records."""
    recs = np.empty(len(targets), dtype=PAIR_DTYPE)
    recs["target"] = targets
    recs["context"] = contexts
    recs["label"] = labels
    with atomic_write(path, "wb") as f:
        f.write(recs.tobytes())
    return Path(path)


def read_pair_dump(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) % PAIR_DTYPE.itemsize:
        raise DataError(f"{path}: size is not a multiple of {PAIR_DTYPE.itemsize}-byte records")
    return np.frombuffer(data, dtype=PAIR_DTYPE)


def iter_pairs(records: np.ndarray):
    for r in records:
        yield TrainingPair(int(r["target"]), int(r["context"]), int(r["label"]))
