"""Exact cosine search over library vectors: neighbours, contextual search,
analogies and export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ._io import atomic_write
from .errors import ConfigError, DataError, NumericalError, UnknownLibraryError
from .train import load_binary, load_tsv, save_binary, save_tsv
from .vocab import Vocabulary

# Ubiquitous standard libraries left out of the co-occurrence baseline.
STANDARD_LIBRARIES = {
    "java": ("java.util", "java.io", "java.net", "java.lang.reflect", "java.util.concurrent"),
    "js": ("path", "fs", "http", "child_process", "util"),
    "python": ("setuptools", "os", "sys", "re", "json"),
}


class Embeddings:
    """Immutable name -> vector table with row-normalised copies for cosine search."""

    def __init__(self, names, matrix, vocab: Optional[Vocabulary] = None):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != len(names):
            raise DataError(f"matrix shape {matrix.shape} does not match {len(names)} names")
        if not np.isfinite(matrix).all():
            raise DataError("embedding contains non-finite values")
        self.names = list(names)
        self._index = {n: i for i, n in enumerate(self.names)}
        if len(self._index) != len(self.names):
            raise DataError("duplicate library names")
        self.matrix = matrix
        self.matrix.setflags(write=False)
        norms = np.linalg.norm(matrix, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        self.unit = matrix / safe[:, None]
        self.unit.setflags(write=False)
        # Position of each name in lexicographic order, for tie-breaking.
        self._name_rank = np.empty(len(self.names), dtype=np.int64)
        self._name_rank[np.argsort(np.array(self.names, dtype=str), kind="stable")] = np.arange(len(self.names))
        self.vocab = vocab

    @classmethod
    def from_vocab(cls, vocab: Vocabulary, matrix) -> "Embeddings":
        return cls(vocab.names, matrix, vocab)

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self._index

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def scaled(self, factor: float) -> "Embeddings":
        return Embeddings(self.names, self.matrix * factor, self.vocab)

    def suggest(self, name: str, limit: int = 5) -> list:
        """Names sharing a prefix with ``name`` (case-insensitive), shortest first."""
        low = name.lower()
        hits = [n for n in self.names if n.lower().startswith(low)]
        if not hits and len(low) > 2:
            hits = [n for n in self.names if n.lower().startswith(low[:3])]
        return sorted(hits, key=lambda n: (len(n), n))[:limit]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownLibraryError(name, self.suggest(name)) from None

    def vector(self, name: str) -> np.ndarray:
        return self.matrix[self.index(name)]

    def nearest_neighbors(self, query, k: int = 10, exclusions: Iterable[str] = (),
                          candidates: Optional[Iterable[str]] = None) -> list:
        """Exact top-``k`` ``(name, cosine)`` by full scan; ties broken by name."""
        if k < 1:
            raise ConfigError("k must be >= 1")
        q = np.asarray(query, dtype=float)
        norm = np.linalg.norm(q)
        if not norm > 0:
            raise NumericalError("cosine similarity is undefined for a zero query vector")
        scores = self.unit @ (q / norm)
        mask = np.ones(len(self.names), dtype=bool)
        if candidates is not None:
            mask[:] = False
            mask[[self._index[n] for n in candidates if n in self._index]] = True
        for n in exclusions:
            i = self._index.get(n)
            if i is not None:
                mask[i] = False
        rows = np.flatnonzero(mask)
        if rows.size == 0:
            return []
        order = rows[np.lexsort((self._name_rank[rows], -scores[rows]))][:k]
        return [(self.names[i], float(np.clip(scores[i], -1.0, 1.0))) for i in order]

    def rank_of(self, target: str, query, exclusions: Iterable[str] = ()) -> Optional[int]:
        """1-based position of ``target`` in the full neighbour ranking of ``query``."""
        if target in set(exclusions) or target not in self._index:
            return None
        ranked = self.nearest_neighbors(query, len(self.names), exclusions)
        for pos, (name, _) in enumerate(ranked, 1):
            if name == target:
                return pos
        return None

    def context_vector(self, libraries: Iterable[str], mode: str = "sum") -> np.ndarray:
        libraries = list(libraries)
        if not libraries:
            raise ConfigError("context needs at least one library")
        vec = np.sum([self.vector(n) for n in libraries], axis=0)
        if mode == "sum":
            return vec
        if mode == "mean":
            return vec / len(libraries)
        raise ConfigError(f"unknown context mode {mode!r}; use 'sum' or 'mean'")


@dataclass
class ContextQuery:
    context: list
    k: int = 10
    mode: str = "sum"
    exclusions: Optional[set] = None
    tag_filter: Optional[set] = None

    def __post_init__(self):
        if not self.context:
            raise ConfigError("context needs at least one library")
        if self.k < 1:
            raise ConfigError("k must be >= 1")


@dataclass
class AnalogyQuery:
    a: str
    a_star: str
    b: str
    b_star: Optional[str] = None

    def __post_init__(self):
        if self.b in (self.a, self.a_star):
            raise ConfigError("b must differ from a and a_star")


@dataclass
class AnalogyResult:
    neighbors: list
    pred_rank: Optional[int] = None
    only_b_rank: Optional[int] = None
    offset_norm: float = 0.0


def contextual_search(emb: Embeddings, q: ContextQuery, restrict_to: Optional[Iterable[str]] = None,
                      metadata: Optional[dict] = None) -> list:
    """Neighbours of the context vector, optionally restricted and tag-filtered.

    ``restrict_to`` limits candidates (normally the relevant libraries);
    ``metadata`` maps library name -> set of tags and is consulted only when
    ``q.tag_filter`` is set. The context libraries are excluded by default.
    """
    vec = emb.context_vector(q.context, q.mode)
    exclusions = set(q.context) if q.exclusions is None else set(q.exclusions)
    candidates = None if restrict_to is None else set(restrict_to)
    if q.tag_filter:
        metadata = metadata or {}
        tagged = {n for n, tags in metadata.items() if set(tags) & set(q.tag_filter)}
        candidates = tagged if candidates is None else candidates & tagged
    return emb.nearest_neighbors(vec, q.k, exclusions, candidates)


def analogy(emb: Embeddings, q: AnalogyQuery, k: int = 10) -> AnalogyResult:
    """Neighbours of ``v(a_star) - v(a) + v(b)`` with the query terms excluded.

    When ``q.b_star`` is given, also report its rank there (``pred_rank``) and
    among the neighbours of ``v(b)`` alone (``only_b_rank``).
    """
    offset = emb.vector(q.a_star) - emb.vector(q.a)
    x = offset + emb.vector(q.b)
    if not np.linalg.norm(x) > 0:
        raise NumericalError("analogy vector a* - a + b is zero")
    excluded = {q.a, q.a_star, q.b}
    res = AnalogyResult(emb.nearest_neighbors(x, k, excluded), offset_norm=float(np.linalg.norm(offset)))
    if q.b_star is not None:
        emb.index(q.b_star)
        res.pred_rank = emb.rank_of(q.b_star, x, excluded)
        res.only_b_rank = emb.rank_of(q.b_star, emb.vector(q.b), {q.b})
    return res


def cooccurrence_baseline(registry, vocab: Vocabulary, library: str, k: int = 5,
                          exclude: Iterable[str] = ()) -> list:
    """Top-``k`` partners of ``library`` by file-level co-occurrence count."""
    i = vocab.index_of(library)
    if i is None:
        raise UnknownLibraryError(library)
    skip = {vocab.index_of(n) for n in exclude} - {None}
    partners = []
    for (a, b), c in registry.file_pair_counts.items():
        if i in (a, b):
            j = b if a == i else a
            if j not in skip:
                partners.append((vocab.entries[j].library, c))
    partners.sort(key=lambda p: (-p[1], p[0]))
    return partners[:k]


def load_embeddings(path, vocab: Optional[Vocabulary] = None) -> Embeddings:
    """Load ``.tsv`` or binary embeddings; names must match ``vocab`` when given."""
    path = Path(path)
    names, matrix = load_tsv(path) if path.suffix == ".tsv" else load_binary(path)
    if vocab is not None and names != vocab.names:
        raise DataError(f"{path}: library names do not match the vocabulary")
    return Embeddings(names, matrix, vocab)


def export_embeddings(emb: Embeddings, out_dir, formats=("tsv", "bin", "projector"),
                      stem: str = "embeddings") -> dict:
    """Write the requested formats into ``out_dir``; returns ``{format: [paths]}``.

    ``projector`` writes a header-less vectors TSV plus a metadata TSV
    (library name, popularity class) with matching row order.
    """
    if len(emb) == 0:
        raise DataError("refusing to export an empty embedding")
    out_dir = Path(out_dir)
    written = {}
    try:
        for fmt in formats:
            if fmt == "tsv":
                written[fmt] = [save_tsv(out_dir / f"{stem}.tsv", emb.names, emb.matrix)]
            elif fmt == "bin":
                written[fmt] = [save_binary(out_dir / f"{stem}.bin", emb.names, emb.matrix)]
            elif fmt == "projector":
                vec_path = out_dir / f"{stem}.vectors.tsv"
                meta_path = out_dir / f"{stem}.metadata.tsv"
                with atomic_write(vec_path) as f:
                    for row in emb.matrix:
                        f.write("\t".join(f"{x:.9g}" for x in row) + "\n")
                with atomic_write(meta_path) as f:
                    f.write("library\tpopularity_class\n")
                    for n in emb.names:
                        entry = emb.vocab.get(n) if emb.vocab is not None else None
                        cls = "" if entry is None else entry.popularity_class
                        f.write(f"{n}\t{cls}\n")
                written[fmt] = [vec_path, meta_path]
            else:
                raise ConfigError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise DataError(f"export to {out_dir} failed: {exc}") from exc
    return written
