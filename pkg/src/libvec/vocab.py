"""Library vocabulary: raw import -> library mapping, reuse counts, popularity
classes, the relevant-import filter and corpus statistics."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ._io import atomic_write
from .corpus import ProjectRecord, check_ecosystem
from .errors import ConfigError, DataError

MAX_CLASS = 5
# Popularity classes are normalised to a corpus of this many projects.
CLASS_NORMALISATION = 100_000


@dataclass(frozen=True)
class VocabEntry:
    library: str
    index: int
    global_reuse: int
    total_occurrences: int
    popularity_class: int


@dataclass
class FilterConfig:
    min_global_reuse: int = 10
    relevant_class_lo: int = 2
    relevant_class_hi: int = 4
    train_min_reuse: int = 2

    def __post_init__(self):
        if self.min_global_reuse < 1:
            raise ConfigError("min_global_reuse must be >= 1")
        if not 0 <= self.relevant_class_lo <= self.relevant_class_hi <= MAX_CLASS:
            raise ConfigError("need 0 <= relevant_class_lo <= relevant_class_hi <= 5")
        if self.train_min_reuse < 1:
            raise ConfigError("train_min_reuse must be >= 1")


def is_relative(name: str) -> bool:
    return name.startswith((".", "/", "\\"))


# ---------------------------------------------------------------------------
# Raw import -> library
# ---------------------------------------------------------------------------


def load_mapping_index(path) -> dict:
    """Read a two-column ``prefix<TAB>library`` TSV. Blank and ``#`` lines are ignored."""
    table = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 tab-separated columns")
            table[parts[0]] = parts[1]
    return table


def map_to_library(raw_import: str, ecosystem: str, mapping_index: Optional[dict] = None) -> str:
    """Map a raw import onto the name of the library that provides it.

    >>> map_to_library("scipy.linalg", "python")
    'scipy'
    >>> map_to_library("@scope/pkg/sub", "js")
    '@scope/pkg'
    """
    if is_relative(raw_import):
        return raw_import
    if ecosystem == "python":
        return raw_import.split(".", 1)[0]
    if ecosystem == "js":
        parts = raw_import.split("/")
        if raw_import.startswith("@") and len(parts) > 1:
            return "/".join(parts[:2])
        return parts[0]
    if ecosystem in ("java", "csharp"):
        segments = raw_import.split(".")
        if mapping_index:
            for n in range(len(segments), 0, -1):
                hit = mapping_index.get(".".join(segments[:n]))
                if hit is not None:
                    return hit
        return ".".join(segments[:2])
    if ecosystem == "ruby":
        return raw_import.split("/", 1)[0]
    if ecosystem == "php":
        return raw_import.split("\\", 1)[0]
    check_ecosystem(ecosystem)
    raise AssertionError("unreachable")


def file_libraries(raw_imports: Iterable[str], ecosystem: str,
                   mapping_index: Optional[dict] = None) -> set:
    return {map_to_library(r, ecosystem, mapping_index) for r in raw_imports}


def project_libraries(project: ProjectRecord, mapping_index: Optional[dict] = None) -> frozenset:
    out = set()
    for f in project.files:
        out |= file_libraries(f.raw_imports, project.ecosystem, mapping_index)
    return frozenset(out)


# ---------------------------------------------------------------------------
# Popularity classes
# ---------------------------------------------------------------------------


def popularity_class(global_reuse: int, n_projects: int) -> int:
    """Order of magnitude of reuse, normalised per 100k projects, clamped to 0..5.

    Class ``c`` covers ``10**(c-1) <= reuse * 1e5 / n_projects < 10**c``; class 5
    is open-ended, i.e. used by at least 10% of all projects. Computed in
    integers so scaling both arguments never changes the result.
    """
    if n_projects < 1:
        raise ConfigError("n_projects must be >= 1")
    scaled = global_reuse * CLASS_NORMALISATION
    if scaled < n_projects:
        return 0
    cls = 1
    while cls < MAX_CLASS and scaled >= 10 ** cls * n_projects:
        cls += 1
    return cls


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


@dataclass
class Vocabulary:
    """Dense index over libraries, ordered by descending popularity."""

    entries: list
    n_projects: int
    _by_name: dict = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self._by_name = {e.library: e for e in self.entries}
        if len(self._by_name) != len(self.entries):
            raise DataError("duplicate library names in vocabulary")
        if [e.index for e in self.entries] != list(range(len(self.entries))):
            raise DataError("vocabulary indices must be dense and in order")

    def __len__(self):
        return len(self.entries)

    def __contains__(self, name):
        return name in self._by_name

    def __getitem__(self, name) -> VocabEntry:
        return self._by_name[name]

    def get(self, name) -> Optional[VocabEntry]:
        return self._by_name.get(name)

    @property
    def names(self) -> list:
        return [e.library for e in self.entries]

    def index_of(self, name) -> Optional[int]:
        e = self._by_name.get(name)
        return None if e is None else e.index

    def popularity_rank(self, name) -> int:
        """1-based rank by global reuse (ties by occurrences, then name)."""
        return self._by_name[name].index + 1

    def restrict(self, keep) -> "Vocabulary":
        """Sub-vocabulary of entries where ``keep(entry)`` holds, densely re-indexed.

        Reuse counts and classes stay relative to the full corpus.
        """
        kept = [e for e in self.entries if keep(e)]
        return Vocabulary(
            [VocabEntry(e.library, i, e.global_reuse, e.total_occurrences, e.popularity_class)
             for i, e in enumerate(kept)],
            self.n_projects,
        )

    def training_subset(self, cfg: FilterConfig) -> "Vocabulary":
        return self.restrict(lambda e: e.global_reuse >= cfg.train_min_reuse)

    def save(self, path) -> Path:
        path = Path(path)
        with atomic_write(path) as f:
            f.write(f"#n_projects\t{self.n_projects}\n")
            f.write("library\tindex\tglobal_reuse\ttotal_occurrences\tpopularity_class\n")
            for e in self.entries:
                f.write(f"{e.library}\t{e.index}\t{e.global_reuse}\t"
                        f"{e.total_occurrences}\t{e.popularity_class}\n")
        return path

    @classmethod
    def load(cls, path) -> "Vocabulary":
        path = Path(path)
        if not path.exists():
            raise DataError(f"vocabulary file {path} does not exist")
        lines = path.read_text(encoding="utf-8").splitlines()
        if len(lines) < 2 or not lines[0].startswith("#n_projects\t"):
            raise DataError(f"{path}: missing '#n_projects' header")
        n_projects = int(lines[0].split("\t")[1])
        entries = []
        for lineno, line in enumerate(lines[2:], 3):
            parts = line.split("\t")
            if len(parts) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 columns")
            entries.append(VocabEntry(parts[0], *(int(x) for x in parts[1:])))
        return cls(entries, n_projects)


def build_vocabulary(corpus, ecosystem: Optional[str] = None,
                     mapping_index: Optional[dict] = None) -> Vocabulary:
    """Count distinct projects and files per library.

    ``ecosystem`` overrides the per-project ecosystem recorded in the corpus.
    """
    corpus = list(corpus)
    if not corpus:
        raise DataError("cannot build a vocabulary from an empty corpus")
    reuse = Counter()
    occurrences = Counter()
    for project in corpus:
        eco = ecosystem or project.ecosystem
        seen = set()
        for f in project.files:
            libs = file_libraries(f.raw_imports, eco, mapping_index)
            occurrences.update(libs)
            seen |= libs
        reuse.update(seen)
    if not reuse:
        raise DataError("corpus contains no imports")
    n = len(corpus)
    order = sorted(reuse, key=lambda lib: (-reuse[lib], -occurrences[lib], lib))
    entries = [VocabEntry(lib, i, reuse[lib], occurrences[lib], popularity_class(reuse[lib], n))
               for i, lib in enumerate(order)]
    return Vocabulary(entries, n)


def relevant_filter(vocab: Vocabulary, cfg: FilterConfig = FilterConfig()) -> set:
    """Indices of libraries that are reused enough yet not ubiquitous."""
    return {
        e.index
        for e in vocab.entries
        if e.global_reuse >= cfg.min_global_reuse
        and cfg.relevant_class_lo <= e.popularity_class <= cfg.relevant_class_hi
        and not is_relative(e.library)
    }


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

COOCCURRENCE_THRESHOLDS = (1, 2, 10, 100)
COOCCURRENCE_BANDS = ("1", "2-9", "10-99", "100+")


@dataclass
class StatsReport:
    rank_frequency: list
    zipf_fit: tuple
    class_histogram: dict
    cooccurrence_breakdown: dict
    n_projects: int = 0
    n_libraries: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rank_frequency"] = [[r, f] for r, f in self.rank_frequency]
        d["zipf_fit"] = {"scale": self.zipf_fit[0], "exponent": self.zipf_fit[1]}
        d["class_histogram"] = {str(k): v for k, v in self.class_histogram.items()}
        return d

    def save(self, path, csv_path=None):
        with atomic_write(path) as f:
            json.dump(self.to_dict(), f, indent=1)
            f.write("\n")
        if csv_path is not None:
            with atomic_write(csv_path) as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["rank", "relative_frequency"])
                w.writerows(self.rank_frequency)


def rank_frequency(counts: dict) -> list:
    """``[(rank, relative frequency)]`` sorted by descending count, ties by name."""
    total = sum(counts.values())
    if total <= 0:
        return []
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(i + 1, c / total) for i, (_, c) in enumerate(ordered)]


def fit_zipf(points) -> tuple:
    """Least-squares line through log-log rank/frequency points: ``y = a * x**k``."""
    if len(points) < 2:
        return (float("nan"), float("nan"))
    ranks = np.array([r for r, _ in points], dtype=float)
    freqs = np.array([f for _, f in points], dtype=float)
    k, log_a = np.polyfit(np.log(ranks), np.log(freqs), 1)
    return (float(math.exp(log_a)), float(k))


def _breakdown(pair_counts: dict) -> dict:
    """Mean over libraries of the share of their partner pairs per frequency band."""
    per_lib = {}
    for (i, j), c in pair_counts.items():
        per_lib.setdefault(i, []).append(c)
        per_lib.setdefault(j, []).append(c)
    bands = dict.fromkeys(COOCCURRENCE_BANDS, 0.0)
    at_least = {str(t): 0.0 for t in COOCCURRENCE_THRESHOLDS}
    if not per_lib:
        return {"bands": bands, "at_least": at_least, "n_libraries": 0}
    for counts in per_lib.values():
        arr = np.asarray(counts)
        shares = [float(np.mean(arr >= t)) for t in COOCCURRENCE_THRESHOLDS]
        for t, s in zip(COOCCURRENCE_THRESHOLDS, shares):
            at_least[str(t)] += s
        for b, lo, hi in zip(COOCCURRENCE_BANDS, shares, shares[1:] + [0.0]):
            bands[b] += lo - hi
    n = len(per_lib)
    return {"bands": {k: v / n for k, v in bands.items()},
            "at_least": {k: v / n for k, v in at_least.items()},
            "n_libraries": n}


def compute_stats(corpus, vocab: Vocabulary, mapping_index: Optional[dict] = None,
                  by: str = "occurrences") -> StatsReport:
    """Rank/frequency, Zipf fit, class histogram and co-occurrence breakdown.

    ``by`` selects the popularity measure for the rank/frequency curve:
    ``"occurrences"`` (files importing the library) or ``"reuse"`` (projects).
    """
    from .pairs import build_registry

    if by == "occurrences":
        counts = {e.library: e.total_occurrences for e in vocab.entries}
    elif by == "reuse":
        counts = {e.library: e.global_reuse for e in vocab.entries}
    else:
        raise ConfigError(f"unknown popularity measure {by!r}")
    rf = rank_frequency(counts)
    hist = {c: 0 for c in range(MAX_CLASS + 1)}
    for e in vocab.entries:
        hist[e.popularity_class] += 1
    registry = build_registry(corpus, vocab, mapping_index=mapping_index)
    breakdown = {"file": _breakdown(registry.file_pair_counts),
                 "project": _breakdown(registry.project_pair_counts)}
    return StatsReport(rf, fit_zipf(rf), hist, breakdown, vocab.n_projects, len(vocab))
