"""Predictive-power evaluation of library vectors.

Projects are represented by the mean vector of the libraries they import. For
a context of libraries, the nearest training projects vote for the libraries
they import; the most frequent ones (minus the context) are the predictions.
They are scored against held-out projects that contain the whole context,
each correct prediction weighted by the fraction of those projects that
import it.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ._io import atomic_write
from .errors import ConfigError, DataError
from .pairs import build_registry
from .query import Embeddings
from .train import TrainConfig, train_from_registry
from .vocab import FilterConfig, build_vocabulary, project_libraries, relevant_filter

logger = logging.getLogger(__name__)


@dataclass
class CorpusSplit:
    train: list
    valid: list
    seed: int
    ratio: float


def split_corpus(projects, ratio: float = 0.9, seed: int = 1) -> CorpusSplit:
    """Uniformly random train/validation partition; input order is kept within each side."""
    projects = list(projects)
    if len(projects) < 2:
        raise ConfigError("need at least 2 projects to split")
    if not 0.0 < ratio < 1.0:
        raise ConfigError("split ratio must lie strictly between 0 and 1")
    n_train = int(round(ratio * len(projects)))
    if not 0 < n_train < len(projects):
        raise ConfigError(f"ratio {ratio} leaves one side of the split empty")
    perm = np.random.default_rng(seed).permutation(len(projects))
    train_idx = set(perm[:n_train].tolist())
    train = [p for i, p in enumerate(projects) if i in train_idx]
    valid = [p for i, p in enumerate(projects) if i not in train_idx]
    return CorpusSplit(train, valid, seed, ratio)


@dataclass
class ProjectVectorIndex:
    ids: list
    vectors: np.ndarray
    libraries: list
    skipped: int = 0

    def __post_init__(self):
        norms = np.linalg.norm(self.vectors, axis=1)
        self.unit = self.vectors / np.where(norms > 0, norms, 1.0)[:, None]

    def __len__(self):
        return len(self.ids)

    def entry(self, project_id):
        i = self.ids.index(project_id)
        return self.vectors[i], self.libraries[i]


def build_project_vectors(projects, emb: Embeddings, mapping_index: Optional[dict] = None) -> ProjectVectorIndex:
    """Mean library vector per project; projects with no known library are skipped."""
    ids, vecs, libs = [], [], []
    skipped = 0
    for p in projects:
        lib_set = project_libraries(p, mapping_index)
        known = sorted(l for l in lib_set if l in emb)
        if not known:
            skipped += 1
            continue
        ids.append(p.project_id)
        vecs.append(np.mean([emb.vector(l) for l in known], axis=0))
        libs.append(lib_set)
    vectors = np.array(vecs, dtype=float).reshape(len(ids), emb.dim)
    return ProjectVectorIndex(ids, vectors, libs, skipped)


@dataclass
class PredictionResult:
    context: list
    neighbors: list
    counts: dict
    predictions: list


def predict(context, index: ProjectVectorIndex, emb: Embeddings, k: int = 1, n: int = 5) -> PredictionResult:
    """Top-``n`` libraries imported by the ``k`` projects nearest to the context vector."""
    if k < 1 or n < 1:
        raise ConfigError("k and n must be >= 1")
    context = list(context)
    v_c = emb.context_vector(context, "mean")
    if len(index) == 0:
        return PredictionResult(context, [], {}, [])
    norm = np.linalg.norm(v_c)
    scores = index.unit @ (v_c / norm) if norm > 0 else np.zeros(len(index))
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.ids[i]))[:k]
    neighbors = [(index.ids[i], float(scores[i])) for i in order]
    counts = Counter()
    for i in order:
        counts.update(index.libraries[i])
    ctx = set(context)
    ranked = sorted((l for l in counts if l not in ctx), key=lambda l: (-counts[l], l))
    return PredictionResult(context, neighbors, dict(counts), ranked[:n])


@dataclass
class PrecisionResult:
    precision: Optional[float]
    true_positives: dict
    false_positives: list
    n_context_projects: int

    @property
    def skipped(self) -> bool:
        return self.precision is None


def weighted_precision(predictions, context, valid_libraries) -> PrecisionResult:
    """``w(TP) / (w(TP) + |FP|)`` against held-out projects containing the whole context.

    ``valid_libraries`` is an iterable of library sets, one per held-out
    project. A true positive weighs the fraction of context-sharing projects
    importing it. Returns ``precision=None`` when no project shares the context.
    """
    ctx = set(context)
    sharing = [libs for libs in valid_libraries if ctx <= libs]
    if not sharing:
        return PrecisionResult(None, {}, [], 0)
    tp, fp = {}, []
    for lib in dict.fromkeys(predictions):
        hits = sum(1 for libs in sharing if lib in libs)
        if hits:
            tp[lib] = hits / len(sharing)
        else:
            fp.append(lib)
    w = sum(tp.values())
    denom = w + len(fp)
    precision = w / denom if denom > 0 else 0.0
    return PrecisionResult(precision, tp, fp, len(sharing))


@dataclass
class EvalConfig:
    k: int = 1
    n: int = 5
    context_size: int = 2
    cases: int = 1000
    seed: int = 1

    def __post_init__(self):
        if self.k < 1 or self.n < 1 or self.context_size < 1 or self.cases < 1:
            raise ConfigError("k, n, context_size and cases must be >= 1")


@dataclass
class EvalReport:
    config: dict
    baseline: bool
    cases: list = field(default_factory=list)
    mean_precision: Optional[float] = None
    n_eligible: int = 0
    n_skipped: int = 0
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def save_json(self, path):
        with atomic_write(path) as f:
            json.dump(self.to_dict(), f, indent=1)
            f.write("\n")

    def save_csv(self, path):
        with atomic_write(path) as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["case", "project", "context", "n_context_projects", "predictions",
                        "tp_weight", "n_fp", "precision"])
            for c in self.cases:
                w.writerow([c["case"], c["project"], " ".join(c["context"]), c["n_context_projects"],
                            " ".join(c["predictions"]), f"{c['tp_weight']:.6f}", c["n_fp"],
                            "" if c["precision"] is None else f"{c['precision']:.6f}"])


def sample_cases(split: CorpusSplit, relevant, emb_names, cfg: EvalConfig,
                 mapping_index: Optional[dict] = None):
    """Deterministic ``(case, project_id, context)`` draws from eligible validation projects.

    Depends only on the split, the relevant set, the resolvable names and the
    seed, so trained and baseline runs see the same contexts.
    """
    relevant = set(relevant) & set(emb_names)
    eligible = []
    for p in split.valid:
        cands = sorted(project_libraries(p, mapping_index) & relevant)
        if len(cands) >= cfg.context_size:
            eligible.append((p.project_id, cands))
    n_cases = min(cfg.cases, len(eligible))
    chosen = np.random.default_rng(cfg.seed).choice(len(eligible), size=n_cases, replace=False)
    out = []
    for case, j in enumerate(chosen.tolist()):
        pid, cands = eligible[j]
        rng = np.random.default_rng([cfg.seed, case])
        picked = rng.choice(len(cands), size=cfg.context_size, replace=False)
        out.append((case, pid, sorted(cands[i] for i in picked)))
    return out, len(eligible)


def run_evaluation(split: CorpusSplit, emb: Embeddings, cfg: EvalConfig, relevant,
                   mapping_index: Optional[dict] = None, baseline: bool = False) -> EvalReport:
    """Score k-NN project predictions for sampled validation contexts."""
    report = EvalReport(config=asdict(cfg), baseline=baseline)
    index = build_project_vectors(split.train, emb, mapping_index)
    valid_libs = [project_libraries(p, mapping_index) for p in split.valid]
    cases, report.n_eligible = sample_cases(split, relevant, emb.names, cfg, mapping_index)
    if len(cases) < cfg.cases:
        msg = (f"only {report.n_eligible} validation projects have >= {cfg.context_size} "
               f"relevant imports; running {len(cases)} of {cfg.cases} cases")
        logger.warning(msg)
        report.warnings.append(msg)
    precisions = []
    for case, pid, context in cases:
        pred = predict(context, index, emb, cfg.k, cfg.n)
        score = weighted_precision(pred.predictions, context, valid_libs)
        if score.skipped:
            report.n_skipped += 1
        else:
            precisions.append(score.precision)
        report.cases.append({
            "case": case, "project": pid, "context": context,
            "neighbors": [p for p, _ in pred.neighbors],
            "predictions": pred.predictions,
            "n_context_projects": score.n_context_projects,
            "tp_weight": float(sum(score.true_positives.values())),
            "true_positives": sorted(score.true_positives),
            "n_fp": len(score.false_positives),
            "precision": score.precision,
        })
    report.mean_precision = float(np.mean(precisions)) if precisions else None
    return report


def random_embeddings(names, dim: int, seed) -> Embeddings:
    """Independent uniformly random unit vectors, one per name."""
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((len(names), dim))
    m /= np.linalg.norm(m, axis=1, keepdims=True)
    return Embeddings(names, m)


def random_baseline(split: CorpusSplit, names, dim: int, seed, cfg: EvalConfig, relevant,
                    mapping_index: Optional[dict] = None) -> EvalReport:
    """Same pipeline as :func:`run_evaluation` with random library vectors."""
    return run_evaluation(split, random_embeddings(names, dim, seed), cfg, relevant,
                          mapping_index, baseline=True)


def fit_split(split: CorpusSplit, filter_cfg: FilterConfig = FilterConfig(),
              train_cfg: TrainConfig = TrainConfig(), mapping_index: Optional[dict] = None):
    """Train on the training side only. Returns ``(embeddings, relevant names, train result)``."""
    vocab = build_vocabulary(split.train, mapping_index=mapping_index)
    relevant = {vocab.entries[i].library for i in relevant_filter(vocab, filter_cfg)}
    tv = vocab.training_subset(filter_cfg)
    registry = build_registry(split.train, tv, mapping_index=mapping_index)
    if len(registry) == 0:
        raise DataError("training split has no co-occurring library pairs")
    result = train_from_registry(registry, train_cfg)
    return Embeddings.from_vocab(tv, result.matrix), relevant, result


def evaluation_grid(split, emb, relevant, ks=(1, 20), context_sizes=(2, 5, 10), n=5,
                    cases=1000, seed=1, mapping_index=None, baseline_seed=None) -> list:
    """Trained and random-baseline mean precision for every (k, context size)."""
    rows = []
    for k in ks:
        for size in context_sizes:
            cfg = EvalConfig(k=k, n=n, context_size=size, cases=cases, seed=seed)
            trained = run_evaluation(split, emb, cfg, relevant, mapping_index)
            base = random_baseline(split, emb.names, emb.dim,
                                   seed if baseline_seed is None else baseline_seed,
                                   cfg, relevant, mapping_index)
            rows.append({"k": k, "context_size": size, "cases": len(trained.cases),
                         "trained": trained.mean_precision, "random": base.mean_precision})
    return rows
