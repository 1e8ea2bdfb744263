"""Seeded generator for corpora with planted library ecosystems.

Every project belongs to one ecosystem and its files import libraries of that
ecosystem, drawn with Zipf-distributed popularity. With probability ``noise``
a file additionally pulls one library from a different ecosystem.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write
from .corpus import ProjectRecord, SourceFileImports
from .errors import ConfigError


@dataclass
class SynthConfig:
    ecosystems: int = 5
    libraries_per_ecosystem: int = 40
    projects: int = 2000
    files_per_project: int = 10
    min_imports: int = 4
    max_imports: int = 8
    noise: float = 0.1
    zipf_exponent: float = 1.0
    submodule_fraction: float = 0.3
    seed: int = 1

    def __post_init__(self):
        if self.ecosystems < 1 or self.libraries_per_ecosystem < 2:
            raise ConfigError("need >= 1 ecosystem of >= 2 libraries")
        if not 1 <= self.min_imports <= self.max_imports <= self.libraries_per_ecosystem:
            raise ConfigError("need 1 <= min_imports <= max_imports <= libraries_per_ecosystem")
        if self.projects < 1 or self.files_per_project < 1:
            raise ConfigError("projects and files_per_project must be >= 1")
        if not 0.0 <= self.noise <= 1.0 or not 0.0 <= self.submodule_fraction <= 1.0:
            raise ConfigError("noise and submodule_fraction must lie in [0, 1]")
        if self.noise > 0 and self.ecosystems < 2:
            raise ConfigError("cross-ecosystem noise needs at least 2 ecosystems")


def library_name(ecosystem: int, rank: int) -> str:
    return f"eco{ecosystem}_lib{rank:03d}"


def ecosystem_tag(ecosystem: int) -> str:
    return f"eco{ecosystem}"


def zipf_weights(n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** exponent
    return w / w.sum()


def generate_corpus(cfg: SynthConfig):
    """Return ``(projects, labels)``; ``labels`` maps library name -> ecosystem tag."""
    rng = np.random.default_rng(cfg.seed)
    n_lib = cfg.libraries_per_ecosystem
    weights = zipf_weights(n_lib, cfg.zipf_exponent)
    labels = {library_name(e, r): ecosystem_tag(e)
              for e in range(cfg.ecosystems) for r in range(1, n_lib + 1)}
    width = len(str(cfg.projects - 1))
    fwidth = len(str(cfg.files_per_project - 1))

    projects = []
    for p in range(cfg.projects):
        pid = f"p{p:0{width}d}"
        eco = int(rng.integers(cfg.ecosystems))
        files = []
        for fi in range(cfg.files_per_project):
            k = int(rng.integers(cfg.min_imports, cfg.max_imports + 1))
            ranks = rng.choice(n_lib, size=k, replace=False, p=weights) + 1
            libs = [library_name(eco, int(r)) for r in ranks]
            if cfg.noise and rng.random() < cfg.noise:
                other = int(rng.integers(cfg.ecosystems - 1))
                other += other >= eco
                libs.append(library_name(other, int(rng.choice(n_lib, p=weights)) + 1))
            raw = set()
            for lib in libs:
                if rng.random() < cfg.submodule_fraction:
                    raw.add(f"{lib}.mod{int(rng.integers(3))}")
                else:
                    raw.add(lib)
            files.append(SourceFileImports(pid, f"src/m{fi:0{fwidth}d}.py", frozenset(raw)))
        projects.append(ProjectRecord(pid, "python", files))
    return projects, labels


def write_labels(path, labels: dict) -> Path:
    """Library -> tag metadata as a two-column TSV, usable as a search tag filter."""
    with atomic_write(path) as f:
        f.write("library\ttags\n")
        for name in sorted(labels):
            f.write(f"{name}\t{labels[name]}\n")
    return Path(path)


def read_labels(path) -> dict:
    """Read a ``library<TAB>tag[,tag...]`` TSV into ``{library: set(tags)}``."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            parts = line.rstrip("\n").split("\t")
            if lineno == 0 and parts[0] == "library":
                continue
            if len(parts) >= 2:
                out[parts[0]] = {t for t in parts[1].split(",") if t}
    return out


def config_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)
