"""Shared fixtures: the planted-ecosystem corpus and models trained on it."""

import pytest

from libvec.evaluate import fit_split, split_corpus
from libvec.pairs import build_registry
from libvec.query import Embeddings
from libvec.synth import SynthConfig, generate_corpus
from libvec.train import TrainConfig, train_from_registry
from libvec.vocab import FilterConfig, build_vocabulary

# 5 ecosystems x 40 libraries, 2000 projects, 10 files, 4-8 imports, 10% noise
CLUSTER_SYNTH = SynthConfig(seed=1)
CLUSTER_TRAIN = TrainConfig(dim=32, epochs=5, seed=1)


@pytest.fixture(scope="session")
def cluster_corpus():
    return generate_corpus(CLUSTER_SYNTH)


@pytest.fixture(scope="session")
def cluster_data(cluster_corpus):
    projects, labels = cluster_corpus
    vocab = build_vocabulary(projects)
    tv = vocab.training_subset(FilterConfig())
    registry = build_registry(projects, tv)
    return vocab, tv, registry


@pytest.fixture(scope="session")
def cluster_model(cluster_data):
    _, tv, registry = cluster_data
    result = train_from_registry(registry, CLUSTER_TRAIN)
    return Embeddings.from_vocab(tv, result.matrix), result


@pytest.fixture(scope="session")
def split_model(cluster_corpus):
    projects, _ = cluster_corpus
    split = split_corpus(projects, 0.9, seed=1)
    emb, relevant, _ = fit_split(split, FilterConfig(), CLUSTER_TRAIN)
    return split, emb, relevant


# Acceptance criteria report: one line per criterion in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
