"""Command-line entry point: ``libvec <subcommand> [options]``.

Every subcommand prints a one-line JSON summary on success. Settings resolve
as command-line flags, then ``--config`` file (``key = value`` lines keyed by
option name), then built-in defaults. ``LIBVEC_OUT_DIR`` overrides the
default output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import ECOSYSTEMS, read_corpus, remove_import_clones, scan_corpus, scan_project, write_corpus
from .errors import ConfigError, DataError, LibvecError, NumericalError, UnknownLibraryError
from .evaluate import EvalConfig, fit_split, random_baseline, run_evaluation, split_corpus
from .pairs import build_registry, epoch_stream, positive_pairs, write_pair_dump
from .query import (AnalogyQuery, ContextQuery, Embeddings, analogy, contextual_search,
                    export_embeddings, load_embeddings)
from .synth import SynthConfig, config_dict, generate_corpus, read_labels, write_labels
from .train import TrainConfig, save_binary, save_tsv, train_from_registry
from .vocab import FilterConfig, Vocabulary, build_vocabulary, compute_stats, load_mapping_index, relevant_filter

logger = logging.getLogger("libvec")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
# eval only: trained vectors did not beat the random baseline
EXIT_NOT_BETTER = 1

OUT_DIR_ENV = "LIBVEC_OUT_DIR"
DEFAULT_SEED = 1


def _out_dir(args) -> Path:
    return Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or ".")


def _emit(summary: dict, args) -> int:
    summary["settings"] = {k: v for k, v in sorted(vars(args).items())
                           if k not in ("func", "command") and not callable(v)}
    print(json.dumps(summary, sort_keys=True, default=str))
    return EXIT_OK


def _filter_cfg(args) -> FilterConfig:
    return FilterConfig(min_global_reuse=args.min_reuse, relevant_class_lo=args.class_lo,
                        relevant_class_hi=args.class_hi, train_min_reuse=args.train_min_reuse)


def _train_cfg(args) -> TrainConfig:
    return TrainConfig(dim=args.dim, epochs=args.epochs, learning_rate=args.lr,
                       min_learning_rate=args.min_lr, seed=args.seed, tied=not args.untied,
                       unique_pairs=args.unique_pairs, workers=args.jobs)


def _mapping(args):
    return load_mapping_index(args.mapping) if getattr(args, "mapping", None) else None


def _load_model(model_dir) -> Embeddings:
    model_dir = Path(model_dir)
    vocab = Vocabulary.load(model_dir / "vocab.tsv")
    return load_embeddings(model_dir / "embeddings.bin", vocab)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = SynthConfig(ecosystems=args.ecosystems, libraries_per_ecosystem=args.libraries,
                      projects=args.projects, files_per_project=args.files,
                      min_imports=args.min_imports, max_imports=args.max_imports,
                      noise=args.noise, zipf_exponent=args.zipf, seed=args.seed)
    projects, labels = generate_corpus(cfg)
    out = Path(args.out) if args.out else _out_dir(args) / "corpus.jsonl"
    write_corpus(out, projects)
    labels_path = out.with_name(out.name.split(".")[0] + ".labels.tsv")
    write_labels(labels_path, labels)
    return _emit({"corpus": str(out), "labels": str(labels_path), "projects": len(projects),
                  "files": sum(len(p.files) for p in projects), "synth": config_dict(cfg)}, args)


def cmd_extract(args) -> int:
    if args.single_project:
        projects = [scan_project(r, args.ecosystem, jobs=args.jobs) for r in args.root]
    else:
        projects = []
        for r in args.root:
            projects.extend(scan_corpus(r, args.ecosystem, jobs=args.jobs))
    kept, removed = remove_import_clones(projects)
    out = Path(args.out) if args.out else _out_dir(args) / "corpus.jsonl"
    write_corpus(out, kept)
    return _emit({"corpus": str(out), "projects": len(kept), "removed_clones": sorted(removed),
                  "files": sum(len(p.files) for p in kept),
                  "skipped_files": sum(p.skipped_files for p in projects)}, args)


def cmd_stats(args) -> int:
    corpus = read_corpus(args.corpus, args.ecosystem)
    mapping = _mapping(args)
    vocab = build_vocabulary(corpus, mapping_index=mapping)
    report = compute_stats(corpus, vocab, mapping, by=args.by)
    out = _out_dir(args)
    vocab.save(out / "vocab.tsv")
    report.save(out / "stats.json", out / "rank_frequency.csv")
    relevant = relevant_filter(vocab, _filter_cfg(args))
    return _emit({"vocab": str(out / "vocab.tsv"), "stats": str(out / "stats.json"),
                  "libraries": len(vocab), "projects": vocab.n_projects,
                  "relevant": len(relevant), "zipf_exponent": report.zipf_fit[1],
                  "class_histogram": report.class_histogram}, args)


def _training_data(args):
    corpus = read_corpus(args.corpus, args.ecosystem)
    mapping = _mapping(args)
    vocab = build_vocabulary(corpus, mapping_index=mapping)
    tv = vocab.training_subset(_filter_cfg(args))
    registry = build_registry(corpus, tv, mapping_index=mapping)
    if len(registry) == 0:
        raise DataError("no co-occurring library pairs in the corpus")
    return tv, registry


def cmd_pairs(args) -> int:
    tv, registry = _training_data(args)
    positives = positive_pairs(registry, unique=args.unique_pairs)
    # Same generator the trainer uses, so the dump equals its first epoch.
    rng = np.random.default_rng(np.random.SeedSequence(args.seed).spawn(3)[2])
    t, c, y = epoch_stream(positives, registry, range(len(tv)), rng)
    out = _out_dir(args)
    tv.save(out / "vocab.tsv")
    write_pair_dump(out / "pairs.bin", t, c, y)
    return _emit({"pairs": str(out / "pairs.bin"), "vocab": str(out / "vocab.tsv"),
                  "positives": int(len(positives)), "negatives": int(len(positives)),
                  "distinct_pairs": len(registry), "libraries": len(tv)}, args)


def cmd_train(args) -> int:
    tv, registry = _training_data(args)
    result = train_from_registry(registry, _train_cfg(args))
    out = _out_dir(args)
    tv.save(out / "vocab.tsv")
    save_binary(out / "embeddings.bin", tv.names, result.matrix)
    save_tsv(out / "embeddings.tsv", tv.names, result.matrix)
    return _emit({"model_dir": str(out), "libraries": len(tv), "dim": args.dim,
                  "epoch_losses": result.epoch_losses, "updates": result.n_updates,
                  "positives_per_epoch": result.positives_per_epoch,
                  "negatives_per_epoch": result.negatives_per_epoch}, args)


def _results(emb: Embeddings, hits):
    rows = []
    for name, score in hits:
        row = {"library": name, "score": score}
        if emb.vocab is not None and name in emb.vocab:
            row["popularity_rank"] = emb.vocab.popularity_rank(name)
        rows.append(row)
    return rows


def cmd_search(args) -> int:
    emb = _load_model(args.model)
    restrict = None
    if not args.all:
        restrict = {emb.vocab.entries[i].library for i in relevant_filter(emb.vocab, _filter_cfg(args))}
    metadata = read_labels(args.tags) if args.tags else None
    q = ContextQuery(list(args.context), k=args.k, mode=args.mode,
                     tag_filter=set(args.tag) if args.tag else None)
    hits = contextual_search(emb, q, restrict, metadata)
    return _emit({"context": q.context, "results": _results(emb, hits)}, args)


def cmd_analogy(args) -> int:
    emb = _load_model(args.model)
    res = analogy(emb, AnalogyQuery(args.a, args.a_star, args.b, args.expected), k=args.k)
    return _emit({"results": _results(emb, res.neighbors), "pred_rank": res.pred_rank,
                  "only_b_rank": res.only_b_rank}, args)


def cmd_resolve(args) -> int:
    emb = _load_model(args.model)
    return _emit({"query": args.name, "exact": args.name in emb,
                  "suggestions": emb.suggest(args.name, args.limit)}, args)


def cmd_eval(args) -> int:
    corpus = read_corpus(args.corpus, args.ecosystem)
    mapping = _mapping(args)
    split = split_corpus(corpus, args.ratio, args.seed)
    emb, relevant, _ = fit_split(split, _filter_cfg(args), _train_cfg(args), mapping)
    cfg = EvalConfig(k=args.k, n=args.n, context_size=args.context_size, cases=args.cases,
                     seed=args.seed)
    trained = run_evaluation(split, emb, cfg, relevant, mapping)
    base = random_baseline(split, emb.names, emb.dim, args.seed, cfg, relevant, mapping)
    out = _out_dir(args)
    trained.save_json(out / "eval.json")
    trained.save_csv(out / "eval_cases.csv")
    base.save_json(out / "eval_baseline.json")
    base.save_csv(out / "eval_baseline_cases.csv")
    _emit({"trained_precision": trained.mean_precision, "random_precision": base.mean_precision,
           "cases": len(trained.cases), "warnings": trained.warnings,
           "report": str(out / "eval.json")}, args)
    beat = (trained.mean_precision is not None and base.mean_precision is not None
            and trained.mean_precision > base.mean_precision)
    return EXIT_OK if beat else EXIT_NOT_BETTER


def cmd_export(args) -> int:
    emb = _load_model(args.model)
    written = export_embeddings(emb, _out_dir(args), args.format or ("tsv", "bin", "projector"))
    return _emit({"written": {k: [str(p) for p in v] for k, v in written.items()}}, args)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_filter_opts(p):
    g = p.add_argument_group("vocabulary filters")
    g.add_argument("--min-reuse", type=int, default=10, help="relevant libraries: minimum project reuse")
    g.add_argument("--class-lo", type=int, default=2, help="lowest relevant popularity class")
    g.add_argument("--class-hi", type=int, default=4, help="highest relevant popularity class")
    g.add_argument("--train-min-reuse", type=int, default=2,
                   help="train only on libraries reused by this many projects")


def _add_corpus_opts(p):
    p.add_argument("--corpus", required=True, help="corpus .jsonl file")
    p.add_argument("--ecosystem", choices=ECOSYSTEMS, help="fallback when the manifest is missing")
    p.add_argument("--mapping", help="prefix<TAB>library TSV for Java/C# library mapping")


def _add_train_opts(p):
    g = p.add_argument_group("training")
    g.add_argument("--dim", type=int, default=100)
    g.add_argument("--epochs", type=int, default=5)
    g.add_argument("--lr", type=float, default=0.025, help="initial learning rate")
    g.add_argument("--min-lr", type=float, default=0.0001, help="learning rate after the last update")
    g.add_argument("--untied", action="store_true", help="separate context matrix (discarded on save)")
    g.add_argument("--unique-pairs", action="store_true", help="one positive per distinct pair per epoch")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--out-dir", help=f"output directory (default: ${OUT_DIR_ENV} or .)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--jobs", type=int, default=1, help="parallelism cap; 1 is fully deterministic")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="libvec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a planted-ecosystem corpus")
    p.add_argument("--ecosystems", type=int, default=5)
    p.add_argument("--libraries", type=int, default=40, help="libraries per ecosystem")
    p.add_argument("--projects", type=int, default=2000)
    p.add_argument("--files", type=int, default=10, help="files per project")
    p.add_argument("--min-imports", type=int, default=4)
    p.add_argument("--max-imports", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.1, help="per-file chance of a foreign library")
    p.add_argument("--zipf", type=float, default=1.0, help="library popularity exponent")
    p.add_argument("--out", help="corpus path (default OUT_DIR/corpus.jsonl)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", parents=[common], help="extract imports from source trees")
    p.add_argument("--ecosystem", choices=ECOSYSTEMS, required=True)
    p.add_argument("--root", action="append", required=True,
                   help="directory with one subdirectory per project (repeatable)")
    p.add_argument("--single-project", action="store_true", help="treat each --root as one project")
    p.add_argument("--clone-mode", choices=["union"], default="union")
    p.add_argument("--out", help="corpus path (default OUT_DIR/corpus.jsonl)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("stats", parents=[common], help="vocabulary and corpus statistics")
    _add_corpus_opts(p)
    _add_filter_opts(p)
    p.add_argument("--by", choices=["occurrences", "reuse"], default="occurrences",
                   help="popularity measure for the rank/frequency curve")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("pairs", parents=[common], help="dump one epoch of training pairs")
    _add_corpus_opts(p)
    _add_filter_opts(p)
    p.add_argument("--unique-pairs", action="store_true")
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("train", parents=[common], help="train library vectors")
    _add_corpus_opts(p)
    _add_filter_opts(p)
    _add_train_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("search", parents=[common], help="contextual library search")
    p.add_argument("--model", required=True, help="directory written by 'train'")
    p.add_argument("--context", action="append", required=True, help="library name (repeatable)")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mode", choices=["sum", "mean"], default="sum")
    p.add_argument("--all", action="store_true", help="search all libraries, not just relevant ones")
    p.add_argument("--tags", help="library<TAB>tags metadata file")
    p.add_argument("--tag", action="append", help="keep results carrying this tag (repeatable)")
    _add_filter_opts(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("analogy", parents=[common], help="a is to a* as b is to ?")
    p.add_argument("--model", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--a-star", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--expected", help="expected answer b*, to report its ranks")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_analogy)

    p = sub.add_parser("resolve", parents=[common], help="suggest library names")
    p.add_argument("--model", required=True)
    p.add_argument("name")
    p.add_argument("--limit", type=int, default=10)
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("eval", parents=[common],
                       help="train on a split and compare predictive precision with random vectors")
    _add_corpus_opts(p)
    _add_filter_opts(p)
    _add_train_opts(p)
    p.add_argument("--ratio", type=float, default=0.9, help="training fraction")
    p.add_argument("--k", type=int, default=1, help="nearest projects")
    p.add_argument("--n", type=int, default=5, help="predictions per case")
    p.add_argument("--context-size", type=int, default=2)
    p.add_argument("--cases", type=int, default=1000)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", parents=[common], help="write embeddings in other formats")
    p.add_argument("--model", required=True)
    p.add_argument("--format", action="append", choices=["tsv", "bin", "projector"])
    p.set_defaults(func=cmd_export)

    return parser, sub


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys use option spelling."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _apply_config(parser, sub, argv):
    """Parse ``argv`` with config-file values installed as subcommand defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in sub.choices), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    values = read_config(known.config)
    subparser = sub.choices[command]
    actions = {a.dest: a for a in subparser._actions}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise ConfigError(f"unknown setting(s) in {known.config}: {', '.join(unknown)}")
    defaults = {}
    for key, value in values.items():
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):
            defaults[key] = [v.strip() for v in value.split(",") if v.strip()]
        else:
            defaults[key] = action.type(value) if action.type else value
        action.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser, sub = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, sub, argv)
    except ConfigError as exc:
        print(f"libvec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"libvec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"libvec: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, UnknownLibraryError) as exc:
        print(f"libvec: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LibvecError as exc:
        print(f"libvec: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
