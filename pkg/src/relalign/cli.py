"""Command-line entry point: ``relalign <subcommand>``."""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

from relalign.align import AlignConfig, estimate_projections, load_projections, save_projections, write_loss_trace
from relalign.config import DatasetEntry, default_threads, load_config
from relalign.embedding import SgnsConfig, export_tsv, load_embedding, save_embedding, train_sgns
from relalign.errors import ConfigError, DataError, RelalignError
from relalign.graph import load_dataset, save_dataset, split_dataset
from relalign.matching import (
    GroundTruth,
    accuracy_curve,
    rank_matches,
    read_ground_truth,
    read_rankings,
    write_accuracy,
    write_ground_truth,
    write_rankings,
)
from relalign.mmd import KernelConfig
from relalign.pipeline import ingest_entry, run_pipeline
from relalign.walks import WalkConfig, generate_walks, load_corpus, save_corpus

logger = logging.getLogger("relalign")


def _summary(ds) -> str:
    line = f"dataset {ds.dataset_id}: {ds.num_objects} objects, {ds.edge_count} relations"
    if ds.object_kinds is not None:
        hist = Counter(ds.object_kinds)
        line += " (" + ", ".join(f"{k}: {v}" for k, v in sorted(hist.items())) + ")"
    if ds.dropped_self_loops:
        line += f", {ds.dropped_self_loops} self-loops dropped"
    isolated = int(ds.isolated.sum())
    if isolated:
        line += f", {isolated} isolated"
    return line


def cmd_ingest(args) -> int:
    ds = ingest_entry(DatasetEntry(Path(args.input), args.format, Path(args.kinds) if args.kinds else None), args.dataset_id)
    written = save_dataset(ds, args.output)
    print(_summary(ds))
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_split(args) -> int:
    ds = load_dataset(args.dataset)
    a, b = split_dataset(ds, args.kind, args.seed)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(a, out / "d1.edges")
    save_dataset(b, out / "d2.edges")
    write_ground_truth(GroundTruth.shared_labels(a, b), out / "truth.tsv")
    print(_summary(a))
    print(_summary(b))
    return 0


def _walk_config(args) -> WalkConfig:
    return WalkConfig(args.walks_per_object, args.walk_length, args.window, args.seed)


def _sgns_config(args) -> SgnsConfig:
    return SgnsConfig(
        dim=args.dim, negatives_per_pair=args.negatives, batch_size=args.batch_size,
        learning_rate=args.learning_rate, epochs=args.epochs, noise_exponent=args.noise_exponent,
        init_scale=args.init_scale, seed=args.seed,
    )


def cmd_embed(args) -> int:
    ds = load_dataset(args.dataset, dataset_id=args.dataset_id)
    cache = Path(args.corpus_cache) if args.corpus_cache else None
    if cache is not None and cache.exists():
        corpus = load_corpus(cache)
        if corpus.dataset_id != ds.dataset_id:
            raise DataError(f"{cache} holds walks for dataset {corpus.dataset_id}")
    else:
        corpus = generate_walks(ds, _walk_config(args), threads=args.threads)
        if cache is not None:
            save_corpus(corpus, cache)
    model = train_sgns(ds, corpus, _sgns_config(args), threads=args.threads)
    save_embedding(model, args.output)
    print(f"wrote {args.output}: {model.num_objects} x {model.dim}")
    return 0


def cmd_align(args) -> int:
    models = [load_embedding(p) for p in args.embeddings]
    cfg = AlignConfig(
        lam=args.lam, steps=args.steps, learning_rate=args.learning_rate, restarts=args.restarts,
        sample_size=args.sample_size, kernel=KernelConfig(gamma=args.gamma), seed=args.seed,
    )
    P, report = estimate_projections(models, cfg, threads=args.threads)
    save_projections(P, args.output)
    if args.trace:
        write_loss_trace(report, args.trace)
    for r in report.restarts:
        mark = "*" if r.restart == report.best else " "
        print(f"{mark} restart {r.restart}: init {r.init_loss:.6g} final {r.final_loss:.6g} best {r.loss:.6g} (step {r.best_step})")
    print("orthogonality residual per dataset: " + " ".join(f"{x:.3g}" for x in report.orthogonality()))
    return 0


def cmd_match(args) -> int:
    ds_a = load_dataset(args.datasets[0], dataset_id=1)
    ds_b = load_dataset(args.datasets[1], dataset_id=2)
    ma, mb = load_embedding(args.embeddings[0]), load_embedding(args.embeddings[1])
    va, vb = ma.vectors(args.vectors), mb.vectors(args.vectors)
    if args.projections:
        P = load_projections(args.projections)
        va, vb = va @ P[args.pair[0] - 1].T, vb @ P[args.pair[1] - 1].T
    queries = None if args.kind is None else ds_a.objects_of_kind(args.kind)
    rankings = rank_matches(va, vb, args.r_max, query_ids=queries, candidate_ds=ds_b, kind=args.kind)
    write_rankings(rankings, ds_a.object_labels, ds_b.object_labels, args.output)
    print(f"wrote {len(rankings)} rankings to {args.output}")
    return 0


def cmd_eval(args) -> int:
    ds_a = load_dataset(args.datasets[0], dataset_id=1)
    ds_b = load_dataset(args.datasets[1], dataset_id=2)
    rankings = read_rankings(args.rankings, ds_a, ds_b)
    pairs = read_ground_truth(args.truth).resolve(ds_a, ds_b)
    longest = max((r.candidates.size for r in rankings), default=0)
    grid = [int(x) for x in args.r_grid.split(",")] if args.r_grid else list(range(1, min(100, longest) + 1))
    curve = accuracy_curve(rankings, pairs, grid)
    if args.output:
        write_accuracy(curve, args.output)
    for R, acc, n in curve:
        if R in (1, 5, 10, 20, 50, 100) or args.r_grid:
            print(f"top-{R}: {acc:.4f} ({n} queries)")
    return 0


def cmd_export(args) -> int:
    ds = load_dataset(args.dataset)
    model = load_embedding(args.embedding)
    W = load_projections(args.projections)[args.index - 1] if args.projections else None
    export_tsv(model, ds.object_labels, args.output, role=args.role, W=W)
    print(f"wrote {args.output}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config, args.set or [])
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    if args.output_dir is not None:
        cfg = replace(cfg, output_dir=Path(args.output_dir))
    pipe = run_pipeline(cfg, Path(args.resume) if args.resume else None, resume=bool(args.resume))
    for name, curve in pipe.accuracy.items():
        top = {R: acc for R, acc, _ in curve}
        shown = ", ".join(f"top-{R} {top[R]:.3f}" for R in (1, 5, 10, 50) if R in top)
        print(f"{name}: {shown}")
    print(f"run directory: {pipe.run_dir}")
    return 0


def _add_walk_args(p: argparse.ArgumentParser) -> None:
    d = WalkConfig()
    p.add_argument("--walks-per-object", type=int, default=d.walks_per_object)
    p.add_argument("--walk-length", type=int, default=d.walk_length)
    p.add_argument("--window", type=int, default=d.window)


def _add_sgns_args(p: argparse.ArgumentParser) -> None:
    d = SgnsConfig()
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--negatives", type=int, default=d.negatives_per_pair)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--noise-exponent", type=float, default=d.noise_exponent)
    p.add_argument("--init-scale", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relalign", description="Unsupervised object matching across relational datasets.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--threads", type=int, default=default_threads())
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ingest", help="convert an edge list or MovieLens ratings to a canonical dataset")
    p.add_argument("input")
    p.add_argument("--format", choices=["edgelist", "movielens", "dataset"], default="edgelist")
    p.add_argument("--kinds")
    p.add_argument("--dataset-id", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="randomly halve the objects of one kind")
    p.add_argument("dataset")
    p.add_argument("--kind", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("embed", help="random walks + skip-gram training for one dataset")
    p.add_argument("dataset")
    p.add_argument("--dataset-id", type=int, default=1)
    p.add_argument("--corpus-cache")
    _add_walk_args(p)
    _add_sgns_args(p)
    common(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("align", help="estimate projection matrices")
    p.add_argument("embeddings", nargs="+")
    d = AlignConfig()
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--steps", type=int, default=d.steps)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--restarts", type=int, default=d.restarts)
    p.add_argument("--sample-size", type=int, default=d.sample_size)
    p.add_argument("--gamma", type=float, default=d.kernel.gamma)
    p.add_argument("--trace")
    common(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("match", help="rank candidates by distance in the common space")
    p.add_argument("--datasets", nargs=2, required=True)
    p.add_argument("--embeddings", nargs=2, required=True)
    p.add_argument("--projections")
    p.add_argument("--pair", nargs=2, type=int, default=[1, 2], help="dataset positions in the projection file")
    p.add_argument("--kind")
    p.add_argument("--r-max", type=int, default=100)
    p.add_argument("--vectors", choices=["U", "H", "U+H"], default="U")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="top-R accuracy of a rankings file")
    p.add_argument("--datasets", nargs=2, required=True)
    p.add_argument("--rankings", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--r-grid", help="comma-separated R values (default 1..min(100, list length))")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run every stage from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
    p.add_argument("--resume", metavar="RUN_DIR")
    p.add_argument("--output-dir")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("export", help="dump vectors as TSV for external plotting")
    p.add_argument("--dataset", required=True)
    p.add_argument("--embedding", required=True)
    p.add_argument("--projections")
    p.add_argument("--index", type=int, default=1, help="dataset position in the projection file")
    p.add_argument("--role", choices=["U", "H", "U+H"], default="U")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return ConfigError.exit_code if exc.code else 0
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RelalignError as exc:
        print(f"relalign: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
