"""End-to-end run: ingest, split, walks, embed, align, match, eval."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from relalign import __version__
from relalign.align import (
    AlignReport,
    ProjectionSet,
    estimate_projections,
    load_projections,
    save_projections,
    write_loss_trace,
)
from relalign.config import DatasetEntry, PipelineConfig
from relalign.embedding import EmbeddingModel, load_embedding, save_embedding, train_sgns
from relalign.errors import RelalignError
from relalign.graph import (
    RelationalDataset,
    load_dataset,
    load_edge_list,
    load_movielens,
    save_dataset,
    split_dataset,
)
from relalign.matching import (
    GroundTruth,
    MatchRanking,
    accuracy_curve,
    degree_rank,
    rank_matches,
    read_ground_truth,
    write_accuracy,
    write_ground_truth,
    write_rankings,
)
from relalign.walks import WalkCorpus, generate_walks, load_corpus, save_corpus

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 31-bit seed for a (stage, dataset, ...) key path."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0] >> 1)


STAGE_WALKS, STAGE_EMBED, STAGE_ALIGN, STAGE_SPLIT = 1, 2, 3, 4


@dataclass
class RunManifest:
    run_dir: Path
    config: dict
    stage_seconds: dict[str, float] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    version: str = __version__

    def write(self) -> Path:
        path = self.run_dir / MANIFEST
        payload = {
            "version": self.version,
            "config": self.config,
            "stage_seconds": self.stage_seconds,
            "artifacts": self.artifacts,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def fresh_run_dir(output_dir: Path) -> Path:
    output_dir.mkdir(parents=True, exist_ok=True)
    taken = [int(p.name[4:]) for p in output_dir.glob("run-*") if p.name[4:].isdigit()]
    n = max(taken, default=0) + 1
    while True:
        path = output_dir / f"run-{n:04d}"
        try:
            path.mkdir()
            return path
        except FileExistsError:
            n += 1


def ingest_entry(entry: DatasetEntry, dataset_id: int) -> RelationalDataset:
    if entry.format == "movielens":
        return load_movielens(entry.path, dataset_id=dataset_id)
    if entry.format == "dataset":
        return load_dataset(entry.path, dataset_id=dataset_id)
    return load_edge_list(entry.path, dataset_id=dataset_id, kinds_path=entry.kinds)


class Pipeline:
    """Runs the stages in order, persisting every artifact under ``run_dir``.

    With ``resume=True`` a stage whose outputs already exist is loaded from
    disk instead of recomputed.
    """

    def __init__(self, cfg: PipelineConfig, run_dir: Path | None = None, *, resume: bool = False):
        self.cfg = cfg
        self.resume = resume
        self.run_dir = fresh_run_dir(Path(cfg.output_dir)) if run_dir is None else Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(self.run_dir, cfg.snapshot())
        self.datasets: list[RelationalDataset] = []
        self.corpora: list[WalkCorpus] = []
        self.models: list[EmbeddingModel] = []
        self.projections: ProjectionSet | None = None
        self.report: AlignReport | None = None
        self.truth: GroundTruth | None = None
        self.accuracy: dict[str, list[tuple[int, float, int]]] = {}

    def path(self, *parts: str) -> Path:
        p = self.run_dir.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def _stage(self, name: str, fn: Callable[[], None]) -> None:
        logger.info("stage %s", name)
        t0 = time.perf_counter()
        try:
            fn()
        except RelalignError as exc:
            raise type(exc)(f"stage {name} failed: {exc}") from exc
        except (OSError, ValueError) as exc:
            raise RelalignError(f"stage {name} failed: {exc}") from exc
        self.manifest.stage_seconds[name] = time.perf_counter() - t0

    def run(self) -> RunManifest:
        for name, fn in [
            ("ingest", self.ingest),
            ("walks", self.walks),
            ("embed", self.embed),
            ("align", self.align),
            ("match", self.match),
            ("eval", self.evaluate),
        ]:
            self._stage(name, fn)
        for p in sorted(self.run_dir.rglob("*")):
            if p.is_file() and p.name != MANIFEST:
                self.manifest.artifacts[str(p.relative_to(self.run_dir))] = sha256_file(p)
        self.manifest.write()
        return self.manifest

    # -- stages -------------------------------------------------------------

    def _dataset_paths(self) -> list[Path]:
        n = 2 if self.cfg.split is not None else len(self.cfg.datasets)
        return [self.path("datasets", f"d{i}.edges") for i in range(1, n + 1)]

    def ingest(self) -> None:
        paths = self._dataset_paths()
        if self.resume and all(p.exists() for p in paths):
            self.datasets = [load_dataset(p, dataset_id=i) for i, p in enumerate(paths, 1)]
        else:
            split = self.cfg.split
            if split is not None:
                source = ingest_entry(DatasetEntry(split.path, split.format, split.kinds), 1)
                seed = split.seed if split.seed is not None else derive_seed(self.cfg.seed, STAGE_SPLIT)
                self.datasets = list(split_dataset(source, split.kind, seed))
            else:
                self.datasets = [ingest_entry(e, i) for i, e in enumerate(self.cfg.datasets, 1)]
            for ds, p in zip(self.datasets, paths):
                save_dataset(ds, p)
        truth_path = self.path("truth.tsv")
        if self.cfg.match.truth != "shared":
            self.truth = read_ground_truth(self.cfg.match.truth)
        else:
            self.truth = GroundTruth.shared_labels(self.datasets[0], self.datasets[1], self.cfg.match.kind)
        if not (self.resume and truth_path.exists()):
            write_ground_truth(self.truth, truth_path)

    def walks(self) -> None:
        self.corpora = []
        for ds in self.datasets:
            p = self.path("corpus", f"d{ds.dataset_id}.walks")
            if self.resume and p.exists():
                corpus = load_corpus(p)
            else:
                wcfg = replace(self.cfg.walks, seed=derive_seed(self.cfg.seed, STAGE_WALKS, ds.dataset_id))
                corpus = generate_walks(ds, wcfg, threads=self.cfg.threads)
                save_corpus(corpus, p)
            self.corpora.append(corpus)

    def embed(self) -> None:
        self.models = []
        for ds, corpus in zip(self.datasets, self.corpora):
            p = self.path("embeddings", f"d{ds.dataset_id}.emb")
            if self.resume and p.exists():
                model = load_embedding(p)
            else:
                scfg = replace(self.cfg.sgns, seed=derive_seed(self.cfg.seed, STAGE_EMBED, ds.dataset_id))
                model = train_sgns(ds, corpus, scfg, threads=self.cfg.threads)
                save_embedding(model, p)
            self.models.append(model)

    def align(self) -> None:
        p = self.path("align", "projections.proj")
        if self.resume and p.exists():
            self.projections = load_projections(p)
            return
        acfg = replace(self.cfg.align, seed=derive_seed(self.cfg.seed, STAGE_ALIGN))
        self.projections, self.report = estimate_projections(self.models, acfg, threads=self.cfg.threads)
        save_projections(self.projections, p)
        write_loss_trace(self.report, self.path("align", "loss_trace.csv"))
        summary = {
            "selected_restart": self.report.best,
            "restarts": [
                {
                    "restart": r.restart, "init_loss": r.init_loss, "final_loss": r.final_loss,
                    "best_loss": r.loss, "best_step": r.best_step,
                }
                for r in self.report.restarts
            ],
            "orthogonality_residual": self.report.orthogonality(),
        }
        self.path("align", "report.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")

    def _pairs(self) -> list[tuple[int, int]]:
        D = len(self.datasets)
        return [(a, b) for a in range(D) for b in range(a + 1, D)]

    def _queries(self, a: int) -> np.ndarray:
        ds = self.datasets[a]
        kind = self.cfg.match.kind
        return np.arange(ds.num_objects) if kind is None else ds.objects_of_kind(kind)

    def _rank(self, a: int, b: int, method: str) -> list[MatchRanking]:
        ds_a, ds_b = self.datasets[a], self.datasets[b]
        opts = self.cfg.match
        queries = self._queries(a)
        if method == "degree":
            return [degree_rank(ds_a, ds_b, int(q), opts.r_max, kind=opts.kind) for q in queries]
        va = self.models[a].vectors(opts.vectors)
        vb = self.models[b].vectors(opts.vectors)
        if method == "proposed":
            va = va @ self.projections[a].T
            vb = vb @ self.projections[b].T
        return rank_matches(
            va, vb, opts.r_max, query_ids=queries, candidate_ds=ds_b, kind=opts.kind,
            query_dataset=ds_a.dataset_id, candidate_dataset=ds_b.dataset_id,
        )

    def _methods(self) -> list[str]:
        return ["proposed", *self.cfg.match.baselines]

    def match(self) -> None:
        self.rankings: dict[tuple[str, int, int], list[MatchRanking]] = {}
        for a, b in self._pairs():
            ds_a, ds_b = self.datasets[a], self.datasets[b]
            for method in self._methods():
                rankings = self._rank(a, b, method)
                self.rankings[method, a, b] = rankings
                suffix = "" if method == "proposed" else f"_{method}"
                out = self.path("match", f"rankings_{ds_a.dataset_id}_{ds_b.dataset_id}{suffix}.tsv")
                write_rankings(rankings, ds_a.object_labels, ds_b.object_labels, out)

    def _truth_for(self, a: int, b: int) -> GroundTruth:
        if (a, b) == (0, 1):
            return self.truth
        return GroundTruth.shared_labels(self.datasets[a], self.datasets[b], self.cfg.match.kind)

    def evaluate(self) -> None:
        for a, b in self._pairs():
            ds_a, ds_b = self.datasets[a], self.datasets[b]
            truth = self._truth_for(a, b)
            if len(truth) == 0:
                logger.warning("no ground truth between datasets %d and %d", ds_a.dataset_id, ds_b.dataset_id)
                continue
            pairs = truth.resolve(ds_a, ds_b)
            queries = set(self._queries(a).tolist())
            pairs = pairs[[int(q) in queries for q in pairs[:, 0]]]
            n_cand = ds_b.num_objects if self.cfg.match.kind is None else ds_b.objects_of_kind(self.cfg.match.kind).size
            grid = list(range(1, min(self.cfg.match.r_max, n_cand) + 1))
            for method in self._methods():
                curve = accuracy_curve(self.rankings[method, a, b], pairs, grid)
                self.accuracy[f"{method}_{ds_a.dataset_id}_{ds_b.dataset_id}"] = curve
                suffix = "" if method == "proposed" else f"_{method}"
                write_accuracy(curve, self.path("eval", f"accuracy_{ds_a.dataset_id}_{ds_b.dataset_id}{suffix}.csv"))
                logger.info(
                    "%s %d->%d: top-1 %.3f, top-%d %.3f", method, ds_a.dataset_id, ds_b.dataset_id,
                    curve[0][1], curve[-1][0], curve[-1][1],
                )


def run_pipeline(cfg: PipelineConfig, run_dir: Path | None = None, *, resume: bool = False) -> Pipeline:
    pipe = Pipeline(cfg, run_dir, resume=resume)
    pipe.run()
    return pipe
