"""Pipeline configuration: a sectioned key-value file.

Every hyperparameter has a named key whose default is the published setting,
so a config holding only the dataset sections reproduces those settings.

    [run]
    output_dir = runs
    seed = 0

    [dataset.1]
    path = data/en.edges
    format = edgelist          ; edgelist | movielens | dataset
    kinds = data/en.kinds      ; optional

    [split]                    ; alternative to dataset.N sections
    path = ml-100k/u.data
    format = movielens
    kind = user

    [walks]  walks_per_object, walk_length, window
    [embedding]  dim, negatives, batch_size, learning_rate, epochs, noise_exponent, init_scale
    [align]  lambda, steps, learning_rate, restarts, sample_size, gamma, exact_eval_max_rows, eval_sample_size
    [match]  kind, truth (path or "shared"), r_max, vectors, baselines
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from relalign.align import AlignConfig
from relalign.embedding import SgnsConfig
from relalign.errors import ConfigError
from relalign.mmd import KernelConfig
from relalign.walks import WalkConfig

FORMATS = ("edgelist", "movielens", "dataset")
THREADS_ENV = "RELALIGN_THREADS"


@dataclass(frozen=True)
class DatasetEntry:
    path: Path
    format: str = "edgelist"
    kinds: Path | None = None


@dataclass(frozen=True)
class SplitEntry:
    path: Path
    kind: str
    format: str = "movielens"
    kinds: Path | None = None
    seed: int | None = None


@dataclass(frozen=True)
class MatchOptions:
    kind: str | None = None
    truth: str = "shared"
    r_max: int = 100
    vectors: str = "U"
    baselines: tuple[str, ...] = ("deepwalk", "degree")


@dataclass(frozen=True)
class PipelineConfig:
    datasets: tuple[DatasetEntry, ...] = ()
    split: SplitEntry | None = None
    walks: WalkConfig = field(default_factory=WalkConfig)
    sgns: SgnsConfig = field(default_factory=SgnsConfig)
    align: AlignConfig = field(default_factory=AlignConfig)
    match: MatchOptions = field(default_factory=MatchOptions)
    output_dir: Path = Path("runs")
    seed: int = 0
    threads: int = 1

    def validate(self) -> "PipelineConfig":
        if self.split is None and len(self.datasets) < 2:
            raise ConfigError("need at least two [dataset.N] sections or a [split] section")
        if self.split is not None and self.datasets:
            raise ConfigError("[split] and [dataset.N] sections are mutually exclusive")
        entries = list(self.datasets) + ([self.split] if self.split else [])
        for e in entries:
            if e.format not in FORMATS:
                raise ConfigError(f"unknown dataset format {e.format!r}")
            for p in (e.path, e.kinds):
                if p is not None and not Path(p).exists():
                    raise ConfigError(f"missing input file {p}")
        if self.match.truth != "shared" and not Path(self.match.truth).exists():
            raise ConfigError(f"missing ground-truth file {self.match.truth}")
        if self.match.vectors not in ("U", "H", "U+H"):
            raise ConfigError("match.vectors must be U, H or U+H")
        if self.match.r_max < 1:
            raise ConfigError("match.r_max must be >= 1")
        unknown = set(self.match.baselines) - {"deepwalk", "degree"}
        if unknown:
            raise ConfigError(f"unknown baselines {sorted(unknown)}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    def snapshot(self) -> dict[str, Any]:
        def plain(v):
            if isinstance(v, Path):
                return str(v)
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            return v

        return plain(asdict(self))


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


_SGNS_KEYS = {
    "dim": ("dim", int),
    "negatives": ("negatives_per_pair", int),
    "batch_size": ("batch_size", int),
    "learning_rate": ("learning_rate", float),
    "epochs": ("epochs", int),
    "noise_exponent": ("noise_exponent", float),
    "init_scale": ("init_scale", float),
}
_ALIGN_KEYS = {
    "lambda": ("lam", float),
    "steps": ("steps", int),
    "learning_rate": ("learning_rate", float),
    "restarts": ("restarts", int),
    "sample_size": ("sample_size", int),
    "exact_eval_max_rows": ("exact_eval_max_rows", int),
    "eval_sample_size": ("eval_sample_size", int),
    "checkpoint_every": ("checkpoint_every", int),
}
_WALK_KEYS = {
    "walks_per_object": ("walks_per_object", int),
    "walk_length": ("walk_length", int),
    "window": ("window", int),
}


def _section(parser: configparser.ConfigParser, name: str, table: dict) -> dict[str, Any]:
    if not parser.has_section(name):
        return {}
    out = {}
    for key, raw in parser.items(name):
        if key not in table:
            raise ConfigError(f"unknown key [{name}] {key}")
        attr, conv = table[key]
        try:
            out[attr] = conv(raw)
        except ValueError:
            raise ConfigError(f"[{name}] {key}: cannot parse {raw!r}") from None
    return out


def _path(base: Path, raw: str | None) -> Path | None:
    if raw is None or raw == "":
        return None
    p = Path(raw).expanduser()
    return p if p.is_absolute() else base / p


def parse_config(text: str, base_dir: str | Path = ".", overrides: Sequence[str] = ()) -> PipelineConfig:
    """Parse config text; relative paths resolve against ``base_dir``.

    ``overrides`` are ``section.key=value`` strings applied on top.
    """
    base = Path(base_dir)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().rpartition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, option, value.strip())

    known = {"run", "split", "walks", "embedding", "align", "match"}
    for name in parser.sections():
        if name not in known and not name.startswith("dataset."):
            raise ConfigError(f"unknown section [{name}]")

    try:
        run = parser["run"] if parser.has_section("run") else {}
        seed = int(run.get("seed", 0))
        threads = int(run.get("threads", default_threads()))
        output_dir = _path(base, run.get("output_dir", "runs"))

        datasets = []
        names = sorted((s for s in parser.sections() if s.startswith("dataset.")), key=lambda s: int(s.split(".", 1)[1]))
        for name in names:
            sec = parser[name]
            if "path" not in sec:
                raise ConfigError(f"[{name}] needs a path")
            datasets.append(DatasetEntry(_path(base, sec["path"]), sec.get("format", "edgelist"), _path(base, sec.get("kinds"))))

        split = None
        if parser.has_section("split"):
            sec = parser["split"]
            if "path" not in sec or "kind" not in sec:
                raise ConfigError("[split] needs path and kind")
            split = SplitEntry(
                _path(base, sec["path"]), sec["kind"], sec.get("format", "movielens"),
                _path(base, sec.get("kinds")), int(sec["seed"]) if "seed" in sec else None,
            )

        walks = WalkConfig(**_section(parser, "walks", _WALK_KEYS))
        sgns = SgnsConfig(**_section(parser, "embedding", _SGNS_KEYS))
        align_kw = _section(parser, "align", {**_ALIGN_KEYS, "gamma": ("gamma", float)})
        gamma = align_kw.pop("gamma", None)
        align = AlignConfig(**align_kw)
        if gamma is not None:
            align = replace(align, kernel=KernelConfig(gamma=gamma))

        m = parser["match"] if parser.has_section("match") else {}
        extra = set(m) - {"kind", "truth", "r_max", "vectors", "baselines"}
        if extra:
            raise ConfigError(f"unknown keys in [match]: {sorted(extra)}")
        truth = m.get("truth", "shared")
        match = MatchOptions(
            kind=m.get("kind") or None,
            truth=truth if truth == "shared" else str(_path(base, truth)),
            r_max=int(m.get("r_max", 100)),
            vectors=m.get("vectors", "U"),
            baselines=tuple(b.strip() for b in m.get("baselines", "deepwalk, degree").split(",") if b.strip()),
        )
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from None

    return PipelineConfig(tuple(datasets), split, walks, sgns, align, match, output_dir, seed, threads).validate()


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent, overrides)
