"""Relational datasets: loading, validation and splitting."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from relalign.errors import DataError

logger = logging.getLogger(__name__)

NODE_DIRECTIVE = "#! node"


@dataclass(frozen=True, eq=False)
class RelationalDataset:
    """Undirected, unweighted relations over one dataset's objects.

    Adjacency is stored in CSR form: the neighbors of object ``n`` are
    ``indices[indptr[n]:indptr[n + 1]]``, sorted ascending.
    """

    dataset_id: int
    object_labels: tuple[str, ...]
    indptr: np.ndarray
    indices: np.ndarray
    object_kinds: tuple[str, ...] | None = None
    dropped_self_loops: int = 0
    _label_index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        if not self._label_index:
            self._label_index.update((lab, i) for i, lab in enumerate(self.object_labels))

    @property
    def num_objects(self) -> int:
        return len(self.object_labels)

    @property
    def edge_count(self) -> int:
        return int(self.indices.size // 2)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def isolated(self) -> np.ndarray:
        """Boolean mask of objects without relations."""
        return self.degrees == 0

    def neighbors(self, n: int) -> np.ndarray:
        return self.indices[self.indptr[n] : self.indptr[n + 1]]

    @property
    def adjacency(self) -> list[list[int]]:
        return [self.neighbors(n).tolist() for n in range(self.num_objects)]

    def index_of(self, label: str) -> int:
        try:
            return self._label_index[label]
        except KeyError:
            raise KeyError(f"unknown object label {label!r} in dataset {self.dataset_id}") from None

    def edges(self) -> np.ndarray:
        """Each undirected relation once, as rows ``(n, m)`` with ``n < m``."""
        rows = np.repeat(np.arange(self.num_objects), self.degrees)
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def objects_of_kind(self, kind: str) -> np.ndarray:
        if self.object_kinds is None:
            raise DataError(f"dataset {self.dataset_id} has no kind annotations")
        idx = np.flatnonzero(np.asarray(self.object_kinds, dtype=object) == kind)
        if idx.size == 0:
            raise DataError(f"kind {kind!r} not present in dataset {self.dataset_id}")
        return idx

    def with_id(self, dataset_id: int) -> "RelationalDataset":
        return RelationalDataset(
            dataset_id, self.object_labels, self.indptr, self.indices,
            self.object_kinds, self.dropped_self_loops,
        )

    def same_structure(self, other: "RelationalDataset") -> bool:
        return (
            self.object_labels == other.object_labels
            and self.object_kinds == other.object_kinds
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )


def from_edges(
    labels: Sequence[str],
    edges: Iterable[tuple[int, int]] | np.ndarray,
    *,
    dataset_id: int = 1,
    kinds: Sequence[str] | None = None,
) -> RelationalDataset:
    """Build a dataset from index pairs; duplicates collapse, self-loops drop."""
    labels = tuple(labels)
    if len(set(labels)) != len(labels):
        raise DataError("object labels must be unique")
    n = len(labels)
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise DataError("edge endpoint out of range")
    loops = arr[:, 0] == arr[:, 1]
    n_loops = int(loops.sum())
    arr = arr[~loops]
    both = np.concatenate([arr, arr[:, ::-1]])
    both = np.unique(both, axis=0) if both.size else both.reshape(0, 2)
    counts = np.bincount(both[:, 0], minlength=n) if both.size else np.zeros(n, dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    # np.unique sorts lexicographically, so each row's neighbors come out sorted
    indices = both[:, 1].astype(np.int64, copy=True)
    if kinds is not None:
        kinds = tuple(kinds)
        if len(kinds) != n:
            raise DataError("kind annotations must cover every object")
    return RelationalDataset(dataset_id, labels, indptr, indices, kinds, n_loops)


def _read_lines(path: Path) -> list[str]:
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def read_kinds(path: str | Path) -> dict[str, str]:
    """Parse a ``label<TAB>kind`` sidecar."""
    path = Path(path)
    kinds: dict[str, str] = {}
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise DataError(f"{path}:{lineno}: expected 'label<TAB>kind'")
        kinds[parts[0]] = parts[1]
    return kinds


def load_edge_list(
    path: str | Path,
    *,
    dataset_id: int = 1,
    kinds_path: str | Path | None = None,
) -> RelationalDataset:
    """Load a whitespace-separated edge list.

    Lines beginning with ``#`` are comments, except ``#! node <label>``
    directives, which declare an object (so isolated objects and the label
    order survive a save/load round trip). Extra columns such as weights are
    ignored with a warning. Labels get dense indices in first-seen order.

    Raises:
        DataError: unreadable file, malformed line, missing kinds, or no edges.
    """
    path = Path(path)
    index: dict[str, int] = {}
    edges: list[tuple[int, int]] = []
    extra_columns = 0

    def intern(label: str) -> int:
        i = index.get(label)
        if i is None:
            i = index[label] = len(index)
        return i

    for lineno, line in enumerate(_read_lines(path), 1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith(NODE_DIRECTIVE):
            parts = stripped[len(NODE_DIRECTIVE):].split()
            if len(parts) != 1:
                raise DataError(f"{path}:{lineno}: malformed node directive")
            intern(parts[0])
            continue
        if stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) < 2:
            raise DataError(f"{path}:{lineno}: expected two labels, got {stripped!r}")
        if len(parts) > 2:
            extra_columns += 1
        edges.append((intern(parts[0]), intern(parts[1])))

    if not edges:
        raise DataError(f"{path}: empty edge set")
    if extra_columns:
        logger.warning("%s: ignored extra columns on %d lines (relations are unweighted)", path, extra_columns)

    labels = list(index)
    kinds = None
    if kinds_path is not None:
        table = read_kinds(kinds_path)
        missing = [lab for lab in labels if lab not in table]
        if missing:
            raise DataError(f"{kinds_path}: no kind for {len(missing)} objects, e.g. {missing[0]!r}")
        kinds = [table[lab] for lab in labels]

    ds = from_edges(labels, edges, dataset_id=dataset_id, kinds=kinds)
    if ds.dropped_self_loops:
        logger.warning("%s: dropped %d self-loops", path, ds.dropped_self_loops)
    if ds.isolated.any():
        logger.info("%s: %d isolated objects", path, int(ds.isolated.sum()))
    return ds


def load_movielens(path: str | Path, *, dataset_id: int = 1) -> RelationalDataset:
    """Load a MovieLens ``u.data`` file (user, item, rating, timestamp).

    Every rating becomes one user-item relation; labels are prefixed ``u:``
    and ``i:`` and the kinds are ``user`` and ``item``.
    """
    path = Path(path)
    index: dict[str, int] = {}
    kinds: list[str] = []
    edges: list[tuple[int, int]] = []

    def intern(label: str, kind: str) -> int:
        i = index.get(label)
        if i is None:
            i = index[label] = len(index)
            kinds.append(kind)
        return i

    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 3:
            raise DataError(f"{path}:{lineno}: expected user<TAB>item<TAB>rating[<TAB>timestamp]")
        user, item = parts[0].strip(), parts[1].strip()
        if not user or not item:
            raise DataError(f"{path}:{lineno}: empty user or item id")
        edges.append((intern("u:" + user, "user"), intern("i:" + item, "item")))
    if not edges:
        raise DataError(f"{path}: empty edge set")
    return from_edges(list(index), edges, dataset_id=dataset_id, kinds=kinds)


def save_dataset(ds: RelationalDataset, path: str | Path) -> list[Path]:
    """Write the canonical edge-list form (plus kinds sidecar when annotated).

    Returns the paths written.
    """
    path = Path(path)
    lines = [f"# relalign dataset {ds.dataset_id}: {ds.num_objects} objects, {ds.edge_count} relations"]
    lines += [f"{NODE_DIRECTIVE} {lab}" for lab in ds.object_labels]
    labels = ds.object_labels
    lines += [f"{labels[a]} {labels[b]}" for a, b in ds.edges()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written = [path]
    if ds.object_kinds is not None:
        kpath = kinds_path_for(path)
        kpath.write_text(
            "".join(f"{lab}\t{kind}\n" for lab, kind in zip(labels, ds.object_kinds)),
            encoding="utf-8",
        )
        written.append(kpath)
    return written


def kinds_path_for(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".kinds")


def load_dataset(path: str | Path, *, dataset_id: int = 1) -> RelationalDataset:
    """Inverse of :func:`save_dataset`."""
    kpath = kinds_path_for(path)
    return load_edge_list(path, dataset_id=dataset_id, kinds_path=kpath if kpath.exists() else None)


def degree(ds: RelationalDataset, n: int) -> int:
    if not 0 <= n < ds.num_objects:
        raise IndexError(f"object index {n} out of range for {ds.num_objects} objects")
    return int(ds.indptr[n + 1] - ds.indptr[n])


def subgraph(ds: RelationalDataset, keep: np.ndarray, *, dataset_id: int | None = None) -> RelationalDataset:
    """Induced sub-dataset on the objects in ``keep`` (original order kept)."""
    keep = np.sort(np.asarray(keep, dtype=np.int64))
    remap = np.full(ds.num_objects, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    e = ds.edges()
    e = remap[e]
    e = e[(e >= 0).all(axis=1)]
    labels = [ds.object_labels[i] for i in keep]
    kinds = None if ds.object_kinds is None else [ds.object_kinds[i] for i in keep]
    return from_edges(labels, e, dataset_id=ds.dataset_id if dataset_id is None else dataset_id, kinds=kinds)


def split_dataset(ds: RelationalDataset, kind: str, seed: int) -> tuple[RelationalDataset, RelationalDataset]:
    """Randomly halve the objects of ``kind``; all other objects go to both halves.

    The first half gets ``floor(x/2)`` of the ``x`` objects of ``kind``. Each
    half keeps only relations whose endpoints it retains.
    """
    members = ds.objects_of_kind(kind)
    if members.size < 2:
        raise DataError(f"need at least 2 objects of kind {kind!r} to split")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(members)
    first = perm[: members.size // 2]
    second = perm[members.size // 2 :]
    others = np.setdiff1d(np.arange(ds.num_objects), members)
    a = subgraph(ds, np.concatenate([others, first]), dataset_id=1)
    b = subgraph(ds, np.concatenate([others, second]), dataset_id=2)
    return a, b


def kind_histogram(ds: RelationalDataset) -> dict[str, int]:
    if ds.object_kinds is None:
        return {}
    return dict(Counter(ds.object_kinds))


def permuted_copy(
    ds: RelationalDataset,
    perm: np.ndarray,
    *,
    prefix: str = "",
    dataset_id: int | None = None,
) -> RelationalDataset:
    """Relabel objects so that new index ``perm[n]`` holds old object ``n``.

    Labels get ``prefix`` prepended, which keeps the copy's labels distinct
    when ground truth is tracked separately.
    """
    perm = np.asarray(perm, dtype=np.int64)
    n = ds.num_objects
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError("perm must be a permutation of object indices")
    labels = [""] * n
    for old, new in enumerate(perm):
        labels[new] = prefix + ds.object_labels[old]
    kinds = None
    if ds.object_kinds is not None:
        k = [""] * n
        for old, new in enumerate(perm):
            k[new] = ds.object_kinds[old]
        kinds = k
    return from_edges(labels, perm[ds.edges()], dataset_id=ds.dataset_id if dataset_id is None else dataset_id, kinds=kinds)
