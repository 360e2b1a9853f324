"""Labels, train/valid/test splits and the random-label synthetic fixture."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ConfigError, ParseError, SplitError
from .graph import HeteroGraph, Relation

TRAIN, VALID, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "valid", "test")


@dataclass(frozen=True, eq=False)
class SplitAssignment:
    """Per-target-node split code (0 train, 1 valid, 2 test)."""

    codes: np.ndarray

    def __post_init__(self):
        if self.codes.ndim != 1 or not np.isin(self.codes, (TRAIN, VALID, TEST)).all():
            raise SplitError("split codes must be a 1-d array over {0, 1, 2}")
        self.codes.setflags(write=False)

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def train_mask(self) -> np.ndarray:
        return self.codes == TRAIN

    def indices(self, part: str) -> np.ndarray:
        return np.flatnonzero(self.codes == SPLIT_NAMES.index(part))

    @property
    def train_idx(self) -> np.ndarray:
        return self.indices("train")

    @property
    def unlabeled_idx(self) -> np.ndarray:
        return np.flatnonzero(self.codes != TRAIN)


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    """One-hot rows for training nodes, zero rows elsewhere."""

    Y: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.Y.shape[1]

    @classmethod
    def from_labels(cls, labels, split: SplitAssignment, num_classes=None):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape[0] != split.n:
            raise SplitError(f"{labels.shape[0]} labels for {split.n} target nodes")
        train = split.train_mask
        if num_classes is None:
            num_classes = int(labels[labels >= 0].max()) + 1 if (labels >= 0).any() else 0
        if np.any(labels[train] < 0) or np.any(labels[train] >= num_classes):
            raise SplitError("every training node needs a class id in [0, C)")
        Y = np.zeros((split.n, num_classes))
        idx = np.flatnonzero(train)
        Y[idx, labels[idx]] = 1.0
        return cls(Y)


def augment(Y: np.ndarray, split: SplitAssignment) -> np.ndarray:
    """[1_train | Y]: the train indicator prepended as column 0."""
    return np.hstack([split.train_mask.astype(np.float64)[:, None], Y])


# --------------------------------------------------------------------------- files


def _rows(path, ncols):
    if not os.path.exists(path):
        raise ConfigError(f"file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != ncols:
                raise ParseError(path, lineno, f"expected {ncols} tab-separated fields")
            yield lineno, parts


def load_labels(path, num_targets: int) -> np.ndarray:
    """Class id per target node; -1 where the file has no entry."""
    labels = np.full(num_targets, -1, dtype=np.int64)
    for lineno, (tid, cid) in _rows(path, 2):
        try:
            tid, cid = int(tid), int(cid)
        except ValueError:
            raise ParseError(path, lineno, "ids must be integers") from None
        if not 0 <= tid < num_targets:
            raise BoundsError(f"{path}:{lineno}: target id {tid} out of range [0, {num_targets})")
        if cid < 0:
            raise ParseError(path, lineno, "negative class id")
        labels[tid] = cid
    return labels


def load_splits(path, num_targets: int) -> SplitAssignment:
    codes = np.full(num_targets, TEST, dtype=np.int8)
    for lineno, (tid, name) in _rows(path, 2):
        try:
            tid = int(tid)
        except ValueError:
            raise ParseError(path, lineno, "target id must be an integer") from None
        if not 0 <= tid < num_targets:
            raise BoundsError(f"{path}:{lineno}: target id {tid} out of range [0, {num_targets})")
        if name not in SPLIT_NAMES:
            raise ParseError(path, lineno, f"split must be one of {SPLIT_NAMES}, got {name!r}")
        codes[tid] = SPLIT_NAMES.index(name)
    return SplitAssignment(codes)


def write_labels(path, labels):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tid, cid in enumerate(np.asarray(labels).tolist()):
            if cid >= 0:
                fh.write(f"{tid}\t{cid}\n")


def write_splits(path, split: SplitAssignment):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tid, code in enumerate(split.codes.tolist()):
            fh.write(f"{tid}\t{SPLIT_NAMES[code]}\n")


# --------------------------------------------------------------------------- synthetic


@dataclass
class SyntheticSpec:
    """Random heterogeneous graph with labels drawn independently of structure.

    ``relations`` holds ``(name, src_type, dst_type, avg_out_degree)``; with
    ``add_reverse`` each relation also gets an explicit ``rev_<name>``.
    """

    node_types: dict[str, int] = field(
        default_factory=lambda: {"paper": 100, "author": 60, "venue": 8}
    )
    target_type: str = "paper"
    relations: list[tuple[str, str, str, float]] = field(
        default_factory=lambda: [
            ("writes", "author", "paper", 3.0),
            ("published_in", "paper", "venue", 1.0),
            ("cites", "paper", "paper", 2.0),
        ]
    )
    num_classes: int = 4
    train_frac: float = 0.5
    valid_frac: float = 0.2
    add_reverse: bool = True


def gen_synthetic(spec: SyntheticSpec, seed: int = 0):
    """Returns ``(graph, labels, split)``; ``labels`` covers every target node."""
    n = spec.node_types.get(spec.target_type, 0)
    if n <= 0:
        raise ConfigError("synthetic spec needs at least one target node")
    if not 0 < spec.train_frac <= 1 or spec.valid_frac < 0 or spec.train_frac + spec.valid_frac > 1:
        raise ConfigError("split fractions must satisfy 0 < train, 0 <= valid, train + valid <= 1")
    rng = np.random.default_rng(seed)
    relations = {}
    for name, st, dt, deg in spec.relations:
        ns, nd = spec.node_types[st], spec.node_types[dt]
        m = int(round(deg * ns)) if nd > 0 else 0
        src = rng.integers(0, ns, size=m)
        dst = rng.integers(0, nd, size=m)
        if st == dt:
            keep = src != dst
            src, dst = src[keep], dst[keep]
        relations[name] = Relation.from_edges(name, st, dt, ns, nd, src, dst)
        if spec.add_reverse:
            rname = f"rev_{name}"
            relations[rname] = Relation.from_edges(rname, dt, st, nd, ns, dst, src)
    graph = HeteroGraph(dict(spec.node_types), relations, spec.target_type)

    labels = rng.integers(0, spec.num_classes, size=n)
    perm = rng.permutation(n)
    n_train = max(1, int(round(spec.train_frac * n)))
    n_valid = int(round(spec.valid_frac * n))
    codes = np.full(n, TEST, dtype=np.int8)
    codes[perm[:n_train]] = TRAIN
    codes[perm[n_train:n_train + n_valid]] = VALID
    return graph, labels, SplitAssignment(codes)
