"""Typed heterogeneous graph storage, TSV ingestion and adjacency normalization."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import BoundsError, ConfigError, ParseError, SchemaError

ROW_STOCHASTIC = "row-stochastic"
SYMMETRIC = "symmetric"
NORM_MODES = (ROW_STOCHASTIC, SYMMETRIC)


@dataclass(frozen=True, eq=False)
class Relation:
    """Directed typed edge set in CSR layout over the source nodes."""

    name: str
    src_type: str
    dst_type: str
    n_src: int
    n_dst: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.weights):
            arr.setflags(write=False)

    @property
    def num_edges(self) -> int:
        return int(self.indices.shape[0])

    def check(self):
        """Structural CSR checks, independent of any semantics."""
        ip = self.indptr
        if ip.shape[0] != self.n_src + 1 or ip[0] != 0 or ip[-1] != self.indices.shape[0]:
            raise SchemaError(f"relation {self.name!r}: bad CSR offsets")
        if np.any(np.diff(ip) < 0):
            raise SchemaError(f"relation {self.name!r}: CSR offsets not monotone")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.n_dst):
            raise BoundsError(f"relation {self.name!r}: destination index out of range")
        if self.weights.shape != self.indices.shape or not np.all(np.isfinite(self.weights)):
            raise SchemaError(f"relation {self.name!r}: weights missing or non-finite")

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.weights, self.indices, self.indptr), shape=(self.n_src, self.n_dst)
        )

    @classmethod
    def from_edges(cls, name, src_type, dst_type, n_src, n_dst, src, dst, weight=None):
        """Build from parallel edge arrays. Rows are sorted by (src, dst); duplicates are kept."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        w = np.ones(src.shape[0]) if weight is None else np.asarray(weight, dtype=np.float64)
        order = np.lexsort((dst, src))
        src, dst, w = src[order], dst[order], w[order]
        indptr = np.zeros(n_src + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n_src), out=indptr[1:])
        rel = cls(name, src_type, dst_type, n_src, n_dst, indptr, dst, w)
        rel.check()
        return rel


@dataclass(frozen=True, eq=False)
class HeteroGraph:
    node_types: dict[str, int]
    relations: dict[str, Relation]
    target_type: str
    _norm_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.target_type not in self.node_types:
            raise SchemaError(f"target type {self.target_type!r} is not a declared node type")
        for rel in self.relations.values():
            for t in (rel.src_type, rel.dst_type):
                if t not in self.node_types:
                    raise SchemaError(f"relation {rel.name!r} uses undeclared type {t!r}")
            if rel.n_src != self.node_types[rel.src_type] or rel.n_dst != self.node_types[rel.dst_type]:
                raise SchemaError(f"relation {rel.name!r} shape disagrees with node counts")
            rel.check()

    @property
    def num_targets(self) -> int:
        return self.node_types[self.target_type]

    @property
    def num_nodes(self) -> int:
        return sum(self.node_types.values())

    @property
    def num_edges(self) -> int:
        return sum(r.num_edges for r in self.relations.values())

    def adjacency(self, name: str, mode: str = ROW_STOCHASTIC) -> sp.csr_matrix:
        """Normalized adjacency of one relation, cached per (relation, mode)."""
        key = (name, mode)
        adj = self._norm_cache.get(key)
        if adj is None:
            adj = normalize(self.relations[name], mode).matrix
            self._norm_cache[key] = adj
        return adj


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    relation: Relation
    mode: str
    weights: np.ndarray

    @property
    def matrix(self) -> sp.csr_matrix:
        rel = self.relation
        return sp.csr_matrix(
            (self.weights, rel.indices, rel.indptr), shape=(rel.n_src, rel.n_dst)
        )


def normalize(rel: Relation, mode: str = ROW_STOCHASTIC) -> NormalizedAdjacency:
    """Normalize edge weights of ``rel``.

    ``row-stochastic`` divides each edge by its row's weight sum (mean
    aggregation); ``symmetric`` divides by sqrt(out_deg(u) * in_deg(v)).
    Rows or columns without edges contribute nothing and never divide by zero.
    """
    w = rel.weights
    rows = np.repeat(np.arange(rel.n_src), np.diff(rel.indptr))
    out_deg = np.bincount(rows, weights=w, minlength=rel.n_src)
    if mode == ROW_STOCHASTIC:
        denom = out_deg[rows]
    elif mode == SYMMETRIC:
        in_deg = np.bincount(rel.indices, weights=w, minlength=rel.n_dst)
        denom = np.sqrt(out_deg[rows] * in_deg[rel.indices])
    else:
        raise ConfigError(f"unknown normalization mode {mode!r}; expected one of {NORM_MODES}")
    with np.errstate(divide="ignore", invalid="ignore"):
        normed = np.where(denom != 0, w / denom, 0.0)
    return NormalizedAdjacency(rel, mode, normed)


# --------------------------------------------------------------------------- I/O


def _fields(line, path, lineno, expect):
    parts = line.rstrip("\n").split("\t")
    if len(parts) not in expect:
        raise ParseError(path, lineno, f"expected {' or '.join(map(str, expect))} tab-separated fields, got {len(parts)}")
    return parts


def _int(tok, path, lineno, what):
    try:
        val = int(tok)
    except ValueError:
        raise ParseError(path, lineno, f"{what} {tok!r} is not an integer") from None
    return val


def _read_lines(path):
    if not os.path.exists(path):
        raise ConfigError(f"file not found: {path}")
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield lineno, line


def load_graph(nodes_path, edges_path, target_type: str) -> HeteroGraph:
    node_types: dict[str, int] = {}
    for lineno, line in _read_lines(nodes_path):
        name, count = _fields(line, nodes_path, lineno, (2,))
        if name in node_types:
            raise ParseError(nodes_path, lineno, f"node type {name!r} declared twice")
        count = _int(count, nodes_path, lineno, "count")
        if count < 0:
            raise ParseError(nodes_path, lineno, "negative node count")
        node_types[name] = count

    rel_types: dict[str, tuple[str, str]] = {}
    cols: dict[str, tuple[list, list, list]] = {}
    for lineno, line in _read_lines(edges_path):
        parts = _fields(line, edges_path, lineno, (5, 6))
        st, si, rname, dt, di = parts[:5]
        for t in (st, dt):
            if t not in node_types:
                raise SchemaError(f"{edges_path}:{lineno}: unknown node type {t!r}")
        si = _int(si, edges_path, lineno, "source id")
        di = _int(di, edges_path, lineno, "destination id")
        if not 0 <= si < node_types[st]:
            raise BoundsError(f"{edges_path}:{lineno}: {st} id {si} out of range [0, {node_types[st]})")
        if not 0 <= di < node_types[dt]:
            raise BoundsError(f"{edges_path}:{lineno}: {dt} id {di} out of range [0, {node_types[dt]})")
        if len(parts) == 6:
            try:
                w = float(parts[5])
            except ValueError:
                raise ParseError(edges_path, lineno, f"weight {parts[5]!r} is not a number") from None
            if not math.isfinite(w):
                raise ParseError(edges_path, lineno, "weight is not finite")
        else:
            w = 1.0
        known = rel_types.setdefault(rname, (st, dt))
        if known != (st, dt):
            raise SchemaError(
                f"{edges_path}:{lineno}: relation {rname!r} was {known[0]}->{known[1]}, now {st}->{dt}"
            )
        s, d, ws = cols.setdefault(rname, ([], [], []))
        s.append(si)
        d.append(di)
        ws.append(w)

    relations = {}
    for rname, (st, dt) in rel_types.items():
        s, d, w = cols[rname]
        relations[rname] = Relation.from_edges(
            rname, st, dt, node_types[st], node_types[dt], s, d, w
        )
    return HeteroGraph(node_types, relations, target_type)


def write_graph(graph: HeteroGraph, nodes_path, edges_path):
    """Write the canonical TSV form: relations by name, edges by (src, dst)."""
    with open(nodes_path, "w", encoding="utf-8", newline="\n") as fh:
        for name, count in graph.node_types.items():
            fh.write(f"{name}\t{count}\n")
    with open(edges_path, "w", encoding="utf-8", newline="\n") as fh:
        for rname in sorted(graph.relations):
            rel = graph.relations[rname]
            rows = np.repeat(np.arange(rel.n_src), np.diff(rel.indptr))
            for s, d, w in zip(rows.tolist(), rel.indices.tolist(), rel.weights.tolist()):
                fh.write(f"{rel.src_type}\t{s}\t{rname}\t{rel.dst_type}\t{d}\t{w!r}\n")


def canonical_edge_lines(edges_path) -> list[str]:
    """Canonical rendering of an edges file, for round-trip comparison."""
    recs = []
    for lineno, line in _read_lines(edges_path):
        parts = _fields(line, edges_path, lineno, (5, 6))
        w = float(parts[5]) if len(parts) == 6 else 1.0
        recs.append((parts[2], int(parts[1]), int(parts[4]), parts[0], parts[3], w))
    recs.sort(key=lambda r: (r[0], r[1], r[2]))
    return [f"{st}\t{s}\t{r}\t{dt}\t{d}\t{w!r}\n" for r, s, d, st, dt, w in recs]
