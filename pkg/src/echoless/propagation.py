"""Message-passing operators over a HeteroGraph and the dense effective-matrix oracle.

Three operator kinds are supported:

* ``metapath``: ``A_r1 @ A_r2 @ ... @ A_rk @ Y`` for a relation sequence
  ``r1 .. rk`` read as a walk from the receiving target node (``src(r1)``)
  to the target node whose payload is collected (``dst(rk)``). Evaluation
  is right to left, so ``A_rk`` touches the input first.
* ``hop-averaged``: at every hop each node type averages the results of all
  relations leaving it whose destination type already carries a payload.
* ``nonlinear-normalized``: either of the above with row L2 normalization
  between hops. Not linear in the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import MemoryGuardError, NumericError, PlanError, UnsupportedOperatorError
from .graph import NORM_MODES, ROW_STOCHASTIC, HeteroGraph

METAPATH = "metapath"
HOP_AVERAGED = "hop-averaged"
NONLINEAR = "nonlinear-normalized"
KINDS = (METAPATH, HOP_AVERAGED, NONLINEAR)
LINEAR_KINDS = (METAPATH, HOP_AVERAGED)

F64_BYTES = 8
U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class MessagePassingPlan:
    kind: str = HOP_AVERAGED
    hops: int = 1
    metapath: tuple[str, ...] | None = None
    norm: str = ROW_STOCHASTIC

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlanError(f"unknown operator kind {self.kind!r}; expected one of {KINDS}")
        if self.norm not in NORM_MODES:
            raise PlanError(f"unknown normalization {self.norm!r}")
        if self.metapath is not None:
            object.__setattr__(self, "metapath", tuple(self.metapath))
            if len(self.metapath) != self.hops:
                object.__setattr__(self, "hops", len(self.metapath))
        if self.kind == METAPATH and not self.metapath:
            raise PlanError("metapath plans need a non-empty relation sequence")
        if self.hops < 1:
            raise PlanError("plans need at least one hop")

    @property
    def is_linear(self) -> bool:
        return self.kind in LINEAR_KINDS

    def describe(self) -> dict:
        d = {"kind": self.kind, "hops": self.hops, "norm": self.norm}
        if self.metapath:
            d["metapath"] = list(self.metapath)
        return d

    def validate(self, graph: HeteroGraph):
        if not self.metapath:
            return
        expect = graph.target_type
        for i, name in enumerate(self.metapath):
            rel = graph.relations.get(name)
            if rel is None:
                raise PlanError(f"metapath step {i}: unknown relation {name!r}")
            if rel.src_type != expect:
                raise PlanError(
                    f"metapath step {i}: relation {name!r} starts at {rel.src_type!r}, expected {expect!r}"
                )
            expect = rel.dst_type
        if expect != graph.target_type:
            raise PlanError(f"metapath ends at {expect!r}, not the target type {graph.target_type!r}")


def hop_plans(K: int, kind: str = HOP_AVERAGED, norm: str = ROW_STOCHASTIC) -> list[MessagePassingPlan]:
    """One plan per hop count k = 1..K."""
    if kind == METAPATH:
        raise PlanError("metapath plans are built from explicit relation sequences")
    return [MessagePassingPlan(kind, k, None, norm) for k in range(1, K + 1)]


@dataclass(eq=False)
class PropagatedTensor:
    """Dense N x cols result. With ``has_retention`` column 0 is the retention ratio."""

    values: np.ndarray
    has_retention: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape

    @property
    def label_values(self) -> np.ndarray:
        return self.values[:, 1:] if self.has_retention else self.values

    @property
    def retention(self) -> np.ndarray | None:
        return self.values[:, 0] if self.has_retention else None


def _as_array(x) -> np.ndarray:
    if isinstance(x, PropagatedTensor):
        x = x.values
    return np.asarray(x, dtype=np.float64)


def _l2_rows(X: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))
    out = np.zeros_like(X)
    nz = norms > 0
    out[nz] = X[nz] / norms[nz, None]
    return out


def _metapath_hops(plan, graph, X):
    for step, name in enumerate(reversed(plan.metapath)):
        if step and plan.kind == NONLINEAR:
            X = _l2_rows(X)
        X = graph.adjacency(name, plan.norm) @ X
    return X


def _averaged_hops(plan, graph, X):
    state = {graph.target_type: X}
    for hop in range(plan.hops):
        if hop and plan.kind == NONLINEAR:
            state = {t: _l2_rows(v) for t, v in state.items()}
        sums: dict[str, np.ndarray] = {}
        counts: dict[str, int] = {}
        # relations visited in name order so float reductions are reproducible
        for name in sorted(graph.relations):
            rel = graph.relations[name]
            src = state.get(rel.dst_type)
            if src is None:
                continue
            msg = graph.adjacency(name, plan.norm) @ src
            if rel.src_type in sums:
                sums[rel.src_type] += msg
            else:
                sums[rel.src_type] = msg
            counts[rel.src_type] = counts.get(rel.src_type, 0) + 1
        state = {t: s / counts[t] for t, s in sums.items()}
    out = state.get(graph.target_type)
    return np.zeros_like(X) if out is None else out


def propagate_array(plan: MessagePassingPlan, X, graph: HeteroGraph) -> np.ndarray:
    X = _as_array(X)
    if X.ndim != 2 or X.shape[0] != graph.num_targets:
        raise PlanError(f"input has shape {X.shape}, expected ({graph.num_targets}, cols)")
    if not np.all(np.isfinite(X)):
        raise NumericError("non-finite values in propagation input")
    plan.validate(graph)
    if plan.metapath:
        return _metapath_hops(plan, graph, X)
    return _averaged_hops(plan, graph, X)


def propagate(plan: MessagePassingPlan, X, graph: HeteroGraph) -> PropagatedTensor:
    """Apply ``plan`` to a target-indexed payload without forming the dense operator."""
    has_ret = isinstance(X, PropagatedTensor) and X.has_retention
    out = propagate_array(plan, X, graph)
    return PropagatedTensor(out, has_ret, {"plan": plan.describe()})


class DenseEstimate(NamedTuple):
    nbytes: int
    overflow: bool


def estimate_dense_bytes(N: int, dtype_bytes: int = F64_BYTES) -> DenseEstimate:
    """Bytes for a dense N x N matrix; saturates at the u64 maximum."""
    if N < 0 or dtype_bytes < 0:
        raise ValueError("N and dtype_bytes must be non-negative")
    n = N * N * dtype_bytes
    if n > U64_MAX:
        return DenseEstimate(U64_MAX, True)
    return DenseEstimate(n, False)


@dataclass(frozen=True, eq=False)
class EffectivePropagation:
    plan: MessagePassingPlan
    matrix: np.ndarray

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()


def require_linear(plan: MessagePassingPlan, what: str):
    if not plan.is_linear:
        raise UnsupportedOperatorError(
            f"{what} needs a linear operator; {plan.kind!r} interleaves row normalization"
        )


def effective_matrix(
    plan: MessagePassingPlan, graph: HeteroGraph, mem_cap: int, probe_seed: int = 0
) -> EffectivePropagation:
    """Materialize the dense target-to-target operator by propagating the identity.

    Column j is the plan applied to basis vector e_j. A random probe then
    certifies linearity: plan(Y) must equal A @ Y within 1e-12.
    """
    require_linear(plan, "effective_matrix")
    N = graph.num_targets
    est = estimate_dense_bytes(N)
    if est.overflow or est.nbytes > mem_cap:
        raise MemoryGuardError(est.nbytes, mem_cap)
    A = propagate_array(plan, np.eye(N), graph)
    probe = np.random.default_rng(probe_seed).standard_normal((N, 3))
    err = np.max(np.abs(propagate_array(plan, probe, graph) - A @ probe), initial=0.0)
    if err > 1e-12:
        raise NumericError(f"linearity probe failed for {plan.describe()}: max error {err:.3g}")
    return EffectivePropagation(plan, A)


def _linear_terms(plan: MessagePassingPlan, graph: HeteroGraph):
    """Expand a linear plan into ``[(coef, (r1, ..., rk))]`` with A = sum coef * A_r1 ... A_rk."""
    if plan.metapath:
        return [(1.0, tuple(plan.metapath))]
    # state[t] = list of terms producing the payload on node type t
    state = {graph.target_type: [(1.0, ())]}
    for _ in range(plan.hops):
        nxt: dict[str, list] = {}
        counts: dict[str, int] = {}
        for name in sorted(graph.relations):
            rel = graph.relations[name]
            if rel.dst_type not in state:
                continue
            counts[rel.src_type] = counts.get(rel.src_type, 0) + 1
            nxt.setdefault(rel.src_type, []).extend((c, (name,) + p) for c, p in state[rel.dst_type])
        state = {t: [(c / counts[t], p) for c, p in terms] for t, terms in nxt.items()}
    return state.get(graph.target_type, [])


def sparse_diagonal(plan: MessagePassingPlan, graph: HeteroGraph) -> np.ndarray:
    """diag of the effective operator for 1- and 2-hop linear plans, never densified.

    For two hops uses diag(A_2 A_1) = (A_2 * A_1^T) 1, elementwise product
    then row sums, which costs O(E + N).
    """
    require_linear(plan, "sparse_diagonal")
    if plan.hops > 2:
        raise PlanError("the sparse diagonal identity only covers plans with at most two hops")
    plan.validate(graph)
    diag = np.zeros(graph.num_targets)
    for coef, path in _linear_terms(plan, graph):
        if len(path) == 1:
            diag += coef * graph.adjacency(path[0], plan.norm).diagonal()
        else:
            outer = graph.adjacency(path[0], plan.norm)
            inner = graph.adjacency(path[1], plan.norm)
            prod = sp.csr_matrix(outer.multiply(inner.T))
            diag += coef * np.asarray(prod.sum(axis=1)).ravel()
    return diag
