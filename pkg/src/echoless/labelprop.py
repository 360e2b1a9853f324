"""Label-based pre-computation: Plain, LastResidual, RemoveDiag and Echoless.

Echoless runs the backbone's message passing once per partition on a label
matrix whose rows for that partition are zeroed, so a node never receives
its own label back. Outputs are then rescaled to a common retention level
and merged by partition membership.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import SplitAssignment, augment
from .errors import ConfigError, DegenerateInputError, MergeError, NumericError, PartitionError
from .propagation import (
    MessagePassingPlan,
    PropagatedTensor,
    effective_matrix,
    propagate_array,
    require_linear,
    sparse_diagonal,
)

log = logging.getLogger(__name__)

APS = "aps"
UNIFORM = "uniform"
SCHEMES = (APS, UNIFORM)

PLAIN = "plain"
LAST_RESIDUAL = "lastresidual"
REMOVE_DIAG = "removediag"
ECHOLESS = "echoless"
STRATEGIES = (PLAIN, LAST_RESIDUAL, REMOVE_DIAG, ECHOLESS)

DEFAULT_M = 2
DEFAULT_EPS = 1e-12
DEFAULT_MEM_CAP = 8 * 10**9
# tuning ranges used for hop count and partition count searches
K_RANGE = (1, 8)
M_RANGE = (2, 5)

LABEL_ROWS_NOTE = "label rows live on target nodes only; other node types carry zeros"


@dataclass(frozen=True, eq=False)
class Partitioning:
    """Disjoint cover of the target nodes.

    With APS, partitions ``0 .. M-1`` split the training nodes and partition
    ``M`` holds every unlabeled node. With the uniform scheme all nodes are
    dealt into ``M`` partitions.
    """

    scheme: str
    M: int
    assignment: np.ndarray
    seed: int

    @property
    def num_parts(self) -> int:
        return self.M + 1 if self.scheme == APS else self.M

    def mask(self, i: int) -> np.ndarray:
        if not 0 <= i < self.num_parts:
            raise PartitionError(f"partition {i} out of range [0, {self.num_parts})")
        return self.assignment == i

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_parts)


def make_partitioning(split: SplitAssignment, scheme: str = APS, M: int = DEFAULT_M, seed: int = 0) -> Partitioning:
    """Seeded shuffle, then round-robin dealing into ``M`` partitions."""
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown partitioning scheme {scheme!r}; expected one of {SCHEMES}")
    if M < 1:
        raise PartitionError("M must be at least 1")
    train = split.train_idx
    if train.size == 0:
        raise PartitionError("partitioning needs at least one training node")
    if M > train.size:
        raise PartitionError(f"M={M} exceeds the {train.size} training nodes; some partitions would be empty")
    rng = np.random.default_rng(seed)
    assignment = np.empty(split.n, dtype=np.int64)
    if scheme == APS:
        assignment[split.unlabeled_idx] = M
        pool = train
    else:
        pool = np.arange(split.n)
    shuffled = rng.permutation(pool)
    assignment[shuffled] = np.arange(shuffled.size) % M
    return Partitioning(scheme, M, assignment, seed)


def _checked(values, plan):
    if not np.all(np.isfinite(values)):
        raise NumericError(f"non-finite values after propagation with plan {plan.describe()}")
    return values


def pfep(plan: MessagePassingPlan, graph, Ybar: np.ndarray, part: Partitioning, i: int) -> PropagatedTensor:
    """Propagate ``Ybar`` with the rows of partition ``i`` zeroed.

    ``Ybar`` is the augmented matrix ``[1_train | Y]``; the returned tensor
    keeps column 0 as the retention ratio. Message passing itself is the
    backbone's, untouched.
    """
    masked = np.where(part.mask(i)[:, None], 0.0, Ybar)
    if plan.is_linear:
        out = propagate_array(plan, masked, graph)
    else:
        # row normalization mixes columns; keep retention a function of the split alone
        out = np.hstack([
            propagate_array(plan, masked[:, :1], graph),
            propagate_array(plan, masked[:, 1:], graph),
        ])
    return PropagatedTensor(_checked(out, plan), True, {"partition": i})


def merged_retention(parts: list[PropagatedTensor], part: Partitioning) -> np.ndarray:
    """r = sum_i diag(mask_i) r_i: each node's retention from its own partition pass."""
    return merge(parts, part).retention


def post_adjust(H: PropagatedTensor, merged_r: np.ndarray, eps: float = DEFAULT_EPS, rows=None) -> PropagatedTensor:
    """Rescale each row by max(r) / r_i so every row sits at the same retention level.

    Rows whose own retention is at most ``eps`` received no label mass and
    are zeroed. ``rows`` restricts the zeroed-row diagnostic to the rows
    that will survive the merge.
    """
    if not H.has_retention:
        raise ConfigError("post_adjust needs a tensor with a retention column")
    merged_r = np.asarray(merged_r, dtype=np.float64)
    if not np.all(np.isfinite(merged_r)):
        raise NumericError("merged retention vector has non-finite entries")
    ref = float(merged_r.max(initial=0.0))
    if ref <= eps:
        raise DegenerateInputError(f"maximum retention {ref:.3g} <= eps={eps}: no label mass reached any node")
    r_i = H.retention
    ok = r_i > eps
    out = np.zeros_like(H.values)
    out[ok, 1:] = H.values[ok, 1:] * (ref / r_i[ok])[:, None]
    out[ok, 0] = ref
    dead = ~ok if rows is None else (~ok & rows)
    meta = dict(H.meta, zeroed_rows=int(dead.sum()), max_retention=ref)
    return PropagatedTensor(out, True, meta)


def merge(parts: list[PropagatedTensor], part: Partitioning) -> PropagatedTensor:
    """Row v of the result is row v of its own partition's tensor."""
    if len(parts) != part.num_parts:
        raise MergeError(f"{len(parts)} tensors for {part.num_parts} partitions")
    shape = parts[0].shape
    if any(p.shape != shape for p in parts) or shape[0] != part.assignment.shape[0]:
        raise MergeError(f"partition tensors disagree in shape: {[p.shape for p in parts]}")
    out = np.zeros(shape)
    for i, p in enumerate(parts):
        m = part.mask(i)
        out[m] = p.values[m]
    return PropagatedTensor(out, parts[0].has_retention, {})


def echoless_lp(
    plan: MessagePassingPlan,
    graph,
    Y: np.ndarray,
    split: SplitAssignment,
    M: int = DEFAULT_M,
    seed: int = 0,
    post_adjust_on: bool = True,
    scheme: str = APS,
    eps: float = DEFAULT_EPS,
    partitioning: Partitioning | None = None,
) -> PropagatedTensor:
    """Partition, propagate each partition masked, rescale, merge.

    Returns an ``N x (C+1)`` tensor whose column 0 is the retention level.
    Message passing runs once per partition (``M + 1`` times under APS).
    """
    part = partitioning or make_partitioning(split, scheme, M, seed)
    Ybar = augment(np.asarray(Y, dtype=np.float64), split)
    parts = [pfep(plan, graph, Ybar, part, i) for i in range(part.num_parts)]
    zeroed = 0
    if post_adjust_on:
        r = merged_retention(parts, part)
        parts = [post_adjust(p, r, eps, rows=part.mask(i)) for i, p in enumerate(parts)]
        zeroed = sum(p.meta["zeroed_rows"] for p in parts)
        if zeroed:
            log.info("post_adjust zeroed %d rows with retention <= %g", zeroed, eps)
    out = merge(parts, part)
    out.meta = {
        "strategy": ECHOLESS,
        "plan": plan.describe(),
        "scheme": part.scheme,
        "M": part.M,
        "seed": part.seed,
        "post_adjust": post_adjust_on,
        "mp_calls": len(parts),
        "zeroed_rows": zeroed,
        "assumption": LABEL_ROWS_NOTE,
    }
    return out


def plain_lp(plan: MessagePassingPlan, graph, Y: np.ndarray) -> PropagatedTensor:
    """Propagate the raw label matrix; training nodes see their own label echoed back."""
    out = _checked(propagate_array(plan, Y, graph), plan)
    return PropagatedTensor(out, False, {"strategy": PLAIN, "plan": plan.describe()})


def effective_diagonal(plan: MessagePassingPlan, graph, mem_cap: int = DEFAULT_MEM_CAP) -> np.ndarray:
    """Diagonal of the effective operator: sparse for K <= 2, dense (guarded) beyond."""
    require_linear(plan, "RemoveDiag")
    if plan.hops <= 2:
        return sparse_diagonal(plan, graph)
    return effective_matrix(plan, graph, mem_cap).diagonal


def remove_diag_lp(plan: MessagePassingPlan, graph, Y: np.ndarray, mem_cap: int = DEFAULT_MEM_CAP) -> PropagatedTensor:
    """(A - diag(A)) Y for linear plans."""
    diag = effective_diagonal(plan, graph, mem_cap)
    Y = np.asarray(Y, dtype=np.float64)
    out = propagate_array(plan, Y, graph) - diag[:, None] * Y
    return PropagatedTensor(
        _checked(out, plan), False, {"strategy": REMOVE_DIAG, "plan": plan.describe()}
    )


def last_residual_lp(plans: list[MessagePassingPlan], graph, Y: np.ndarray, k_min: int) -> list[PropagatedTensor]:
    """Plain propagation restricted to hops k >= k_min.

    Dropping low hops only de-emphasizes short cycles; longer cycles still
    echo, so this does not stop leakage.
    """
    K = len(plans)
    if not 1 <= k_min <= K:
        raise ConfigError(f"k_min={k_min} must lie in [1, {K}]")
    outs = []
    for plan in plans[k_min - 1:]:
        t = plain_lp(plan, graph, Y)
        t.meta.update(strategy=LAST_RESIDUAL, k_min=k_min, residual_form="hop-dropping")
        outs.append(t)
    return outs


def precompute(
    strategy: str,
    plans: list[MessagePassingPlan],
    graph,
    Y: np.ndarray,
    split: SplitAssignment,
    M: int = DEFAULT_M,
    seed: int = 0,
    scheme: str = APS,
    post_adjust_on: bool = True,
    mem_cap: int = DEFAULT_MEM_CAP,
    k_min: int | None = None,
    eps: float = DEFAULT_EPS,
) -> list[PropagatedTensor]:
    """One tensor per label plan (fewer for LastResidual)."""
    if strategy == PLAIN:
        return [plain_lp(p, graph, Y) for p in plans]
    if strategy == LAST_RESIDUAL:
        return last_residual_lp(plans, graph, Y, k_min or len(plans))
    if strategy == REMOVE_DIAG:
        return [remove_diag_lp(p, graph, Y, mem_cap) for p in plans]
    if strategy == ECHOLESS:
        part = make_partitioning(split, scheme, M, seed)
        return [
            echoless_lp(p, graph, Y, split, post_adjust_on=post_adjust_on, eps=eps, partitioning=part)
            for p in plans
        ]
    raise ConfigError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
