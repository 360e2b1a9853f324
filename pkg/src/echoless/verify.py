"""Leakage measurement by exact label perturbation, and tensor equivalence checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SizeError
from .labelprop import (
    DEFAULT_M,
    DEFAULT_MEM_CAP,
    ECHOLESS,
    LAST_RESIDUAL,
    PLAIN,
    REMOVE_DIAG,
    echoless_lp,
    make_partitioning,
    plain_lp,
    remove_diag_lp,
)
from .propagation import PropagatedTensor

MAX_LEAKAGE_NODES = 5000
DEFAULT_LEAK_TOL = 1e-9


@dataclass
class LeakageConfig:
    M: int = DEFAULT_M
    seed: int = 0
    scheme: str = "aps"
    post_adjust_on: bool = True
    mem_cap: int = DEFAULT_MEM_CAP
    metric: str = "max"  # or "l2"
    tol: float = DEFAULT_LEAK_TOL


@dataclass
class LeakageReport:
    strategy: str
    plan: dict
    tolerance: float
    nodes: np.ndarray
    leakage: np.ndarray = field(repr=False)

    @property
    def leaking_nodes(self) -> int:
        return int(np.count_nonzero(self.leakage > self.tolerance))

    @property
    def max_leakage(self) -> float:
        return float(self.leakage.max(initial=0.0))

    def to_json(self, per_node: bool = False) -> dict:
        d = {
            "strategy": self.strategy,
            "plan": self.plan,
            "tolerance": self.tolerance,
            "leaking_nodes": self.leaking_nodes,
            "max_leakage": self.max_leakage,
        }
        if per_node:
            d["per_node"] = {int(v): float(x) for v, x in zip(self.nodes, self.leakage)}
        return d


def strategy_runner(strategy: str, plan, graph, split, cfg: LeakageConfig):
    """Close over everything but Y; the returned callable maps Y to an output array."""
    if strategy == ECHOLESS:
        part = make_partitioning(split, cfg.scheme, cfg.M, cfg.seed)
        return lambda Y: echoless_lp(
            plan, graph, Y, split, post_adjust_on=cfg.post_adjust_on, partitioning=part
        ).values
    if strategy in (PLAIN, LAST_RESIDUAL):
        # LastResidual keeps plain propagation for the hops it retains
        return lambda Y: plain_lp(plan, graph, Y).values
    if strategy == REMOVE_DIAG:
        return lambda Y: remove_diag_lp(plan, graph, Y, cfg.mem_cap).values
    if callable(strategy):
        return lambda Y: np.asarray(strategy(plan, graph, Y, split))
    raise ConfigError(f"unknown strategy {strategy!r}")


def _row_distance(a, b, metric):
    d = a - b
    if metric == "max":
        return float(np.max(np.abs(d), initial=0.0))
    if metric == "l2":
        return float(np.sqrt(np.sum(d * d)))
    raise ConfigError(f"unknown leakage metric {metric!r}")


def measure_leakage(strategy, plan, graph, Y, split, config: LeakageConfig | None = None) -> LeakageReport:
    """L(v) = distance between output row v with Y as-is and with Y[v] zeroed.

    One extra strategy run per training node, so this is for desk-scale
    graphs only.
    """
    cfg = config or LeakageConfig()
    if split.n > MAX_LEAKAGE_NODES:
        raise SizeError(f"measure_leakage is limited to {MAX_LEAKAGE_NODES} target nodes, got {split.n}")
    run = strategy_runner(strategy, plan, graph, split, cfg)
    Y = np.array(Y, dtype=np.float64)
    base = run(Y)
    nodes = split.train_idx
    leak = np.empty(nodes.shape[0])
    for j, v in enumerate(nodes):
        saved = Y[v].copy()
        Y[v] = 0.0
        leak[j] = _row_distance(run(Y)[v], base[v], cfg.metric)
        Y[v] = saved
    name = strategy if isinstance(strategy, str) else getattr(strategy, "__name__", "custom")
    return LeakageReport(name, plan.describe(), cfg.tol, nodes, leak)


@dataclass(frozen=True)
class EquivalenceReport:
    max_abs_diff: float
    index: tuple[int, ...] | None
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_abs_diff <= self.tol


def equivalence_check(a, b, tol: float) -> EquivalenceReport:
    a = a.values if isinstance(a, PropagatedTensor) else np.asarray(a)
    b = b.values if isinstance(b, PropagatedTensor) else np.asarray(b)
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return EquivalenceReport(0.0, None, tol)
    diff = np.abs(a - b)
    flat = int(np.argmax(diff))
    idx = tuple(int(i) for i in np.unravel_index(flat, diff.shape))
    return EquivalenceReport(float(diff.flat[flat]), idx, tol)
