"""Pre-computation sweeps over (strategy, K, M) and plot-data emission."""

from __future__ import annotations

import csv
import time
import tracemalloc
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import MemoryGuardError
from .labelprop import APS, ECHOLESS, REMOVE_DIAG, precompute
from .propagation import F64_BYTES, HOP_AVERAGED, estimate_dense_bytes, hop_plans

OK = "ok"
OOM_GUARD = "oom-guard"


@dataclass
class BenchRecord:
    strategy: str
    K: int
    M: int
    N: int
    E: int
    wall_time_seconds: float
    peak_estimated_bytes: int
    status: str
    peak_traced_bytes: int | None = None


CSV_FIELDS = [f.name for f in fields(BenchRecord)]
TIMING_FIELDS = ("wall_time_seconds", "peak_traced_bytes")


def estimate_peak_bytes(strategy: str, graph, C: int, K: int, M: int, scheme: str = APS) -> int:
    """Analytic peak for one sweep cell.

    Sparse strategies hold the K outputs, one payload per node type in
    flight, and (for Echoless) one tensor per partition before the merge.
    RemoveDiag beyond two hops adds the dense N x N operator.
    """
    N = graph.num_targets
    width = C + 1 if strategy == ECHOLESS else C
    payload = F64_BYTES * width
    held = K * N + 2 * graph.num_nodes
    if strategy == ECHOLESS:
        held += (M + 1 if scheme == APS else M) * N
    total = payload * held
    if strategy == REMOVE_DIAG and K > 2:
        total += estimate_dense_bytes(N).nbytes
    return total


def run_cell(strategy, K, M, graph, Y, split, mem_cap, kind=HOP_AVERAGED, scheme=APS,
             repeats=1, seed=0, trace_memory=False) -> BenchRecord:
    plans = hop_plans(K, kind)
    C = Y.shape[1]
    best = float("inf")
    status = OK
    traced = None
    for _ in range(max(1, repeats)):
        if trace_memory:
            tracemalloc.start()
        t0 = time.perf_counter()
        try:
            precompute(strategy, plans, graph, Y, split, M=M, seed=seed, scheme=scheme, mem_cap=mem_cap)
        except MemoryGuardError:
            status = OOM_GUARD
        finally:
            elapsed = time.perf_counter() - t0
            if trace_memory:
                traced = max(traced or 0, tracemalloc.get_traced_memory()[1])
                tracemalloc.stop()
        best = min(best, elapsed)
        if status == OOM_GUARD:
            break
    return BenchRecord(
        strategy, K, M, graph.num_targets, graph.num_edges, best,
        estimate_peak_bytes(strategy, graph, C, K, M, scheme), status, traced,
    )


def bench_sweep(graph, Y, split, strategies=(), Ks=(), Ms=(), mem_cap=8 * 10**9, **kw) -> list[BenchRecord]:
    """One record per (strategy, K, M) cell, sorted by that key.

    Guarded out-of-memory cells are recorded with status ``oom-guard``
    rather than raised.
    """
    records = [
        run_cell(s, K, M, graph, np.asarray(Y, dtype=np.float64), split, mem_cap, **kw)
        for s in sorted(strategies) for K in sorted(Ks) for M in sorted(Ms)
    ]
    records.sort(key=lambda r: (r.strategy, r.K, r.M))
    return records


def write_csv(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: ("" if v is None else v) for k, v in asdict(r).items()})


def read_csv(path) -> list[BenchRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            traced = row.get("peak_traced_bytes") or None
            out.append(BenchRecord(
                row["strategy"], int(row["K"]), int(row["M"]), int(row["N"]), int(row["E"]),
                float(row["wall_time_seconds"]), int(row["peak_estimated_bytes"]), row["status"],
                int(traced) if traced else None,
            ))
    return out


def plot_data(records) -> dict:
    """Series behind time-vs-K, time-vs-M and memory-vs-K plots, keyed by strategy."""
    series: dict[str, dict] = {"time_vs_K": {}, "time_vs_M": {}, "memory_vs_K": {}}
    for r in records:
        point = {"K": r.K, "M": r.M, "status": r.status}
        series["time_vs_K"].setdefault(f"{r.strategy}/M={r.M}", []).append(
            {**point, "seconds": r.wall_time_seconds})
        series["time_vs_M"].setdefault(f"{r.strategy}/K={r.K}", []).append(
            {**point, "seconds": r.wall_time_seconds})
        series["memory_vs_K"].setdefault(f"{r.strategy}/M={r.M}", []).append(
            {**point, "bytes": r.peak_estimated_bytes})
    for group in series.values():
        for pts in group.values():
            pts.sort(key=lambda p: (p["K"], p["M"]))
    return series
