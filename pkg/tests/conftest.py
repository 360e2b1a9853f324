import numpy as np
import pytest

from echoless.data import LabelMatrix, SplitAssignment, SyntheticSpec, gen_synthetic
from echoless.graph import HeteroGraph, Relation


def homogeneous(n, edges, undirected=True, name="e", t="n"):
    src = [u for u, v in edges]
    dst = [v for u, v in edges]
    if undirected:
        src, dst = src + dst, dst + src
    rel = Relation.from_edges(name, t, t, n, n, src, dst)
    return HeteroGraph({t: n}, {name: rel}, t)


@pytest.fixture
def path3():
    """Path 0-1-2 (the 1-2-3 path, zero-based)."""
    return homogeneous(3, [(0, 1), (1, 2)])


@pytest.fixture
def triangle():
    return homogeneous(3, [(0, 1), (1, 2), (2, 0)])


def split_of(codes):
    return SplitAssignment(np.asarray(codes, dtype=np.int8))


def random_case(seed, n_max=200, classes=None, train_frac=None):
    """Small random heterogeneous graph with labels and split."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, n_max + 1))
    spec = SyntheticSpec(
        node_types={"paper": n, "author": int(rng.integers(3, n)), "venue": int(rng.integers(2, 6))},
        relations=[
            ("writes", "author", "paper", float(rng.uniform(1, 3))),
            ("published_in", "paper", "venue", 1.0),
            ("cites", "paper", "paper", float(rng.uniform(0.5, 3))),
        ],
        num_classes=classes or int(rng.integers(2, 6)),
        train_frac=train_frac or float(rng.uniform(0.3, 0.7)),
        valid_frac=0.1,
    )
    g, labels, split = gen_synthetic(spec, int(seed))
    Y = LabelMatrix.from_labels(labels, split, spec.num_classes).Y
    return g, labels, split, Y


ACCEPTANCE_LINES: list[str] = []


def report_criterion(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
