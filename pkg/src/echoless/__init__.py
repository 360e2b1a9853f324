"""Echo-free label pre-computation for heterogeneous graphs."""

from .data import LabelMatrix, SplitAssignment, SyntheticSpec, gen_synthetic
from .graph import HeteroGraph, Relation, load_graph, normalize, write_graph
from .labelprop import (
    Partitioning,
    echoless_lp,
    last_residual_lp,
    make_partitioning,
    merge,
    pfep,
    plain_lp,
    post_adjust,
    precompute,
    remove_diag_lp,
)
from .propagation import (
    MessagePassingPlan,
    PropagatedTensor,
    effective_matrix,
    estimate_dense_bytes,
    hop_plans,
    propagate,
)
from .tensor_io import read_elpt, write_elpt

__version__ = "0.1.0"
