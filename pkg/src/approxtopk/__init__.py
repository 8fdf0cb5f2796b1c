"""Two-stage approximate top-k: bucketed top-K' selection, recall analysis and planning."""

from ._backend import BACKEND_NAME
from .core import (
    AlgoParams,
    BucketState,
    OpCounter,
    ParameterError,
    TopKResult,
    approx_top_k,
    exact_top_k,
    measure_recall,
    partition_index,
    select_top,
    stage1_partial_reduce,
    update_bucket,
)
from .dataset_io import VectorDataset, read_dataset, synth_distinct, write_dataset
from .mips import MipsRequest, exact_mips, mips_fused, mips_unfused
from .planner import InfeasibleError, PlanRequest, PlanResult, reduction_factor_grid, select_parameters
from .recall import (
    RecallEstimate,
    buckets_improved,
    buckets_original,
    exact_expected_recall,
    exact_expected_recall_uneven,
    mc_expected_recall,
    mc_expected_recall_adaptive,
    recall_bound_improved,
    recall_bound_original,
    recall_bound_quartic,
)
from .simulate import simulate

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "AlgoParams",
    "BucketState",
    "OpCounter",
    "ParameterError",
    "TopKResult",
    "approx_top_k",
    "exact_top_k",
    "measure_recall",
    "partition_index",
    "select_top",
    "stage1_partial_reduce",
    "update_bucket",
    "VectorDataset",
    "read_dataset",
    "synth_distinct",
    "write_dataset",
    "MipsRequest",
    "exact_mips",
    "mips_fused",
    "mips_unfused",
    "InfeasibleError",
    "PlanRequest",
    "PlanResult",
    "reduction_factor_grid",
    "select_parameters",
    "RecallEstimate",
    "buckets_improved",
    "buckets_original",
    "exact_expected_recall",
    "exact_expected_recall_uneven",
    "mc_expected_recall",
    "mc_expected_recall_adaptive",
    "recall_bound_improved",
    "recall_bound_original",
    "recall_bound_quartic",
    "simulate",
]
