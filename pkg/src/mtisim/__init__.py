"""Multi-task NLP inference modeling on a heterogeneous SRAM + RRAM scratchpad.

The package splits an adapter-augmented, layer-shared transformer into
backbone and task-specific parameters, compresses the backbone (magnitude
pruning, bitmask encoding, fixed-point quantization), sizes the on-chip
memories and estimates area, energy and latency for task-switching
workloads.
"""

__version__ = "0.1.0"

from mtisim.model import (  # noqa: E402
    ModelSpec,
    TaskSpec,
    PartitionedCounts,
    count_partition,
    param_overhead,
    worst_case_task,
    vase_select,
)
from mtisim.compression import (  # noqa: E402
    FixedPointFormat,
    FP32,
    Q3_13,
    Q3_5,
    SparseTensor,
    SparsityPoint,
    bitmask_decode,
    bitmask_encode,
    cumulative_sparsity,
    find_csp_1d,
    find_csp_2d,
    inject_fault,
    prune_magnitude,
    quantize,
)

__all__ = [
    "ModelSpec",
    "TaskSpec",
    "PartitionedCounts",
    "count_partition",
    "param_overhead",
    "worst_case_task",
    "vase_select",
    "FixedPointFormat",
    "FP32",
    "Q3_13",
    "Q3_5",
    "SparseTensor",
    "SparsityPoint",
    "bitmask_decode",
    "bitmask_encode",
    "cumulative_sparsity",
    "find_csp_1d",
    "find_csp_2d",
    "inject_fault",
    "prune_magnitude",
    "quantize",
]
