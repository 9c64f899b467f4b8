from mtisim.compression.bitmask import (
    BitmaskDeficitError,
    SparseTensor,
    bitmask_decode,
    bitmask_encode,
    from_bytes,
    load_sparse,
    save_sparse,
    to_bytes,
)
from mtisim.compression.faults import inject_fault
from mtisim.compression.fixedpoint import (
    FP32,
    PAPER_FORMATS,
    Q3_5,
    Q3_13,
    FixedPointFormat,
    parse_format,
    quantize,
)
from mtisim.compression.pruning import (
    SparsityPoint,
    axis_optimum,
    cumulative_sparsity,
    find_csp_1d,
    find_csp_2d,
    prune_magnitude,
    pruned_count,
)

__all__ = [
    "BitmaskDeficitError",
    "SparseTensor",
    "bitmask_decode",
    "bitmask_encode",
    "from_bytes",
    "load_sparse",
    "save_sparse",
    "to_bytes",
    "inject_fault",
    "FP32",
    "PAPER_FORMATS",
    "Q3_5",
    "Q3_13",
    "FixedPointFormat",
    "parse_format",
    "quantize",
    "SparsityPoint",
    "axis_optimum",
    "cumulative_sparsity",
    "find_csp_1d",
    "find_csp_2d",
    "prune_magnitude",
    "pruned_count",
]
