"""Detection-efficiency thresholds for Bell tests on n copies of the
maximally entangled two-qubit state."""

from mcbell.correlations import (
    BlochVector,
    MeasurementFamily,
    MultiCopyDistribution,
    SingleCopyDistribution,
    chsh_optimal_single_copy,
    marginals,
    single_copy_from_bloch,
    tensor_power,
)
from mcbell.efficiency import (
    CollinsGisinPoint,
    DeflatedPoint,
    EfficiencyModel,
    Policy,
    deflate,
    from_collins_gisin,
    to_collins_gisin,
)
from mcbell.local import (
    BellFunctional,
    DeterministicStrategy,
    best_response_value,
    evaluate,
    local_bound_exact,
    local_bound_heuristic,
    oracle_max_overlap,
    strategy_point,
)
from mcbell.thresholds import (
    ThresholdReport,
    correlation_thresholds,
    eta_asym,
    eta_sym,
    profile,
)

__version__ = "0.1.0"

__all__ = [
    "BellFunctional",
    "BlochVector",
    "CollinsGisinPoint",
    "DeflatedPoint",
    "DeterministicStrategy",
    "EfficiencyModel",
    "MeasurementFamily",
    "MultiCopyDistribution",
    "Policy",
    "SingleCopyDistribution",
    "ThresholdReport",
    "best_response_value",
    "chsh_optimal_single_copy",
    "correlation_thresholds",
    "deflate",
    "eta_asym",
    "eta_sym",
    "evaluate",
    "from_collins_gisin",
    "local_bound_exact",
    "local_bound_heuristic",
    "marginals",
    "oracle_max_overlap",
    "profile",
    "single_copy_from_bloch",
    "strategy_point",
    "tensor_power",
    "to_collins_gisin",
]
