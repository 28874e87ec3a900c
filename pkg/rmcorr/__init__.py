"""
rmcorr - randomized-measurement estimation of multipartite correlations

rmcorr simulates locally randomized measurements on multi-qubit states and
turns the recorded shots into unbiased estimates of correlation overlaps,
purities and the total correlation derived from them.

Features:
- Dense state simulation with partial traces, partial transposes and realignment
- Exact single-qubit Clifford enumeration, Haar sampling and twirling checks
- Local, global, maximally-entangled-fidelity and concurrence protocols
- U-statistic estimators with standard errors, and exact oracles for every quantity
- Sweep runner for variance scaling and entanglement-criterion comparisons
"""

__version__ = "0.1.0"
__license__ = "MIT"

from .ensembles import LocalUnitarySetting, clifford_1q, sample_setting, twirl, verify_perm_sums
from .estimators import (
    EstimateWithError,
    estimate_concurrence,
    estimate_correlation,
    estimate_mes_fidelity,
    estimate_purity,
    estimate_t2_witness,
    estimate_Tk,
    x_weight,
    x_weight_local,
)
from .experiments import SweepConfig, regress, run_sweep
from .oracle import (
    CriterionReport,
    brute_force_estimator_expectation,
    criterion_report,
    exact_concurrence,
    exact_correlation,
    exact_fidelity,
    exact_genuine_correlation,
    exact_mes_fidelity,
    exact_Tk,
)
from .qcore import Partition, QuantumState, make_state, partial_trace
from .sampler import (
    MeasurementDataset,
    run_concurrence_protocol,
    run_global_protocol,
    run_local_protocol,
    run_mes_fidelity_protocol,
)

__all__ = [
    "CriterionReport",
    "EstimateWithError",
    "LocalUnitarySetting",
    "MeasurementDataset",
    "Partition",
    "QuantumState",
    "SweepConfig",
    "brute_force_estimator_expectation",
    "clifford_1q",
    "criterion_report",
    "estimate_Tk",
    "estimate_concurrence",
    "estimate_correlation",
    "estimate_mes_fidelity",
    "estimate_purity",
    "estimate_t2_witness",
    "exact_Tk",
    "exact_concurrence",
    "exact_correlation",
    "exact_fidelity",
    "exact_genuine_correlation",
    "exact_mes_fidelity",
    "make_state",
    "partial_trace",
    "regress",
    "run_concurrence_protocol",
    "run_global_protocol",
    "run_local_protocol",
    "run_mes_fidelity_protocol",
    "run_sweep",
    "sample_setting",
    "twirl",
    "verify_perm_sums",
    "x_weight",
    "x_weight_local",
    "__version__",
]
