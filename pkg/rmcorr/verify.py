"""
Exact identity checks: twirls, Weingarten tables, permutation sums,
unbiasedness by enumeration and the oracle consistency relations.
"""

import logging
from typing import Callable, List, NamedTuple, Tuple

import numpy as np

from .ensembles import CLIFFORD_1Q, twirl, verify_perm_sums, weingarten_table, weingarten_twirl
from .oracle import (
    brute_force_estimator_expectation,
    enumerate_collision_moment,
    exact_collision_moment,
    exact_concurrence,
    exact_hs_distance,
    exact_purity,
    exact_Tk,
    mes_fidelity_routes,
    realigned_difference_norm,
)
from .qcore import (
    Partition,
    depolarize,
    make_state,
    random_mixed_state,
    random_pure_state,
    swap_operator,
)

logger = logging.getLogger(__name__)

EXACT_TOL = 1e-10
TWIRL_TOL = 1e-12


class CheckResult(NamedTuple):
    name: str
    passed: bool
    max_error: float
    detail: str


def _twirl_to_swap() -> Tuple[float, str]:
    x = np.diag([2.0, -1.0, -1.0, 2.0])
    error = np.max(np.abs(twirl(x, CLIFFORD_1Q, t=2).operator - swap_operator(2)))
    return float(error), "twirl of the two-copy X weight equals SWAP"


def _twirl_of_pure_pair() -> Tuple[float, str]:
    psi = random_pure_state(1, seed=7).vector()
    pair = np.kron(np.outer(psi, psi.conj()), np.outer(psi, psi.conj()))
    expected = (np.eye(4) + swap_operator(2)) / 6.0
    error = np.max(np.abs(twirl(pair, CLIFFORD_1Q, t=2).operator - expected))
    return float(error), "twirl of a pure product pair equals (I + S)/6"


def _weingarten() -> Tuple[float, str]:
    error = 0.0
    for d in (2, 3, 4):
        table = weingarten_table(2, d)
        c = table.coefficients
        error = max(error, float(np.max(np.abs(c - c.T))))
        error = max(error, float(np.max(np.abs(table.row_sums() - 1.0 / (d * (d + 1))))))
    x = np.random.default_rng(11).normal(size=(4, 4))
    exact = weingarten_twirl(x, 2, 2)
    error = max(error, float(np.max(np.abs(twirl(x, CLIFFORD_1Q, t=2).operator - exact))))
    return error, "Weingarten symmetry, row sums, and Clifford twirl equals Haar twirl"


def _perm_sums() -> Tuple[float, str]:
    reports = [verify_perm_sums(d) for d in (2, 3, 4, 5)]
    failed = [r.d for r in reports if not r.passed]
    detail = "closed forms hold for d=2..5" if not failed else f"mismatch at d={failed}"
    return max(r.max_error for r in reports), detail


def _unbiasedness() -> Tuple[float, str]:
    cases = [
        (make_state("bell", 2), Partition.singletons(range(2))),
        (make_state("ghz", 3), Partition.singletons(range(3))),
        (depolarize(make_state("bell", 2), 0.5), Partition.singletons(range(2))),
    ]
    error = 0.0
    for state, partition in cases:
        enumerated = brute_force_estimator_expectation(state, partition)
        error = max(error, abs(enumerated - exact_Tk(state, partition)))
    return error, "exact estimator mean equals T_k for Bell, GHZ3, depolarized Bell"


def _concurrence_chain() -> Tuple[float, str]:
    error = 0.0
    for state in (make_state("bell", 2), make_state("ghz", 3), random_pure_state(3, seed=5)):
        n = state.n_qubits
        moment = exact_collision_moment(state)
        error = max(error, abs(enumerate_collision_moment(state) - moment))
        fixed = 2**n * enumerate_collision_moment(state, fixed_outcome=0)
        error = max(error, abs(fixed - moment))
        via_moment = 2.0 * np.sqrt(max(0.0, 1.0 - 1.5**n * moment))
        error = max(error, abs(via_moment - exact_concurrence(state)))
    return float(error), "collision moment by enumeration, fixed outcome and subset purities agree"


def _mes_routes() -> Tuple[float, str]:
    error = 0.0
    for n, seed in ((2, 1), (4, 2)):
        direct, via_swap = mes_fidelity_routes(random_mixed_state(n, seed=seed))
        error = max(error, abs(direct - via_swap))
    return error, "MES overlap directly and through the partially transposed SWAP"


def _hs_identity() -> Tuple[float, str]:
    state = random_mixed_state(3, seed=3)
    partition = Partition.singletons(range(3))
    product = float(np.prod([exact_purity(state, g) for g in partition.groups]))
    identity = state.purity() + product - 2.0 * exact_Tk(state, partition)
    return abs(exact_hs_distance(state, partition) - identity), "HS distance from purities and T_k"


def _realignment_lemma() -> Tuple[float, str]:
    error = 0.0
    bipartition = Partition.singletons(range(2))
    for seed in range(3):
        state = random_mixed_state(2, seed=seed)
        expected = (
            state.purity()
            + exact_purity(state, [0]) * exact_purity(state, [1])
            - 2.0 * exact_Tk(state, bipartition)
        )
        error = max(error, abs(realigned_difference_norm(state, bipartition) - expected))
    return error, "realigned difference norm from purities and T_2"


CHECKS: List[Tuple[str, Callable[[], Tuple[float, str]], float]] = [
    ("twirl_swap", _twirl_to_swap, TWIRL_TOL),
    ("twirl_pure_pair", _twirl_of_pure_pair, TWIRL_TOL),
    ("weingarten", _weingarten, EXACT_TOL),
    ("permutation_sums", _perm_sums, 1e-8),
    ("unbiasedness", _unbiasedness, EXACT_TOL),
    ("concurrence_chain", _concurrence_chain, EXACT_TOL),
    ("mes_routes", _mes_routes, TWIRL_TOL),
    ("hs_identity", _hs_identity, EXACT_TOL),
    ("realignment_lemma", _realignment_lemma, EXACT_TOL),
]


def run_identity_suite() -> List[CheckResult]:
    results = []
    for name, check, tol in CHECKS:
        try:
            error, detail = check()
            result = CheckResult(name, error <= tol, error, detail)
        except Exception as e:
            logger.exception(f"Check {name} raised")
            result = CheckResult(name, False, float("nan"), f"raised {type(e).__name__}: {e}")
        status = "ok" if result.passed else "FAILED"
        level = logging.INFO if result.passed else logging.ERROR
        logger.log(level, f"{name}: {status} (max error {result.max_error:.2e})")
        results.append(result)
    return results
