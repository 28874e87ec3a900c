"""
Exact values of every estimated quantity, computed from the state itself.

These are the ground truth for the statistical tests and the sweep tables.
Correlations are in bits (log base 2).
"""

import itertools
import logging
from functools import reduce
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .ensembles import clifford_group_1q
from .estimators import GLOBAL, LOCAL, pair_kernel
from .qcore import (
    CapExceededError,
    Partition,
    QuantumState,
    apply_to_vector,
    make_state,
    partial_trace,
    partial_transpose,
    permutation_operator,
    realignment,
)
from .sampler import GLOBAL_CRO, LOCAL_CRO

logger = logging.getLogger(__name__)

GM = "gm"
MAX = "max"
ZERO_TOL = 1e-12
PURE_TOL = 1e-10
ROUTE_TOL = 1e-10
MAX_ENUMERATED_QUBITS = 3
MAX_PARTIES = 12

Operand = Union[QuantumState, np.ndarray]


class OracleError(ValueError):
    """Exact quantity undefined for this input"""


def _matrix(operand: Operand) -> np.ndarray:
    if isinstance(operand, QuantumState):
        return operand.density_matrix()
    return np.asarray(operand, dtype=complex)


def _default_partition(state: QuantumState, partition: Optional[Partition]) -> Partition:
    partition = partition or Partition.singletons(range(state.n_qubits))
    partition.check_within(state.n_qubits)
    return partition


def exact_purity(state: QuantumState, subset: Optional[Sequence[int]] = None) -> float:
    """tr(rho_subset^2); the whole system when ``subset`` is None"""
    n = state.n_qubits
    subset = list(range(n)) if subset is None else [int(q) for q in subset]
    if sorted(subset) == list(range(n)):
        return state.purity()
    return partial_trace(state, subset).purity()


def marginals(state: QuantumState, partition: Partition) -> List[np.ndarray]:
    return [partial_trace(state, g).density_matrix() for g in partition.groups]


def exact_Tk(state: QuantumState, partition: Partition) -> float:
    """tr(rho ⊗_i rho_i), rho restricted to the partition's qubits"""
    n = state.n_qubits
    partition.check_within(n)
    partition.require_parties()
    margs = marginals(state, partition)
    if state.is_pure and partition.covers(n):
        applied = apply_to_vector(state.data, n, zip(partition.groups, margs))
        return float(np.real(np.vdot(state.data, applied)))
    reduced = partial_trace(state, partition.qubits).density_matrix()
    return float(np.real(np.vdot(reduce(np.kron, margs), reduced)))


def _superfidelity(overlap: float, purity_a: float, purity_b: float, variant: str) -> float:
    if variant == GM:
        denominator = np.sqrt(purity_a * purity_b)
    elif variant == MAX:
        denominator = max(purity_a, purity_b)
    else:
        raise OracleError(f"Unknown fidelity variant {variant!r}; choose gm or max")
    if denominator <= 0:
        raise OracleError("Fidelity denominator vanishes")
    return float(overlap / denominator)


def exact_fidelity(rho: Operand, sigma: Operand, variant: str = GM) -> float:
    a = _matrix(rho)
    b = _matrix(sigma)
    if a.shape != b.shape:
        raise OracleError(f"Shapes differ: {a.shape} vs {b.shape}")
    overlap = float(np.real(np.vdot(b, a)))
    return _superfidelity(
        overlap, float(np.real(np.vdot(a, a))), float(np.real(np.vdot(b, b))), variant
    )


def exact_correlation(
    state: QuantumState, partition: Optional[Partition] = None, variant: str = GM
) -> float:
    """-log2 F(rho, ⊗_i rho_i)"""
    partition = _default_partition(state, partition)
    partition.require_parties()
    overlap = exact_Tk(state, partition)
    product_purity = float(np.prod([exact_purity(state, g) for g in partition.groups]))
    fidelity = _superfidelity(
        overlap, exact_purity(state, partition.qubits), product_purity, variant
    )
    if fidelity <= 0:
        raise OracleError(f"Fidelity {fidelity:.3e} is not positive")
    return float(-np.log2(fidelity))


def exact_genuine_correlation(
    state: QuantumState, partition: Optional[Partition] = None, variant: str = GM
) -> float:
    """Minimum correlation over every split of the parties into two nonempty sides"""
    partition = _default_partition(state, partition)
    k = partition.k
    if k < 2:
        raise OracleError("Genuine correlation needs at least two parties")
    if k > MAX_PARTIES:
        raise CapExceededError(f"{k} parties exceed the bipartition cap of {MAX_PARTIES}")

    best = np.inf
    for mask in range(2 ** (k - 1) - 1):
        side = [0] + [i for i in range(1, k) if mask >> (i - 1) & 1]
        rest = [i for i in range(k) if i not in side]
        split = Partition(
            (
                tuple(q for i in side for q in partition.groups[i]),
                tuple(q for i in rest for q in partition.groups[i]),
            )
        )
        best = min(best, exact_correlation(state, split, variant))
    return float(best)


def exact_hs_distance(state: QuantumState, partition: Optional[Partition] = None) -> float:
    """Squared Hilbert-Schmidt distance between rho and the product of its marginals"""
    partition = _default_partition(state, partition)
    reduced = partial_trace(state, partition.qubits).density_matrix()
    difference = reduced - reduce(np.kron, marginals(state, partition))
    return float(np.sum(np.abs(difference) ** 2))


def realigned_difference_norm(state: QuantumState, bipartition: Partition) -> float:
    """tr(R R^dagger) for R the realignment of rho_AB - rho_A ⊗ rho_B"""
    if bipartition.k != 2:
        raise OracleError(f"Realignment needs two parties, got {bipartition.k}")
    bipartition.check_within(state.n_qubits)
    reduced = partial_trace(state, bipartition.qubits).density_matrix()
    difference = reduced - reduce(np.kron, marginals(state, bipartition))
    realigned = realignment(difference, Partition.from_sizes(bipartition.sizes))
    return float(np.real(np.trace(realigned @ realigned.conj().T)))


def mes_fidelity_routes(state: QuantumState) -> Tuple[float, float]:
    """Overlap with |Psi+> computed directly and through tr(rho S^{T_B}) / d"""
    n = state.n_qubits
    if n % 2:
        raise OracleError(f"MES fidelity needs an even number of qubits, got {n}")
    rho = state.density_matrix()
    mes = make_state("mes", n).vector()
    direct = float(np.real(np.vdot(mes, rho @ mes)))
    d = 2 ** (n // 2)
    swap_tb = partial_transpose(permutation_operator((1, 0), d).matrix, range(n // 2, n))
    via_swap = float(np.real(np.einsum("ij,ji->", rho, swap_tb))) / d
    return direct, via_swap


def exact_mes_fidelity(state: QuantumState) -> float:
    direct, via_swap = mes_fidelity_routes(state)
    if abs(direct - via_swap) > ROUTE_TOL:
        raise OracleError(f"MES fidelity routes disagree: {direct} vs {via_swap}")
    return direct


def _nontrivial_subsets(n: int) -> List[Tuple[int, ...]]:
    return [s for r in range(1, n) for s in itertools.combinations(range(n), r)]


def _require_pure(state: QuantumState) -> None:
    if state.purity() < 1.0 - PURE_TOL:
        raise OracleError(f"Concurrence is defined for pure states, purity is {state.purity():.6f}")


def exact_concurrence(state: QuantumState) -> float:
    """2^(1-n/2) sqrt((2^n - 2) - sum of the nontrivial subsystem purities)"""
    _require_pure(state)
    n = state.n_qubits
    total = sum(exact_purity(state, s) for s in _nontrivial_subsets(n))
    return float(2 ** (1 - n / 2) * np.sqrt(max(0.0, (2**n - 2) - total)))


def exact_collision_moment(state: QuantumState) -> float:
    """E_U sum_s P(s|U)^2 over per-qubit 2-designs, 3^-n sum over all subsets A of tr rho_A^2"""
    n = state.n_qubits
    total = 1.0 + state.purity() + sum(exact_purity(state, s) for s in _nontrivial_subsets(n))
    return float(total / 3**n)


def _clifford_distributions(state: QuantumState) -> np.ndarray:
    """Outcome distribution for every per-qubit Clifford setting, shape (24^n, 2^n)"""
    n = state.n_qubits
    if n > MAX_ENUMERATED_QUBITS:
        raise CapExceededError(
            f"Enumerating 24^{n} settings is capped at {MAX_ENUMERATED_QUBITS} qubits"
        )
    cliffords = np.stack(clifford_group_1q())
    if state.is_pure:
        weights, vectors = np.array([1.0]), state.data[None, :]
    else:
        eigenvalues, eigenvectors = np.linalg.eigh(state.data)
        keep = eigenvalues > ZERO_TOL
        weights, vectors = eigenvalues[keep], eigenvectors[:, keep].T

    probs = np.zeros((len(cliffords) ** n, 2**n))
    for weight, vector in zip(weights, vectors):
        amplitudes = vector.reshape((2,) * n)
        for q in range(n):
            amplitudes = np.tensordot(cliffords, amplitudes, axes=([2], [2 * q]))
            amplitudes = np.moveaxis(amplitudes, [0, 1], [q, 2 * q + 1])
        probs += weight * np.abs(amplitudes.reshape(len(cliffords) ** n, 2**n)) ** 2
    return probs


def enumerate_collision_moment(
    state: QuantumState, fixed_outcome: Optional[int] = None
) -> float:
    """Exhaustive Clifford average of sum_s P(s|U)^2, or of P(s|U)^2 for one fixed s"""
    probs = _clifford_distributions(state)
    if fixed_outcome is None:
        return float(np.mean(np.sum(probs**2, axis=1)))
    if not 0 <= fixed_outcome < probs.shape[1]:
        raise OracleError(f"Outcome {fixed_outcome} out of range")
    return float(np.mean(probs[:, fixed_outcome] ** 2))


def brute_force_estimator_expectation(
    state: QuantumState, partition: Partition, protocol: str = LOCAL
) -> float:
    """Exact mean of the T_k estimator over every Clifford setting and every shot tuple"""
    mode = {LOCAL: LOCAL, LOCAL_CRO: LOCAL, GLOBAL: GLOBAL, GLOBAL_CRO: GLOBAL}.get(protocol)
    if mode is None:
        raise OracleError(f"Unknown protocol {protocol!r}")
    partition.check_within(state.n_qubits)
    if mode == GLOBAL and any(len(g) > 1 for g in partition.groups):
        raise OracleError("Only single-qubit parties have an enumerable party ensemble")

    probs = _clifford_distributions(state)
    n = state.n_qubits
    codes = np.arange(2**n)
    product = probs.copy()
    for group in partition.groups:
        product *= probs @ pair_kernel(codes, codes, group, n, mode)
    expectation = float(np.mean(product.sum(axis=1)))
    logger.debug(f"Enumerated {len(probs)} settings: E[T_k] = {expectation:.12f}")
    return expectation


class CriterionReport(NamedTuple):
    """Witness values; positive means the criterion detects entanglement"""

    ppt: float
    entropy: float
    p3ppt: float
    t2: float

    def flags(self, tol: float = 1e-10) -> Dict[str, bool]:
        return {name: value > tol for name, value in self._asdict().items()}


def criterion_report(
    state: QuantumState, bipartition: Optional[Partition] = None
) -> CriterionReport:
    n = state.n_qubits
    bipartition = bipartition or Partition.equal(n, 2)
    if bipartition.k != 2:
        raise OracleError(f"Criteria need two parties, got {bipartition.k}")
    bipartition.check_within(n)
    reduced = partial_trace(state, bipartition.qubits)
    rho = reduced.density_matrix()
    size_a = bipartition.sizes[0]
    m = reduced.n_qubits

    eigenvalues = np.linalg.eigvalsh(partial_transpose(rho, range(size_a, m)))
    ppt = -float(eigenvalues[0])
    if abs(ppt) <= ZERO_TOL:
        ppt = 0.0

    rho_a = partial_trace(reduced, range(size_a)).density_matrix()
    rho_b = partial_trace(reduced, range(size_a, m)).density_matrix()
    purity_ab = reduced.purity()
    purity_a = float(np.sum(np.abs(rho_a) ** 2))
    purity_b = float(np.sum(np.abs(rho_b) ** 2))
    overlap = float(np.real(np.vdot(np.kron(rho_a, rho_b), rho)))

    return CriterionReport(
        ppt=ppt,
        entropy=purity_ab - purity_a,
        p3ppt=purity_ab**2 - float(np.sum(eigenvalues**3)),
        t2=purity_ab + purity_a + purity_b - 2.0 * overlap - 1.0,
    )
