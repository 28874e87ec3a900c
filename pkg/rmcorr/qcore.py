"""
Dense multi-qubit linear algebra: states, partitions, partial trace and transpose,
realignment and permutation operators.

Qubit 0 is the most significant bit of a basis index; every module in the
package shares this ordering.
"""

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property, reduce
from typing import TYPE_CHECKING, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import get_settings

if TYPE_CHECKING:
    from .ensembles import LocalUnitarySetting

logger = logging.getLogger(__name__)

NORM_TOL = 1e-10
EIGEN_TOL = 1e-8
STRUCTURAL_TOL = 1e-12

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]
Factor = Tuple[Tuple[int, ...], np.ndarray]

STATE_KINDS = ("zero", "plus", "ghz", "w", "bell", "mes", "product_random", "pure_random")


class StateError(ValueError):
    """Invalid state, partition or operator shape"""


class CapExceededError(StateError):
    """Requested object is too large to materialize densely"""


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Turn an int, SeedSequence or Generator into a Generator"""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure amplitude vector (shape ``(2**n,)``) or density matrix (``(2**n, 2**n)``)"""

    n_qubits: int
    data: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        settings = get_settings()
        n = int(self.n_qubits)
        if n < 1:
            raise StateError(f"A state needs at least one qubit, got n={n}")
        data = np.array(self.data, dtype=complex)
        dim = 2**n

        if data.ndim == 1:
            if n > settings.max_pure_qubits:
                raise CapExceededError(
                    f"Pure states are capped at {settings.max_pure_qubits} qubits, got {n}"
                )
            if data.shape != (dim,):
                raise StateError(f"Amplitude vector must have length {dim}, got {data.shape}")
            norm = float(np.linalg.norm(data))
            if abs(norm - 1.0) > NORM_TOL:
                raise StateError(f"Amplitude vector is not normalized (norm={norm:.12f})")
        elif data.ndim == 2:
            if n > settings.max_density_qubits:
                raise CapExceededError(
                    f"Density matrices are capped at {settings.max_density_qubits} qubits, got {n}"
                )
            if data.shape != (dim, dim):
                raise StateError(f"Density matrix must be {dim}x{dim}, got {data.shape}")
            if np.max(np.abs(data - data.conj().T)) > NORM_TOL:
                raise StateError("Density matrix is not Hermitian")
            trace = np.trace(data)
            if abs(trace - 1.0) > NORM_TOL:
                raise StateError(f"Density matrix trace is {trace.real:.12f}, expected 1")
            lowest = float(np.linalg.eigvalsh(data)[0])
            if lowest < -EIGEN_TOL:
                raise StateError(f"Density matrix has negative eigenvalue {lowest:.3e}")
        else:
            raise StateError(f"State data must be 1-D or 2-D, got {data.ndim}-D")

        data.setflags(write=False)
        object.__setattr__(self, "n_qubits", n)
        object.__setattr__(self, "data", data)

    @classmethod
    def trusted(cls, n_qubits: int, data: np.ndarray, label: str = "") -> "QuantumState":
        """Wrap data produced by a valid-state-preserving map, skipping validation"""
        state = object.__new__(cls)
        array = np.ascontiguousarray(data, dtype=complex)
        array.setflags(write=False)
        object.__setattr__(state, "n_qubits", int(n_qubits))
        object.__setattr__(state, "data", array)
        object.__setattr__(state, "label", label)
        return state

    @property
    def dim(self) -> int:
        return int(2**self.n_qubits)

    @property
    def is_pure(self) -> bool:
        """True when stored as an amplitude vector"""
        return self.data.ndim == 1

    def vector(self) -> np.ndarray:
        if not self.is_pure:
            raise StateError("State is stored as a density matrix")
        return self.data

    def density_matrix(self) -> np.ndarray:
        if self.is_pure:
            if self.n_qubits > get_settings().max_density_qubits:
                raise CapExceededError(
                    f"Cannot materialize a {self.n_qubits}-qubit density matrix"
                )
            return np.outer(self.data, self.data.conj())
        return self.data

    def purity(self) -> float:
        """tr(rho^2)"""
        if self.is_pure:
            return 1.0
        return float(np.sum(np.abs(self.data) ** 2))

    def with_label(self, label: str) -> "QuantumState":
        return QuantumState.trusted(self.n_qubits, self.data, label)


@dataclass(frozen=True)
class Partition:
    """Ordered disjoint groups of qubit indices g_1..g_k"""

    groups: Tuple[Tuple[int, ...], ...]

    def __post_init__(self) -> None:
        groups = tuple(tuple(int(q) for q in group) for group in self.groups)
        if not groups:
            raise StateError("Partition needs at least one group")
        seen: set = set()
        for group in groups:
            if not group:
                raise StateError("Partition groups must be nonempty")
            for q in group:
                if q < 0:
                    raise StateError(f"Negative qubit index {q}")
                if q in seen:
                    raise StateError(f"Qubit {q} appears in more than one group")
                seen.add(q)
        object.__setattr__(self, "groups", groups)

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(2 ** len(g) for g in self.groups)

    @property
    def qubits(self) -> Tuple[int, ...]:
        """All qubits in group order"""
        return tuple(q for g in self.groups for q in g)

    def check_within(self, n_qubits: int) -> None:
        bad = [q for q in self.qubits if q >= n_qubits]
        if bad:
            raise StateError(f"Partition qubits {bad} out of range for {n_qubits} qubits")

    def require_parties(self, minimum: int = 2) -> None:
        if self.k < minimum:
            raise StateError(f"Need at least {minimum} parties, partition has {self.k}")

    def covers(self, n_qubits: int) -> bool:
        return sorted(self.qubits) == list(range(n_qubits))

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], offset: int = 0) -> "Partition":
        groups = []
        start = offset
        for size in sizes:
            groups.append(tuple(range(start, start + int(size))))
            start += int(size)
        return cls(tuple(groups))

    @classmethod
    def equal(cls, n_qubits: int, k: int) -> "Partition":
        """Split n qubits into k consecutive groups whose sizes differ by at most one"""
        if k < 1 or k > n_qubits:
            raise StateError(f"Cannot split {n_qubits} qubits into {k} groups")
        base, extra = divmod(n_qubits, k)
        return cls.from_sizes([base + (1 if i < extra else 0) for i in range(k)])

    @classmethod
    def singletons(cls, qubits: Iterable[int]) -> "Partition":
        return cls(tuple((q,) for q in qubits))

    @classmethod
    def parse(cls, text: str) -> "Partition":
        """Parse ``"1|1|1"`` (group sizes) or ``"q:0,2|1"`` (explicit qubit indices)"""
        text = text.strip()
        try:
            if text.startswith("q:"):
                return cls(
                    tuple(
                        tuple(int(q) for q in chunk.split(",") if q.strip())
                        for chunk in text[2:].split("|")
                    )
                )
            return cls.from_sizes([int(chunk) for chunk in text.split("|")])
        except ValueError as e:
            raise StateError(f"Cannot parse partition {text!r}: {e}") from e

    def __str__(self) -> str:
        return "q:" + "|".join(",".join(str(q) for q in g) for g in self.groups)


@dataclass(frozen=True)
class PermutationOperator:
    """W_pi on (C^d)^{otimes t}: moves the factor in copy i to copy pi[i]"""

    permutation: Tuple[int, ...]
    d: int
    t: int

    @cached_property
    def matrix(self) -> np.ndarray:
        dim = self.d**self.t
        digits = np.indices((self.d,) * self.t).reshape(self.t, dim)
        inverse = np.argsort(self.permutation)
        rows = np.ravel_multi_index(tuple(digits[inverse]), (self.d,) * self.t)
        matrix = np.zeros((dim, dim))
        matrix[rows, np.arange(dim)] = 1.0
        matrix.setflags(write=False)
        return matrix


def compose(pi: Sequence[int], sigma: Sequence[int]) -> Tuple[int, ...]:
    """(pi sigma)(i) = pi(sigma(i))"""
    return tuple(pi[s] for s in sigma)


def permutations(t: int) -> List[Tuple[int, ...]]:
    return list(itertools.permutations(range(t)))


def permutation_operator(
    pi: Sequence[int], d: int, t: Optional[int] = None
) -> PermutationOperator:
    """Permutation operator for ``pi`` acting on t copies of C^d"""
    t = len(pi) if t is None else t
    if sorted(pi) != list(range(t)):
        raise StateError(f"{tuple(pi)} is not a permutation of {t} copies")
    if d < 1:
        raise StateError(f"Local dimension must be positive, got {d}")
    cap = get_settings().permutation_cap
    if t * d**t > cap:
        raise CapExceededError(f"t*d^t = {t * d**t} exceeds the permutation cap {cap}")
    return PermutationOperator(tuple(int(p) for p in pi), int(d), int(t))


def swap_operator(d: int) -> np.ndarray:
    return permutation_operator((1, 0), d).matrix


def random_pure_state(n: int, seed: SeedLike = 0) -> QuantumState:
    """Haar-random pure state from a normalized complex Gaussian vector"""
    rng = make_rng(seed)
    amplitudes = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return QuantumState(n, amplitudes / np.linalg.norm(amplitudes), f"pure_random{n}")


def random_mixed_state(n: int, seed: SeedLike = 0, n_env: Optional[int] = None) -> QuantumState:
    """Reduced state of a Haar-random pure state on n + n_env qubits"""
    n_env = n if n_env is None else n_env
    if n_env == 0:
        return random_pure_state(n, seed)
    purified = random_pure_state(n + n_env, seed)
    return partial_trace(purified, list(range(n))).with_label(f"mixed_random{n}")


def make_state(kind: str, n: int, seed: SeedLike = 0) -> QuantumState:
    """Named pure state of n qubits"""
    if n < 1:
        raise StateError(f"n must be at least 1, got {n}")
    cap = get_settings().max_pure_qubits
    if n > cap:
        raise CapExceededError(f"Pure states are capped at {cap} qubits, got {n}")
    dim = 2**n
    vector = np.zeros(dim, dtype=complex)
    if kind == "zero":
        vector[0] = 1.0
    elif kind == "plus":
        vector[:] = 1.0 / np.sqrt(dim)
    elif kind == "ghz" or kind == "bell":
        if kind == "bell" and n != 2:
            raise StateError(f"bell is a two-qubit state, got n={n}")
        vector[0] = vector[-1] = 1.0 / np.sqrt(2)
    elif kind == "w":
        for q in range(n):
            vector[1 << (n - 1 - q)] = 1.0 / np.sqrt(n)
    elif kind == "mes":
        if n % 2:
            raise StateError(f"mes needs an even number of qubits, got {n}")
        half = 2 ** (n // 2)
        for i in range(half):
            vector[i * half + i] = 1.0 / np.sqrt(half)
    elif kind == "product_random":
        rng = make_rng(seed)
        factors = []
        for _ in range(n):
            qubit = rng.normal(size=2) + 1j * rng.normal(size=2)
            factors.append(qubit / np.linalg.norm(qubit))
        vector = reduce(np.kron, factors)
    elif kind == "pure_random":
        return random_pure_state(n, seed)
    else:
        raise StateError(f"Unsupported state kind {kind!r}; choose from {', '.join(STATE_KINDS)}")
    return QuantumState(n, vector, f"{kind}{n}")


def depolarize(state: QuantumState, p: float) -> QuantumState:
    """(1-p) rho + p I / 2^n"""
    if not 0.0 <= p <= 1.0:
        raise StateError(f"Depolarizing strength must lie in [0, 1], got {p}")
    rho = (1.0 - p) * state.density_matrix() + p * np.eye(state.dim) / state.dim
    label = f"{state.label}@p={p:g}" if state.label else ""
    return QuantumState.trusted(state.n_qubits, rho, label)


def tensor(*states: QuantumState) -> QuantumState:
    """Tensor product, first argument on the most significant qubits"""
    if not states:
        raise StateError("tensor() needs at least one state")
    n = sum(s.n_qubits for s in states)
    label = "*".join(s.label for s in states)
    if all(s.is_pure for s in states):
        return QuantumState.trusted(n, reduce(np.kron, [s.data for s in states]), label)
    return QuantumState.trusted(n, reduce(np.kron, [s.density_matrix() for s in states]), label)


def bell_product_mixture(p: float) -> QuantumState:
    """(1-p)|Psi+><Psi+| + p|0+><0+|"""
    if not 0.0 <= p <= 1.0:
        raise StateError(f"Mixing weight must lie in [0, 1], got {p}")
    bell = make_state("bell", 2).density_matrix()
    zero_plus = np.kron([1.0, 0.0], [1.0, 1.0]) / np.sqrt(2)
    rho = (1.0 - p) * bell + p * np.outer(zero_plus, zero_plus)
    return QuantumState.trusted(2, rho, f"bell_mix@p={p:g}")


_PAULIS = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def bell_diagonal_state(rx: float, ry: float, rz: float) -> QuantumState:
    """(I + rx XX + ry YY + rz ZZ) / 4"""
    rho = np.eye(4, dtype=complex)
    for r, pauli in zip((rx, ry, rz), _PAULIS):
        rho = rho + r * np.kron(pauli, pauli)
    return QuantumState(2, rho / 4.0, f"bell_diagonal({rx:g},{ry:g},{rz:g})")


def _check_qubits(qubits: Sequence[int], n: int, what: str) -> List[int]:
    qubits = [int(q) for q in qubits]
    if not qubits:
        raise StateError(f"{what} must be nonempty")
    if len(set(qubits)) != len(qubits):
        raise StateError(f"{what} has repeated qubits: {qubits}")
    bad = [q for q in qubits if not 0 <= q < n]
    if bad:
        raise StateError(f"{what} has qubits {bad} out of range for {n} qubits")
    return qubits


def partial_trace(state: QuantumState, keep: Sequence[int]) -> QuantumState:
    """Reduced density matrix on ``keep``; the kept qubits appear in the given order"""
    n = state.n_qubits
    keep = _check_qubits(keep, n, "keep")
    if len(keep) > get_settings().max_density_qubits:
        raise CapExceededError(f"Reduced state on {len(keep)} qubits is too large")
    rest = [q for q in range(n) if q not in keep]
    dk, dr = 2 ** len(keep), 2 ** len(rest)

    if state.is_pure:
        psi = state.data.reshape((2,) * n).transpose(keep + rest).reshape(dk, dr)
        rho = psi @ psi.conj().T
    else:
        order = keep + rest + [n + q for q in keep] + [n + q for q in rest]
        blocks = state.data.reshape((2,) * (2 * n)).transpose(order).reshape(dk, dr, dk, dr)
        rho = np.einsum("ajbj->ab", blocks)
    return QuantumState.trusted(len(keep), rho, state.label)


def _contract(tensor_: np.ndarray, matrix: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    m = len(axes)
    op = np.asarray(matrix).reshape((2,) * (2 * m))
    out = np.tensordot(op, tensor_, axes=(list(range(m, 2 * m)), list(axes)))
    return np.moveaxis(out, list(range(m)), list(axes))


def apply_to_vector(vector: np.ndarray, n: int, factors: Iterable[Factor]) -> np.ndarray:
    """Apply local operators (not necessarily unitary) to an amplitude vector"""
    psi = np.asarray(vector).reshape((2,) * n)
    for qubits, matrix in factors:
        psi = _contract(psi, matrix, qubits)
    return psi.reshape(-1)


def conjugate_density(rho: np.ndarray, n: int, factors: Iterable[Factor]) -> np.ndarray:
    """(⊗V) rho (⊗V)^dagger for local factors V"""
    blocks = np.asarray(rho).reshape((2,) * (2 * n))
    for qubits, matrix in factors:
        blocks = _contract(blocks, matrix, qubits)
        blocks = _contract(blocks, np.conj(matrix), [n + q for q in qubits])
    return blocks.reshape(2**n, 2**n)


def apply_product_unitary(
    state: QuantumState,
    setting: "LocalUnitarySetting",
    conjugate_mask: Optional[Sequence[bool]] = None,
) -> QuantumState:
    """Evolve by ⊗_l V_l with V_l = U_l, or its entrywise conjugate where the mask is set"""
    n = state.n_qubits
    if setting.n_qubits != n:
        raise StateError(f"Setting acts on {setting.n_qubits} qubits, state has {n}")
    mask = tuple(bool(b) for b in conjugate_mask) if conjugate_mask is not None else (False,) * n
    if len(mask) != n:
        raise StateError(f"Conjugate mask has length {len(mask)}, expected {n}")

    factors = []
    for qubits, matrix in setting.factors():
        flags = {mask[q] for q in qubits}
        if len(flags) > 1:
            raise StateError(f"Conjugate mask splits the multi-qubit factor on {qubits}")
        factors.append((qubits, np.conj(matrix) if flags.pop() else matrix))

    if state.is_pure:
        data = apply_to_vector(state.data, n, factors)
    else:
        data = conjugate_density(state.data, n, factors)
    return QuantumState.trusted(n, data, state.label)


def outcome_distribution(state: QuantumState) -> np.ndarray:
    """Computational-basis probabilities, indexed with qubit 0 as the most significant bit"""
    if state.is_pure:
        probs = np.abs(state.data) ** 2
    else:
        probs = np.clip(np.real(np.diag(state.data)), 0.0, None)
    return probs / probs.sum()


def sample_outcomes(probs: np.ndarray, n_shots: int, seed: SeedLike = 0) -> np.ndarray:
    """Draw i.i.d. outcomes by inverting the cumulative distribution"""
    if n_shots < 1:
        raise StateError(f"n_shots must be positive, got {n_shots}")
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or np.any(probs < -NORM_TOL) or abs(probs.sum() - 1.0) > 1e-8:
        raise StateError("probs must be a probability vector")
    cdf = np.cumsum(np.clip(probs, 0.0, None))
    cdf /= cdf[-1]
    draws = make_rng(seed).random(n_shots)
    outcomes = np.searchsorted(cdf, draws, side="right")
    return np.minimum(outcomes, len(probs) - 1).astype(np.int64)


def to_bitstrings(outcomes: Iterable[int], n: int) -> List[str]:
    return [format(int(o), f"0{n}b") for o in outcomes]


def from_bitstrings(strings: Sequence[str], n: int) -> np.ndarray:
    for s in strings:
        if len(s) != n or set(s) - {"0", "1"}:
            raise StateError(f"Expected a {n}-bit 0/1 string, got {s!r}")
    return np.array([int(s, 2) for s in strings], dtype=np.int64)


def hamming_weight(values: np.ndarray) -> np.ndarray:
    """Vectorized popcount for nonnegative integers"""
    v = np.array(values, dtype=np.int64)
    count = np.zeros(v.shape, dtype=np.int64)
    while np.any(v):
        count += v & 1
        v >>= 1
    return count


def qubit_mask(qubits: Iterable[int], n: int) -> int:
    """Integer with the bits of ``qubits`` set"""
    mask = 0
    for q in qubits:
        mask |= 1 << (n - 1 - q)
    return mask


def _as_matrix(operator: Union[QuantumState, np.ndarray]) -> Tuple[np.ndarray, int]:
    if isinstance(operator, QuantumState):
        return operator.density_matrix(), operator.n_qubits
    matrix = np.asarray(operator)
    dim = matrix.shape[0]
    n = int(round(np.log2(dim))) if dim > 0 else -1
    if matrix.ndim != 2 or matrix.shape != (dim, dim) or n < 1 or 2**n != dim:
        raise StateError(f"Expected a square 2^n x 2^n matrix, got shape {matrix.shape}")
    return matrix, n


def permute_qubits(operator: Union[QuantumState, np.ndarray], order: Sequence[int]) -> np.ndarray:
    """Reorder the qubits of a matrix so that new qubit i is old qubit order[i]"""
    matrix, n = _as_matrix(operator)
    order = list(order)
    if sorted(order) != list(range(n)):
        raise StateError(f"{order} is not an ordering of {n} qubits")
    blocks = matrix.reshape((2,) * (2 * n)).transpose(order + [n + q for q in order])
    return blocks.reshape(2**n, 2**n)


def partial_transpose(
    operator: Union[QuantumState, np.ndarray], subsystem: Sequence[int]
) -> np.ndarray:
    """Transpose the indices of the qubits in ``subsystem``"""
    matrix, n = _as_matrix(operator)
    subsystem = _check_qubits(subsystem, n, "subsystem")
    axes = list(range(2 * n))
    for q in subsystem:
        axes[q], axes[n + q] = axes[n + q], axes[q]
    return matrix.reshape((2,) * (2 * n)).transpose(axes).reshape(2**n, 2**n)


def realignment(operator: Union[QuantumState, np.ndarray], split: Partition) -> np.ndarray:
    """R(O)_{ij,kl} = O_{ik,jl} for O on A⊗B; result is d_A^2 x d_B^2"""
    matrix, n = _as_matrix(operator)
    if split.k != 2:
        raise StateError(f"Realignment needs a bipartition, got {split.k} groups")
    if not split.covers(n):
        raise StateError(f"Bipartition {split} must cover all {n} qubits")
    d_a, d_b = split.dims
    ordered = permute_qubits(matrix, split.qubits)
    return ordered.reshape(d_a, d_b, d_a, d_b).transpose(0, 2, 1, 3).reshape(d_a**2, d_b**2)
