"""
Unitary ensembles for randomized measurements.

The single-qubit Clifford group is enumerated as the closure of {H, S} modulo
global phase; indices follow breadth-first generation order from the identity
and never change between runs. Haar sampling (scipy) backs the per-party
unitaries of the global protocol and Monte Carlo cross-checks.
"""

import json
import logging
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import unitary_group

from .config import get_settings
from .qcore import (
    CapExceededError,
    Factor,
    SeedLike,
    make_rng,
    permutation_operator,
    permutations,
)

logger = logging.getLogger(__name__)

CLIFFORD_1Q = "clifford1q"
HAAR_1Q = "haar1q"
HAAR_NQ = "haarNq"
IDENTITY = "identity"

# None means a t-design for every t
DESIGN_ORDER: Dict[str, Optional[int]] = {
    CLIFFORD_1Q: 3,
    HAAR_1Q: None,
    HAAR_NQ: None,
    IDENTITY: 0,
}

N_CLIFFORD_1Q = 24
UNITARY_TOL = 1e-12

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.array([[1, 0], [0, 1j]], dtype=complex)


class EnsembleError(ValueError):
    """Unknown ensemble, bad setting or insufficient design order"""


def _canonical(matrix: np.ndarray) -> Tuple[np.ndarray, Tuple[float, ...]]:
    flat = matrix.reshape(-1)
    pivot = flat[int(np.argmax(np.abs(flat) > 1e-9))]
    phased = matrix * (abs(pivot) / pivot)
    key = tuple(np.round(np.concatenate([phased.real.ravel(), phased.imag.ravel()]), 8))
    return phased, key


@lru_cache(maxsize=1)
def _clifford_table() -> Tuple[Tuple[np.ndarray, ...], Tuple[str, ...]]:
    identity, key = _canonical(np.eye(2, dtype=complex))
    matrices = [identity]
    words = [""]
    index = {key: 0}
    queue = deque([0])
    while queue:
        current = queue.popleft()
        for name, generator in (("H", _H), ("S", _S)):
            candidate, key = _canonical(generator @ matrices[current])
            if key not in index:
                index[key] = len(matrices)
                matrices.append(candidate)
                words.append(words[current] + name)
                queue.append(len(matrices) - 1)

    if len(matrices) != N_CLIFFORD_1Q:
        raise RuntimeError(f"Clifford closure produced {len(matrices)} elements")
    for m in matrices:
        m.setflags(write=False)
    logger.debug(f"Enumerated {len(matrices)} single-qubit Clifford elements")
    return tuple(matrices), tuple(words)


def clifford_group_1q() -> Tuple[np.ndarray, ...]:
    return _clifford_table()[0]


def clifford_words() -> Tuple[str, ...]:
    """Generator word for each index, gates listed in the order they are applied"""
    return _clifford_table()[1]


def clifford_1q(index: int) -> np.ndarray:
    """The index-th single-qubit Clifford (index 0 is the identity)"""
    if not 0 <= int(index) < N_CLIFFORD_1Q:
        raise EnsembleError(f"Clifford index must lie in [0, {N_CLIFFORD_1Q}), got {index}")
    return clifford_group_1q()[int(index)]


def export_clifford_table(path: str) -> Path:
    """Write the frozen enumeration as JSON Lines for audit"""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        for i, (matrix, word) in enumerate(zip(clifford_group_1q(), clifford_words())):
            record = {
                "index": i,
                "word": word or "I",
                "matrix_re": matrix.real.tolist(),
                "matrix_im": matrix.imag.tolist(),
            }
            f.write(json.dumps(record) + "\n")
    logger.info(f"Wrote Clifford table to {out}")
    return out


def _is_unitary(matrix: np.ndarray) -> bool:
    product = matrix.conj().T @ matrix
    return bool(np.max(np.abs(product - np.eye(matrix.shape[0]))) <= UNITARY_TOL)


@dataclass(frozen=True, eq=False)
class LocalUnitarySetting:
    """One sampled product unitary: Clifford indices per qubit, or explicit matrices per group"""

    ensemble_id: str
    n_qubits: int
    clifford_indices: Optional[Tuple[int, ...]] = None
    matrices: Optional[Tuple[np.ndarray, ...]] = None
    groups: Optional[Tuple[Tuple[int, ...], ...]] = None

    def __post_init__(self) -> None:
        if self.ensemble_id not in DESIGN_ORDER:
            raise EnsembleError(f"Unknown ensemble {self.ensemble_id!r}")
        if self.clifford_indices is not None:
            indices = tuple(int(i) for i in self.clifford_indices)
            if len(indices) != self.n_qubits:
                raise EnsembleError(
                    f"Expected {self.n_qubits} Clifford indices, got {len(indices)}"
                )
            if any(not 0 <= i < N_CLIFFORD_1Q for i in indices):
                raise EnsembleError(f"Clifford indices out of range: {indices}")
            object.__setattr__(self, "clifford_indices", indices)
            return

        if self.matrices is None:
            raise EnsembleError("A setting needs Clifford indices or explicit matrices")
        groups = self.groups
        if groups is None:
            groups = tuple((q,) for q in range(len(self.matrices)))
        groups = tuple(tuple(int(q) for q in g) for g in groups)
        if len(groups) != len(self.matrices):
            raise EnsembleError("Each matrix needs exactly one qubit group")
        flat = [q for g in groups for q in g]
        if len(set(flat)) != len(flat) or any(not 0 <= q < self.n_qubits for q in flat):
            raise EnsembleError(f"Invalid qubit groups {groups} for {self.n_qubits} qubits")

        matrices = []
        for group, matrix in zip(groups, self.matrices):
            matrix = np.array(matrix, dtype=complex)
            dim = 2 ** len(group)
            if matrix.shape != (dim, dim):
                raise EnsembleError(f"Matrix on {group} must be {dim}x{dim}")
            if not _is_unitary(matrix):
                raise EnsembleError(f"Matrix on {group} is not unitary")
            matrix.setflags(write=False)
            matrices.append(matrix)
        object.__setattr__(self, "matrices", tuple(matrices))
        object.__setattr__(self, "groups", groups)

    def factors(self) -> List[Factor]:
        if self.clifford_indices is not None:
            return [((q,), clifford_1q(i)) for q, i in enumerate(self.clifford_indices)]
        assert self.groups is not None and self.matrices is not None
        return list(zip(self.groups, self.matrices))

    def to_json(self) -> Any:
        if self.clifford_indices is not None:
            return list(self.clifford_indices)
        assert self.groups is not None and self.matrices is not None
        return [
            {"qubits": list(g), "re": m.real.tolist(), "im": m.imag.tolist()}
            for g, m in zip(self.groups, self.matrices)
        ]

    @classmethod
    def from_json(cls, obj: Any, ensemble_id: str, n_qubits: int) -> "LocalUnitarySetting":
        if not isinstance(obj, list):
            raise EnsembleError(f"Setting must be a JSON list, got {type(obj).__name__}")
        if all(isinstance(i, int) for i in obj):
            return cls(ensemble_id, n_qubits, clifford_indices=tuple(obj))
        try:
            groups = tuple(tuple(item["qubits"]) for item in obj)
            matrices = tuple(
                np.array(item["re"], dtype=float) + 1j * np.array(item["im"], dtype=float)
                for item in obj
            )
        except (KeyError, TypeError) as e:
            raise EnsembleError(f"Malformed matrix setting: {e}") from e
        return cls(ensemble_id, n_qubits, matrices=matrices, groups=groups)


def _haar(dim: int, rng: np.random.Generator) -> np.ndarray:
    return np.asarray(unitary_group.rvs(dim, random_state=rng), dtype=complex)


def sample_setting(
    n: int,
    ensemble_id: str = CLIFFORD_1Q,
    seed: SeedLike = 0,
    groups: Optional[Sequence[Sequence[int]]] = None,
) -> LocalUnitarySetting:
    """Independent uniform draws per qubit (per group for haarNq)"""
    if n < 1:
        raise EnsembleError(f"n must be at least 1, got {n}")
    rng = make_rng(seed)

    if ensemble_id == CLIFFORD_1Q:
        indices = rng.integers(0, N_CLIFFORD_1Q, size=n)
        return LocalUnitarySetting(ensemble_id, n, clifford_indices=tuple(int(i) for i in indices))
    if ensemble_id == IDENTITY:
        return LocalUnitarySetting(ensemble_id, n, clifford_indices=(0,) * n)
    if ensemble_id == HAAR_1Q:
        matrices = tuple(_haar(2, rng) for _ in range(n))
        return LocalUnitarySetting(ensemble_id, n, matrices=matrices)
    if ensemble_id == HAAR_NQ:
        if not groups:
            raise EnsembleError("haarNq needs the party groups")
        cap = get_settings().haar_party_qubits
        for g in groups:
            if len(g) > cap:
                raise CapExceededError(
                    f"Party {tuple(g)} has {len(g)} qubits; Haar parties are capped at {cap}"
                )
        matrices = tuple(_haar(2 ** len(g), rng) for g in groups)
        return LocalUnitarySetting(
            ensemble_id, n, matrices=matrices, groups=tuple(tuple(g) for g in groups)
        )
    raise EnsembleError(f"Unknown ensemble {ensemble_id!r}")


class TwirlResult(NamedTuple):
    """Twirled operator; std_error is None for exact finite averages"""

    operator: np.ndarray
    std_error: Optional[np.ndarray]
    n_samples: int


def _tensor_power(unitaries: np.ndarray, t: int) -> np.ndarray:
    count, dim, _ = unitaries.shape
    power = unitaries
    for _ in range(t - 1):
        power = np.einsum("nab,ncd->nacbd", power, unitaries)
        size = power.shape[1] * dim
        power = power.reshape(count, size, size)
    return power


def twirl(
    operator: np.ndarray,
    ensemble_id: str = CLIFFORD_1Q,
    t: int = 2,
    d: int = 2,
    n_samples: int = 10_000,
    seed: SeedLike = 0,
) -> TwirlResult:
    """Phi^t(X) = E_U U^{⊗t} X U^{†⊗t}, exact for finite ensembles and Monte Carlo for Haar"""
    if ensemble_id not in DESIGN_ORDER:
        raise EnsembleError(f"Unknown ensemble {ensemble_id!r}")
    order = DESIGN_ORDER[ensemble_id]
    if order is not None and t > order:
        raise EnsembleError(f"{ensemble_id} is a {order}-design, cannot twirl {t} copies")
    if ensemble_id != HAAR_NQ and d != 2:
        raise EnsembleError(f"{ensemble_id} acts on single qubits (d=2), got d={d}")
    x = np.asarray(operator, dtype=complex)
    if x.shape != (d**t, d**t):
        raise EnsembleError(f"Operator must be {d**t}x{d**t} for t={t}, d={d}")

    if ensemble_id == CLIFFORD_1Q:
        powers = _tensor_power(np.stack(clifford_group_1q()), t)
        twirled = np.einsum("nab,bc,ndc->ad", powers, x, powers.conj()) / len(powers)
        return TwirlResult(twirled, None, len(powers))

    rng = make_rng(seed)
    samples = np.asarray(unitary_group.rvs(d, size=n_samples, random_state=rng), dtype=complex)
    samples = samples.reshape(n_samples, d, d)
    powers = _tensor_power(samples, t)
    terms = powers @ x @ powers.conj().transpose(0, 2, 1)
    mean = terms.mean(axis=0)
    if n_samples > 1:
        spread = np.sqrt(terms.real.var(axis=0, ddof=1) + terms.imag.var(axis=0, ddof=1))
        std_error = spread / np.sqrt(n_samples)
    else:
        std_error = np.full(mean.shape, np.inf)
    return TwirlResult(mean, std_error, n_samples)


@dataclass(frozen=True, eq=False)
class WeingartenTable:
    t: int
    d: int
    permutations: Tuple[Tuple[int, ...], ...]
    coefficients: np.ndarray

    def coefficient(self, pi: Sequence[int], sigma: Sequence[int]) -> float:
        i = self.permutations.index(tuple(pi))
        j = self.permutations.index(tuple(sigma))
        return float(self.coefficients[i, j])

    def row_sums(self) -> np.ndarray:
        return self.coefficients.sum(axis=1)


def weingarten_table(t: int, d: int) -> WeingartenTable:
    """Weingarten coefficients C_{pi,sigma} for t <= 2"""
    if d < 2:
        raise EnsembleError(f"Dimension must be at least 2, got {d}")
    if t == 1:
        coefficients = np.array([[1.0 / d]])
    elif t == 2:
        diagonal = 1.0 / (d**2 - 1)
        off = -1.0 / (d * (d**2 - 1))
        coefficients = np.array([[diagonal, off], [off, diagonal]])
    else:
        raise EnsembleError(f"Weingarten coefficients are tabulated for t <= 2, got t={t}")
    coefficients.setflags(write=False)
    return WeingartenTable(t, d, tuple(permutations(t)), coefficients)


def weingarten_twirl(operator: np.ndarray, t: int, d: int) -> np.ndarray:
    """Exact Haar twirl sum_{pi,sigma} C_{pi,sigma} tr(X W_pi) W_sigma"""
    table = weingarten_table(t, d)
    ops = [permutation_operator(p, d, t).matrix for p in table.permutations]
    x = np.asarray(operator, dtype=complex)
    overlaps = np.array([np.einsum("ij,ji->", x, w) for w in ops])
    result = np.zeros((d**t, d**t), dtype=complex)
    for j, w in enumerate(ops):
        result += (table.coefficients[:, j] @ overlaps) * w
    return result


class PermSumReport(NamedTuple):
    d: int
    enumerated: Tuple[float, float, float]
    closed_form: Tuple[int, int, int]
    max_error: float
    passed: bool


def _x_diagonal(d: int, t: int, pairs: Sequence[Tuple[int, int]]) -> np.ndarray:
    digits = np.indices((d,) * t).reshape(t, -1)
    values = np.ones(d**t)
    for a, b in pairs:
        values *= np.where(digits[a] == digits[b], float(d), -1.0)
    return values


def verify_perm_sums(d: int, tol: float = 1e-8) -> PermSumReport:
    """Compare three permutation sums of the X observable with their closed forms"""
    if d < 2:
        raise EnsembleError(f"Dimension must be at least 2, got {d}")
    observables = (
        (2, _x_diagonal(d, 2, [(0, 1)]) ** 2),
        (3, _x_diagonal(d, 3, [(0, 1), (0, 2)])),
        (4, _x_diagonal(d, 4, [(0, 1), (2, 3)])),
    )
    enumerated = []
    for t, diagonal in observables:
        total = 0.0
        for sigma in permutations(t):
            total += float(np.diag(permutation_operator(sigma, d, t).matrix) @ diagonal)
        enumerated.append(total)

    closed = (
        d * (2 * d - 1) * (d + 1),
        3 * d**2 * (d + 1),
        d * (d + 1) * (d**2 + 9 * d + 2),
    )
    max_error = max(abs(e - c) for e, c in zip(enumerated, closed))
    passed = max_error <= tol
    if not passed:
        logger.warning(f"Permutation sums disagree at d={d}: {enumerated} vs {closed}")
    sums = (enumerated[0], enumerated[1], enumerated[2])
    return PermSumReport(d, sums, closed, max_error, passed)
