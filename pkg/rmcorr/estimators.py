"""
Classical postprocessing of measurement datasets.

Every estimator is a per-setting statistic averaged over settings; its
standard error is the sample deviation of the per-setting values over sqrt(N_U).

The correlation-overlap estimator is a U-statistic over (k+1)-subsets of
shots. The smallest shot index of a subset is the "full state" copy, paired
with the m-th remaining shot through the kernel of party m.
"""

import itertools
import json
import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence

import numpy as np

from .config import get_settings
from .qcore import CapExceededError, Partition, hamming_weight, qubit_mask
from .sampler import (
    CONCURRENCE,
    GLOBAL_CRO,
    LOCAL_CRO,
    MES_FIDELITY,
    MeasurementDataset,
    run_indexed,
)

logger = logging.getLogger(__name__)

LOCAL = "local"
GLOBAL = "global"
CHAIN = "chain"
ENUMERATE = "enumerate"


class EstimatorError(ValueError):
    """Dataset and estimator request do not fit together"""


class EstimateWithError(NamedTuple):
    value: float
    std_error: float
    n_u: int
    n_m: int
    estimator_id: str
    defined: bool = True
    diagnostics: Optional[Dict[str, Any]] = None

    def to_record(
        self, partition: Optional[Partition] = None, dataset: Optional[str] = None
    ) -> Dict[str, Any]:
        return {
            "estimator_id": self.estimator_id,
            "value": self.value,
            "std_error": self.std_error,
            "n_u": self.n_u,
            "n_m": self.n_m,
            "partition": str(partition) if partition is not None else None,
            "dataset": dataset,
            "defined": self.defined,
            "diagnostics": self.diagnostics,
        }


def write_estimates(records: Iterable[Dict[str, Any]], path: str) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")
    logger.info(f"Wrote estimates to {out}")
    return out


def x_weight(s: int, s_prime: int, d: int) -> float:
    """d when the outcomes agree, -1 otherwise"""
    if not (0 <= s < d and 0 <= s_prime < d):
        raise EstimatorError(f"Outcomes ({s}, {s_prime}) out of range for d={d}")
    return float(d) if s == s_prime else -1.0


def x_weight_local(s_vec: Sequence[Any], s_prime_vec: Sequence[Any]) -> float:
    """Product of per-bit weights, 2^m (-2)^(-hamming)"""
    if len(s_vec) != len(s_prime_vec):
        raise EstimatorError(f"Bitstrings differ in length: {len(s_vec)} vs {len(s_prime_vec)}")
    m = len(s_vec)
    distance = sum(int(a) != int(b) for a, b in zip(s_vec, s_prime_vec))
    return 2.0**m * (-0.5) ** distance


def pair_kernel(
    codes_a: np.ndarray, codes_b: np.ndarray, group: Sequence[int], n: int, mode: str = LOCAL
) -> np.ndarray:
    """Kernel matrix K[i, j] between outcome codes restricted to ``group``"""
    mask = qubit_mask(group, n)
    diff = (np.asarray(codes_a)[:, None] ^ np.asarray(codes_b)[None, :]) & mask
    if mode == LOCAL:
        return (2.0 ** len(group)) * (-0.5) ** hamming_weight(diff)
    if mode == GLOBAL:
        return np.where(diff == 0, float(2 ** len(group)), -1.0)
    raise EstimatorError(f"Unknown kernel {mode!r}")


def _offdiag_mean(matrix: np.ndarray) -> float:
    size = matrix.shape[0]
    return float((matrix.sum() - np.trace(matrix)) / (size * (size - 1)))


def _ordered_chain(kernels: List[np.ndarray]) -> float:
    k = len(kernels)
    size = kernels[0].shape[0]
    acc = np.triu(kernels[0], k=1)
    for kernel in kernels[1:]:
        exclusive = np.zeros_like(acc)
        exclusive[:, 1:] = np.cumsum(acc, axis=1)[:, :-1]
        acc = kernel * exclusive
    return float(acc.sum()) / math.comb(size, k + 1)


def _ordered_enumeration(kernels: List[np.ndarray]) -> float:
    k = len(kernels)
    size = kernels[0].shape[0]
    count = math.comb(size, k + 1)
    cap = get_settings().enumeration_cap
    if count > cap:
        raise CapExceededError(
            f"{count} shot subsets exceed the enumeration cap {cap}; use method='chain'"
        )
    subsets = np.array(list(itertools.combinations(range(size), k + 1)), dtype=np.intp)
    terms = np.ones(len(subsets))
    for m, kernel in enumerate(kernels, start=1):
        terms *= kernel[subsets[:, 0], subsets[:, m]]
    return math.fsum(terms) / count


def _set_partitions(items: List[int]) -> Iterator[List[List[int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for smaller in _set_partitions(rest):
        for i in range(len(smaller)):
            yield smaller[:i] + [[first] + smaller[i]] + smaller[i + 1 :]
        yield [[first]] + smaller


def _symmetrized(kernels: List[np.ndarray]) -> float:
    # sum over ordered tuples of distinct shots by Moebius inversion over set partitions
    k = len(kernels)
    size = kernels[0].shape[0]
    total = 0.0
    for blocks in _set_partitions(list(range(k + 1))):
        weight = 1
        for block in blocks:
            weight *= (-1) ** (len(block) - 1) * math.factorial(len(block) - 1)
        term = np.ones(size)
        for block in blocks:
            if 0 in block:
                for m in block:
                    if m:
                        term = term * np.diag(kernels[m - 1])
            else:
                product = np.ones((size, size))
                for m in block:
                    product = product * kernels[m - 1]
                term = term * product.sum(axis=1)
        total += weight * float(term.sum())
    return total / math.perm(size, k + 1)


def _summarize(
    values: Sequence[float],
    dataset: MeasurementDataset,
    estimator_id: str,
    diagnostics: Optional[Dict[str, Any]] = None,
) -> EstimateWithError:
    count = len(values)
    mean = math.fsum(values) / count
    std_error = float(np.std(values, ddof=1) / math.sqrt(count)) if count > 1 else math.inf
    return EstimateWithError(
        mean, std_error, dataset.n_u, dataset.n_m, estimator_id, True, diagnostics
    )


def _resolve_kernel(
    dataset: MeasurementDataset, partition: Partition, kernel: Optional[str]
) -> str:
    if dataset.protocol not in (LOCAL_CRO, GLOBAL_CRO):
        raise EstimatorError(f"Correlation estimators need a CRO dataset, got {dataset.protocol}")
    partition.check_within(dataset.n_qubits)
    partition.require_parties()
    mode = kernel or (GLOBAL if dataset.protocol == GLOBAL_CRO else LOCAL)
    if mode not in (LOCAL, GLOBAL):
        raise EstimatorError(f"Unknown kernel {mode!r}")

    if dataset.protocol == GLOBAL_CRO:
        if mode == LOCAL:
            raise EstimatorError("The per-qubit kernel is biased on Haar party unitaries")
        assert dataset.partition_hint is not None
        parties = {tuple(sorted(g)) for g in dataset.partition_hint.groups}
        for group in partition.groups:
            if tuple(sorted(group)) not in parties:
                raise EstimatorError(
                    f"Group {group} is not a party of the recorded partition "
                    f"{dataset.partition_hint}"
                )
    elif mode == GLOBAL and any(len(g) > 1 for g in partition.groups):
        raise EstimatorError("The party kernel on local datasets needs one qubit per party")
    return mode


def _check_shots(dataset: MeasurementDataset, needed: int) -> None:
    if dataset.n_m < needed:
        raise EstimatorError(f"Need at least {needed} shots per setting, dataset has {dataset.n_m}")


def _overlap_fn(method: str, symmetrize: bool) -> Callable[[List[np.ndarray]], float]:
    if symmetrize:
        return _symmetrized
    if method == CHAIN:
        return _ordered_chain
    if method == ENUMERATE:
        return _ordered_enumeration
    raise EstimatorError(f"Unknown method {method!r}; choose chain or enumerate")


def estimate_Tk(
    dataset: MeasurementDataset,
    partition: Partition,
    method: str = CHAIN,
    symmetrize: bool = False,
    kernel: Optional[str] = None,
    threads: Optional[int] = None,
) -> EstimateWithError:
    """Unbiased estimate of tr(rho ⊗_i rho_i) over the groups of ``partition``"""
    mode = _resolve_kernel(dataset, partition, kernel)
    k = partition.k
    _check_shots(dataset, k + 1)
    overlap = _overlap_fn(method, symmetrize)
    n = dataset.n_qubits

    def per_setting(t: int) -> float:
        codes = dataset.shots[t]
        return overlap([pair_kernel(codes, codes, g, n, mode) for g in partition.groups])

    values = run_indexed(per_setting, dataset.n_u, threads or get_settings().threads)
    label = f"t_k:k={k}:{mode}:{'symmetrized' if symmetrize else method}"
    estimate = _summarize(values, dataset, label)
    logger.debug(f"{label} = {estimate.value:.6f} ± {estimate.std_error:.6f}")
    return estimate


def _purity_groups(dataset: MeasurementDataset, subset: Sequence[int]) -> List[Sequence[int]]:
    if dataset.protocol != GLOBAL_CRO:
        return [subset]
    assert dataset.partition_hint is not None
    wanted = set(subset)
    groups = [g for g in dataset.partition_hint.groups if set(g) <= wanted]
    if {q for g in groups for q in g} != wanted:
        raise EstimatorError(f"Subset {list(subset)} is not a union of recorded parties")
    return groups


def estimate_purity(
    dataset: MeasurementDataset, subset: Sequence[int], threads: Optional[int] = None
) -> EstimateWithError:
    """tr(rho_subset^2) from ordered pairs of distinct shots"""
    subset = [int(q) for q in subset]
    if not subset:
        raise EstimatorError("Purity needs a nonempty qubit subset")
    if dataset.protocol not in (LOCAL_CRO, GLOBAL_CRO, CONCURRENCE):
        raise EstimatorError(f"Purity cannot be read from a {dataset.protocol} dataset")
    Partition((tuple(subset),)).check_within(dataset.n_qubits)
    _check_shots(dataset, 2)
    groups = _purity_groups(dataset, subset)
    mode = GLOBAL if dataset.protocol == GLOBAL_CRO else LOCAL
    n = dataset.n_qubits

    def per_setting(t: int) -> float:
        codes = dataset.shots[t]
        kernel = np.ones((dataset.n_m, dataset.n_m))
        for group in groups:
            kernel = kernel * pair_kernel(codes, codes, group, n, mode)
        return _offdiag_mean(kernel)

    values = run_indexed(per_setting, dataset.n_u, threads or get_settings().threads)
    return _summarize(values, dataset, f"purity:{','.join(map(str, subset))}")


def _components(
    dataset: MeasurementDataset,
    partition: Partition,
    mode: str,
    overlap: Callable[[List[np.ndarray]], float],
    threads: Optional[int],
) -> np.ndarray:
    """Rows of (T, purity of the union, purity of each group) per setting"""
    n = dataset.n_qubits

    def per_setting(t: int) -> List[float]:
        codes = dataset.shots[t]
        kernels = [pair_kernel(codes, codes, g, n, mode) for g in partition.groups]
        joint = np.ones_like(kernels[0])
        for kernel in kernels:
            joint = joint * kernel
        return [overlap(kernels), _offdiag_mean(joint)] + [_offdiag_mean(k) for k in kernels]

    return np.array(run_indexed(per_setting, dataset.n_u, threads or get_settings().threads))


def estimate_correlation(
    dataset: MeasurementDataset,
    partition: Partition,
    method: str = CHAIN,
    symmetrize: bool = False,
    kernel: Optional[str] = None,
    threads: Optional[int] = None,
) -> EstimateWithError:
    """Plug-in -log2(T / sqrt(P * prod p_i)) with a first-order error"""
    mode = _resolve_kernel(dataset, partition, kernel)
    _check_shots(dataset, partition.k + 1)
    rows = _components(dataset, partition, mode, _overlap_fn(method, symmetrize), threads)
    means = np.array([math.fsum(col) / len(col) for col in rows.T])
    estimator_id = f"correlation:k={partition.k}:{mode}"
    diagnostics: Dict[str, Any] = {
        "t_k": float(means[0]),
        "purity": float(means[1]),
        "marginal_purities": [float(v) for v in means[2:]],
    }

    if np.any(means <= 0):
        logger.warning(
            f"Correlation undefined: nonpositive component in T={means[0]:.4g}, "
            f"P={means[1]:.4g}, p={means[2:].round(4).tolist()}"
        )
        return EstimateWithError(
            math.nan, math.nan, dataset.n_u, dataset.n_m, estimator_id, False, diagnostics
        )

    value = -math.log2(means[0]) + 0.5 * float(np.sum(np.log2(means[1:])))
    if dataset.n_u > 1:
        gradient = np.concatenate(([-1.0 / means[0]], 0.5 / means[1:])) / math.log(2)
        covariance = np.atleast_2d(np.cov(rows, rowvar=False, ddof=1))
        variance = float(gradient @ covariance @ gradient) / dataset.n_u
        std_error = math.sqrt(max(variance, 0.0))
    else:
        std_error = math.inf
    return EstimateWithError(
        value, std_error, dataset.n_u, dataset.n_m, estimator_id, True, diagnostics
    )


def estimate_t2_witness(
    dataset: MeasurementDataset,
    bipartition: Partition,
    method: str = CHAIN,
    threads: Optional[int] = None,
) -> EstimateWithError:
    """tr rho_AB^2 + tr rho_A^2 + tr rho_B^2 - 2 T_2 - 1; positive values flag entanglement

    The three purities and T_2 are combined per setting before averaging, so the
    reported error includes their covariance.
    """
    if dataset.protocol != LOCAL_CRO:
        raise EstimatorError(f"The T2 witness needs a local_cro dataset, got {dataset.protocol}")
    if bipartition.k != 2:
        raise EstimatorError(f"The T2 witness needs two parties, got {bipartition.k}")
    mode = _resolve_kernel(dataset, bipartition, None)
    _check_shots(dataset, 3)
    rows = _components(dataset, bipartition, mode, _overlap_fn(method, False), threads)
    witness = rows[:, 1] + rows[:, 2] + rows[:, 3] - 2.0 * rows[:, 0] - 1.0
    return _summarize([float(w) for w in witness], dataset, "t2_witness")


def estimate_mes_fidelity(dataset: MeasurementDataset) -> EstimateWithError:
    """Overlap with the maximally entangled state, comparing the two halves of each shot"""
    if dataset.protocol != MES_FIDELITY:
        raise EstimatorError(f"Expected a mes_fidelity dataset, got {dataset.protocol}")
    half = dataset.n_qubits // 2
    side_a = dataset.shots >> half
    side_b = dataset.shots & ((1 << half) - 1)
    weights = (-0.5) ** hamming_weight(side_a ^ side_b)
    values = [math.fsum(row) / dataset.n_m for row in weights]
    return _summarize(values, dataset, "mes_fidelity")


def _collision_rate(codes: np.ndarray) -> float:
    _, counts = np.unique(codes, return_counts=True)
    size = len(codes)
    return float(np.sum(counts * (counts - 1))) / (size * (size - 1))


def estimate_concurrence(
    dataset: MeasurementDataset, n: Optional[int] = None
) -> EstimateWithError:
    """2 sqrt(1 - (3/2)^n K) with K the mean collision probability of the shots"""
    if dataset.protocol != CONCURRENCE:
        raise EstimatorError(f"Expected a concurrence dataset, got {dataset.protocol}")
    n = dataset.n_qubits if n is None else n
    if n != dataset.n_qubits:
        raise EstimatorError(f"Dataset has {dataset.n_qubits} qubits, not {n}")
    _check_shots(dataset, 2)

    moment = _summarize([_collision_rate(row) for row in dataset.shots], dataset, "collision")
    scale = 1.5**n
    radicand = 1.0 - scale * moment.value
    diagnostics = {
        "radicand": radicand,
        "collision_moment": moment.value,
        "collision_std_error": moment.std_error,
    }
    if radicand < 0:
        logger.warning(f"Concurrence radicand {radicand:.4g} clamped to 0")
    value = 2.0 * math.sqrt(max(radicand, 0.0))

    spread = scale * moment.std_error
    bound = 2.0 * math.sqrt(spread)
    std_error = min(spread / math.sqrt(radicand), bound) if radicand > 0 else bound
    return EstimateWithError(
        value, std_error, dataset.n_u, dataset.n_m, "concurrence", True, diagnostics
    )
