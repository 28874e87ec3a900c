"""
Measurement protocols against a simulated state, and the dataset file they produce.

A protocol samples N_U product unitaries, rotates the state and draws N_M
computational-basis shots per setting. Nothing about the postprocessing
partition is fixed here.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, TypeVar

import numpy as np

from .config import get_settings
from .ensembles import (
    CLIFFORD_1Q,
    HAAR_1Q,
    HAAR_NQ,
    IDENTITY,
    LocalUnitarySetting,
    sample_setting,
)
from .qcore import (
    Partition,
    QuantumState,
    SeedLike,
    apply_product_unitary,
    from_bitstrings,
    outcome_distribution,
    sample_outcomes,
    to_bitstrings,
)

logger = logging.getLogger(__name__)

LOCAL_CRO = "local_cro"
GLOBAL_CRO = "global_cro"
MES_FIDELITY = "mes_fidelity"
CONCURRENCE = "concurrence"
PROTOCOLS = (LOCAL_CRO, GLOBAL_CRO, MES_FIDELITY, CONCURRENCE)

PURE_TOL = 1e-10

T = TypeVar("T")


class ProtocolError(ValueError):
    """Protocol called with an incompatible state, ensemble or count"""


class DatasetFormatError(Exception):
    """Something wrong with a dataset file"""


def run_indexed(fn: Callable[[int], T], count: int, threads: int = 1) -> List[T]:
    """Evaluate fn(0..count-1), optionally on a thread pool; results keep index order"""
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    results: List[Optional[T]] = [None] * count
    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = {executor.submit(fn, i): i for i in range(count)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return results  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class MeasurementDataset:
    """Settings and shots of one protocol run; shots are outcome codes, qubit 0 most significant"""

    protocol: str
    n_qubits: int
    n_u: int
    n_m: int
    settings: Tuple[LocalUnitarySetting, ...]
    shots: np.ndarray
    state_label: str = ""
    seed: Optional[int] = None
    ensemble_id: str = CLIFFORD_1Q
    partition_hint: Optional[Partition] = None
    conjugate_mask: Optional[Tuple[bool, ...]] = None

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ProtocolError(f"Unknown protocol {self.protocol!r}")
        settings = tuple(self.settings)
        shots = np.array(self.shots, dtype=np.int64)
        if len(settings) != self.n_u:
            raise ProtocolError(f"Expected {self.n_u} settings, got {len(settings)}")
        if shots.shape != (self.n_u, self.n_m):
            raise ProtocolError(
                f"Shots must have shape ({self.n_u}, {self.n_m}), got {shots.shape}"
            )
        if shots.size and (shots.min() < 0 or shots.max() >= 2**self.n_qubits):
            raise ProtocolError(f"Shot outcomes do not fit in {self.n_qubits} bits")
        for setting in settings:
            if setting.n_qubits != self.n_qubits:
                raise ProtocolError(
                    f"Setting acts on {setting.n_qubits} qubits, dataset has {self.n_qubits}"
                )

        mask = self.conjugate_mask
        if self.protocol == MES_FIDELITY:
            if self.n_qubits % 2:
                raise ProtocolError(f"MES fidelity needs an even qubit count, got {self.n_qubits}")
            half = self.n_qubits // 2
            expected = (False,) * half + (True,) * half
            if mask is not None and tuple(mask) != expected:
                raise ProtocolError("Conjugate mask must cover exactly the second half")
            mask = expected
        elif mask is not None and any(mask):
            raise ProtocolError(f"{self.protocol} datasets carry no conjugated qubits")
        else:
            mask = None
        if self.protocol == GLOBAL_CRO and self.partition_hint is None:
            raise ProtocolError("Global datasets must record their party partition")

        shots.setflags(write=False)
        object.__setattr__(self, "settings", settings)
        object.__setattr__(self, "shots", shots)
        object.__setattr__(self, "conjugate_mask", mask)

    def bitstrings(self, t: int) -> List[str]:
        return to_bitstrings(self.shots[t], self.n_qubits)

    def header(self) -> Dict[str, Any]:
        return {
            "protocol": self.protocol,
            "n_qubits": self.n_qubits,
            "N_U": self.n_u,
            "N_M": self.n_m,
            "seed": self.seed,
            "state_label": self.state_label,
            "ensemble_id": self.ensemble_id,
            "partition": str(self.partition_hint) if self.partition_hint else None,
        }

    def to_jsonl(self, path: str) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as f:
            f.write(json.dumps(self.header()) + "\n")
            for t, setting in enumerate(self.settings):
                f.write(json.dumps(setting.to_json()) + "\n")
                f.write(json.dumps(self.bitstrings(t)) + "\n")
        logger.info(f"Wrote {self.protocol} dataset ({self.n_u}x{self.n_m} shots) to {out}")
        return out

    @classmethod
    def from_jsonl(cls, path: str) -> "MeasurementDataset":
        try:
            lines = []
            with open(path, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if line:
                        lines.append(json.loads(line))
        except (FileNotFoundError, IOError) as e:
            message = f"Error reading dataset {path}: {e}"
            logger.error(message)
            raise DatasetFormatError(message) from e
        except json.JSONDecodeError as e:
            message = f"Error parsing JSON in dataset {path}: {e}"
            logger.error(message)
            raise DatasetFormatError(message) from e

        if not lines or not isinstance(lines[0], dict):
            raise DatasetFormatError(f"Dataset {path} has no header object")
        header = lines[0]
        try:
            n = int(header["n_qubits"])
            n_u = int(header["N_U"])
            n_m = int(header["N_M"])
            ensemble_id = header.get("ensemble_id", CLIFFORD_1Q)
            body = lines[1:]
            if len(body) != 2 * n_u:
                raise DatasetFormatError(
                    f"Dataset {path} declares {n_u} settings but has {len(body)} body lines"
                )
            settings = tuple(
                LocalUnitarySetting.from_json(body[2 * t], ensemble_id, n) for t in range(n_u)
            )
            shots = np.array(
                [from_bitstrings(body[2 * t + 1], n) for t in range(n_u)], dtype=np.int64
            ).reshape(n_u, n_m)
            partition = header.get("partition")
            return cls(
                protocol=header["protocol"],
                n_qubits=n,
                n_u=n_u,
                n_m=n_m,
                settings=settings,
                shots=shots,
                state_label=header.get("state_label", ""),
                seed=header.get("seed"),
                ensemble_id=ensemble_id,
                partition_hint=Partition.parse(partition) if partition else None,
            )
        except (KeyError, TypeError, ValueError) as e:
            message = f"Invalid dataset {path}: {e}"
            logger.error(message)
            raise DatasetFormatError(message) from e


def _root_seed(seed: SeedLike) -> Tuple[np.random.SeedSequence, Optional[int]]:
    if isinstance(seed, np.random.SeedSequence):
        return seed, None
    if isinstance(seed, np.random.Generator):
        raise ProtocolError("Protocols take an integer seed or a SeedSequence")
    root = np.random.SeedSequence(seed)
    return root, int(seed) if seed is not None else int(root.entropy)


def _check_counts(n_u: int, n_m: int) -> None:
    if n_u < 1:
        raise ProtocolError(f"N_U must be at least 1, got {n_u}")
    if n_m < 1:
        raise ProtocolError(f"N_M must be at least 1, got {n_m}")


def _execute(
    state: QuantumState,
    protocol: str,
    n_u: int,
    n_m: int,
    seed: SeedLike,
    ensemble_id: str,
    threads: Optional[int],
    draw: Callable[[np.random.Generator], LocalUnitarySetting],
    conjugate_mask: Optional[Tuple[bool, ...]] = None,
    partition_hint: Optional[Partition] = None,
) -> MeasurementDataset:
    _check_counts(n_u, n_m)
    root, recorded_seed = _root_seed(seed)
    children = root.spawn(n_u)
    threads = threads or get_settings().threads
    logger.info(
        f"Running {protocol} on {state.label or 'state'} ({state.n_qubits} qubits): "
        f"N_U={n_u}, N_M={n_m}, ensemble={ensemble_id}"
    )

    def one_setting(t: int) -> Tuple[LocalUnitarySetting, np.ndarray]:
        unitary_seq, shot_seq = children[t].spawn(2)
        setting = draw(np.random.default_rng(unitary_seq))
        rotated = apply_product_unitary(state, setting, conjugate_mask)
        outcomes = sample_outcomes(
            outcome_distribution(rotated), n_m, np.random.default_rng(shot_seq)
        )
        return setting, outcomes

    results = run_indexed(one_setting, n_u, threads)
    logger.debug(f"Sampled {n_u} settings for {protocol}")
    return MeasurementDataset(
        protocol=protocol,
        n_qubits=state.n_qubits,
        n_u=n_u,
        n_m=n_m,
        settings=tuple(s for s, _ in results),
        shots=np.stack([o for _, o in results]),
        state_label=state.label,
        seed=recorded_seed,
        ensemble_id=ensemble_id,
        partition_hint=partition_hint,
        conjugate_mask=conjugate_mask,
    )


def _per_qubit_ensemble(ensemble_id: str, protocol: str) -> None:
    if ensemble_id not in (CLIFFORD_1Q, HAAR_1Q, IDENTITY):
        raise ProtocolError(f"{protocol} needs a per-qubit ensemble, got {ensemble_id!r}")


def run_local_protocol(
    state: QuantumState,
    n_u: int,
    n_m: int,
    seed: SeedLike = 0,
    ensemble_id: str = CLIFFORD_1Q,
    threads: Optional[int] = None,
) -> MeasurementDataset:
    """Independent per-qubit random unitaries, N_M shots per setting"""
    _per_qubit_ensemble(ensemble_id, LOCAL_CRO)

    def draw(rng: np.random.Generator) -> LocalUnitarySetting:
        return sample_setting(state.n_qubits, ensemble_id, rng)

    return _execute(state, LOCAL_CRO, n_u, n_m, seed, ensemble_id, threads, draw)


def run_global_protocol(
    state: QuantumState,
    partition: Partition,
    n_u: int,
    n_m: int,
    seed: SeedLike = 0,
    threads: Optional[int] = None,
) -> MeasurementDataset:
    """One Haar unitary per party of ``partition``; the partition is recorded in the dataset"""
    n = state.n_qubits
    partition.check_within(n)
    if not partition.covers(n):
        raise ProtocolError(f"Partition {partition} must cover all {n} qubits")
    cap = get_settings().haar_party_qubits
    too_big = [g for g in partition.groups if len(g) > cap]
    if too_big:
        raise ProtocolError(f"Parties {too_big} exceed the {cap}-qubit Haar sampling cap")

    def draw(rng: np.random.Generator) -> LocalUnitarySetting:
        return sample_setting(n, HAAR_NQ, rng, groups=partition.groups)

    return _execute(
        state, GLOBAL_CRO, n_u, n_m, seed, HAAR_NQ, threads, draw, partition_hint=partition
    )


def run_mes_fidelity_protocol(
    state: QuantumState,
    n_u: int,
    n_m: int,
    seed: SeedLike = 0,
    ensemble_id: str = CLIFFORD_1Q,
    threads: Optional[int] = None,
) -> MeasurementDataset:
    """U on the first half and its entrywise conjugate on the second half"""
    _per_qubit_ensemble(ensemble_id, MES_FIDELITY)
    n = state.n_qubits
    if n % 2:
        raise ProtocolError(f"MES fidelity needs an even number of qubits, got {n}")
    half = n // 2

    def draw(rng: np.random.Generator) -> LocalUnitarySetting:
        side_a = sample_setting(half, ensemble_id, rng)
        if side_a.clifford_indices is not None:
            return LocalUnitarySetting(
                ensemble_id, n, clifford_indices=side_a.clifford_indices * 2
            )
        assert side_a.matrices is not None
        return LocalUnitarySetting(ensemble_id, n, matrices=side_a.matrices * 2)

    mask = (False,) * half + (True,) * half
    return _execute(state, MES_FIDELITY, n_u, n_m, seed, ensemble_id, threads, draw, mask)


def run_concurrence_protocol(
    state: QuantumState,
    n_u: int,
    n_m: int,
    seed: SeedLike = 0,
    ensemble_id: str = CLIFFORD_1Q,
    threads: Optional[int] = None,
) -> MeasurementDataset:
    _per_qubit_ensemble(ensemble_id, CONCURRENCE)
    if state.purity() < 1.0 - PURE_TOL:
        raise ProtocolError(f"Concurrence needs a pure state, purity is {state.purity():.6f}")

    def draw(rng: np.random.Generator) -> LocalUnitarySetting:
        return sample_setting(state.n_qubits, ensemble_id, rng)

    return _execute(state, CONCURRENCE, n_u, n_m, seed, ensemble_id, threads, draw)


def run_protocol(
    protocol: str,
    state: QuantumState,
    n_u: int,
    n_m: int,
    seed: SeedLike = 0,
    partition: Optional[Partition] = None,
    ensemble_id: str = CLIFFORD_1Q,
    threads: Optional[int] = None,
) -> MeasurementDataset:
    """Dispatch by protocol name"""
    if protocol == LOCAL_CRO:
        return run_local_protocol(state, n_u, n_m, seed, ensemble_id, threads)
    if protocol == GLOBAL_CRO:
        if partition is None:
            raise ProtocolError("The global protocol needs a partition")
        return run_global_protocol(state, partition, n_u, n_m, seed, threads)
    if protocol == MES_FIDELITY:
        return run_mes_fidelity_protocol(state, n_u, n_m, seed, ensemble_id, threads)
    if protocol == CONCURRENCE:
        return run_concurrence_protocol(state, n_u, n_m, seed, ensemble_id, threads)
    raise ProtocolError(f"Unknown protocol {protocol!r}; choose from {', '.join(PROTOCOLS)}")
