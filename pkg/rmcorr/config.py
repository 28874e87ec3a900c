"""
Runtime configuration read from the environment (and an optional .env file).
"""

import os
import logging
from dataclasses import dataclass
from functools import lru_cache

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {name}={raw!r}, using {default}")
        return default


@dataclass(frozen=True)
class Settings:
    """Simulation caps and execution defaults"""

    max_pure_qubits: int = 22
    max_density_qubits: int = 12
    permutation_cap: int = 8192
    enumeration_cap: int = 500_000
    haar_party_qubits: int = 5
    threads: int = 1
    log_level: str = "INFO"


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Read settings once; call ``get_settings.cache_clear()`` after changing the environment"""
    return Settings(
        max_pure_qubits=_int_env("RMCORR_MAX_PURE_QUBITS", 22),
        max_density_qubits=_int_env("RMCORR_MAX_DENSITY_QUBITS", 12),
        permutation_cap=_int_env("RMCORR_PERMUTATION_CAP", 8192),
        enumeration_cap=_int_env("RMCORR_ENUMERATION_CAP", 500_000),
        haar_party_qubits=_int_env("RMCORR_HAAR_PARTY_QUBITS", 5),
        threads=max(1, _int_env("RMCORR_THREADS", 1)),
        log_level=os.getenv("RMCORR_LOG_LEVEL", "INFO").upper(),
    )
