"""
Runtime settings loaded from the environment (and a local .env file).
"""

import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


@dataclass(frozen=True)
class Settings:
    """Tunable knobs; anything fixed by a file format lives as a module constant instead."""

    lut_range: int = 64
    cdf_max: int = 4096
    seed: int = 0
    threads: int = 1
    corpus_size: int = 100
    kernel: str = "vectorized"
    log_level: str = "INFO"
    cache_dir: Path = Path("data/cache")

    def override(self, **kwargs) -> "Settings":
        """Return a copy with every non-None keyword applied (CLI flags win over env)."""
        updates = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **updates)


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or value == "":
        return default
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {value!r}")


def get_settings(env_file: Optional[Path] = None) -> Settings:
    """
    Build settings from DLIC_* environment variables.

    Args:
        env_file: Optional extra .env file to load before reading

    Returns:
        Settings instance
    """
    if env_file is not None:
        load_dotenv(env_file, override=True)

    kernel = os.getenv("DLIC_KERNEL", "vectorized")
    if kernel not in ("vectorized", "reference"):
        raise ValueError(f"DLIC_KERNEL must be 'vectorized' or 'reference', got {kernel!r}")

    return Settings(
        lut_range=_env_int("DLIC_LUT_RANGE", 64),
        cdf_max=_env_int("DLIC_CDF_MAX", 4096),
        seed=_env_int("DLIC_SEED", 0),
        threads=_env_int("DLIC_THREADS", 1),
        corpus_size=_env_int("DLIC_CORPUS_SIZE", 100),
        kernel=kernel,
        log_level=os.getenv("DLIC_LOG_LEVEL", "INFO"),
        cache_dir=Path(os.getenv("DLIC_CACHE_DIR", "data/cache")),
    )
