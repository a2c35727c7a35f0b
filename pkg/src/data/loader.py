"""
Data loader module for calibration data, symbol corpora and build artifacts.
Handles loading from disk and caching of built tables.
"""

import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from src.errors import FormatError, IngestError
from src.coding.cdf_tables import LutSet, build_all_luts
from src.data.formats import load_luts, save_luts
from src.data.sources import get_data_source
from src.quant.tensors import FloatTensor

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
PathLike = Union[str, Path]


def ingest_calibration(path: PathLike) -> List[FloatTensor]:
    """
    Load a calibration directory.

    The directory holds raw little-endian float32 tensors (*.f32) and a
    manifest.json mapping each file name to its shape.

    Args:
        path: Calibration directory

    Returns:
        FloatTensors in lexicographic filename order
    """
    path = Path(path)
    if not path.is_dir():
        raise IngestError(f"calibration directory not found: {path}")
    files = sorted(path.glob("*.f32"))
    if not files:
        raise IngestError(f"no calibration tensors in {path}")

    manifest_file = path / MANIFEST_NAME
    if not manifest_file.exists():
        raise IngestError(f"{path} has no {MANIFEST_NAME}")
    try:
        shapes = json.loads(manifest_file.read_text())
    except json.JSONDecodeError as e:
        raise IngestError(f"{manifest_file} is not valid JSON: {e}")

    batch = []
    for file in files:
        if file.name not in shapes:
            raise IngestError(f"{file.name} is missing from {MANIFEST_NAME}")
        shape = tuple(int(d) for d in shapes[file.name])
        values = np.fromfile(file, dtype="<f4")
        if values.size != int(np.prod(shape)):
            raise IngestError(f"{file.name}: {values.size} values do not fill shape {shape}")
        batch.append(FloatTensor.from_flat(shape, values))
    logger.info(f"Ingested {len(batch)} calibration tensors from {path}")
    return batch


def write_calibration_dir(path: PathLike, tensors: Iterable[FloatTensor]) -> Path:
    """Write tensors as sample_0000.f32, ... plus the shape manifest."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    shapes = {}
    for i, tensor in enumerate(tensors):
        name = f"sample_{i:04d}.f32"
        tensor.data.astype("<f4").tofile(path / name)
        shapes[name] = list(tensor.shape)
    (path / MANIFEST_NAME).write_text(json.dumps(shapes, indent=2, sort_keys=True))
    return path


def stack_symbols(z_hat: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    """(C_z + C_y, H, W) int32, the on-disk symbol layout."""
    return np.concatenate([np.asarray(z_hat), np.asarray(y_hat)], axis=0).astype(np.int32)


def save_symbols(path: PathLike, z_hat: np.ndarray, y_hat: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, stack_symbols(z_hat, y_hat))
    return path


def load_symbols(path: PathLike, z_channels: int) -> Tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"symbol file not found: {path}")
    stacked = np.load(path)
    if stacked.ndim != 3 or stacked.shape[0] <= z_channels or not np.issubdtype(stacked.dtype, np.integer):
        raise IngestError(f"{path.name}: expected a stacked integer tensor, got {stacked.dtype} {stacked.shape}")
    return stacked[:z_channels], stacked[z_channels:]


class DataLoader:
    """Main data loader class that handles corpora, reports and cached tables."""

    def __init__(self, cache_dir: Optional[Path] = None):
        """
        Initialize data loader.

        Args:
            cache_dir: Directory for caching built LUT files
        """
        self.cache_dir = Path(cache_dir) if cache_dir is not None else Path("data/cache")
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def load_luts(self, lut_range: int, cdf_max: int, use_cache: bool = True) -> LutSet:
        """
        Build the CDF tables, or load them from the cache.

        Args:
            lut_range: R
            cdf_max: Table frequency total
            use_cache: Whether to use a cached LUT file if available

        Returns:
            LutSet
        """
        cache_file = self.cache_dir / f"luts_R{lut_range}_C{cdf_max}.dlut"

        if use_cache and cache_file.exists():
            try:
                logger.info(f"Loading cached tables from {cache_file}")
                return load_luts(cache_file)
            except FormatError as e:
                logger.warning(f"Ignoring unreadable cache {cache_file}: {e}")

        luts = build_all_luts(lut_range, cdf_max)
        if use_cache:
            save_luts(luts, cache_file)
            logger.info(f"Cached tables to {cache_file}")
        return luts

    def load_corpus(self, source: str = "sample", count: Optional[int] = None, **kwargs):
        """
        Generic corpus loading method.

        Args:
            source: 'sample' (synthetic latents) or 'dir' (a directory of .npy files)
            count: Number of tensors
            **kwargs: Additional arguments for the specific source

        Returns:
            List of (z_hat, y_hat) pairs
        """
        if source == "sample" and count is None:
            raise ValueError("sample corpora need a count")
        return get_data_source(source, **kwargs).fetch(count)

    def save_report(self, report: pd.DataFrame, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        report.to_parquet(path, index=False)
        logger.info(f"Saved calibration report to {path}")
        return path

    def load_report(self, path: PathLike) -> pd.DataFrame:
        path = Path(path)
        if not path.exists():
            raise IngestError(f"calibration report not found: {path}")
        report = pd.read_parquet(path)
        missing = {"layer", "min", "max"} - set(report.columns)
        if missing:
            raise IngestError(f"calibration report lacks columns {sorted(missing)}")
        return report

    def validate_corpus(self, samples, z_shape, y_shape) -> dict:
        """
        Validate a symbol corpus against the model geometry.

        Returns:
            Dictionary with validation results
        """
        results = {"valid": True, "issues": [], "stats": {}}
        extremes = []
        for i, (z_hat, y_hat) in enumerate(samples):
            if tuple(z_hat.shape) != tuple(z_shape) or tuple(y_hat.shape) != tuple(y_shape):
                results["valid"] = False
                results["issues"].append(f"item {i}: shapes {z_hat.shape}/{y_hat.shape}")
                continue
            extremes.append((int(y_hat.min()), int(y_hat.max())))
        if extremes:
            results["stats"] = {
                "count": len(extremes),
                "min_symbol": min(lo for lo, _ in extremes),
                "max_symbol": max(hi for _, hi in extremes),
            }
        return results
