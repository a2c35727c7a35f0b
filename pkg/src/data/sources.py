"""
Symbol-tensor sources for calibration, verification and benchmarks.
Provides synthetic desk-scale latents and access to data written to disk.
"""

import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from src.errors import IngestError
from src.coding.cdf_tables import DEFAULT_RANGE
from src.coding.discretize import sigma_reconstruct
from src.quant.quantizers import round_half_away
from src.quant.tensors import FloatTensor

logger = logging.getLogger(__name__)

Sample = Tuple[np.ndarray, np.ndarray]


class DataSource:
    """Base class for symbol-tensor sources."""

    def fetch(self, count: int) -> List[Sample]:
        """Fetch `count` (z_hat, y_hat) pairs."""
        raise NotImplementedError


class SampleLatentSource(DataSource):
    """
    Generate synthetic latents for testing.
    Smooth spatial structure plus Laplacian noise, with occasional spikes
    far outside the tables' range to exercise the escape path.
    """

    def __init__(
        self,
        z_shape: Tuple[int, int, int],
        y_shape: Tuple[int, int, int],
        seed: int = 0,
        hyper_sigma_indices: Optional[Tuple[int, ...]] = None,
        scale: float = 2.0,
        spike_prob: float = 0.001,
        spike_offset: int = DEFAULT_RANGE,
    ):
        self.z_shape = tuple(z_shape)
        self.y_shape = tuple(y_shape)
        self.seed = seed
        self.hyper_sigma_indices = hyper_sigma_indices
        self.scale = scale
        self.spike_prob = spike_prob
        self.spike_offset = spike_offset

    def _latents(self, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        channels, height, width = self.y_shape
        rows = np.arange(height)[:, None]
        cols = np.arange(width)[None, :]
        phase = rng.uniform(0, 2 * np.pi, size=(channels, 1, 1))
        pattern = 1.5 * np.sin(rows * 0.7 + phase) * np.cos(cols * 0.5 + phase)
        y = pattern + rng.laplace(0.0, self.scale, size=self.y_shape)

        # spikes well beyond the table range (rare extreme values)
        spikes = rng.random(self.y_shape) < self.spike_prob
        signs = rng.choice([-1, 1], size=self.y_shape)
        y[spikes] += (signs * rng.integers(self.spike_offset + 5, 4 * self.spike_offset,
                                           size=self.y_shape))[spikes]

        if self.hyper_sigma_indices is not None:
            sigmas = np.array([sigma_reconstruct(i) for i in self.hyper_sigma_indices])
        else:
            sigmas = np.full(self.z_shape[0], 1.0)
        z = rng.normal(0.0, 1.0, size=self.z_shape) * sigmas[:, None, None]
        return z, y

    def fetch(self, count: int) -> List[Sample]:
        rng = np.random.default_rng(self.seed)
        samples = []
        for _ in range(count):
            z, y = self._latents(rng)
            samples.append((round_half_away(z).astype(np.int32), round_half_away(y).astype(np.int32)))
        return samples

    def fetch_calibration(self, count: int) -> List[FloatTensor]:
        """Unrounded latents stacked as (C_z + C_y, H, W) float tensors."""
        rng = np.random.default_rng(self.seed + 1)
        tensors = []
        for _ in range(count):
            z, y = self._latents(rng)
            tensors.append(FloatTensor(np.concatenate([z, y], axis=0).astype(np.float32)))
        return tensors


class SymbolDirSource(DataSource):
    """Load stacked symbol tensors (*.npy, int32) from a directory, in filename order."""

    def __init__(self, path, z_channels: int):
        self.path = Path(path)
        self.z_channels = z_channels
        if not self.path.is_dir():
            raise IngestError(f"corpus directory not found: {path}")

    def files(self) -> List[Path]:
        return sorted(self.path.glob("*.npy"))

    def fetch(self, count: Optional[int] = None) -> List[Sample]:
        files = self.files()
        if not files:
            raise IngestError(f"no .npy symbol tensors in {self.path}")
        if count is not None:
            files = files[:count]
        samples = []
        for file in files:
            stacked = np.load(file)
            if stacked.ndim != 3 or stacked.shape[0] <= self.z_channels:
                raise IngestError(f"{file.name}: stacked symbol tensor has shape {stacked.shape}")
            samples.append((stacked[:self.z_channels], stacked[self.z_channels:]))
        return samples


def get_data_source(source_type: str, **kwargs) -> DataSource:
    """
    Factory function to create data source instances.

    Args:
        source_type: Type of data source ('sample', 'dir')
        **kwargs: Additional arguments for the specific data source

    Returns:
        DataSource instance
    """
    sources = {
        "sample": SampleLatentSource,
        "dir": SymbolDirSource,
    }

    if source_type not in sources:
        raise ValueError(f"Unknown source type: {source_type}. Choose from: {list(sources.keys())}")

    return sources[source_type](**kwargs)
