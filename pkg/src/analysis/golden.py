"""
Golden vectors: a small model, table file and bitstream kept on disk.

A golden directory holds
    model.dlmf      quantized toy model
    tables.dlut     CDF tables (R = 8)
    symbols.npy     one stacked symbol tensor, escapes included
    tensor.dlic     that tensor coded with the model and tables
    calib/          drift inputs
    drift.csv       float vs integer drift measured on calib/

compare_golden() rebuilds the tables, re-encodes the symbols and re-measures
the drift on the current machine and reports every mismatch.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from src.coding.cdf_tables import build_all_luts
from src.coding.tensor_codec import decode_tensor, encode_tensor
from src.data.formats import (
    bitstream_from_bytes,
    bitstream_to_bytes,
    luts_to_bytes,
    model_from_bytes,
    model_to_bytes,
)
from src.data.loader import ingest_calibration, load_symbols, save_symbols, write_calibration_dir
from src.data.sources import SampleLatentSource
from src.engine.pipeline import collect_activation_ranges, measure_drift, quantize_graph
from src.engine.toy import random_float_model

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

GOLDEN_FILES = ("model.dlmf", "tables.dlut", "symbols.npy", "tensor.dlic", "drift.csv")
GOLDEN_RANGE = 8
GOLDEN_CDF_MAX = 4096
DRIFT_COLUMNS = ["p50", "p99", "max", "max_steps"]


def write_golden(directory: PathLike, seed: int = 0) -> Path:
    """
    Build and store a golden case.

    Args:
        directory: Target directory (created if missing)
        seed: Seed for the toy model and its data

    Returns:
        The directory
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    model = random_float_model(seed=seed, height=4, width=4)
    source = SampleLatentSource(model.hyper_shape, model.latent_shape, seed=seed,
                                hyper_sigma_indices=model.hyper_sigma_indices, spike_prob=0.05)
    calib = source.fetch_calibration(4)
    graph = quantize_graph(model, collect_activation_ranges(model, calib))
    luts = build_all_luts(GOLDEN_RANGE, GOLDEN_CDF_MAX)
    z_hat, y_hat = source.fetch(1)[0]
    stream = encode_tensor(graph, luts, z_hat, y_hat)

    (directory / "model.dlmf").write_bytes(model_to_bytes(graph))
    (directory / "tables.dlut").write_bytes(luts_to_bytes(luts))
    save_symbols(directory / "symbols.npy", z_hat, y_hat)
    (directory / "tensor.dlic").write_bytes(bitstream_to_bytes(stream))
    write_calibration_dir(directory / "calib", calib)
    measure_drift(graph, calib).to_csv(directory / "drift.csv")
    logger.info(f"Wrote golden case to {directory} ({stream.stats.escapes} escapes)")
    return directory


def has_golden(directory: PathLike) -> bool:
    directory = Path(directory)
    return all((directory / name).exists() for name in GOLDEN_FILES) and (directory / "calib").is_dir()


def compare_golden(directory: PathLike, drift_tolerance: float = 1e-6) -> dict:
    """
    Check the current build against a stored golden case.

    Args:
        directory: Golden directory written by write_golden
        drift_tolerance: Largest accepted absolute change of a drift statistic

    Returns:
        Dictionary with validation results
    """
    directory = Path(directory)
    results = {"valid": True, "issues": [], "stats": {}}

    def fail(message):
        results["valid"] = False
        results["issues"].append(message)
        logger.warning(f"Golden mismatch: {message}")

    model_bytes = (directory / "model.dlmf").read_bytes()
    graph = model_from_bytes(model_bytes)
    if model_to_bytes(graph) != model_bytes:
        fail("model.dlmf does not re-serialize byte for byte")

    table_bytes = (directory / "tables.dlut").read_bytes()
    luts = build_all_luts(GOLDEN_RANGE, GOLDEN_CDF_MAX)
    if luts_to_bytes(luts) != table_bytes:
        fail("rebuilt CDF tables differ from tables.dlut")

    z_hat, y_hat = load_symbols(directory / "symbols.npy", graph.z_channels)
    stream_bytes = (directory / "tensor.dlic").read_bytes()
    for kernel in ("vectorized", "reference"):
        if bitstream_to_bytes(encode_tensor(graph, luts, z_hat, y_hat, kernel=kernel)) != stream_bytes:
            fail(f"re-encoding symbols.npy with the {kernel} kernel differs from tensor.dlic")
    z_out, y_out = decode_tensor(graph, luts, bitstream_from_bytes(stream_bytes))
    if not (np.array_equal(z_out, z_hat) and np.array_equal(y_out, y_hat)):
        fail("tensor.dlic does not decode to symbols.npy")

    baseline = pd.read_csv(directory / "drift.csv", index_col="param")
    drift = measure_drift(graph, ingest_calibration(directory / "calib"))
    change = (drift[DRIFT_COLUMNS] - baseline.loc[drift.index, DRIFT_COLUMNS]).abs()
    if (change > drift_tolerance).any().any():
        fail(f"drift moved from the stored baseline by up to {float(change.max().max()):.3g}")

    results["stats"] = {
        "stream_bytes": len(stream_bytes),
        "symbols": int(z_hat.size + y_hat.size),
        "max_drift_change": float(change.max().max()),
    }
    return results
