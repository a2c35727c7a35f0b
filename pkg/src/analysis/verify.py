"""
Cross-configuration determinism check.

Every corpus item is encoded under each execution configuration and the
resulting bitstream is decoded under every configuration of the same
mode. The integer mode must give zero errors and byte-identical streams;
the float mode is reported next to it to show the mismatch the integer
path removes.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.errors import DeterminismViolationError
from src.coding.cdf_tables import LutSet
from src.coding.tensor_codec import encode_tensor, try_decode
from src.data.formats import bitstream_from_bytes, bitstream_to_bytes
from src.engine.graph import LayerGraph

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["mode", "encode", "decode", "errors", "total", "error_rate", "byte_identical"]


@dataclass(frozen=True)
class ExecConfig:
    """One execution configuration: parameter source, kernel, thread count, float dtype."""

    name: str
    mode: str = "int"
    kernel: str = "vectorized"
    threads: int = 1
    dtype: str = "float64"

    def coding_kwargs(self) -> dict:
        return {"mode": self.mode, "kernel": self.kernel, "dtype": np.dtype(self.dtype).type}


def default_configs(threads: Sequence[int] = (1, 4), float_mode: bool = True) -> List[ExecConfig]:
    """Integer configs over thread counts x kernels, plus float64 / float32 float configs."""
    configs = [
        ExecConfig(name=f"int/{kernel}/t{t}", kernel=kernel, threads=t)
        for kernel in ("vectorized", "reference")
        for t in threads
    ]
    if float_mode:
        configs += [
            ExecConfig(name="float/float64", mode="float", dtype="float64"),
            ExecConfig(name="float/float32", mode="float", dtype="float32"),
        ]
    return configs


def _map(config: ExecConfig, func, items):
    if config.threads <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        return list(pool.map(func, items))


def encode_corpus(graph: LayerGraph, luts: LutSet, corpus, config: ExecConfig) -> List[bytes]:
    def encode(item):
        z_hat, y_hat = item
        return bitstream_to_bytes(encode_tensor(graph, luts, z_hat, y_hat, **config.coding_kwargs()))

    return _map(config, encode, corpus)


def decode_errors(graph: LayerGraph, luts: LutSet, corpus, streams: Sequence[bytes],
                  config: ExecConfig) -> List[bool]:
    """One flag per item: True when decoding failed or returned different symbols."""
    def decode(pair):
        (z_hat, y_hat), data = pair
        result = try_decode(graph, luts, bitstream_from_bytes(data), **config.coding_kwargs())
        if result is None:
            return True
        return not (np.array_equal(result[0], z_hat) and np.array_equal(result[1], y_hat))

    return _map(config, decode, list(zip(corpus, streams)))


def verify(
    graph: LayerGraph,
    luts: LutSet,
    corpus: Sequence[Tuple[np.ndarray, np.ndarray]],
    configs: Optional[Sequence[ExecConfig]] = None,
    strict: bool = True,
) -> pd.DataFrame:
    """
    Encode on config A, decode on config B, for every pair within a mode.

    Args:
        graph: Quantized LayerGraph
        luts: CDF table set
        corpus: (z_hat, y_hat) pairs
        configs: Execution configurations (default_configs() when omitted)
        strict: Raise DeterminismViolationError when an integer-mode row fails

    Returns:
        DataFrame with one row per (encode, decode) pair
    """
    configs = list(configs) if configs is not None else default_configs()
    corpus = list(corpus)
    logger.info(f"Verifying {len(corpus)} tensors over {len(configs)} configurations")

    streams: Dict[str, List[bytes]] = {}
    for config in configs:
        streams[config.name] = encode_corpus(graph, luts, corpus, config)
        logger.info(f"Encoded corpus under {config.name}")

    # identical streams decode identically, so each (payload, decoder) runs once
    decoded: Dict[Tuple[Tuple[bytes, ...], str], List[bool]] = {}
    rows = []
    for enc in configs:
        reference = next(c for c in configs if c.mode == enc.mode)
        identical = streams[enc.name] == streams[reference.name]
        for dec in configs:
            if dec.mode != enc.mode:
                continue
            key = (tuple(streams[enc.name]), dec.name)
            if key not in decoded:
                decoded[key] = decode_errors(graph, luts, corpus, streams[enc.name], dec)
            errors = int(sum(decoded[key]))
            rows.append({
                "mode": enc.mode,
                "encode": enc.name,
                "decode": dec.name,
                "errors": errors,
                "total": len(corpus),
                "error_rate": errors / len(corpus) if corpus else 0.0,
                "byte_identical": bool(identical),
            })

    report = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    if strict:
        check_determinism(report)
    return report


def check_determinism(report: pd.DataFrame):
    """Raise when any integer-mode row has decode errors or diverging bitstreams."""
    int_rows = report[report["mode"] == "int"]
    failed = int_rows[(int_rows["errors"] > 0) | (~int_rows["byte_identical"])]
    if not failed.empty:
        pairs = ", ".join(f"{r.encode}->{r.decode}" for r in failed.itertuples())
        raise DeterminismViolationError(f"integer coding diverged for {pairs}")


def summarize(report: pd.DataFrame) -> pd.DataFrame:
    """Error counts per mode in the 'errors/total (rate)' form."""
    grouped = report.groupby("mode").agg(errors=("errors", "sum"), total=("total", "sum"),
                                         pairs=("encode", "size"))
    grouped["error_rate"] = grouped["errors"] / grouped["total"]
    grouped["result"] = [f"{e}/{t} ({100 * r:.1f}%)" for e, t, r in
                         zip(grouped["errors"], grouped["total"], grouped["error_rate"])]
    return grouped
