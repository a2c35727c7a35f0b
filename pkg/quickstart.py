#!/usr/bin/env python3
"""
Quick Start Script - Run the whole pipeline in one go!
Builds a toy model, quantizes it, codes a few tensors and checks determinism.
"""

import sys
import tempfile
from pathlib import Path
sys.path.append(str(Path(__file__).parent))

import numpy as np

from src.analysis.verify import default_configs, summarize, verify
from src.coding.tensor_codec import decode_tensor, encode_tensor
from src.data.loader import DataLoader
from src.data.sources import SampleLatentSource
from src.engine.pipeline import collect_activation_ranges, measure_drift, quantize_graph
from src.engine.toy import random_float_model


def main():
    print("🚀 DETERMINISTIC ENTROPY CODING - QUICK START")
    print("=" * 60)

    loader = DataLoader(Path(tempfile.gettempdir()) / "dlic_cache")

    # 1. Toy model and calibration data
    print("\n1️⃣  Building toy float model...")
    model = random_float_model(seed=0)
    source = SampleLatentSource(model.hyper_shape, model.latent_shape, seed=0,
                                hyper_sigma_indices=model.hyper_sigma_indices)
    calib = source.fetch_calibration(8)
    print(f"✅ Latent {model.latent_shape}, hyper {model.hyper_shape}, {len(model.layers)} layers")

    # 2. Post-training quantization
    print("\n2️⃣  Calibrating and quantizing...")
    report = collect_activation_ranges(model, calib)
    graph = quantize_graph(model, report)
    drift = measure_drift(graph, calib[:2])
    print(f"✅ Quantized; worst mu drift {drift.loc['mu', 'max_steps']:.1f} steps of 2^-6")

    # 3. CDF tables
    print("\n3️⃣  Loading CDF tables...")
    luts = loader.load_luts(64, 4096)
    print(f"✅ {len(luts)} tables of {2 * luts.lut_range + 2} entries")

    # 4. Lossless round trip
    print("\n4️⃣  Coding one tensor...")
    z_hat, y_hat = source.fetch(1)[0]
    stream = encode_tensor(graph, luts, z_hat, y_hat)
    z_out, y_out = decode_tensor(graph, luts, stream)
    stats = stream.stats
    ok = np.array_equal(z_out, z_hat) and np.array_equal(y_out, y_hat)
    print(f"{'✅' if ok else '❌'} Round trip {'exact' if ok else 'FAILED'}")
    print(f"   {stats.main_bits} main bits vs {stats.cross_entropy_bits:.0f} bits cross-entropy")
    print(f"   {stats.escapes} escapes among {stats.symbols} symbols")

    # 5. Determinism across configurations
    print("\n5️⃣  Cross-configuration check (8 tensors)...")
    result = verify(graph, luts, source.fetch(8), default_configs(), strict=False)
    print(summarize(result)[["result", "pairs"]].to_string())

    print("\n" + "=" * 60)
    print("✅ QUICK START COMPLETE!")
    print("=" * 60)
    print("\nNext: python main.py make-model, then calibrate / quantize / verify")


if __name__ == "__main__":
    main()
