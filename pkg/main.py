#!/usr/bin/env python3
"""
Deterministic Entropy Coding Engine - Command Line Entry Point

Desk-scale pipeline:
    make-model -> calibrate -> quantize -> build-luts -> encode / decode / verify

Run without arguments for usage.
"""

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

# Add src to path
sys.path.append(str(Path(__file__).parent))

from src.config import get_settings
from src.errors import DeterminismViolationError, DlicError, IngestError
from src.analysis.bench import bench_discretize, plot_latency
from src.analysis.golden import compare_golden, has_golden, write_golden
from src.analysis.verify import check_determinism, default_configs, summarize, verify
from src.coding.discretize import level_table, plot_levels
from src.coding.tensor_codec import decode_tensor, encode_tensor
from src.data.formats import (
    load_bitstream,
    load_luts,
    load_model,
    save_bitstream,
    save_luts,
    save_model,
)
from src.data.loader import DataLoader, ingest_calibration, load_symbols, save_symbols, write_calibration_dir
from src.data.sources import SampleLatentSource
from src.engine.pipeline import collect_activation_ranges, measure_drift, quantize_graph
from src.engine.toy import random_float_model
from src.coding.cdf_tables import build_all_luts

logger = logging.getLogger(__name__)


def print_header(text):
    """Print formatted header."""
    print("\n" + "=" * 70)
    print(f" {text}")
    print("=" * 70)


def print_section(text):
    """Print formatted section."""
    print(f"\n{text}")
    print("-" * len(text))


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="RNG seed (DLIC_SEED)")
    common.add_argument("--corpus-size", type=int, help="Number of corpus tensors (DLIC_CORPUS_SIZE)")
    common.add_argument("--R", dest="lut_range", type=int, help="CDF table half-range (DLIC_LUT_RANGE)")
    common.add_argument("--cdf-max", type=int, help="CDF table total (DLIC_CDF_MAX)")
    common.add_argument("--threads", type=int, help="Worker threads (DLIC_THREADS)")
    common.add_argument("--kernel", choices=("vectorized", "reference"), help="Integer kernel (DLIC_KERNEL)")
    common.add_argument("--log-level", help="Logging level (DLIC_LOG_LEVEL)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="main.py", description="Integer-only entropy model inference and coding")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)

    cmd = commands.add_parser("make-model", parents=[common], help="Write the toy float model and calibration data")
    cmd.add_argument("--out", default="artifacts/float_model.dlmf")
    cmd.add_argument("--calib-dir", default="artifacts/calib")
    cmd.add_argument("--calib-count", type=int, default=16)

    cmd = commands.add_parser("calibrate", parents=[common], help="Collect activation ranges")
    cmd.add_argument("--model", required=True, help="Float model file")
    cmd.add_argument("--calib", required=True, help="Calibration directory")
    cmd.add_argument("--out", default="artifacts/calibration.parquet")

    cmd = commands.add_parser("quantize", parents=[common], help="Quantize a float model from a report")
    cmd.add_argument("--model", required=True, help="Float model file")
    cmd.add_argument("--report", required=True, help="Calibration report (parquet)")
    cmd.add_argument("--out", default="artifacts/model.dlmf")
    cmd.add_argument("--drift-calib", help="Calibration directory for a drift table")

    cmd = commands.add_parser("build-luts", parents=[common], help="Build the CDF table file")
    cmd.add_argument("--out", default="artifacts/tables.dlut")

    cmd = commands.add_parser("make-corpus", parents=[common], help="Write toy symbol tensors")
    cmd.add_argument("--model", required=True)
    cmd.add_argument("--out", default="artifacts/corpus")

    cmd = commands.add_parser("encode", parents=[common], help="Code one symbol tensor")
    cmd.add_argument("--model", required=True)
    cmd.add_argument("--luts", help="Table file (built and cached when omitted)")
    cmd.add_argument("--symbols", required=True, help="Stacked .npy symbol tensor")
    cmd.add_argument("--out", required=True)

    cmd = commands.add_parser("decode", parents=[common], help="Decode one bitstream")
    cmd.add_argument("--model", required=True)
    cmd.add_argument("--luts", help="Table file (built and cached when omitted)")
    cmd.add_argument("--input", required=True)
    cmd.add_argument("--out", required=True)

    cmd = commands.add_parser("verify", parents=[common], help="Cross-configuration determinism report")
    cmd.add_argument("--model", required=True)
    cmd.add_argument("--luts", help="Table file (built and cached when omitted)")
    cmd.add_argument("--corpus", help="Directory of .npy tensors (synthetic corpus when omitted)")
    cmd.add_argument("--no-float", action="store_true", help="Skip the float-mode rows")
    cmd.add_argument("--out", help="Write the report as CSV")

    cmd = commands.add_parser("bench-discretize", parents=[common], help="Discretization latency table")
    cmd.add_argument("--n", type=int, default=1_000_000)
    cmd.add_argument("--plot", help="Write a latency bar chart")

    cmd = commands.add_parser("golden", parents=[common], help="Write or check the golden vectors")
    cmd.add_argument("--dir", default="data/golden")
    cmd.add_argument("--write", action="store_true", help="Record a new golden case instead of checking")

    cmd = commands.add_parser("plot-levels", parents=[common], help="Plot the 65 sigma levels")
    cmd.add_argument("--out", default="artifacts/sigma_levels.png")
    return parser


def _luts(args, settings):
    if args.luts:
        luts = load_luts(args.luts)
        if luts.lut_range != settings.lut_range:
            logger.info(f"Using R={luts.lut_range} from {args.luts}")
        return luts
    return DataLoader(settings.cache_dir).load_luts(settings.lut_range, settings.cdf_max)


def cmd_make_model(args, settings):
    print_header("TOY FLOAT MODEL")
    model = random_float_model(seed=settings.seed)
    save_model(model, args.out)
    source = SampleLatentSource(model.hyper_shape, model.latent_shape, seed=settings.seed,
                                hyper_sigma_indices=model.hyper_sigma_indices)
    write_calibration_dir(args.calib_dir, source.fetch_calibration(args.calib_count))
    print(f"✓ Float model: {args.out}")
    print(f"  Latent {model.latent_shape}, hyper {model.hyper_shape}, K={model.num_components}")
    print(f"✓ Calibration data: {args.calib_dir} ({args.calib_count} tensors)")


def cmd_calibrate(args, settings):
    print_header("CALIBRATION")
    model = load_model(args.model)
    batch = ingest_calibration(args.calib)
    report = collect_activation_ranges(model, batch)
    DataLoader(settings.cache_dir).save_report(report, args.out)
    print(report.to_string(index=False))
    print(f"\n✓ Report: {args.out}")


def cmd_quantize(args, settings):
    print_header("POST-TRAINING QUANTIZATION")
    model = load_model(args.model)
    report = DataLoader(settings.cache_dir).load_report(args.report)
    graph = quantize_graph(model, report)
    save_model(graph, args.out)
    print(f"✓ Quantized {len(graph.layers)} layers -> {args.out}")
    if args.drift_calib:
        print_section("Float vs integer parameter drift")
        drift = measure_drift(graph, ingest_calibration(args.drift_calib), settings.kernel)
        print(drift.to_string())


def cmd_build_luts(args, settings):
    print_header("CDF TABLES")
    luts = build_all_luts(settings.lut_range, settings.cdf_max)
    save_luts(luts, args.out)
    print(f"✓ {len(luts)} tables, R={luts.lut_range}, CDF_max={luts.cdf_max} -> {args.out}")


def cmd_make_corpus(args, settings):
    print_header("SYMBOL CORPUS")
    graph = load_model(args.model)
    source = SampleLatentSource(graph.hyper_shape, graph.latent_shape, seed=settings.seed,
                                hyper_sigma_indices=graph.hyper_sigma_indices)
    out = Path(args.out)
    for i, (z_hat, y_hat) in enumerate(source.fetch(settings.corpus_size)):
        save_symbols(out / f"tensor_{i:04d}.npy", z_hat, y_hat)
    print(f"✓ {settings.corpus_size} tensors -> {out}")


def cmd_encode(args, settings):
    graph = load_model(args.model)
    luts = _luts(args, settings)
    z_hat, y_hat = load_symbols(args.symbols, graph.z_channels)
    stream = encode_tensor(graph, luts, z_hat, y_hat, kernel=settings.kernel)
    save_bitstream(stream, args.out)
    stats = stream.stats
    print(f"✓ {stats.symbols} symbols -> {args.out}")
    print(f"  hyper {stats.hyper_bits} bits, main {stats.main_bits} bits, escape {stats.escape_bits} bits")
    print(f"  escapes: {stats.escapes} ({100 * stats.escape_rate:.3f}%)")
    print(f"  main stream / cross-entropy: {stats.main_bits / max(stats.cross_entropy_bits, 1.0):.4f}")


def cmd_decode(args, settings):
    graph = load_model(args.model)
    luts = _luts(args, settings)
    stream = load_bitstream(args.input)
    z_hat, y_hat = decode_tensor(graph, luts, stream, kernel=settings.kernel)
    save_symbols(args.out, z_hat, y_hat)
    print(f"✓ Decoded {z_hat.size + y_hat.size} symbols -> {args.out}")


def cmd_verify(args, settings):
    print_header("DETERMINISM VERIFICATION")
    graph = load_model(args.model)
    luts = _luts(args, settings)
    loader = DataLoader(settings.cache_dir)
    if args.corpus:
        corpus = loader.load_corpus("dir", settings.corpus_size, path=args.corpus, z_channels=graph.z_channels)
    else:
        corpus = loader.load_corpus("sample", settings.corpus_size, z_shape=graph.hyper_shape,
                                    y_shape=graph.latent_shape, seed=settings.seed,
                                    hyper_sigma_indices=graph.hyper_sigma_indices)
    checked = loader.validate_corpus(corpus, graph.hyper_shape, graph.latent_shape)
    if not checked["valid"]:
        raise IngestError(f"corpus does not match the model: {checked['issues'][:3]}")
    threads = (1, settings.threads if settings.threads > 1 else 4)
    report = verify(graph, luts, corpus, default_configs(threads, float_mode=not args.no_float), strict=False)

    print_section("Encode config -> decode config")
    with pd.option_context("display.width", 120):
        print(report.to_string(index=False))
    print_section("Decoding error rates")
    print(summarize(report)[["result", "pairs"]].to_string())
    if args.out:
        report.to_csv(args.out, index=False)
    check_determinism(report)
    print("\n✓ Integer coding is bit-exact across all configurations")


def cmd_bench(args, settings):
    print_header("DISCRETIZATION LATENCY")
    report = bench_discretize(args.n, seed=settings.seed)
    print(report.to_string(index=False))
    if args.plot:
        plot_latency(report, args.plot)
        print(f"\n✓ Plot: {args.plot}")


def cmd_golden(args, settings):
    print_header("GOLDEN VECTORS")
    if args.write or not has_golden(args.dir):
        write_golden(args.dir, seed=settings.seed)
        print(f"✓ Recorded golden case in {args.dir}")
        return
    result = compare_golden(args.dir)
    for issue in result["issues"]:
        print(f"✗ {issue}")
    if not result["valid"]:
        raise DeterminismViolationError(f"{len(result['issues'])} golden mismatches in {args.dir}")
    print(f"✓ Golden case in {args.dir} reproduced: {result['stats']}")


def cmd_plot_levels(args, settings):
    path = plot_levels(args.out)
    print(level_table().to_string(index=False))
    print(f"\n✓ Plot: {path}")


COMMANDS = {
    "make-model": cmd_make_model,
    "calibrate": cmd_calibrate,
    "quantize": cmd_quantize,
    "build-luts": cmd_build_luts,
    "make-corpus": cmd_make_corpus,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "verify": cmd_verify,
    "bench-discretize": cmd_bench,
    "plot-levels": cmd_plot_levels,
    "golden": cmd_golden,
}


def main(argv=None) -> int:
    """Main application entry point."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage()
        return 1
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage()
        return 1

    try:
        settings = get_settings().override(
            seed=args.seed,
            corpus_size=args.corpus_size,
            lut_range=args.lut_range,
            cdf_max=args.cdf_max,
            threads=args.threads,
            kernel=args.kernel,
            log_level=args.log_level,
        )
    except ValueError as e:
        print(f"✗ {e}", file=sys.stderr)
        return 1
    logging.basicConfig(level=getattr(logging, settings.log_level.upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        COMMANDS[args.command](args, settings)
    except DlicError as e:
        print(f"✗ {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
