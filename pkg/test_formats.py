"""
Tests for the on-disk formats, the data loader and the settings layer.
"""

import json
import struct
import sys
import zlib
from pathlib import Path
sys.path.append(str(Path(__file__).parent))

import numpy as np
import pandas as pd
import pytest

from src.config import Settings, get_settings
from src.errors import ChecksumError, FormatError, IngestError, StreamCorruptionError
from src.coding.tensor_codec import decode_tensor, encode_tensor
from src.data.formats import (
    bitstream_from_bytes,
    bitstream_to_bytes,
    load_luts,
    load_model,
    luts_from_bytes,
    luts_to_bytes,
    model_from_bytes,
    model_to_bytes,
    save_luts,
    save_model,
)
from src.data.loader import (
    DataLoader,
    ingest_calibration,
    load_symbols,
    save_symbols,
    write_calibration_dir,
)
from src.data.sources import SampleLatentSource, SymbolDirSource, get_data_source
from src.engine.graph import forward_full_int
from src.quant.tensors import FloatTensor


# Model container

def test_model_save_is_canonical(toy_graph, tmp_path):
    data = model_to_bytes(toy_graph)
    assert model_to_bytes(model_from_bytes(data)) == data
    path = save_model(toy_graph, tmp_path / "model.dlmf")
    assert path.read_bytes() == data


def test_loaded_model_runs_identically(toy_graph, toy_source, tmp_path):
    loaded = load_model(save_model(toy_graph, tmp_path / "model.dlmf"))
    z_hat, y_hat = toy_source.fetch(1)[0]
    assert forward_full_int(loaded, z_hat, y_hat).equals(forward_full_int(toy_graph, z_hat, y_hat))
    assert loaded.concat_spec == toy_graph.concat_spec


def test_float_model_round_trip(toy_model):
    loaded = model_from_bytes(model_to_bytes(toy_model))
    assert not loaded.is_quantized
    for a, b in zip(loaded.layers, toy_model.layers):
        assert np.array_equal(a.weight, b.weight)


def test_model_manifest_is_json(toy_graph):
    data = model_to_bytes(toy_graph)
    (length,) = np.frombuffer(data[5:9], dtype="<u4")
    manifest = json.loads(data[9:9 + int(length)])
    assert manifest["precision"] == "int"
    assert manifest["geometry"]["num_components"] == toy_graph.num_components
    assert [layer["name"] for layer in manifest["groups"]["context"]] == ["context.0"]


def test_model_checksum(toy_graph):
    data = bytearray(model_to_bytes(toy_graph))
    data[20] ^= 0xFF
    with pytest.raises(ChecksumError):
        model_from_bytes(bytes(data))


def test_model_magic_and_missing_file(tmp_path):
    with pytest.raises(FormatError):
        model_from_bytes(b"XXXX" + bytes(20))
    with pytest.raises(FormatError):
        load_model(tmp_path / "missing.dlmf")


def rewrite_manifest(data: bytes, edit) -> bytes:
    """Re-pack a model container after editing its manifest in place."""
    (length,) = struct.unpack_from("<I", data, 5)
    manifest = json.loads(data[9:9 + length])
    edit(manifest)
    body = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blobs = data[9 + length:-4]
    out = b"DLMF" + bytes([data[4]]) + struct.pack("<I", len(body)) + body + blobs
    return out + struct.pack("<I", zlib.crc32(out) & 0xFFFFFFFF)


def test_rewritten_manifest_still_loads(toy_graph):
    data = model_to_bytes(toy_graph)
    assert rewrite_manifest(data, lambda m: None) == data


@pytest.mark.parametrize("edit", [
    lambda m: m["geometry"].update(y_channels=m["geometry"]["y_channels"] + 1),
    lambda m: m["geometry"].update(num_components=9),
    lambda m: m["groups"]["context"][0].update(kind="deconv"),
    lambda m: m["groups"]["param_net"][0].update(kernel_size=[3, 3]),
    lambda m: m.update(hyper_sigma_indices=[70] * len(m["hyper_sigma_indices"])),
])
def test_invalid_manifest_is_a_format_error(toy_graph, edit):
    with pytest.raises(FormatError) as info:
        model_from_bytes(rewrite_manifest(model_to_bytes(toy_graph), edit))
    assert info.value.exit_code == 2


# LUT file

def test_lut_file_is_canonical(small_luts, tmp_path):
    data = luts_to_bytes(small_luts)
    loaded = luts_from_bytes(data)
    assert loaded == small_luts
    assert luts_to_bytes(loaded) == data
    assert load_luts(save_luts(small_luts, tmp_path / "t.dlut")) == small_luts


def test_lut_file_header(small_luts):
    data = luts_to_bytes(small_luts)
    assert data[:4] == b"DLUT"
    assert data[4] == 1
    assert int.from_bytes(data[5:7], "little") == 8
    assert int.from_bytes(data[7:9], "little") == 4096
    assert data[13:23] == b"scipy.ndtr"


def test_lut_file_errors(small_luts):
    data = luts_to_bytes(small_luts)
    corrupt = bytearray(data)
    corrupt[100] ^= 0x01
    with pytest.raises(ChecksumError):
        luts_from_bytes(bytes(corrupt))
    with pytest.raises(FormatError):
        luts_from_bytes(b"DLUT")
    with pytest.raises(FormatError):
        luts_from_bytes(b"NOPE" + data[4:])


# Bitstream container

@pytest.fixture
def coded(toy_graph, toy_source, luts):
    z_hat, y_hat = toy_source.fetch(1)[0]
    return z_hat, y_hat, encode_tensor(toy_graph, luts, z_hat, y_hat)


def test_bitstream_is_canonical(coded):
    _, _, stream = coded
    data = bitstream_to_bytes(stream)
    loaded = bitstream_from_bytes(data)
    assert loaded.same_payload(stream)
    assert bitstream_to_bytes(loaded) == data


def test_bitstream_decodes_after_reload(coded, toy_graph, luts):
    z_hat, y_hat, stream = coded
    loaded = bitstream_from_bytes(bitstream_to_bytes(stream))
    z_out, y_out = decode_tensor(toy_graph, luts, loaded)
    assert np.array_equal(z_out, z_hat) and np.array_equal(y_out, y_hat)


def test_bitstream_header_shapes(coded, toy_graph):
    data = bitstream_to_bytes(coded[2])
    assert data[:4] == b"DLIC"
    shapes = np.frombuffer(data[5:17], dtype="<u2").tolist()
    assert shapes == list(toy_graph.hyper_shape) + list(toy_graph.latent_shape)


def test_truncated_bitstream(coded):
    data = bitstream_to_bytes(coded[2])
    for cut in (10, len(data) // 2, len(data) - 1):
        with pytest.raises(StreamCorruptionError):
            bitstream_from_bytes(data[:cut])


def test_bitstream_trailing_bytes(coded):
    with pytest.raises(StreamCorruptionError):
        bitstream_from_bytes(bitstream_to_bytes(coded[2]) + b"\0")


def test_bitstream_version(coded):
    data = bytearray(bitstream_to_bytes(coded[2]))
    data[4] = 9
    with pytest.raises(FormatError):
        bitstream_from_bytes(bytes(data))


# Calibration ingestion

def test_ingest_round_trip_in_filename_order(tmp_path):
    tensors = [FloatTensor(np.full((2, 3, 3), i, dtype=np.float32)) for i in range(3)]
    write_calibration_dir(tmp_path, tensors)
    batch = ingest_calibration(tmp_path)
    assert [float(t.data[0, 0, 0]) for t in batch] == [0.0, 1.0, 2.0]
    assert batch[0].shape == (2, 3, 3)


def test_ingest_empty_or_missing_directory(tmp_path):
    with pytest.raises(IngestError):
        ingest_calibration(tmp_path)
    with pytest.raises(IngestError):
        ingest_calibration(tmp_path / "nowhere")


def test_ingest_shape_mismatch(tmp_path):
    write_calibration_dir(tmp_path, [FloatTensor(np.zeros((2, 2, 2), dtype=np.float32))])
    (tmp_path / "manifest.json").write_text(json.dumps({"sample_0000.f32": [2, 2, 3]}))
    with pytest.raises(IngestError):
        ingest_calibration(tmp_path)


def test_ingest_needs_manifest_entry(tmp_path):
    write_calibration_dir(tmp_path, [FloatTensor(np.zeros((2, 2, 2), dtype=np.float32))])
    np.zeros(8, dtype="<f4").tofile(tmp_path / "extra.f32")
    with pytest.raises(IngestError):
        ingest_calibration(tmp_path)


# Symbols and corpora

def test_symbols_round_trip(tmp_path):
    z = np.arange(18, dtype=np.int32).reshape(2, 3, 3)
    y = -np.arange(27, dtype=np.int32).reshape(3, 3, 3)
    z_out, y_out = load_symbols(save_symbols(tmp_path / "s.npy", z, y), 2)
    assert np.array_equal(z_out, z) and np.array_equal(y_out, y)


def test_symbol_dir_source(tmp_path, toy_source):
    samples = toy_source.fetch(3)
    for i, (z, y) in enumerate(samples):
        save_symbols(tmp_path / f"t{i}.npy", z, y)
    loaded = SymbolDirSource(tmp_path, z_channels=samples[0][0].shape[0]).fetch(2)
    assert len(loaded) == 2
    assert np.array_equal(loaded[1][1], samples[1][1])


def test_sample_source_is_seeded(toy_model):
    a = SampleLatentSource(toy_model.hyper_shape, toy_model.latent_shape, seed=4).fetch(2)
    b = SampleLatentSource(toy_model.hyper_shape, toy_model.latent_shape, seed=4).fetch(2)
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    assert a[0][1].dtype == np.int32


def test_sample_source_spikes_leave_the_window(toy_model):
    source = SampleLatentSource(toy_model.hyper_shape, toy_model.latent_shape, seed=0, spike_prob=0.2)
    y = source.fetch(1)[0][1]
    assert np.abs(y).max() > 64


def test_unknown_source():
    with pytest.raises(ValueError):
        get_data_source("ftp")


# DataLoader

def test_lut_cache(tmp_path):
    loader = DataLoader(tmp_path)
    first = loader.load_luts(8, 4096)
    assert (tmp_path / "luts_R8_C4096.dlut").exists()
    assert loader.load_luts(8, 4096) == first


def test_unreadable_lut_cache_is_rebuilt(tmp_path):
    (tmp_path / "luts_R8_C4096.dlut").write_bytes(b"garbage")
    luts = DataLoader(tmp_path).load_luts(8, 4096)
    assert luts.lut_range == 8
    assert load_luts(tmp_path / "luts_R8_C4096.dlut") == luts


def test_report_round_trip(tmp_path, calibration_report):
    loader = DataLoader(tmp_path)
    loader.save_report(calibration_report, tmp_path / "report.parquet")
    pd.testing.assert_frame_equal(loader.load_report(tmp_path / "report.parquet"), calibration_report)


def test_report_needs_range_columns(tmp_path):
    loader = DataLoader(tmp_path)
    loader.save_report(pd.DataFrame({"layer": ["a"]}), tmp_path / "bad.parquet")
    with pytest.raises(IngestError):
        loader.load_report(tmp_path / "bad.parquet")


def test_load_corpus_from_sample_and_directory(tmp_path, toy_model):
    loader = DataLoader(tmp_path / "cache")
    samples = loader.load_corpus("sample", 3, z_shape=toy_model.hyper_shape, y_shape=toy_model.latent_shape,
                                 seed=2)
    assert len(samples) == 3
    for i, (z, y) in enumerate(samples):
        save_symbols(tmp_path / "corpus" / f"t{i}.npy", z, y)
    loaded = loader.load_corpus("dir", 2, path=tmp_path / "corpus", z_channels=toy_model.z_channels)
    assert len(loaded) == 2
    assert np.array_equal(loaded[0][1], samples[0][1])
    with pytest.raises(ValueError):
        loader.load_corpus("sample", z_shape=toy_model.hyper_shape, y_shape=toy_model.latent_shape)


def test_validate_corpus(tmp_path, toy_model, toy_source):
    loader = DataLoader(tmp_path)
    samples = toy_source.fetch(2)
    result = loader.validate_corpus(samples, toy_model.hyper_shape, toy_model.latent_shape)
    assert result["valid"] and result["stats"]["count"] == 2
    bad = loader.validate_corpus([(np.zeros((1, 1, 1)), np.zeros((1, 1, 1)))],
                                 toy_model.hyper_shape, toy_model.latent_shape)
    assert not bad["valid"]


# Settings

def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("DLIC_LUT_RANGE", "32")
    monkeypatch.setenv("DLIC_KERNEL", "reference")
    settings = get_settings()
    assert settings.lut_range == 32 and settings.kernel == "reference"


def test_settings_validation(monkeypatch):
    monkeypatch.setenv("DLIC_SEED", "abc")
    with pytest.raises(ValueError):
        get_settings()


def test_settings_override_skips_none():
    settings = Settings().override(seed=5, threads=None)
    assert settings.seed == 5 and settings.threads == 1


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
