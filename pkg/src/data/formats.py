"""
On-disk formats: model container, LUT file and bitstream container.

All multi-byte integers are little-endian. Every save is canonical, so
save(load(f)) reproduces f byte for byte.

Model container ("DLMF"):
    magic(4) version(u8) manifest_len(u32) manifest(JSON) blobs... crc32(u32)

LUT file ("DLUT"):
    magic(4) version(u8) R(u16) CDF_max(u16) L(u16) M(u16) erf_tag(16)
    count(u32) tables(count x (2R+2) x u16) crc32(u32)

Bitstream container ("DLIC"):
    magic(4) version(u8) z_shape(3 x u16) y_shape(3 x u16)
    hyper_len(u32) hyper  main_len(u32) main  escape_bits(u32) escape
"""

import json
import logging
import struct
import zlib
from pathlib import Path
from typing import List, Union

import numpy as np

from src.errors import ChecksumError, FormatError, StreamCorruptionError
from src.coding.cdf_tables import NUM_TABLES, LutSet
from src.coding.discretize import NUM_MU_LEVELS, NUM_SIGMA_LEVELS, DiscretizationConfig
from src.coding.tensor_codec import Bitstream
from src.engine.graph import LayerGraph
from src.engine.layers import LayerSpec
from src.quant.requant import RequantParams
from src.quant.tensors import QuantizedTensor, QuantizerSpec

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"DLMF"
LUT_MAGIC = b"DLUT"
STREAM_MAGIC = b"DLIC"
MODEL_VERSION = 1
LUT_VERSION = 1
STREAM_VERSION = 1

_MODEL_HEADER = struct.Struct("<4sBI")
_LUT_HEADER = struct.Struct("<4sBHHHH16sI")
_STREAM_HEADER = struct.Struct("<4sB6H")
_U32 = struct.Struct("<I")

PathLike = Union[str, Path]


def _canonical_json(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _with_crc(body: bytes) -> bytes:
    return body + _U32.pack(zlib.crc32(body) & 0xFFFFFFFF)


def _check_crc(data: bytes, what: str) -> bytes:
    if len(data) < _U32.size:
        raise FormatError(f"{what} is truncated")
    body, (crc,) = data[:-_U32.size], _U32.unpack(data[-_U32.size:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ChecksumError(f"{what} checksum mismatch")
    return body


# Model container

class _BlobWriter:
    def __init__(self):
        self.chunks: List[bytes] = []
        self.offset = 0

    def add(self, array: np.ndarray, dtype: str) -> dict:
        data = np.ascontiguousarray(array, dtype=np.dtype(dtype)).tobytes()
        ref = {"offset": self.offset, "length": len(data), "dtype": dtype, "shape": list(np.shape(array))}
        self.chunks.append(data)
        self.offset += len(data)
        return ref


def _read_blob(blobs: bytes, ref: dict) -> np.ndarray:
    start, length = int(ref["offset"]), int(ref["length"])
    if start < 0 or start + length > len(blobs):
        raise FormatError(f"blob [{start}, {start + length}) outside the payload")
    array = np.frombuffer(blobs[start:start + length], dtype=np.dtype(ref["dtype"]))
    expected = int(np.prod(ref["shape"])) if ref["shape"] else 1
    if array.size != expected:
        raise FormatError(f"blob holds {array.size} values, manifest says shape {ref['shape']}")
    return array.reshape(ref["shape"])


def _layer_manifest(layer: LayerSpec, blobs: _BlobWriter) -> dict:
    entry = {
        "name": layer.name,
        "kind": layer.kind,
        "in_channels": layer.in_channels,
        "out_channels": layer.out_channels,
        "kernel_size": list(layer.kernel_size),
        "stride": layer.stride,
        "padding": layer.padding,
        "activation": layer.activation,
        "leaky_slope": float(layer.leaky_slope),
        "in_zero_point": layer.in_zero_point,
        "weight": blobs.add(layer.weight, "<f4"),
        "bias": blobs.add(layer.bias, "<f4"),
        "weight_q": None,
        "bias_q": None,
        "requant": [p.to_dict() for p in layer.requant],
    }
    if layer.weight_q is not None:
        wq = layer.weight_q
        entry["weight_q"] = {
            "data": blobs.add(wq.data, "<i1"),
            "scale": list(wq.scale) if wq.per_channel else wq.scale,
            "zero_point": wq.zero_point,
            "symmetric": wq.symmetric,
        }
    if layer.bias_q is not None:
        entry["bias_q"] = blobs.add(layer.bias_q, "<i4")
    return entry


def _layer_from_manifest(entry: dict, blobs: bytes) -> LayerSpec:
    weight_q = None
    if entry["weight_q"] is not None:
        wq = entry["weight_q"]
        scale = tuple(wq["scale"]) if isinstance(wq["scale"], list) else wq["scale"]
        weight_q = QuantizedTensor(_read_blob(blobs, wq["data"]).astype(np.int64), 8, scale,
                                   wq["zero_point"], wq["symmetric"])
    bias_q = None
    if entry["bias_q"] is not None:
        bias_q = _read_blob(blobs, entry["bias_q"]).astype(np.int64)
    return LayerSpec(
        name=entry["name"],
        kind=entry["kind"],
        in_channels=entry["in_channels"],
        out_channels=entry["out_channels"],
        kernel_size=tuple(entry["kernel_size"]),
        weight=_read_blob(blobs, entry["weight"]),
        bias=_read_blob(blobs, entry["bias"]),
        stride=entry["stride"],
        padding=entry["padding"],
        activation=entry["activation"],
        leaky_slope=entry["leaky_slope"],
        weight_q=weight_q,
        bias_q=bias_q,
        requant=tuple(RequantParams.from_dict(p) for p in entry["requant"]),
        in_zero_point=entry["in_zero_point"],
    )


def model_to_bytes(graph: LayerGraph) -> bytes:
    blobs = _BlobWriter()
    groups = {}
    for group in ("hyper_synthesis", "context", "param_net"):
        groups[group] = [_layer_manifest(layer, blobs) for layer in getattr(graph, group)]
    manifest = {
        "format": "DLMF",
        "version": MODEL_VERSION,
        "precision": "int" if graph.is_quantized else "float",
        "geometry": {
            "num_components": graph.num_components,
            "z_channels": graph.z_channels,
            "y_channels": graph.y_channels,
            "height": graph.height,
            "width": graph.width,
        },
        "hyper_sigma_indices": list(graph.hyper_sigma_indices),
        "concat_spec": graph.concat_spec.to_dict() if graph.concat_spec is not None else None,
        "discretization": DiscretizationConfig().to_dict(),
        "metadata": dict(graph.metadata),
        "groups": groups,
    }
    body = _canonical_json(manifest)
    header = _MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(body))
    return _with_crc(header + body + b"".join(blobs.chunks))


def model_from_bytes(data: bytes) -> LayerGraph:
    if len(data) < _MODEL_HEADER.size or data[:4] != MODEL_MAGIC:
        raise FormatError("not a model container")
    body = _check_crc(data, "model container")
    magic, version, manifest_len = _MODEL_HEADER.unpack_from(body)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model container version {version}")
    start = _MODEL_HEADER.size
    if start + manifest_len > len(body):
        raise FormatError("model manifest is truncated")
    try:
        manifest = json.loads(body[start:start + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"model manifest is not valid JSON: {e}")
    blobs = body[start + manifest_len:]

    try:
        geometry = manifest["geometry"]
        groups = {g: tuple(_layer_from_manifest(e, blobs) for e in manifest["groups"][g])
                  for g in ("hyper_synthesis", "context", "param_net")}
        concat = manifest["concat_spec"]
        return LayerGraph(
            num_components=geometry["num_components"],
            z_channels=geometry["z_channels"],
            y_channels=geometry["y_channels"],
            height=geometry["height"],
            width=geometry["width"],
            hyper_sigma_indices=tuple(manifest["hyper_sigma_indices"]),
            concat_spec=QuantizerSpec.from_dict(concat) if concat is not None else None,
            metadata=dict(manifest.get("metadata", {})),
            **groups,
        )
    except KeyError as e:
        raise FormatError(f"model manifest is missing {e}")
    except (ValueError, TypeError, IndexError, OverflowError) as e:
        raise FormatError(f"model manifest describes an invalid model: {e}")


def save_model(graph: LayerGraph, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(model_to_bytes(graph))
    logger.info(f"Saved {'quantized' if graph.is_quantized else 'float'} model to {path}")
    return path


def load_model(path: PathLike) -> LayerGraph:
    return model_from_bytes(_read(path))


# LUT file

def luts_to_bytes(luts: LutSet) -> bytes:
    tag = luts.erf_tag.encode("ascii")
    if len(tag) > 16:
        raise FormatError(f"erf tag {luts.erf_tag!r} longer than 16 bytes")
    header = _LUT_HEADER.pack(LUT_MAGIC, LUT_VERSION, luts.lut_range, luts.cdf_max,
                              NUM_SIGMA_LEVELS, NUM_MU_LEVELS, tag.ljust(16, b"\0"), len(luts))
    return _with_crc(header + luts.serialize())


def luts_from_bytes(data: bytes) -> LutSet:
    if len(data) < _LUT_HEADER.size or data[:4] != LUT_MAGIC:
        raise FormatError("not a LUT file")
    body = _check_crc(data, "LUT file")
    magic, version, lut_range, cdf_max, levels, mu_levels, tag, count = _LUT_HEADER.unpack_from(body)
    if version != LUT_VERSION:
        raise FormatError(f"unsupported LUT file version {version}")
    if levels != NUM_SIGMA_LEVELS or mu_levels != NUM_MU_LEVELS or count != NUM_TABLES:
        raise FormatError(f"LUT file geometry L={levels}, M={mu_levels}, count={count} not supported")
    payload = body[_LUT_HEADER.size:]
    width = 2 * lut_range + 2
    if len(payload) != count * width * 2:
        raise FormatError(f"LUT payload holds {len(payload)} bytes, expected {count * width * 2}")
    tables = np.frombuffer(payload, dtype="<u2").reshape(count, width)
    return LutSet(tables, lut_range, cdf_max, tag.rstrip(b"\0").decode("ascii"))


def save_luts(luts: LutSet, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(luts_to_bytes(luts))
    return path


def load_luts(path: PathLike) -> LutSet:
    return luts_from_bytes(_read(path))


# Bitstream container

def bitstream_to_bytes(stream: Bitstream) -> bytes:
    header = _STREAM_HEADER.pack(STREAM_MAGIC, STREAM_VERSION, *stream.z_shape, *stream.y_shape)
    parts = [
        header,
        _U32.pack(len(stream.hyper)), stream.hyper,
        _U32.pack(len(stream.main)), stream.main,
        _U32.pack(stream.escape_bits), stream.escape,
    ]
    return b"".join(parts)


def bitstream_from_bytes(data: bytes) -> Bitstream:
    if len(data) < 5 or data[:4] != STREAM_MAGIC:
        raise FormatError("not a bitstream container")
    if data[4] != STREAM_VERSION:
        raise FormatError(f"unsupported bitstream version {data[4]}")
    if len(data) < _STREAM_HEADER.size:
        raise StreamCorruptionError("bitstream header is truncated")
    fields = _STREAM_HEADER.unpack_from(data)
    z_shape, y_shape = tuple(fields[2:5]), tuple(fields[5:8])
    pos = _STREAM_HEADER.size

    def section(length: int) -> bytes:
        nonlocal pos
        if pos + length > len(data):
            raise StreamCorruptionError("bitstream section is truncated")
        chunk = data[pos:pos + length]
        pos += length
        return chunk

    def u32() -> int:
        return _U32.unpack(section(_U32.size))[0]

    hyper = section(u32())
    main = section(u32())
    escape_bits = u32()
    escape = section((escape_bits + 7) // 8)
    if pos != len(data):
        raise StreamCorruptionError(f"{len(data) - pos} trailing bytes after the bitstream")
    return Bitstream(z_shape=z_shape, y_shape=y_shape, hyper=hyper, main=main,
                     escape=escape, escape_bits=escape_bits)


def save_bitstream(stream: Bitstream, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bitstream_to_bytes(stream))
    return path


def load_bitstream(path: PathLike) -> Bitstream:
    return bitstream_from_bytes(_read(path))


def _read(path: PathLike) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"file not found: {path}")
    return path.read_bytes()
