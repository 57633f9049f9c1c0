"""Binary model persistence.

Layout: magic ``TSDA``, format version (u16 LE), model kind (u8), a reserved
byte, a u32 length-prefixed JSON header (parameter shape table in payload
order, LSTM geometry, auxiliary strides, normalization statistics, Platt
parameters), the little-endian float64 parameter payload, and a trailing
64-bit BLAKE2b checksum over everything before it.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptionError, ParseError, VersionError
from .nn.layers import CnnParams, ConvLayer, LstmDirection, LstmParams, MlpParams
from .nn.models import Normalization, StudentModel, TeacherModel, named_parameters

MAGIC = b"TSDA"
FORMAT_VERSION = 1
_KIND_TEACHER = 0
_KIND_STUDENT = 1


def _checksum(blob: bytes) -> bytes:
    return hashlib.blake2b(blob, digest_size=8).digest()


def save_model(model: TeacherModel | StudentModel, path: str | Path) -> None:
    """Write a model artifact; the write is atomic (temp file + rename)."""
    params = named_parameters(model)
    shapes = [[name, list(arr.shape)] for name, arr in params.items()]
    header = {
        "shapes": shapes,
        "lstm": {"input_size": model.body.input_size, "hidden_size": model.body.hidden_size},
        "aux_strides": [l.stride for l in model.aux.layers]
        if isinstance(model, StudentModel) and model.aux is not None
        else None,
        "norm_mean": model.norm.mean.tolist(),
        "norm_std": model.norm.std.tolist(),
        "platt_a": model.platt_a,
        "platt_b": model.platt_b,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    kind = _KIND_STUDENT if isinstance(model, StudentModel) else _KIND_TEACHER
    payload = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for arr in params.values())

    body = (
        MAGIC
        + struct.pack("<HBB", FORMAT_VERSION, kind, 0)
        + struct.pack("<I", len(header_bytes))
        + header_bytes
        + payload
    )
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(body + _checksum(body))
    os.replace(tmp, path)


def _group_mlp(arrays: dict[str, np.ndarray], prefix: str) -> MlpParams:
    weights, biases = [], []
    i = 0
    while f"{prefix}.w{i}" in arrays:
        weights.append(arrays[f"{prefix}.w{i}"])
        biases.append(arrays[f"{prefix}.b{i}"])
        i += 1
    if not weights:
        raise CorruptionError(f"artifact lacks parameters for {prefix!r}")
    return MlpParams(weights, biases)


def _group_lstm(arrays: dict[str, np.ndarray], header: dict) -> LstmParams:
    geom = header["lstm"]

    def direction(tag: str) -> LstmDirection:
        return LstmDirection(
            wx=arrays[f"body.{tag}.wx"], wh=arrays[f"body.{tag}.wh"], b=arrays[f"body.{tag}.b"]
        )

    return LstmParams(
        int(geom["input_size"]), int(geom["hidden_size"]), direction("fwd"), direction("bwd")
    )


def _group_cnn(arrays: dict[str, np.ndarray], strides: list[int]) -> CnnParams:
    layers = []
    for i, stride in enumerate(strides):
        layers.append(ConvLayer(arrays[f"aux.conv{i}.w"], arrays[f"aux.conv{i}.b"], int(stride)))
    return CnnParams(layers, arrays["aux.proj.w"], arrays["aux.proj.b"])


def load_model(path: str | Path) -> TeacherModel | StudentModel:
    """Read a model artifact back, reproducing every parameter bit-exactly."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 4 + 4 + 8:
        raise CorruptionError(f"{path}: artifact truncated")
    body, stored = blob[:-8], blob[-8:]
    if _checksum(body) != stored:
        raise CorruptionError(f"{path}: checksum mismatch")
    if body[:4] != MAGIC:
        raise ParseError(f"{path}: bad magic {body[:4]!r}, expected {MAGIC!r}")
    version, kind, _ = struct.unpack("<HBB", body[4:8])
    if version != FORMAT_VERSION:
        raise VersionError(
            f"{path}: format version {version} not supported (this build reads version "
            f"{FORMAT_VERSION})"
        )
    (header_len,) = struct.unpack("<I", body[8:12])
    header_end = 12 + header_len
    try:
        header = json.loads(body[12:header_end].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptionError(f"{path}: header unreadable: {e}") from e

    arrays: dict[str, np.ndarray] = {}
    offset = header_end
    for name, shape in header["shapes"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(body):
            raise CorruptionError(f"{path}: payload shorter than its shape table")
        arrays[name] = np.frombuffer(body[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(body):
        raise CorruptionError(f"{path}: payload longer than its shape table")

    norm = Normalization(np.asarray(header["norm_mean"]), np.asarray(header["norm_std"]))
    common = dict(
        tail=_group_mlp(arrays, "tail"),
        body=_group_lstm(arrays, header),
        head=_group_mlp(arrays, "head"),
        norm=norm,
        platt_a=float(header["platt_a"]),
        platt_b=float(header["platt_b"]),
    )
    if kind == _KIND_STUDENT:
        aux = _group_cnn(arrays, header["aux_strides"]) if header.get("aux_strides") else None
        return StudentModel(aux=aux, **common)
    if kind == _KIND_TEACHER:
        return TeacherModel(**common)
    raise CorruptionError(f"{path}: unknown model kind {kind}")
