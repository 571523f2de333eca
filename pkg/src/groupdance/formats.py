"""Binary file formats: GDNC motion, MFTR music features, GDCK checkpoints.

All integers and floats are little-endian; array payloads are float32 in C
order. Writers are bit-deterministic given identical inputs.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .audio import FEATURE_DIM, MusicFeatureSequence
from .errors import FormatError
from .motion import POSE_DIM, GroupDanceSequence

GDNC_MAGIC = b"GDNC"
MFTR_MAGIC = b"MFTR"
GDCK_MAGIC = b"GDCK"
VERSION = 1


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def save_gdnc(path, seq: GroupDanceSequence, sidecar: dict | None = None):
    """Write a motion file; optional JSON sidecar lands next to it."""
    path = Path(path)
    n, t = seq.n_dancers, seq.n_frames
    with open(path, "wb") as f:
        f.write(GDNC_MAGIC)
        f.write(struct.pack("<IIIIf", VERSION, n, t, POSE_DIM, seq.fps))
        f.write(np.ascontiguousarray(seq.data, dtype="<f4").tobytes())
    if sidecar is not None:
        with open(path.with_suffix(path.suffix + ".json"), "w") as f:
            json.dump(sidecar, f, sort_keys=True, indent=2)
            f.write("\n")


def load_gdnc(path) -> GroupDanceSequence:
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != GDNC_MAGIC:
            raise FormatError(f"{path}: not a GDNC file")
        version, n, t, d, fps = struct.unpack("<IIIIf", _read_exact(f, 20, "header"))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported GDNC version {version}")
        if d != POSE_DIM:
            raise FormatError(f"{path}: pose width {d}, expected {POSE_DIM}")
        raw = _read_exact(f, 4 * n * t * d, "payload")
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    data = np.frombuffer(raw, dtype="<f4").reshape(n, t, d).astype(np.float64)
    return GroupDanceSequence(data, fps=fps)


def load_sidecar(path) -> dict | None:
    side = Path(path).with_suffix(Path(path).suffix + ".json")
    if not side.exists():
        return None
    with open(side) as f:
        return json.load(f)


def save_mftr(path, m: MusicFeatureSequence):
    with open(path, "wb") as f:
        f.write(MFTR_MAGIC)
        f.write(struct.pack("<IIIf", VERSION, m.n_frames, FEATURE_DIM, m.fps))
        f.write(np.ascontiguousarray(m.feats, dtype="<f4").tobytes())


def load_mftr(path) -> MusicFeatureSequence:
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != MFTR_MAGIC:
            raise FormatError(f"{path}: not an MFTR file")
        version, t, d, fps = struct.unpack("<IIIf", _read_exact(f, 16, "header"))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported MFTR version {version}")
        if d != FEATURE_DIM:
            raise FormatError(f"{path}: feature width {d}, expected {FEATURE_DIM}")
        raw = _read_exact(f, 4 * t * d, "payload")
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    feats = np.frombuffer(raw, dtype="<f4").reshape(t, d).astype(np.float64)
    return MusicFeatureSequence(feats, fps=fps)


def save_checkpoint(path, params: dict):
    """Write named float arrays: name table + shape headers + f32 payload."""
    with open(path, "wb") as f:
        f.write(GDCK_MAGIC)
        f.write(struct.pack("<II", VERSION, len(params)))
        for name, arr in params.items():
            arr = np.asarray(arr)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> dict:
    params = {}
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != GDCK_MAGIC:
            raise FormatError(f"{path}: not a GDCK checkpoint")
        version, count = struct.unpack("<II", _read_exact(f, 8, "header"))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1, "ndim"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, "shape"))
            size = int(np.prod(shape)) if ndim else 1
            raw = _read_exact(f, 4 * size, f"payload of {name}")
            params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    return params
