"""Binary model files and key=value config files.

Model file layout (all integers unsigned 32-bit little-endian)::

    b"ARTA" | version | tensor count
    per tensor: name length | UTF-8 name | rank | dims... | float32 LE data (row-major)
    config length | UTF-8 key=value text
    CRC-32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import fields
from pathlib import Path

import numpy as np
import torch

from arta.data import Normalizer, write_atomic
from arta.detector import DetectorParams
from arta.errors import ConfigurationError, ParseError
from arta.generator import GeneratorParams
from arta.numerics import SpectralState
from arta.training import ArtaModel, TrainConfig

MAGIC = b"ARTA"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------


def _parse_value(key: str, raw: str, typ):
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(f"config key {key!r}: cannot parse {raw!r} as {typ.__name__}") from None


_FIELD_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse key=value lines ('#' comments allowed) over ``base`` (default config)."""
    types = {f.name: _FIELD_TYPES[f.type] if isinstance(f.type, str) else f.type for f in fields(TrainConfig)}
    values = {f.name: getattr(base or TrainConfig(), f.name) for f in fields(TrainConfig)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigurationError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, raw, types[key])
    return TrainConfig(**values)


def load_config(path: str | Path) -> TrainConfig:
    try:
        return parse_config(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"no such config file: {path}") from None


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def _split_f64(v: np.ndarray) -> torch.Tensor:
    # three float32 parts carry 72 significand bits, enough to restore a float64 exactly
    parts, rest = [], np.asarray(v, dtype=np.float64)
    for _ in range(3):
        p = rest.astype(np.float32)
        parts.append(p)
        rest = rest - p.astype(np.float64)
    return torch.from_numpy(np.stack(parts))


def _join_f64(t: torch.Tensor) -> np.ndarray:
    a = t.numpy().astype(np.float64)
    return (a[0] + a[1]) + a[2]


def model_tensors(model: ArtaModel) -> dict[str, torch.Tensor]:
    out = {f"detector.{k}": v for k, v in model.detector.tensors().items()}
    for name, state in model.detector.spectral.items():
        out[f"detector.sn.{name}"] = state.u
    if model.generator is not None:
        out.update({f"generator.{k}": v for k, v in model.generator.tensors().items()})
    if model.normalizer is not None:
        out["normalizer.mean"] = _split_f64(model.normalizer.mean)
        out["normalizer.std"] = _split_f64(model.normalizer.std)
    return out


def encode_model(model: ArtaModel) -> bytes:
    parts = [MAGIC, _U32.pack(FORMAT_VERSION)]
    tensors = model_tensors(model)
    parts.append(_U32.pack(len(tensors)))
    for name, t in tensors.items():
        raw_name = name.encode("utf-8")
        arr = t.detach().cpu().numpy().astype("<f4", copy=False)
        parts.append(_U32.pack(len(raw_name)) + raw_name)
        parts.append(_U32.pack(arr.ndim) + b"".join(_U32.pack(d) for d in arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    echo = model.config.echo().encode("utf-8")
    parts.append(_U32.pack(len(echo)) + echo)
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


def save_model(model: ArtaModel, path: str | Path) -> None:
    write_atomic(path, encode_model(model))


class _Reader:
    def __init__(self, buf: bytes) -> None:
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ParseError("model file truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def decode_model(buf: bytes) -> ArtaModel:
    if len(buf) < 16 or buf[:4] != MAGIC:
        raise ParseError("not an ARTA model file")
    body, (crc,) = buf[:-4], _U32.unpack(buf[-4:])
    if zlib.crc32(body) != crc:
        raise ParseError("model file checksum mismatch")
    r = _Reader(body)
    r.take(4)
    version = r.u32()
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")
    tensors: dict[str, torch.Tensor] = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        shape = tuple(r.u32() for _ in range(r.u32()))
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
        tensors[name] = torch.from_numpy(arr.astype(np.float32))
    config = parse_config(r.take(r.u32()).decode("utf-8"))
    if r.pos != len(body):
        raise ParseError("trailing bytes in model file")

    def group(prefix: str) -> dict[str, torch.Tensor]:
        return {k[len(prefix) :]: v for k, v in tensors.items() if k.startswith(prefix)}

    det_t = {k: v for k, v in group("detector.").items() if not k.startswith("sn.")}
    spectral = {k: SpectralState(v.double(), 0) for k, v in group("detector.sn.").items()}
    try:
        detector = DetectorParams.from_tensors(det_t, spectral)
        gen_t = group("generator.")
        generator = GeneratorParams.from_tensors(gen_t) if gen_t else None
    except KeyError as e:
        raise ParseError(f"model file is missing tensor {e}") from None
    normalizer = None
    if "normalizer.mean" in tensors:
        normalizer = Normalizer(_join_f64(tensors["normalizer.mean"]), _join_f64(tensors["normalizer.std"]))
    return ArtaModel(config, detector, generator, normalizer)


def load_model(path: str | Path) -> ArtaModel:
    try:
        buf = Path(path).read_bytes()
    except FileNotFoundError:
        raise ConfigurationError(f"no such model file: {path}") from None
    return decode_model(buf)
