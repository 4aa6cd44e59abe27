"""
ShapeCode: quantized feature curves in a fixed strip layout, plus the .shpc file format.

Layout (m = 24 with defaults): all RVF strips, then all SF, then all TAF; inside
a kind, template-major (templates 1..4 = bands 2..5) and object-minor.

File format, little-endian:
  magic "SHPC" | version u8 | flags u8 (bit 0 degraded) | m u16 | n u16 | b u8 | 5 reserved
  payload m*n samples of ceil(b/8) bytes
  CRC-32 u32 of the payload

The header is not under the checksum; magic, version, dimensions against the
file length, flag bits and reserved bytes are each checked instead.
"""
import logging
import os
import struct
import zlib
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.errors import (
    BadMagicError,
    ChecksumError,
    CodeFormatError,
    ShapeCodeError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from app.shapedesc import KINDS, FeatureCurve, describe
from app.utils.files import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"SHPC"
VERSION = 1
HEADER = struct.Struct("<4sBBHHB5x")
CRC = struct.Struct("<I")
FLAG_DEGRADED = 0x01

N_TEMPLATES = 4
N_OBJECTS = 2
OBJECTS_PER_CODE = N_TEMPLATES * N_OBJECTS
DEFAULT_M = len(KINDS) * OBJECTS_PER_CODE
SESSIONS = ("VL", "NIR")


def layout_row(kind: str, template: int, obj: int) -> int:
    """Row of strip (kind, template 1..4, object 1..2) in a single-session code"""
    return KINDS.index(kind) * OBJECTS_PER_CODE + (template - 1) * N_OBJECTS + (obj - 1)


def default_labels(m: int) -> Tuple[str, ...]:
    base = tuple(
        f"{kind}.t{j}.o{i}"
        for kind in KINDS
        for j in range(1, N_TEMPLATES + 1)
        for i in range(1, N_OBJECTS + 1)
    )
    if m == DEFAULT_M:
        return base
    if m == DEFAULT_M * len(SESSIONS):
        return tuple(f"{s}.{label}" for s in SESSIONS for label in base)
    return tuple(f"strip{i}" for i in range(m))


def sample_dtype(b: int) -> np.dtype:
    return np.dtype("<u1") if b <= 8 else np.dtype("<u2")


@dataclass(frozen=True, eq=False)
class ShapeCode:
    strips: np.ndarray
    b: int = 8
    degraded: bool = False
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if not 1 <= self.b <= 16:
            raise ShapeCodeError(f"Bits per sample must be in 1..16, got {self.b}")
        arr = np.asarray(self.strips)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ShapeCodeError(f"Strips must be a non-empty (m, n) matrix, got {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > (1 << self.b) - 1):
            raise ShapeCodeError(f"Sample values exceed {self.b} bits")
        arr = arr.astype(sample_dtype(self.b))
        arr.setflags(write=False)
        object.__setattr__(self, "strips", arr)
        labels = tuple(self.labels) if self.labels is not None else default_labels(arr.shape[0])
        if len(labels) != arr.shape[0]:
            raise ShapeCodeError(f"{len(labels)} labels for {arr.shape[0]} strips")
        object.__setattr__(self, "labels", labels)

    @property
    def m(self) -> int:
        return self.strips.shape[0]

    @property
    def n(self) -> int:
        return self.strips.shape[1]

    @property
    def bits(self) -> int:
        return self.m * self.n * self.b

    @property
    def dims(self) -> Tuple[int, int, int]:
        return (self.m, self.n, self.b)

    def strip(self, label: str) -> np.ndarray:
        return self.strips[self.labels.index(label)]

    def __eq__(self, other):
        if not isinstance(other, ShapeCode):
            return NotImplemented
        return (self.dims == other.dims and self.degraded == other.degraded
                and np.array_equal(self.strips, other.strips))

    def __hash__(self):
        return hash((self.dims, self.degraded, self.strips.tobytes()))


def quantize(curve: FeatureCurve, b: int = 8) -> np.ndarray:
    """q = floor(v * (2^b - 1) + 0.5)"""
    values = np.asarray(curve.samples if isinstance(curve, FeatureCurve) else curve, dtype=np.float64)
    if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
        kind = curve.kind if isinstance(curve, FeatureCurve) else "curve"
        raise ShapeCodeError(f"{kind} samples outside [0, 1]")
    top = (1 << b) - 1
    return np.floor(values * top + 0.5).astype(sample_dtype(b))


def dequantize(strip: np.ndarray, b: int = 8) -> np.ndarray:
    return np.asarray(strip, dtype=np.float64) / ((1 << b) - 1)


def describe_objects(objects: Sequence, n: int = 100) -> List[Tuple[FeatureCurve, FeatureCurve, FeatureCurve]]:
    """(RVF, SF, TAF) per selected object, in object order"""
    if len(objects) != OBJECTS_PER_CODE:
        raise ShapeCodeError(f"Expected {OBJECTS_PER_CODE} objects, got {len(objects)}")
    return [describe(obj.contour, n) for obj in objects]


def assemble_curves(curves: Sequence[Tuple[FeatureCurve, ...]], b: int = 8, degraded: bool = False) -> ShapeCode:
    if len(curves) != OBJECTS_PER_CODE:
        raise ShapeCodeError(f"Expected curves for {OBJECTS_PER_CODE} objects, got {len(curves)}")
    rows = [quantize(per_object[k], b) for k in range(len(KINDS)) for per_object in curves]
    return ShapeCode(np.vstack(rows), b=b, degraded=degraded)


def assemble(objects: Sequence, n: int = 100, b: int = 8) -> ShapeCode:
    """Describe, quantize and lay out the eight selected objects"""
    curves = describe_objects(objects, n)
    degraded = any(getattr(o, "placeholder", False) for o in objects)
    code = assemble_curves(curves, b=b, degraded=degraded)
    logger.debug("Assembled %dx%d code (%d bits, degraded=%s)", code.m, code.n, code.bits, degraded)
    return code


def serialize(code: ShapeCode) -> bytes:
    flags = FLAG_DEGRADED if code.degraded else 0
    header = HEADER.pack(MAGIC, VERSION, flags, code.m, code.n, code.b)
    payload = code.strips.astype(sample_dtype(code.b)).tobytes()
    return header + payload + CRC.pack(zlib.crc32(payload))


def deserialize(data: bytes) -> ShapeCode:
    data = bytes(data)
    if len(data) < HEADER.size:
        raise TruncatedPayloadError(f"Shape code is {len(data)} bytes, shorter than its {HEADER.size}-byte header")
    magic, version, flags, m, n, b = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"Bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"Unsupported shape code version {version}, expected {VERSION}")
    if not 1 <= b <= 16 or m == 0 or n == 0:
        raise CodeFormatError(f"Invalid dimensions m={m} n={n} b={b}")
    if flags & ~FLAG_DEGRADED or any(data[11:HEADER.size]):
        raise CodeFormatError("Unknown flag bits or non-zero reserved bytes")

    dtype = sample_dtype(b)
    payload_size = m * n * dtype.itemsize
    expected = HEADER.size + payload_size + CRC.size
    if len(data) < expected:
        raise TruncatedPayloadError(f"Shape code is {len(data)} bytes, expected {expected}")
    if len(data) > expected:
        raise CodeFormatError(f"Shape code has {len(data) - expected} trailing bytes")

    payload = data[HEADER.size:HEADER.size + payload_size]
    (stored,) = CRC.unpack_from(data, HEADER.size + payload_size)
    actual = zlib.crc32(payload)
    if stored != actual:
        raise ChecksumError(f"Checksum mismatch: stored {stored:#010x}, computed {actual:#010x}")

    strips = np.frombuffer(payload, dtype=dtype).reshape(m, n)
    if strips.max() > (1 << b) - 1:
        raise CodeFormatError(f"Sample values exceed {b} bits")
    return ShapeCode(strips.copy(), b=b, degraded=bool(flags & FLAG_DEGRADED))


def save_code(code: ShapeCode, path: str) -> str:
    return atomic_write_bytes(path, serialize(code))


def load_code(path: str) -> ShapeCode:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise CodeFormatError(f"Cannot read shape code {path}: {e}") from e
    try:
        return deserialize(data)
    except CodeFormatError as e:
        raise type(e)(f"{os.path.basename(path)}: {e}") from e
