"""Binary container shared by spectral fields and noise paths.

Layout (little-endian): magic ``B3DS``, uint16 version, uint16 kind,
two uint64 shape words, then a kind-specific payload of float64 values.
"""

import struct
from pathlib import Path
from typing import Tuple, Union

from .errors import DataError

MAGIC = b"B3DS"
VERSION = 1

KIND_SPECTRAL_FIELD = 1
KIND_NOISE_PATH = 2

_HEADER = struct.Struct("<4sHHQQ")

PathLike = Union[str, Path]


def pack_header(kind: int, first: int, second: int) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, kind, first, second)


def read_container(path: PathLike, expected_kind: int) -> Tuple[int, int, bytes]:
    """Read a container file and return its two shape words and payload.

    Raises:
        DataError: On bad magic, unsupported version or unexpected kind
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated container header")
    magic, version, kind, first, second = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    if kind != expected_kind:
        raise DataError(f"{path}: container kind {kind}, expected {expected_kind}")
    return first, second, raw[_HEADER.size:]


def write_container(path: PathLike, kind: int, first: int, second: int, payload: bytes) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(pack_header(kind, first, second) + payload)
    return target
