"""S2MAP files: a fixed little-endian header followed by the raw row-major payload."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Union

import numpy as np

from .exceptions import FormatError
from .sphere import HarmonicCoeffs, SphMap, make_grid

logger = logging.getLogger(__name__)

MAGIC = b"S2MAP1\n"
HEADER = np.dtype(
    [
        ("kind", "<u4"),
        ("spin", "<i4"),
        ("L", "<u4"),
        ("n_theta", "<u4"),
        ("n_phi", "<u4"),
        ("dtype", "u1"),
        ("count", "<u8"),
    ]
)
KIND_PIXEL = 0
KIND_HARMONIC = 1
PAYLOAD_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}

MapObject = Union[SphMap, HarmonicCoeffs]


def _encode(obj: MapObject) -> bytes:
    if isinstance(obj, SphMap):
        kind, spin, L = KIND_PIXEL, obj.spin, obj.grid.L
        n_theta, n_phi = obj.grid.shape
        values = obj.values
    elif isinstance(obj, HarmonicCoeffs):
        kind, spin, L = KIND_HARMONIC, obj.spin, obj.L
        n_theta = n_phi = 0
        values = obj.coeffs
    else:
        raise TypeError(f"Cannot write {type(obj).__name__} as an S2MAP file.")
    code = 1 if np.iscomplexobj(values) else 0
    payload = np.ascontiguousarray(values, dtype=PAYLOAD_DTYPES[code])
    header = np.array([(kind, spin, L, n_theta, n_phi, code, payload.size)], dtype=HEADER)
    return MAGIC + header.tobytes() + payload.tobytes()


def write_map(path: Union[str, Path], obj: MapObject) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_encode(obj))
    logger.debug("wrote %s", path)
    return path


def read_map(path: Union[str, Path]) -> MapObject:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(path, f"cannot be read ({exc.strerror or exc})") from exc

    if not data.startswith(MAGIC):
        raise FormatError(path, "magic bytes/version mismatch")
    if len(data) < len(MAGIC) + HEADER.itemsize:
        raise FormatError(path, "truncated header")
    header = np.frombuffer(data, dtype=HEADER, count=1, offset=len(MAGIC))[0]
    kind, code, count = int(header["kind"]), int(header["dtype"]), int(header["count"])
    if kind not in (KIND_PIXEL, KIND_HARMONIC):
        raise FormatError(path, f"unknown kind {kind}")
    if code not in PAYLOAD_DTYPES:
        raise FormatError(path, f"unknown dtype code {code}")
    payload_dtype = PAYLOAD_DTYPES[code]
    offset = len(MAGIC) + HEADER.itemsize
    expected = offset + count * payload_dtype.itemsize
    if len(data) < expected:
        raise FormatError(path, f"truncated payload ({len(data)} of {expected} bytes)")
    if len(data) > expected:
        raise FormatError(path, f"{len(data) - expected} trailing bytes after the payload")
    values = np.frombuffer(data, dtype=payload_dtype, count=count, offset=offset).copy()

    L, spin = int(header["L"]), int(header["spin"])
    if kind == KIND_HARMONIC:
        if count != L * L:
            raise FormatError(path, f"harmonic payload holds {count} values, L={L} needs {L * L}")
        return HarmonicCoeffs(L, spin, values)
    if L < 1:
        raise FormatError(path, f"invalid bandlimit L={L}")
    grid = make_grid(L)
    shape = (int(header["n_theta"]), int(header["n_phi"]))
    if shape != grid.shape or count != grid.size:
        raise FormatError(path, f"pixel shape {shape} does not match the L={L} sampling {grid.shape}")
    return SphMap(grid, spin, values.reshape(shape))
