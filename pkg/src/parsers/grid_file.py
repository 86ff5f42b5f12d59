"""
BFLOW1 grid files

Text header, one "key value..." line each, closed by a blank line, then a
row-major little-endian payload:

    BFLOW1
    name density
    shape 256 128          (nx ny)
    extent -10.0 10.0 -5.0 5.0
    dtype f64le            (or c128le: interleaved re, im)
    bytes 262144

Point sets use the same layout with nx = 3 columns (x, p, label).
"""

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

MAGIC = "BFLOW1"
DTYPES = {"f64le": np.dtype("<f8"), "c128le": np.dtype("<c16")}
_NAME = re.compile(r"^[A-Za-z0-9_.:+-]+$")


class GridFormatError(ValueError):
    """Malformed or truncated grid file"""


@dataclass(frozen=True)
class GridHeader:
    name: str
    nx: int
    ny: int
    extent: Tuple[float, float, float, float]
    dtype: str

    @property
    def payload_bytes(self) -> int:
        return self.nx * self.ny * DTYPES[self.dtype].itemsize

    def encode(self) -> bytes:
        lines = [
            MAGIC,
            f"name {self.name}",
            f"shape {self.nx} {self.ny}",
            "extent " + " ".join(repr(float(v)) for v in self.extent),
            f"dtype {self.dtype}",
            f"bytes {self.payload_bytes}",
            "",
            "",
        ]
        return "\n".join(lines).encode("ascii")


def _dtype_tag(array: np.ndarray) -> str:
    if np.iscomplexobj(array):
        return "c128le"
    if array.dtype.kind in "fiub":
        return "f64le"
    raise GridFormatError(f"Unsupported array dtype {array.dtype}")


def _encode(array, name: str, extent) -> Tuple[GridHeader, bytes]:
    array = np.asarray(array)
    if array.ndim != 2:
        raise GridFormatError(f"Grids must be 2D, got shape {array.shape}")
    ny, nx = array.shape
    if nx == 0 or ny == 0:
        raise GridFormatError(f"Empty grid {nx}x{ny} rejected")
    if not _NAME.match(name):
        raise GridFormatError(f"Grid name {name!r} must be a single token")
    tag = _dtype_tag(array)
    extent = tuple(float(v) for v in extent)
    if len(extent) != 4:
        raise GridFormatError("Extent needs four values")
    header = GridHeader(name, nx, ny, extent, tag)
    payload = np.ascontiguousarray(array, dtype=DTYPES[tag]).tobytes()
    return header, header.encode() + payload


def encode_grid(array, name: str, extent) -> bytes:
    return _encode(array, name, extent)[1]


def decode_grid(data: bytes) -> Tuple[np.ndarray, GridHeader]:
    end = data.find(b"\n\n")
    if end < 0:
        raise GridFormatError("Header not terminated by a blank line")
    try:
        lines = data[:end].decode("ascii").split("\n")
    except UnicodeDecodeError:
        raise GridFormatError("Header is not ASCII text")
    if not lines or lines[0] != MAGIC:
        raise GridFormatError(f"Bad magic {lines[0]!r}, expected {MAGIC}")

    fields = {}
    for line in lines[1:]:
        key, _, value = line.partition(" ")
        fields[key] = value.split()
    try:
        name = fields["name"][0]
        nx, ny = (int(v) for v in fields["shape"])
        extent = tuple(float(v) for v in fields["extent"])
        tag = fields["dtype"][0]
        declared = int(fields["bytes"][0])
    except (KeyError, IndexError, ValueError) as e:
        raise GridFormatError(f"Malformed header: {e}")
    if tag not in DTYPES:
        raise GridFormatError(f"Unknown dtype tag {tag!r}")
    if nx <= 0 or ny <= 0:
        raise GridFormatError(f"Empty grid {nx}x{ny} rejected")
    if len(extent) != 4:
        raise GridFormatError("Extent needs four values")

    header = GridHeader(name, nx, ny, extent, tag)
    if declared != header.payload_bytes:
        raise GridFormatError(
            f"Declared payload {declared} bytes does not match {nx}x{ny} {tag} ({header.payload_bytes})"
        )
    payload = data[end + 2:]
    if len(payload) < declared:
        raise GridFormatError(f"Truncated payload: {len(payload)} of {declared} bytes")
    if len(payload) > declared:
        raise GridFormatError(f"Trailing data after payload ({len(payload) - declared} bytes)")
    array = np.frombuffer(payload, dtype=DTYPES[tag]).reshape(ny, nx).copy()
    return array, header


def write_grid(path: Union[str, Path], array, name: str, extent) -> GridHeader:
    header, data = _encode(array, name, extent)
    Path(path).write_bytes(data)
    return header


def read_grid(path: Union[str, Path]) -> Tuple[np.ndarray, GridHeader]:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise GridFormatError(f"Cannot read {path}: {e}")
    return decode_grid(data)


def _encode_points(points, name: str) -> Tuple[GridHeader, bytes]:
    """(N, 3) rows of x, p, label"""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise GridFormatError(f"Point sets must have shape (N, 3), got {points.shape}")
    if len(points) == 0:
        raise GridFormatError("Empty point set rejected")
    finite = points[np.isfinite(points).all(axis=1)]
    if len(finite):
        extent = (finite[:, 0].min(), finite[:, 0].max(), finite[:, 1].min(), finite[:, 1].max())
    else:
        extent = (0.0, 0.0, 0.0, 0.0)
    return _encode(points, name, extent)


def encode_points(points, name: str) -> bytes:
    return _encode_points(points, name)[1]


def write_points(path: Union[str, Path], points, name: str) -> GridHeader:
    header, data = _encode_points(points, name)
    Path(path).write_bytes(data)
    return header
