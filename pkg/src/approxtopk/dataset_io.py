"""ATKV vector files, synthetic inputs and CSV result tables.

ATKV layout (little endian)::

    b"ATKV" | version: u8 = 1 | rows: u64 | dims: u64 | rows*dims float32
"""

from __future__ import annotations

import csv
import io
import os
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"ATKV"
VERSION = 1
_HEADER = struct.Struct("<4sBQQ")
HEADER_SIZE = _HEADER.size  # 21

MAX_EXACT_INT = 2**24
CSV_HEADER = ("config", "metric", "value", "stderr")


class DatasetFormatError(ValueError):
    """Malformed or unsupported ATKV data."""


class BadMagicError(DatasetFormatError):
    pass


class TruncatedError(DatasetFormatError):
    pass


class NaNPayloadError(DatasetFormatError):
    pass


@dataclass
class VectorDataset:
    """``rows x dims`` float32 matrix, row-major."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError(f"dataset must be 2-D, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if np.isnan(arr).any():
            raise NaNPayloadError("dataset contains NaN")
        self.data = arr

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> int:
        return self.data.shape[1]


def _open(target, mode):
    if isinstance(target, (str, os.PathLike)):
        return open(target, mode), True
    return target, False


def write_dataset(ds: VectorDataset, sink) -> None:
    """Write ``ds`` to a path or binary file object."""
    fh, owned = _open(sink, "wb")
    try:
        fh.write(_HEADER.pack(MAGIC, VERSION, ds.rows, ds.dims))
        fh.write(ds.data.astype("<f4", copy=False).tobytes())
    finally:
        if owned:
            fh.close()


def read_dataset(source) -> VectorDataset:
    """Read an ATKV dataset; the header is validated before the payload is read."""
    fh, owned = _open(source, "rb")
    try:
        header = fh.read(HEADER_SIZE)
        if len(header) < 4 or header[:4] != MAGIC:
            raise BadMagicError(f"bad magic {header[:4]!r}, expected {MAGIC!r}")
        if len(header) < HEADER_SIZE:
            raise TruncatedError(f"header is {len(header)} bytes, expected {HEADER_SIZE}")
        _, version, rows, dims = _HEADER.unpack(header)
        if version != VERSION:
            raise DatasetFormatError(f"unsupported ATKV version {version}")
        nbytes = rows * dims * 4
        payload = fh.read(nbytes)
        if len(payload) != nbytes:
            raise TruncatedError(f"payload is {len(payload)} bytes, expected {nbytes}")
    finally:
        if owned:
            fh.close()
    data = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(rows, dims)
    return VectorDataset(data)


def synth_distinct(rows: int, n: int, seed: int = 0, *, first_row: int = 0) -> VectorDataset:
    """Each row a seeded random permutation of ``1..n`` as float32.

    Row ``i`` depends only on ``(seed, first_row + i)``, so a large batch can be
    generated in chunks.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > MAX_EXACT_INT:
        raise ValueError(f"n={n} exceeds 2**24; float32 cannot hold 1..n exactly")
    if rows < 0:
        raise ValueError("rows must be >= 0")
    out = np.empty((rows, n), dtype=np.float32)
    base = np.arange(1, n + 1, dtype=np.float32)
    for i in range(rows):
        rng = np.random.default_rng((seed, first_row + i))
        out[i] = rng.permutation(base)
    return VectorDataset(out)


def synth_gaussian(rows: int, dims: int, seed: int = 0) -> VectorDataset:
    """Standard normal vectors (MIPS databases and queries)."""
    rng = np.random.default_rng(seed)
    return VectorDataset(rng.standard_normal((rows, dims), dtype=np.float32))


def write_csv(records, sink=None) -> str:
    """Write ``(config, metric, value, stderr)`` records; ``stderr`` may be None.

    Floats use ``repr`` so they parse back exactly. Returns the text when
    ``sink`` is None.
    """
    buf = io.StringIO() if sink is None else None
    fh = buf if sink is None else sink
    owned = False
    if isinstance(fh, (str, os.PathLike)):
        fh, owned = open(fh, "w", newline=""), True
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for config, metric, value, stderr in records:
            w.writerow([config, metric, _fmt(value), _fmt(stderr)])
    finally:
        if owned:
            fh.close()
    return buf.getvalue() if buf is not None else ""


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_csv(source) -> list[tuple[str, str, float, float | None]]:
    """Parse a results CSV (path or text file object) written by :func:`write_csv`."""
    fh, owned = _open(source, "r")
    try:
        return parse_csv(fh.read())
    finally:
        if owned:
            fh.close()


def parse_csv(text: str) -> list[tuple[str, str, float, float | None]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise DatasetFormatError(f"unexpected CSV header {header}")
    out = []
    for row in reader:
        if not row:
            continue
        config, metric, value, stderr = row
        out.append((config, metric, float(value), float(stderr) if stderr else None))
    return out
