"""Reading and writing sample streams.

Three formats:

* dense CSV, one sample per row: ``y,mask,x1..xD`` where ``mask`` is a
  string of ``0``/``1`` characters (``1`` = observed); interaction streams
  append ``mask2,x2_1..x2_D``;
* binary little-endian: magic ``OSDR1``, ``u32 D``, ``u32 N``, then ``N``
  rows of ``1 + 2D`` float64 values ``[y, mask..., x...]``;
* external labeled vectors: CSV with header ``y,x1..xD``; empty or ``nan``
  cells are treated as unobserved.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .datagen import Stream
from .engine import fmt

MAGIC = b"OSDR1"
_HEADER = struct.Struct("<5sII")


class DatasetFormatError(ValueError):
    """Raised for files that do not follow the expected layout."""


def _bits(mask: np.ndarray) -> str:
    return "".join("1" if v else "0" for v in mask)


def _parse_bits(text: str, D: int, where: str) -> np.ndarray:
    if len(text) != D or set(text) - {"0", "1"}:
        raise DatasetFormatError(f"{where}: mask must be {D} characters of 0/1")
    return np.frombuffer(text.encode(), dtype=np.uint8) == ord("1")


def write_csv(path, stream: Stream) -> None:
    D, pairs = stream.D, stream.X2 is not None
    header = ["y", "mask"] + [f"x{i}" for i in range(1, D + 1)]
    if pairs:
        header += ["mask2"] + [f"x2_{i}" for i in range(1, D + 1)]
    full = np.ones(D, dtype=bool)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for i in range(len(stream)):
            row = [fmt(stream.y[i]), _bits(full if stream.masks is None else stream.masks[i])]
            row += [fmt(v) for v in stream.X[i]]
            if pairs:
                row += [_bits(full if stream.masks2 is None else stream.masks2[i])]
                row += [fmt(v) for v in stream.X2[i]]
            out.writerow(row)


def read_csv(path) -> Stream:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["y", "mask"]:
        raise DatasetFormatError(f"{path}: expected a header starting with 'y,mask'")
    header = rows[0]
    pairs = "mask2" in header
    D = header.index("mask2") - 2 if pairs else len(header) - 2
    if D < 1 or (pairs and len(header) != 2 * D + 3):
        raise DatasetFormatError(f"{path}: malformed header")
    y, X, masks, X2, masks2 = [], [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        where = f"{path}:{lineno}"
        if len(row) != len(header):
            raise DatasetFormatError(f"{where}: expected {len(header)} fields, got {len(row)}")
        try:
            y.append(float(row[0]))
            X.append([float(v) for v in row[2:2 + D]])
            if pairs:
                X2.append([float(v) for v in row[3 + D:]])
        except ValueError as exc:
            raise DatasetFormatError(f"{where}: {exc}") from None
        masks.append(_parse_bits(row[1], D, where))
        if pairs:
            masks2.append(_parse_bits(row[2 + D], D, where))
    masks = np.array(masks, dtype=bool).reshape(-1, D)
    stream = Stream(np.array(X, dtype=float).reshape(-1, D), np.array(y, dtype=float),
                    None if masks.all() else masks)
    if pairs:
        masks2 = np.array(masks2, dtype=bool).reshape(-1, D)
        stream.X2 = np.array(X2, dtype=float).reshape(-1, D)
        stream.masks2 = None if masks2.all() else masks2
    return stream


def write_binary(path, stream: Stream) -> None:
    if stream.X2 is not None:
        raise ValueError("the binary format holds single-predictor streams only")
    N, D = stream.X.shape
    masks = np.ones((N, D), dtype=bool) if stream.masks is None else stream.masks
    payload = np.column_stack([stream.y, masks.astype(float), stream.X]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, D, N))
        fh.write(payload.tobytes())


def read_binary(path) -> Stream:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header")
    magic, D, N = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * N * (1 + 2 * D)
    if len(data) != expected:
        raise DatasetFormatError(f"{path}: expected {expected} bytes for D={D}, N={N}, got {len(data)}")
    payload = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(N, 1 + 2 * D)
    masks = payload[:, 1:1 + D] != 0.0
    return Stream(payload[:, 1 + D:].copy(), payload[:, 0].copy(), None if masks.all() else masks)


def read_labeled_vectors(path) -> Stream:
    """External labeled-vector CSV with header ``y,x1..xD``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    D = len(header) - 1
    if D < 1 or header != ["y"] + [f"x{i}" for i in range(1, D + 1)]:
        raise DatasetFormatError(f"{path}: header must be y,x1..xD")
    y, X = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != D + 1:
            raise DatasetFormatError(f"{path}:{lineno}: expected {D + 1} fields, got {len(row)}")
        try:
            y.append(float(row[0]))
            X.append([float(v) if v.strip() else np.nan for v in row[1:]])
        except ValueError as exc:
            raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
    X = np.array(X, dtype=float).reshape(-1, D)
    y = np.array(y, dtype=float)
    if np.isnan(y).any():
        raise DatasetFormatError(f"{path}: labels must all be present")
    observed = ~np.isnan(X)
    if observed.all():
        return Stream(X, y, meta={"kind": "external-csv", "source": str(path)})
    return Stream(np.where(observed, X, 0.0), y, observed, meta={"kind": "external-csv", "source": str(path)})


def load(path) -> Stream:
    """Dispatch on content: binary magic, dataset CSV or labeled-vector CSV."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return read_binary(path)
    with open(path, newline="") as fh:
        first = fh.readline()
    if first.startswith("y,mask"):
        return read_csv(path)
    return read_labeled_vectors(path)
