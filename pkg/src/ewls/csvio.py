"""CSV formats for truth, measurements and estimates.

Numbers are written with ``repr`` (shortest round-trip form), '.' decimal point,
UTF-8, ``\\n`` line endings.  Reading uses ``float`` which is locale independent,
so writing a parsed canonical file reproduces it byte for byte.

Measurements: ``t_arrival,t_valid,sensor_id,y0[,y1,...]``, sorted by arrival.
Estimates:    ``t,x0..x{n-1},p00..p{n-1}{n-1}`` with the full covariance row-major.
Truth:        ``t,x0..x{n-1}``.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .model import Measurement


class CSVFormatError(ValueError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _render(header: list[str], rows: Iterable[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVFormatError(f"{path}: empty file") from None
        return header, [row for row in reader if row]


# -- measurements ------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementRow:
    t_arrival: float
    t_valid: float
    sensor_id: str
    y: tuple[float, ...]


def render_measurements(measurements: Iterable[Measurement]) -> str:
    ms = list(measurements)
    width = max((m.dim for m in ms), default=1)
    header = ["t_arrival", "t_valid", "sensor_id"] + [f"y{i}" for i in range(width)]
    rows = []
    for m in ms:
        vals = [_fmt(v) for v in m.y] + [""] * (width - m.dim)
        rows.append([_fmt(m.arrival_time), _fmt(m.valid_time), m.sensor_id, *vals])
    return _render(header, rows)


def write_measurements(path, measurements: Iterable[Measurement]) -> None:
    atomic_write_text(path, render_measurements(measurements))


def read_measurement_rows(path) -> list[MeasurementRow]:
    header, rows = _read_rows(path)
    if header[:3] != ["t_arrival", "t_valid", "sensor_id"] or len(header) < 4:
        raise CSVFormatError(f"{path}: header must start with t_arrival,t_valid,sensor_id,y0")
    if header[3:] != [f"y{i}" for i in range(len(header) - 3)]:
        raise CSVFormatError(f"{path}: measurement columns must be y0, y1, ...")
    out = []
    last = -np.inf
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise CSVFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            ta, tv = float(row[0]), float(row[1])
            y = tuple(float(v) for v in row[3:] if v != "")
        except ValueError as exc:
            raise CSVFormatError(f"{path}:{lineno}: {exc}") from None
        if ta < last:
            raise CSVFormatError(f"{path}:{lineno}: rows must be sorted by t_arrival")
        last = ta
        out.append(MeasurementRow(ta, tv, row[2], y))
    return out


def read_measurements(path, sensors: Mapping[str, tuple[np.ndarray, np.ndarray]]) -> list[Measurement]:
    """Parse a measurement CSV, resolving ``H`` and ``R`` by sensor id."""
    out = []
    for row in read_measurement_rows(path):
        if row.sensor_id not in sensors:
            raise CSVFormatError(f"{path}: unknown sensor_id {row.sensor_id!r}")
        H, R = sensors[row.sensor_id]
        if len(row.y) != H.shape[0]:
            raise CSVFormatError(
                f"{path}: sensor {row.sensor_id!r} expects {H.shape[0]} values, got {len(row.y)}"
            )
        out.append(Measurement(row.y, H, R, row.t_valid, row.t_arrival, row.sensor_id))
    return out


# -- estimates ---------------------------------------------------------------


def render_estimates(rows: Iterable[tuple[float, np.ndarray, np.ndarray]], dim: int) -> str:
    header = ["t"] + [f"x{i}" for i in range(dim)]
    header += [f"p{i}{j}" for i in range(dim) for j in range(dim)]
    body = []
    for t, x, P in rows:
        body.append([_fmt(t), *(_fmt(v) for v in x), *(_fmt(v) for v in np.asarray(P).ravel())])
    return _render(header, body)


def write_estimates(path, rows, dim: int) -> None:
    atomic_write_text(path, render_estimates(rows, dim))


def read_estimates(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(t, x, P)`` arrays of shapes ``(N,)``, ``(N, n)``, ``(N, n, n)``."""
    header, rows = _read_rows(path)
    n = 0
    while f"x{n}" in header:
        n += 1
    expected = ["t"] + [f"x{i}" for i in range(n)] + [f"p{i}{j}" for i in range(n) for j in range(n)]
    if n == 0 or header != expected:
        raise CSVFormatError(f"{path}: unexpected estimate header")
    data = np.array([[float(v) for v in row] for row in rows], dtype=float).reshape(len(rows), len(header))
    return data[:, 0], data[:, 1: 1 + n], data[:, 1 + n:].reshape(-1, n, n)


# -- truth -------------------------------------------------------------------


def render_truth(times, states) -> str:
    states = np.asarray(states)
    header = ["t"] + [f"x{i}" for i in range(states.shape[1])]
    return _render(header, ([_fmt(t), *(_fmt(v) for v in s)] for t, s in zip(times, states)))


def write_truth(path, times, states) -> None:
    atomic_write_text(path, render_truth(times, states))


def read_truth(path) -> tuple[np.ndarray, np.ndarray]:
    header, rows = _read_rows(path)
    if not header or header[0] != "t":
        raise CSVFormatError(f"{path}: truth header must start with t")
    data = np.array([[float(v) for v in row] for row in rows], dtype=float).reshape(len(rows), len(header))
    return data[:, 0], data[:, 1:]
