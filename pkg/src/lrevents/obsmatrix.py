"""Partially observed matrices with per-entry interval uncertainty.

A flattened day-by-(sensor, period) matrix stores exact values, one-sided
bounds, and two-sided intervals in a coordinate list sorted row-major.
Instances are immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

MAGIC = b"LREV1"

_HEADER = struct.Struct("<QQQ")
_ENTRY_DTYPE = np.dtype(
    [("i", "<u8"), ("j", "<u8"), ("lo", "<f8"), ("hi", "<f8"), ("kind", "u1")]
)


class EntryKind(IntEnum):
    EXACT = 0
    LOWER = 1
    UPPER = 2
    INTERVAL = 3


@dataclass(frozen=True)
class TimeSeriesRecord:
    """One raw reading: (sensor, day, period) -> value."""

    sensor: int
    day: int
    period: int
    value: float


class ObservationMatrix:
    """m x n partial matrix; entries carry (lower, upper, kind).

    Conventions: EXACT stores lower == upper == value; one-sided bounds
    mirror the live bound into the dead field so every entry is a finite
    pair. INTERVAL requires lower <= upper.
    """

    def __init__(self, m, n, row, col, lower, upper, kind):
        if m < 1 or n < 1:
            raise ValueError(f"matrix dimensions must be positive, got {m}x{n}")
        row = np.asarray(row, dtype=np.int64)
        col = np.asarray(col, dtype=np.int64)
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        kind = np.asarray(kind, dtype=np.uint8)
        k = len(row)
        if not (len(col) == len(lower) == len(upper) == len(kind) == k):
            raise ValueError("entry arrays must have equal length")

        if k:
            if row.min() < 0 or row.max() >= m or col.min() < 0 or col.max() >= n:
                raise ValueError("entry index out of range")
            if not np.isfinite(lower).all() or not np.isfinite(upper).all():
                raise ValueError("entry bounds must be finite")
            if not np.isin(kind, (0, 1, 2, 3)).all():
                raise ValueError("unknown entry kind")
            bad = (kind == EntryKind.INTERVAL) & (lower > upper)
            if bad.any():
                w = np.flatnonzero(bad)[0]
                raise ValueError(
                    f"interval entry ({row[w]}, {col[w]}) has lower {lower[w]} "
                    f"> upper {upper[w]}"
                )

            order = np.lexsort((col, row))
            row, col = row[order], col[order]
            lower, upper, kind = lower[order], upper[order], kind[order]
            flat = row * n + col
            if np.any(flat[1:] == flat[:-1]):
                w = np.flatnonzero(flat[1:] == flat[:-1])[0]
                raise ValueError(f"duplicate entry at ({row[w]}, {col[w]})")

        for a in (row, col, lower, upper, kind):
            a.setflags(write=False)
        self.m = int(m)
        self.n = int(n)
        self.row = row
        self.col = col
        self.lower = lower
        self.upper = upper
        self.kind = kind
        self._row_ptr = None
        self._col_order = None

    # -- basic queries ---------------------------------------------------

    @property
    def num_entries(self):
        return len(self.row)

    @property
    def shape(self):
        return (self.m, self.n)

    @property
    def density(self):
        return self.num_entries / (self.m * self.n)

    def __eq__(self, other):
        if not isinstance(other, ObservationMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row, other.row)
            and np.array_equal(self.col, other.col)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
            and np.array_equal(self.kind, other.kind)
        )

    def __repr__(self):
        return (
            f"ObservationMatrix({self.m}x{self.n}, {self.num_entries} entries, "
            f"density={self.density:.4f})"
        )

    # -- solver-side index structures ------------------------------------

    def row_ptr(self):
        """CSR-style pointers into the row-major entry arrays."""
        if self._row_ptr is None:
            counts = np.bincount(self.row, minlength=self.m)
            ptr = np.zeros(self.m + 1, dtype=np.int64)
            np.cumsum(counts, out=ptr[1:])
            self._row_ptr = ptr
        return self._row_ptr

    def col_order(self):
        """(permutation, col_ptr) giving a column-major view of the entries."""
        if self._col_order is None:
            perm = np.lexsort((self.row, self.col))
            counts = np.bincount(self.col[perm], minlength=self.n)
            ptr = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(counts, out=ptr[1:])
            perm.setflags(write=False)
            ptr.setflags(write=False)
            self._col_order = (perm, ptr)
        return self._col_order

    # -- value views ------------------------------------------------------

    def point_values(self):
        """Representative value per entry: exact value, interval midpoint,
        NaN for one-sided bounds (no point estimate exists)."""
        v = np.full(self.num_entries, np.nan)
        exact = self.kind == EntryKind.EXACT
        v[exact] = self.lower[exact]
        ival = self.kind == EntryKind.INTERVAL
        v[ival] = 0.5 * (self.lower[ival] + self.upper[ival])
        return v

    def row_vector(self, i):
        """Length-n query vector for row i; missing cells are NaN."""
        if not 0 <= i < self.m:
            raise ValueError(f"row {i} out of range for {self.m} rows")
        ptr = self.row_ptr()
        x = np.full(self.n, np.nan)
        lo, hi = ptr[i], ptr[i + 1]
        x[self.col[lo:hi]] = self.point_values()[lo:hi]
        return x

    def to_dense(self):
        dense = np.full((self.m, self.n), np.nan)
        dense[self.row, self.col] = self.point_values()
        return dense

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_exact(cls, m, n, row, col, values):
        values = np.asarray(values, dtype=np.float64)
        kind = np.full(len(values), EntryKind.EXACT, dtype=np.uint8)
        return cls(m, n, row, col, values, values.copy(), kind)

    @classmethod
    def from_dense(cls, dense):
        """Dense array with NaN holes -> exact-entry matrix."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2:
            raise ValueError("expected a 2-d array")
        row, col = np.nonzero(np.isfinite(dense))
        return cls.from_exact(dense.shape[0], dense.shape[1], row, col, dense[row, col])

    # -- transforms --------------------------------------------------------

    def widen(self, delta):
        """Exact entries become intervals [v - delta, v + delta].

        Non-exact entries pass through unchanged; the entry count and
        positions are preserved.
        """
        if delta < 0:
            raise ValueError(f"delta must be nonnegative, got {delta}")
        exact = self.kind == EntryKind.EXACT
        lower = self.lower.copy()
        upper = self.upper.copy()
        kind = self.kind.copy()
        lower[exact] -= delta
        upper[exact] += delta
        kind[exact] = EntryKind.INTERVAL
        return ObservationMatrix(self.m, self.n, self.row, self.col, lower, upper, kind)

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        rec = np.empty(self.num_entries, dtype=_ENTRY_DTYPE)
        rec["i"] = self.row
        rec["j"] = self.col
        rec["lo"] = self.lower
        rec["hi"] = self.upper
        rec["kind"] = self.kind
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(_HEADER.pack(self.m, self.n, self.num_entries))
            fh.write(rec.tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(len(MAGIC))
            if magic != MAGIC:
                raise ValueError(f"{path}: not an observation matrix file")
            m, n, count = _HEADER.unpack(fh.read(_HEADER.size))
            raw = fh.read(count * _ENTRY_DTYPE.itemsize)
        if len(raw) != count * _ENTRY_DTYPE.itemsize:
            raise ValueError(f"{path}: truncated entry block")
        rec = np.frombuffer(raw, dtype=_ENTRY_DTYPE)
        return cls(m, n, rec["i"], rec["j"], rec["lo"], rec["hi"], rec["kind"])


def flatten(records, days, periods, sensors):
    """Pack per-sensor time series into a days x (periods * sensors) matrix.

    Column index is sensor * periods + period, so distinct (sensor, period)
    cells never collide. Cells with no record stay missing. Duplicate
    (day, sensor, period) records resolve last-write-wins and raise a
    warning carrying the duplicate count.
    """
    recs = list(records)
    m, n = days, periods * sensors
    if not recs:
        return ObservationMatrix(m, n, [], [], [], [], [])

    sensor = np.array([r.sensor for r in recs], dtype=np.int64)
    day = np.array([r.day for r in recs], dtype=np.int64)
    period = np.array([r.period for r in recs], dtype=np.int64)
    value = np.array([r.value for r in recs], dtype=np.float64)

    bad = (
        (sensor < 0) | (sensor >= sensors)
        | (day < 0) | (day >= days)
        | (period < 0) | (period >= periods)
    )
    if bad.any():
        w = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"record {w} out of range for D={days}, T={periods}, S={sensors}: {recs[w]}"
        )
    if not np.isfinite(value).all():
        w = int(np.flatnonzero(~np.isfinite(value))[0])
        raise ValueError(f"record {w} has non-finite value: {recs[w]}")

    key = (day * sensors + sensor) * periods + period
    # np.unique keeps the first occurrence; reverse so "first" means the
    # latest record (last-write-wins)
    _, first_in_reversed = np.unique(key[::-1], return_index=True)
    keep = len(recs) - 1 - first_in_reversed
    dup = len(recs) - len(keep)
    if dup:
        warnings.warn(f"{dup} duplicate record(s) resolved last-write-wins")

    return ObservationMatrix.from_exact(
        m, n, day[keep], sensor[keep] * periods + period[keep], value[keep]
    )


CSV_HEADER = ["sensor", "day", "period", "value"]


def read_records_csv(path, *, zeros_as_missing=False):
    """Read `sensor,day,period,value` rows; optionally drop zero readings."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for ln, parts in enumerate(reader, start=2):
            if not parts:
                continue
            if len(parts) != 4:
                raise ValueError(f"{path}:{ln}: expected 4 fields, got {len(parts)}")
            try:
                rec = TimeSeriesRecord(
                    int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{ln}: {exc}") from None
            if zeros_as_missing and rec.value == 0.0:
                continue
            out.append(rec)
    return out


def write_records_csv(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.sensor, r.day, r.period, f"{r.value:.17g}"])
