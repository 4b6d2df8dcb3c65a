"""Synthetic data following the evaluation protocol: non-event rows are
rescaled resamples of a base matrix plus bounded uniform noise; event
rows add Gaussian noise with a configurable mean on top of non-event
rows."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .obsmatrix import ObservationMatrix


@dataclass
class SynthConfig:
    rows_out: int
    event_rows: int = 0
    scalar_range: tuple = (0.0, 2.0)
    noise_half_width: float = 0.0  # uniform noise support is +/- this (0.8 * Delta)
    event_means: tuple = (5.0, 15.0, 25.0, 35.0)
    event_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.rows_out > self.event_rows >= 0:
            raise ValueError(
                f"need rows_out > event_rows >= 0, got {self.rows_out}, {self.event_rows}"
            )
        lo, hi = self.scalar_range
        if not lo <= hi:
            raise ValueError(f"scalar_range must be ordered, got {self.scalar_range}")
        if self.noise_half_width < 0:
            raise ValueError("noise_half_width must be >= 0")
        if not self.event_sigma > 0:
            raise ValueError("event_sigma must be positive")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


def make_ground_truth(m, n, rank, value_scale, density, seed):
    """Random nonnegative rank-`rank` matrix with a Bernoulli(density) mask.

    Returns (ObservationMatrix, L_true, R_true); factor entries are
    uniform on [0, sqrt(value_scale / rank)] so products land in
    [0, value_scale].
    """
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density must lie in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(value_scale / rank)
    L = rng.uniform(0.0, scale, size=(m, rank))
    R = rng.uniform(0.0, scale, size=(rank, n))
    mask = rng.random((m, n)) < density
    dense = np.where(mask, L @ R, np.nan)
    return ObservationMatrix.from_dense(dense), L, R


def make_nonevents(base: ObservationMatrix, cfg: SynthConfig):
    """Non-event matrix: row k is alpha_k * (random base row) + uniform noise.

    alpha is uniform on cfg.scalar_range and the noise uniform on
    +/- cfg.noise_half_width, applied to observed cells only; missing
    cells stay missing. Returns (Y, provenance) with provenance a list
    of (source_row, alpha) pairs.
    """
    if base.num_entries == 0:
        raise ValueError("base matrix has no observed entries")
    rng = np.random.default_rng([cfg.seed, 0])
    ptr = base.row_ptr()
    values = base.point_values()
    lo, hi = cfg.scalar_range
    hw = cfg.noise_half_width

    rows, cols, vals, provenance = [], [], [], []
    for k in range(cfg.rows_out):
        src = int(rng.integers(0, base.m))
        alpha = float(rng.uniform(lo, hi))
        a, b = ptr[src], ptr[src + 1]
        noise = rng.uniform(-hw, hw, size=b - a) if hw > 0 else np.zeros(b - a)
        keep = np.isfinite(values[a:b])
        rows.append(np.full(int(keep.sum()), k, dtype=np.int64))
        cols.append(base.col[a:b][keep])
        vals.append(alpha * values[a:b][keep] + noise[keep])
        provenance.append((src, alpha))

    y = ObservationMatrix.from_exact(
        cfg.rows_out, base.n,
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
    )
    return y, provenance


def make_events(y: ObservationMatrix, cfg: SynthConfig, mean):
    """Event matrix: cfg.event_rows rows of Y, sampled without replacement,
    plus N(mean, sigma^2) noise on observed cells. Returns (G, source_rows)."""
    means = tuple(cfg.event_means)
    if mean not in means:
        raise ValueError(f"mean {mean} not in configured event means {means}")
    if cfg.event_rows < 1:
        raise ValueError("cfg.event_rows must be >= 1 to make events")
    if cfg.event_rows > y.m:
        raise ValueError(
            f"cannot sample {cfg.event_rows} distinct rows from {y.m}"
        )
    rng = np.random.default_rng([cfg.seed, 1, means.index(mean)])
    src = np.sort(rng.choice(y.m, size=cfg.event_rows, replace=False))
    ptr = y.row_ptr()
    values = y.point_values()

    rows, cols, vals = [], [], []
    for k, s in enumerate(src):
        a, b = ptr[s], ptr[s + 1]
        noise = rng.normal(mean, cfg.event_sigma, size=b - a)
        rows.append(np.full(b - a, k, dtype=np.int64))
        cols.append(y.col[a:b])
        vals.append(values[a:b] + noise)

    g = ObservationMatrix.from_exact(
        cfg.event_rows, y.n,
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
    )
    return g, src


def vstack(matrices):
    """Stack observation matrices vertically (same column count)."""
    mats = list(matrices)
    if not mats:
        raise ValueError("nothing to stack")
    n = mats[0].n
    if any(m.n != n for m in mats):
        raise ValueError("column counts differ")
    rows, cols, lower, upper, kind = [], [], [], [], []
    offset = 0
    for m in mats:
        rows.append(m.row + offset)
        cols.append(m.col)
        lower.append(m.lower)
        upper.append(m.upper)
        kind.append(m.kind)
        offset += m.m
    return ObservationMatrix(
        offset, n,
        np.concatenate(rows), np.concatenate(cols),
        np.concatenate(lower), np.concatenate(upper), np.concatenate(kind),
    )


def row_slice(mat: ObservationMatrix, start, stop):
    """Submatrix of rows [start, stop), reindexed from 0."""
    if not 0 <= start < stop <= mat.m:
        raise ValueError(f"bad row range [{start}, {stop}) for {mat.m} rows")
    ptr = mat.row_ptr()
    a, b = ptr[start], ptr[stop]
    return ObservationMatrix(
        stop - start, mat.n,
        mat.row[a:b] - start, mat.col[a:b],
        mat.lower[a:b], mat.upper[a:b], mat.kind[a:b],
    )


def write_labels_csv(path, labels):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "label"])
        for i, lab in enumerate(labels):
            writer.writerow([i, lab])


def read_labels_csv(path):
    labels = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["row", "label"]:
            raise ValueError(f"{path}: expected header row,label")
        for ln, parts in enumerate(reader, start=2):
            if not parts:
                continue
            if len(parts) != 2:
                raise ValueError(f"{path}:{ln}: expected 2 fields")
            if int(parts[0]) != len(labels):
                raise ValueError(f"{path}:{ln}: rows must be consecutive from 0")
            labels.append(parts[1])
    return labels
