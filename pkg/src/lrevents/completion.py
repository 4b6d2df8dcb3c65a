"""Inequality-constrained low-rank completion by alternating parallel
coordinate descent.

The objective is the exact-entry least-squares term plus squared hinge
penalties for bound violations plus Frobenius regularization:

    f(L, R) = 1/2 sum_E (L_i. R_.j - v_ij)^2
            + 1/2 sum_lower (lo_ij - L_i. R_.j)_+^2
            + 1/2 sum_upper (L_i. R_.j - hi_ij)_+^2
            + mu/2 (||L||_F^2 + ||R||_F^2)

Each epoch updates one randomly chosen coordinate per sampled row of L,
then one per sampled column of R. Within a phase the updates touch
disjoint coordinates and read only the fixed factor, so computing all
deltas from a snapshot and applying them is bit-identical to applying
them one row at a time; that is the sense in which the phase is
parallel.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .obsmatrix import EntryKind, ObservationMatrix

MODEL_MAGIC = b"LRFA1"
_MODEL_HEADER = struct.Struct("<QQQd")


class CompletionNumericalError(RuntimeError):
    """Raised when a fit diverges to a non-finite objective."""


@dataclass
class Factorization:
    """Learned factor pair; predictions are rows of L @ R."""

    L: np.ndarray
    R: np.ndarray
    mu: float

    def __post_init__(self):
        self.L = np.ascontiguousarray(self.L, dtype=np.float64)
        self.R = np.ascontiguousarray(self.R, dtype=np.float64)
        if self.L.ndim != 2 or self.R.ndim != 2 or self.L.shape[1] != self.R.shape[0]:
            raise ValueError(
                f"inconsistent factor shapes {self.L.shape} x {self.R.shape}"
            )
        if not (np.isfinite(self.L).all() and np.isfinite(self.R).all()):
            raise ValueError("factors must be finite")
        if not (np.isfinite(self.mu) and self.mu >= 0):
            raise ValueError(f"mu must be a nonnegative real, got {self.mu}")

    @property
    def m(self):
        return self.L.shape[0]

    @property
    def n(self):
        return self.R.shape[1]

    @property
    def rank(self):
        return self.L.shape[1]

    def predict_entries(self, row, col):
        return (self.L[row] * self.R[:, col].T).sum(axis=1)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(MODEL_MAGIC)
            fh.write(_MODEL_HEADER.pack(self.m, self.n, self.rank, self.mu))
            fh.write(self.L.astype("<f8").tobytes())
            fh.write(self.R.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(len(MODEL_MAGIC))
            if magic != MODEL_MAGIC:
                raise ValueError(f"{path}: not a factorization file")
            m, n, r, mu = _MODEL_HEADER.unpack(fh.read(_MODEL_HEADER.size))
            L = np.frombuffer(fh.read(8 * m * r), dtype="<f8").reshape(m, r)
            R = np.frombuffer(fh.read(8 * r * n), dtype="<f8").reshape(r, n)
        return cls(L.copy(), R.copy(), mu)


@dataclass
class FitConfig:
    rank: int = 10
    mu: float = 0.1
    row_fraction: float = 1.0
    col_fraction: float = 1.0
    max_epochs: int = 500
    tol: float = 1e-4  # stop when per-epoch objective improvement drops below
    seed: int = 0
    init_scale: float | None = None  # None: sqrt(mean observed magnitude / rank)

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        for name in ("row_fraction", "col_fraction"):
            frac = getattr(self, name)
            if not 0.0 < frac <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {frac}")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass
class FitTrace:
    objective: list = field(default_factory=list)
    rmse: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    @property
    def epochs(self):
        return len(self.objective)


class _Orientation:
    """Entry arrays grouped along one axis, with hinge masks precomputed.

    Row orientation groups by matrix row (L updates); column orientation
    groups by matrix column with roles swapped (R updates reuse the same
    delta computation on the transposed problem).
    """

    def __init__(self, outer, inner, lo, hi, kind, ptr):
        self.outer = outer
        self.inner = inner
        self.lo = lo
        self.hi = hi
        self.ptr = ptr
        self.exact = kind == EntryKind.EXACT
        self.has_lo = (kind == EntryKind.LOWER) | (kind == EntryKind.INTERVAL)
        self.has_hi = (kind == EntryKind.UPPER) | (kind == EntryKind.INTERVAL)


def _row_orientation(obs):
    return _Orientation(obs.row, obs.col, obs.lower, obs.upper, obs.kind, obs.row_ptr())


def _col_orientation(obs):
    perm, ptr = obs.col_order()
    return _Orientation(
        obs.col[perm], obs.row[perm], obs.lower[perm], obs.upper[perm],
        obs.kind[perm], ptr,
    )


def _concat_ranges(starts, counts):
    """Concatenate arange(s, s + c) for each (s, c) pair."""
    nz = counts > 0
    starts, counts = starts[nz], counts[nz]
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    out = np.ones(total, dtype=np.int64)
    seg = np.zeros(len(counts), dtype=np.int64)
    np.cumsum(counts[:-1], out=seg[1:])
    out[0] = starts[0]
    out[seg[1:]] = starts[1:] - (starts[:-1] + counts[:-1] - 1)
    np.cumsum(out, out=out)
    return out


def _residual_forces(preds, ent, orient):
    """Derivative of the per-entry loss with respect to the prediction."""
    q = np.zeros(len(preds))
    exact = orient.exact[ent]
    q[exact] = preds[exact] - orient.lo[ent][exact]
    has_lo = orient.has_lo[ent]
    q[has_lo] -= np.maximum(orient.lo[ent][has_lo] - preds[has_lo], 0.0)
    has_hi = orient.has_hi[ent]
    q[has_hi] += np.maximum(preds[has_hi] - orient.hi[ent][has_hi], 0.0)
    return q


def _group_deltas(A, B, orient, outers, rhats, mu):
    """Coordinate steps for A[outers, rhats] with B held fixed.

    Returns (deltas, curvatures) where delta = -g / W, g the partial
    derivative of f and W = mu + sum over the group's entries of the
    matching B coefficients squared (the exact coordinate curvature
    bound, counting every observed entry whether or not its hinge is
    active). W = 0 only when mu = 0 and the bound is vacuous; the step
    is 0 there.
    """
    if len(outers) == len(orient.ptr) - 1:
        # full sweep: the sorted sample is every group in storage order
        ent = np.arange(len(orient.outer))
        seg = orient.outer
        eouter = orient.outer
    else:
        counts = orient.ptr[outers + 1] - orient.ptr[outers]
        ent = _concat_ranges(orient.ptr[outers], counts)
        seg = np.repeat(np.arange(len(outers)), counts)
        eouter = np.repeat(outers, counts)
    einner = orient.inner[ent]

    preds = (A[eouter] * B[:, einner].T).sum(axis=1)
    q = _residual_forces(preds, ent, orient)
    bsel = B[rhats[seg], einner]

    # bincount yields int64 when the entry set is empty; keep floats
    g = np.bincount(seg, weights=q * bsel, minlength=len(outers)).astype(
        np.float64, copy=False
    )
    g += mu * A[outers, rhats]
    W = mu + np.bincount(seg, weights=bsel * bsel, minlength=len(outers))
    safe = np.where(W > 0.0, W, 1.0)
    return np.where(W > 0.0, -g / safe, 0.0), W


def _check_dims(fact, obs):
    if (fact.m, fact.n) != obs.shape:
        raise ValueError(
            f"factorization is {fact.m}x{fact.n} but matrix is {obs.shape[0]}x{obs.shape[1]}"
        )


def objective(fact, obs):
    """Interval-completion objective f(L, R); always >= 0."""
    _check_dims(fact, obs)
    preds = fact.predict_entries(obs.row, obs.col)
    exact = obs.kind == EntryKind.EXACT
    has_lo = (obs.kind == EntryKind.LOWER) | (obs.kind == EntryKind.INTERVAL)
    has_hi = (obs.kind == EntryKind.UPPER) | (obs.kind == EntryKind.INTERVAL)
    e = preds[exact] - obs.lower[exact]
    vlo = np.maximum(obs.lower[has_lo] - preds[has_lo], 0.0)
    vhi = np.maximum(preds[has_hi] - obs.upper[has_hi], 0.0)
    reg = 0.5 * fact.mu * (np.einsum("ij,ij", fact.L, fact.L) + np.einsum("ij,ij", fact.R, fact.R))
    return 0.5 * (e @ e + vlo @ vlo + vhi @ vhi) + reg


def _entry_residuals(fact, obs):
    preds = fact.predict_entries(obs.row, obs.col)
    exact = obs.kind == EntryKind.EXACT
    has_lo = (obs.kind == EntryKind.LOWER) | (obs.kind == EntryKind.INTERVAL)
    has_hi = (obs.kind == EntryKind.UPPER) | (obs.kind == EntryKind.INTERVAL)
    res = np.zeros(obs.num_entries)
    res[exact] = np.abs(preds[exact] - obs.lower[exact])
    res[has_lo] += np.maximum(obs.lower[has_lo] - preds[has_lo], 0.0)
    res[has_hi] += np.maximum(preds[has_hi] - obs.upper[has_hi], 0.0)
    return res


def rmse(fact, obs):
    """Root-mean-square residual over observed entries.

    Exact entries contribute |prediction - value|; bounded entries
    contribute their distance to the feasible interval (0 inside).
    """
    _check_dims(fact, obs)
    if obs.num_entries == 0:
        raise ValueError("rmse is undefined on a matrix with no entries")
    res = _entry_residuals(fact, obs)
    return float(np.sqrt(res @ res / len(res)))


def _objective_and_rmse(fact, obs, orient):
    """One shared prediction pass for the per-epoch trace."""
    preds = fact.predict_entries(obs.row, obs.col)
    e = preds[orient.exact] - obs.lower[orient.exact]
    vlo = np.maximum(obs.lower[orient.has_lo] - preds[orient.has_lo], 0.0)
    vhi = np.maximum(preds[orient.has_hi] - obs.upper[orient.has_hi], 0.0)
    reg = 0.5 * fact.mu * (
        np.einsum("ij,ij", fact.L, fact.L) + np.einsum("ij,ij", fact.R, fact.R)
    )
    f = 0.5 * (e @ e + vlo @ vlo + vhi @ vhi) + reg
    res = np.zeros(obs.num_entries)
    res[orient.exact] = np.abs(e)
    res[orient.has_lo] += vlo
    res[orient.has_hi] += vhi
    return float(f), float(np.sqrt(res @ res / len(res)))


def coordinate_delta_L(fact, obs, i, rhat):
    """Step and curvature bound for coordinate (i, rhat) of L."""
    _check_dims(fact, obs)
    if not (0 <= i < fact.m and 0 <= rhat < fact.rank):
        raise IndexError(f"coordinate ({i}, {rhat}) out of range")
    d, w = _group_deltas(
        fact.L, fact.R, _row_orientation(obs),
        np.array([i]), np.array([rhat]), fact.mu,
    )
    return float(d[0]), float(w[0])


def coordinate_delta_R(fact, obs, rhat, j):
    """Step and curvature bound for coordinate (rhat, j) of R."""
    _check_dims(fact, obs)
    if not (0 <= j < fact.n and 0 <= rhat < fact.rank):
        raise IndexError(f"coordinate ({rhat}, {j}) out of range")
    d, w = _group_deltas(
        fact.R.T, fact.L.T, _col_orientation(obs),
        np.array([j]), np.array([rhat]), fact.mu,
    )
    return float(d[0]), float(w[0])


def objective_gradients(fact, obs):
    """Full (grad_L, grad_R) of the objective; used for stationarity checks."""
    _check_dims(fact, obs)
    orient = _row_orientation(obs)
    ent = np.arange(obs.num_entries)
    preds = fact.predict_entries(obs.row, obs.col)
    q = _residual_forces(preds, ent, orient)
    grad_L = fact.mu * fact.L.copy()
    np.add.at(grad_L, obs.row, q[:, None] * fact.R[:, obs.col].T)
    grad_R = fact.mu * fact.R.copy()
    np.add.at(grad_R.T, obs.col, q[:, None] * fact.L[obs.row])
    return grad_L, grad_R


def initial_factors(obs, cfg):
    """Uniform nonnegative initialization at the data's magnitude."""
    scale = cfg.init_scale
    if scale is None:
        # midpoint equals the live bound for one-sided kinds (mirrored
        # storage); halve before adding so extreme values cannot overflow
        ref = np.abs(0.5 * obs.lower + 0.5 * obs.upper)
        mean = float(ref.mean()) if len(ref) else 1.0
        scale = np.sqrt(max(mean, 1e-12) / cfg.rank)
    scale = max(float(scale), 1e-6)
    rng = np.random.default_rng([cfg.seed, 0])
    L = rng.uniform(0.0, scale, size=(obs.m, cfg.rank))
    R = rng.uniform(0.0, scale, size=(cfg.rank, obs.n))
    return L, R


def epoch_samples(cfg, epoch, m, n):
    """Replayable per-epoch draws: (rows, row_rhats, cols, col_rhats).

    Every epoch reseeds from (seed, epoch) so a run can be reproduced
    from any point without replaying earlier epochs.
    """
    rng = np.random.default_rng([cfg.seed, epoch + 1])
    n_rows = max(1, int(np.ceil(cfg.row_fraction * m)))
    n_cols = max(1, int(np.ceil(cfg.col_fraction * n)))
    rows = np.sort(rng.choice(m, size=n_rows, replace=False))
    row_rhats = rng.integers(0, cfg.rank, size=n_rows)
    cols = np.sort(rng.choice(n, size=n_cols, replace=False))
    col_rhats = rng.integers(0, cfg.rank, size=n_cols)
    return rows, row_rhats, cols, col_rhats


def fit(obs: ObservationMatrix, cfg: FitConfig):
    """Run alternating parallel coordinate descent; returns (Factorization, FitTrace).

    Stops after cfg.max_epochs or once the per-epoch objective
    improvement falls below cfg.tol. Raises CompletionNumericalError if
    the objective becomes non-finite.
    """
    if obs.num_entries == 0:
        raise ValueError("cannot fit a matrix with no observed entries")
    L, R = initial_factors(obs, cfg)
    fact = Factorization(L, R, cfg.mu)
    L, R = fact.L, fact.R
    row_orient = _row_orientation(obs)
    col_orient = _col_orientation(obs)
    Rt, Lt = R.T, L.T  # views: updates through them mutate R and L

    trace = FitTrace()
    f_prev, _ = _objective_and_rmse(fact, obs, row_orient)
    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        rows, row_rhats, cols, col_rhats = epoch_samples(cfg, epoch, obs.m, obs.n)

        deltas, _ = _group_deltas(L, R, row_orient, rows, row_rhats, cfg.mu)
        L[rows, row_rhats] += deltas

        deltas, _ = _group_deltas(Rt, Lt, col_orient, cols, col_rhats, cfg.mu)
        Rt[cols, col_rhats] += deltas

        f, err = _objective_and_rmse(fact, obs, row_orient)
        if not np.isfinite(f):
            raise CompletionNumericalError(
                f"objective became non-finite at epoch {epoch} "
                f"(previous value {f_prev:.6e}); the instance may be badly scaled"
            )
        trace.objective.append(f)
        trace.rmse.append(err)
        trace.seconds.append(time.perf_counter() - t0)
        if f_prev - f < cfg.tol:
            break
        f_prev = f
    return fact, trace
