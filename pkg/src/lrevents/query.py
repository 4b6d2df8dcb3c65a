"""Randomized point-to-subspace membership in the infinity norm.

Given factors R (r x n), the distance of a point x to span(R) restricted
to a coordinate set S is the optimum of the Chebyshev linear program

    min t  s.t.  -t <= x_i - (c R)_i <= t   for i in S,

solved here through its dual, which has r + 1 rows regardless of |S|.
Sampling S uniformly gives a test with one-sided error: a point within
distance Delta is never reported outside (the sampled program is a
relaxation), while far points are missed with probability controlled by
the sample-size bound in `sample_size`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import simplex


@dataclass
class QueryConfig:
    """Knobs for one membership query.

    delta is the noise half-width; epsilon the violated-coordinate
    fraction the test must notice; fail_prob the allowed miss
    probability; sample_count overrides the derived sample size.
    """

    delta: float
    epsilon: float = 0.1
    fail_prob: float = 1.0 / 3.0
    sample_count: int | None = None
    c_factor: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta >= 0):
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.fail_prob < 1.0:
            raise ValueError(f"fail_prob must lie in (0, 1), got {self.fail_prob}")
        if self.sample_count is not None and self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.c_factor <= 0:
            raise ValueError("c_factor must be positive")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass
class QueryResult:
    inside: bool
    distance: float  # Chebyshev LP optimum over the sampled coordinates
    coefficients: np.ndarray  # attaining c, length r
    sampled: np.ndarray  # coordinate subset actually used


def sample_size(rank, epsilon, fail_prob, c_factor=1.0):
    """Coordinates needed for the epsilon-net guarantee.

    ceil(C * [(1/eps) ln(1/delta) + (d/eps) ln(d/eps)]) with
    d = max(1, r ln r), floored at 1. Callers clamp to the number of
    available coordinates.
    """
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0.0 < fail_prob < 1.0:
        raise ValueError(f"fail_prob must lie in (0, 1), got {fail_prob}")
    if c_factor <= 0:
        raise ValueError("c_factor must be positive")
    d = max(1.0, rank * np.log(rank))
    raw = (1.0 / epsilon) * np.log(1.0 / fail_prob)
    raw += (d / epsilon) * np.log(d / epsilon)
    return max(1, int(np.ceil(c_factor * raw)))


def sample_coordinates(n, s, seed):
    """Uniform sample of min(s, n) coordinates without replacement, sorted."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=min(s, n), replace=False))


def linf_distance(R, x, coords):
    """Chebyshev distance of x to span(R) over a coordinate set.

    Coordinates where x is missing (NaN) are dropped. Returns
    (t_star, c_hat) with t_star >= 0 and max_i |x_i - (c_hat R)_i| =
    t_star over the retained coordinates.
    """
    R = np.asarray(R, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.int64)
    r = R.shape[0]
    coords = coords[np.isfinite(x[coords])]
    if coords.size == 0:
        raise ValueError("no observed coordinates left to query")

    RS = R[:, coords]
    xs = x[coords]
    s = coords.size
    # dual of the Chebyshev LP: r + 1 equality rows, a (u, l) column pair
    # per coordinate; optimum value is -t_star and the simplex multipliers
    # recover (c_hat, -t_star)
    A = np.empty((r + 1, 2 * s))
    A[:r, :s] = RS
    A[:r, s:] = -RS
    A[r, :] = 1.0
    b = np.zeros(r + 1)
    b[r] = 1.0
    c = np.concatenate([xs, -xs])

    res = simplex.solve_standard_form(A, b, c)
    if res.status != simplex.OPTIMAL:
        raise simplex.SimplexNumericalError(
            f"distance program ended {res.status} (s={s}, r={r})"
        )
    t_star = max(0.0, -res.objective)
    # points on the subspace come back with rounding-level residuals; snap
    # them to 0 so "inside at delta = 0" holds. Snapping only ever moves a
    # verdict toward inside, the direction the one-sided guarantee permits.
    if t_star <= 1e-10 * (1.0 + float(np.max(np.abs(xs)))):
        t_star = 0.0
    return t_star, res.duals[:r].copy()


def _support(x):
    x = np.asarray(x, dtype=np.float64)
    support = np.flatnonzero(np.isfinite(x))
    if support.size == 0:
        raise ValueError("query point has no observed coordinates")
    return x, support


def exact_membership(R, x, delta):
    """Membership over every observed coordinate (the sampled test's oracle)."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    x, support = _support(x)
    dist, coeff = linf_distance(R, x, support)
    return QueryResult(dist <= delta, dist, coeff, support)


def membership(R, x, cfg: QueryConfig):
    """Randomized membership test over a sampled coordinate subset.

    The subset is drawn uniformly from the observed support of x; its
    size comes from cfg.sample_count or the epsilon-net bound. Inside
    means the sampled distance is <= cfg.delta.
    """
    R = np.asarray(R, dtype=np.float64)
    x, support = _support(x)
    s = cfg.sample_count
    if s is None:
        s = sample_size(R.shape[0], cfg.epsilon, cfg.fail_prob, cfg.c_factor)
    picked = support[sample_coordinates(support.size, s, cfg.seed)]
    dist, coeff = linf_distance(R, x, picked)
    return QueryResult(dist <= cfg.delta, dist, coeff, picked)
