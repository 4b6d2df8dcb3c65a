"""Event detector on top of a fitted factorization.

Calibrates the acceptance threshold from holdout rows, classifies query
points through the randomized membership test, and sweeps threshold
grids against labeled samples to produce precision/recall/F1 reports.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from .query import QueryConfig, exact_membership, linf_distance, membership, sample_size

EVENT = "event"
NONEVENT = "nonevent"
LABELS = (EVENT, NONEVENT)


@dataclass
class DetectorModel:
    """Fitted factors plus the calibrated threshold and query defaults."""

    factorization: object
    delta: float
    epsilon: float = 0.1
    fail_prob: float = 1.0 / 3.0
    c_factor: float = 1.0
    sample_count: int | None = None

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta >= 0):
            raise ValueError(f"delta must be >= 0, got {self.delta}")

    def query_config(self, seed, delta=None):
        return QueryConfig(
            delta=self.delta if delta is None else delta,
            epsilon=self.epsilon,
            fail_prob=self.fail_prob,
            sample_count=self.sample_count,
            c_factor=self.c_factor,
            seed=seed,
        )


def calibrate_delta(fact, holdout_rows):
    """Largest exact distance of any holdout row to span(R).

    Off-line calibration deliberately uses every observed coordinate of
    each row, not a sample.
    """
    best = None
    for idx, x in enumerate(holdout_rows):
        x = np.asarray(x, dtype=np.float64)
        support = np.flatnonzero(np.isfinite(x))
        if support.size == 0:
            raise ValueError(f"holdout row {idx} has no observed coordinates")
        dist, _ = linf_distance(fact.R, x, support)
        if best is None or dist > best:
            best = dist
    if best is None:
        raise ValueError("holdout set is empty")
    return float(best)


def classify(model: DetectorModel, x, seed=0, exact=False):
    """Label a query point; returns (label, abnormality score).

    Inside the subspace (sampled distance <= delta, boundary inclusive)
    means non-event. The score is the sampled Chebyshev distance.
    """
    if exact:
        res = exact_membership(model.factorization.R, x, model.delta)
    else:
        res = membership(model.factorization.R, x, model.query_config(seed))
    return (NONEVENT if res.inside else EVENT), res.distance


@dataclass
class EvalRow:
    delta: float
    tp: float
    fp: float
    fn: float
    tn: float
    precision: float
    recall: float
    f1: float
    precision_defined: bool = True  # False if any repetition had TP + FP = 0
    recall_defined: bool = True


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    seed: int = 0
    repetitions: int = 1
    sample_count: int | None = None  # None means exact (all coordinates)

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("delta,tp,fp,fn,tn,precision,recall,f1\n")
            for r in self.rows:
                vals = (r.delta, r.tp, r.fp, r.fn, r.tn, r.precision, r.recall, r.f1)
                fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")


def binary_metrics(tp, fp, fn):
    """(precision, recall, f1, precision_defined, recall_defined); undefined -> 0."""
    p_def = (tp + fp) > 0
    r_def = (tp + fn) > 0
    precision = tp / (tp + fp) if p_def else 0.0
    recall = tp / (tp + fn) if r_def else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1, p_def, r_def


def _distances_one_rep(R, samples, seeds, s_count, epsilon, fail_prob, c_factor, exact):
    out = np.empty(len(samples))
    for i, x in enumerate(samples):
        if exact:
            res = exact_membership(R, x, 0.0)
        else:
            cfg = QueryConfig(
                delta=0.0, epsilon=epsilon, fail_prob=fail_prob,
                sample_count=s_count, c_factor=c_factor, seed=int(seeds[i]),
            )
            res = membership(R, x, cfg)
        out[i] = res.distance
    return out


def evaluate(model: DetectorModel, samples, labels, delta_grid, repetitions=5,
             seed=0, exact=False, workers=1):
    """Sweep delta over labeled samples; mean metrics over repetitions.

    The sampled coordinate sets depend only on (seed, repetition, sample
    index), so a given repetition classifies every delta with the same
    draws; the non-event set therefore grows monotonically with delta.
    Repetitions collapse to one distance pass in exact mode.
    """
    samples = [np.asarray(x, dtype=np.float64) for x in samples]
    labels = list(labels)
    delta_grid = np.asarray(delta_grid, dtype=np.float64)
    if len(samples) == 0:
        raise ValueError("no samples to evaluate")
    if len(labels) != len(samples):
        raise ValueError(f"{len(labels)} labels for {len(samples)} samples")
    bad = [l for l in labels if l not in LABELS]
    if bad:
        raise ValueError(f"unknown label {bad[0]!r}; expected one of {LABELS}")
    if delta_grid.size == 0:
        raise ValueError("delta grid is empty")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")

    R = model.factorization.R
    s_count = model.sample_count
    if s_count is None and not exact:
        s_count = sample_size(R.shape[0], model.epsilon, model.fail_prob, model.c_factor)

    n_reps = 1 if exact else repetitions
    rep_args = []
    for rep in range(n_reps):
        rng = np.random.default_rng([seed, rep])
        seeds = rng.integers(0, 2**63, size=len(samples))
        rep_args.append(
            (R, samples, seeds, s_count, model.epsilon, model.fail_prob,
             model.c_factor, exact)
        )

    if workers > 1 and n_reps > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(workers, n_reps)) as pool:
            dists = list(pool.map(_distances_one_rep_star, rep_args))
    else:
        dists = [_distances_one_rep(*a) for a in rep_args]
    dists = np.vstack(dists)
    if exact and repetitions > 1:
        dists = np.repeat(dists, repetitions, axis=0)

    is_event = np.array([l == EVENT for l in labels])
    report = EvalReport(seed=seed, repetitions=repetitions,
                        sample_count=None if exact else s_count)
    for delta in delta_grid:
        pred_event = dists > delta  # boundary counts as non-event
        tp = (pred_event & is_event).sum(axis=1)
        fp = (pred_event & ~is_event).sum(axis=1)
        fn = (~pred_event & is_event).sum(axis=1)
        tn = (~pred_event & ~is_event).sum(axis=1)
        per_rep = [binary_metrics(*t) for t in zip(tp, fp, fn)]
        report.rows.append(EvalRow(
            delta=float(delta),
            tp=float(tp.mean()), fp=float(fp.mean()),
            fn=float(fn.mean()), tn=float(tn.mean()),
            precision=float(np.mean([m[0] for m in per_rep])),
            recall=float(np.mean([m[1] for m in per_rep])),
            f1=float(np.mean([m[2] for m in per_rep])),
            precision_defined=all(m[3] for m in per_rep),
            recall_defined=all(m[4] for m in per_rep),
        ))
    return report


def _distances_one_rep_star(args):
    return _distances_one_rep(*args)
