"""Command-line pipeline: generate | train | detect | eval.

Every run resolves its configuration (flags > config file > defaults),
executes, and writes a key=value manifest next to its outputs recording
the resolved values plus wall-clock timings. Feeding a manifest back via
--config reproduces the run's output files bit-exactly (timings aside).

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import completion, detect, obsmatrix, synth
from .completion import CompletionNumericalError, Factorization, FitConfig
from .simplex import SimplexNumericalError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


class InputError(Exception):
    """Invalid configuration, arguments, or data files."""


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def parse_grid(text):
    """Delta grid: either 'a,b,c' or 'start:stop:step' (stop inclusive)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InputError(f"grid {text!r} must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise InputError(f"bad grid range {text!r}")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(count)
    return np.array([float(p) for p in text.split(",") if p.strip() != ""])


def _parse_floats(text):
    return tuple(float(p) for p in str(text).split(",") if p.strip() != "")


def _parse_ints(text):
    return tuple(int(p) for p in str(text).split(",") if p.strip() != "")


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise InputError(f"expected a boolean, got {text!r}")


def read_config(path):
    conf = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for ln, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{path}:{ln}: expected key=value")
        key, _, value = line.partition("=")
        conf[key.strip()] = value.strip()
    return conf


def write_manifest(path, subcommand, resolved, timings):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"subcommand={subcommand}\n")
        for key in sorted(resolved):
            value = resolved[key]
            if value is None:
                continue
            fh.write(f"{key}={_fmt(value)}\n")
        for phase, secs in timings.items():
            fh.write(f"wall_clock.{phase}={secs:.6f}\n")


# option spec: name -> (parser, default); parser None means plain string
def _resolve(spec, args, config):
    """flags > config file > defaults, per option."""
    resolved = {}
    known = set(spec) | {"config"}
    for key in config:
        base = key.split(".", 1)[0]
        if key not in known and base not in ("wall_clock", "subcommand"):
            raise InputError(f"unknown config key {key!r}")
    for name, (parse, default) in spec.items():
        flag_val = getattr(args, name.replace("-", "_"), None)
        if flag_val is not None:
            resolved[name] = flag_val
        elif name in config:
            raw = config[name]
            try:
                resolved[name] = parse(raw) if parse else raw
            except (ValueError, TypeError) as exc:
                raise InputError(f"config key {name}={raw!r}: {exc}") from None
        else:
            resolved[name] = default
    return resolved


def _load_matrix(path):
    try:
        return obsmatrix.ObservationMatrix.load(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot load matrix {path}: {exc}") from None


def _load_model(path):
    try:
        return Factorization.load(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot load model {path}: {exc}") from None


def _mu_tag(mu):
    return _fmt(mu).replace("-", "m")


# ---------------------------------------------------------------------------
# generate

GENERATE_SPEC = {
    "out-dir": (None, "data"),
    "rows": (int, 1200),
    "train-rows": (int, 1000),
    "event-rows": (int, 200),
    "days": (int, 16),
    "periods": (int, 24),
    "sensors": (int, 4),
    "rank": (int, 4),
    "value-scale": (float, 30.0),
    "density": (float, 0.8),
    "delta": (float, 10.0),
    "means": (_parse_floats, (5.0, 15.0, 25.0, 35.0)),
    "sigma": (float, 1.0),
    "base-csv": (None, None),
    "zeros-as-missing": (_parse_bool, False),
    "seed": (int, 0),
}


def cmd_generate(resolved):
    out_dir = Path(resolved["out-dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    if not 0 < resolved["train-rows"] < resolved["rows"]:
        raise InputError("need 0 < train-rows < rows")
    if resolved["event-rows"] < 1:
        raise InputError("event-rows must be >= 1")

    timings = {}
    t0 = time.perf_counter()
    if resolved["base-csv"]:
        records = obsmatrix.read_records_csv(
            resolved["base-csv"], zeros_as_missing=resolved["zeros-as-missing"]
        )
        base = obsmatrix.flatten(
            records, resolved["days"], resolved["periods"], resolved["sensors"]
        )
    else:
        base, _, _ = synth.make_ground_truth(
            resolved["days"], resolved["periods"] * resolved["sensors"],
            resolved["rank"], resolved["value-scale"], resolved["density"],
            [resolved["seed"], 10],
        )
    cfg = synth.SynthConfig(
        rows_out=resolved["rows"],
        event_rows=resolved["event-rows"],
        noise_half_width=0.8 * resolved["delta"],
        event_means=resolved["means"],
        event_sigma=resolved["sigma"],
        seed=resolved["seed"],
    )
    y, _ = synth.make_nonevents(base, cfg)
    y.save(out_dir / "y.lrev")
    train = synth.row_slice(y, 0, resolved["train-rows"])
    train.save(out_dir / "train.lrev")
    test = synth.row_slice(y, resolved["train-rows"], resolved["rows"])
    for mu in resolved["means"]:
        tag = _mu_tag(mu)
        g, _ = synth.make_events(y, cfg, mu)
        g.save(out_dir / f"g_mu{tag}.lrev")
        synth.vstack([test, g]).save(out_dir / f"eval_mu{tag}.lrev")
        labels = [detect.NONEVENT] * test.m + [detect.EVENT] * g.m
        synth.write_labels_csv(out_dir / f"labels_mu{tag}.csv", labels)
    timings["generate"] = time.perf_counter() - t0
    write_manifest(out_dir / "generate.manifest", "generate", resolved, timings)


# ---------------------------------------------------------------------------
# train

TRAIN_SPEC = {
    "data": (None, None),
    "rank": (_parse_ints, (10,)),
    "mu": (float, 0.1),
    "delta": (float, 0.0),
    "tol": (float, 1e-4),
    "max-epochs": (int, 500),
    "row-fraction": (float, 1.0),
    "col-fraction": (float, 1.0),
    "init-scale": (float, None),
    "seed": (int, 0),
    "out": (None, "model.lrfa"),
    "trace": (None, None),
}


def _write_trace_csv(path, trace):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,objective,rmse,seconds\n")
        for e, (f, r, s) in enumerate(zip(trace.objective, trace.rmse, trace.seconds)):
            fh.write(f"{e},{f:.17g},{r:.17g},{s:.17g}\n")


def cmd_train(resolved):
    if not resolved["data"]:
        raise InputError("train needs a data file (positional or data= in config)")
    obs = _load_matrix(resolved["data"])
    if resolved["delta"] > 0:
        obs = obs.widen(resolved["delta"])

    ranks = resolved["rank"]
    timings = {}

    def run_one(rank):
        cfg = FitConfig(
            rank=rank, mu=resolved["mu"],
            row_fraction=resolved["row-fraction"],
            col_fraction=resolved["col-fraction"],
            max_epochs=resolved["max-epochs"], tol=resolved["tol"],
            seed=resolved["seed"], init_scale=resolved["init-scale"],
        )
        t0 = time.perf_counter()
        fact, trace = completion.fit(obs, cfg)
        return fact, trace, time.perf_counter() - t0

    if len(ranks) == 1:
        out = Path(resolved["out"])
        if out.parent != Path("."):
            out.parent.mkdir(parents=True, exist_ok=True)
        fact, trace, secs = run_one(ranks[0])
        fact.save(out)
        resolved["trace"] = resolved["trace"] or f"{out}.trace.csv"
        _write_trace_csv(resolved["trace"], trace)
        timings["fit"] = secs
        manifest = f"{out}.manifest"
    else:
        # rank sweep: --out names a directory holding one model per rank
        # plus the time/error trade-off table
        out_dir = Path(resolved["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        sweep_rows = []
        for rank in ranks:
            fact, trace, secs = run_one(rank)
            fact.save(out_dir / f"model_r{rank}.lrfa")
            _write_trace_csv(out_dir / f"trace_r{rank}.csv", trace)
            sweep_rows.append((rank, trace.epochs, secs, trace.objective[-1], trace.rmse[-1]))
            timings[f"fit.r{rank}"] = secs
        with open(out_dir / "rank_sweep.csv", "w", encoding="utf-8") as fh:
            fh.write("rank,epochs,seconds,objective,rmse\n")
            for rank, epochs, secs, obj, err in sweep_rows:
                fh.write(f"{rank},{epochs},{secs:.17g},{obj:.17g},{err:.17g}\n")
        manifest = out_dir / "train.manifest"
    write_manifest(manifest, "train", resolved, timings)


# ---------------------------------------------------------------------------
# detect

DETECT_SPEC = {
    "model": (None, None),
    "samples": (None, None),
    "delta": (float, None),
    "calibrate": (None, None),
    "epsilon": (float, 0.1),
    "fail-prob": (float, 1.0 / 3.0),
    "sample-size": (int, None),
    "exact": (_parse_bool, False),
    "c-factor": (float, 1.0),
    "seed": (int, 0),
    "out": (None, "verdicts.csv"),
}


def cmd_detect(resolved):
    if not resolved["model"] or not resolved["samples"]:
        raise InputError("detect needs model and samples files")
    fact = _load_model(resolved["model"])
    samples = _load_matrix(resolved["samples"])
    if samples.n != fact.n:
        raise InputError(
            f"samples have {samples.n} columns, model expects {fact.n}"
        )

    # an explicit delta wins over calibration so a manifest (which records
    # the calibrated value) replays without re-calibrating
    delta = resolved["delta"]
    if delta is None:
        if not resolved["calibrate"]:
            raise InputError("detect needs --delta or --calibrate HOLDOUT")
        holdout = _load_matrix(resolved["calibrate"])
        rows = (holdout.row_vector(i) for i in range(holdout.m))
        delta = detect.calibrate_delta(fact, rows)
        resolved["delta"] = delta

    model = detect.DetectorModel(
        fact, delta,
        epsilon=resolved["epsilon"], fail_prob=resolved["fail-prob"],
        c_factor=resolved["c-factor"], sample_count=resolved["sample-size"],
    )
    timings = {}
    t0 = time.perf_counter()
    seed_rng = np.random.default_rng([resolved["seed"], 0])
    seeds = seed_rng.integers(0, 2**63, size=samples.m)
    with open(resolved["out"], "w", encoding="utf-8") as fh:
        fh.write("row,verdict,distance,seconds\n")
        for i in range(samples.m):
            x = samples.row_vector(i)
            tq = time.perf_counter()
            label, dist = detect.classify(
                model, x, seed=int(seeds[i]), exact=resolved["exact"]
            )
            secs = time.perf_counter() - tq
            fh.write(f"{i},{label},{dist:.17g},{secs:.17g}\n")
    timings["detect"] = time.perf_counter() - t0
    write_manifest(f"{resolved['out']}.manifest", "detect", resolved, timings)


# ---------------------------------------------------------------------------
# eval

EVAL_SPEC = {
    "model": (None, None),
    "samples": (None, None),
    "labels": (None, None),
    "delta-grid": (parse_grid, None),
    "reps": (int, 5),
    "epsilon": (float, 0.1),
    "fail-prob": (float, 1.0 / 3.0),
    "sample-size": (int, None),
    "exact": (_parse_bool, False),
    "c-factor": (float, 1.0),
    "seed": (int, 0),
    "threads": (int, None),
    "out": (None, "report.csv"),
}


def cmd_eval(resolved):
    for key in ("model", "samples", "labels"):
        if not resolved[key]:
            raise InputError(f"eval needs a {key} file")
    if resolved["delta-grid"] is None:
        raise InputError("eval needs --delta-grid")
    fact = _load_model(resolved["model"])
    samples_m = _load_matrix(resolved["samples"])
    try:
        labels = synth.read_labels_csv(resolved["labels"])
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read labels: {exc}") from None
    if len(labels) != samples_m.m:
        raise InputError(
            f"{len(labels)} labels for {samples_m.m} sample rows"
        )

    model = detect.DetectorModel(
        fact, 0.0,
        epsilon=resolved["epsilon"], fail_prob=resolved["fail-prob"],
        c_factor=resolved["c-factor"], sample_count=resolved["sample-size"],
    )
    workers = resolved["threads"] or os.cpu_count() or 1
    timings = {}
    t0 = time.perf_counter()
    samples = [samples_m.row_vector(i) for i in range(samples_m.m)]
    report = detect.evaluate(
        model, samples, labels, resolved["delta-grid"],
        repetitions=resolved["reps"], seed=resolved["seed"],
        exact=resolved["exact"], workers=workers,
    )
    report.write_csv(resolved["out"])
    timings["evaluate"] = time.perf_counter() - t0
    write_manifest(f"{resolved['out']}.manifest", "eval", resolved, timings)


# ---------------------------------------------------------------------------

_COMMANDS = {
    "generate": (GENERATE_SPEC, cmd_generate),
    "train": (TRAIN_SPEC, cmd_train),
    "detect": (DETECT_SPEC, cmd_detect),
    "eval": (EVAL_SPEC, cmd_eval),
}

_POSITIONALS = {
    "train": ["data"],
    "detect": ["model", "samples"],
    "eval": ["model", "samples", "labels"],
}

_FLAG_PARSERS = {
    int: int,
    float: float,
    _parse_floats: _parse_floats,
    _parse_ints: _parse_ints,
    parse_grid: parse_grid,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lrevents",
        description="Low-rank normal-behaviour models and randomized event detection.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, (spec, _) in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        positionals = _POSITIONALS.get(name, [])
        for opt, (parse, _default) in spec.items():
            dest = opt.replace("-", "_")
            if opt in positionals:
                p.add_argument(dest, nargs="?", default=None)
            elif parse is _parse_bool:
                p.add_argument(f"--{opt}", dest=dest, action="store_const",
                               const=True, default=None)
            else:
                p.add_argument(f"--{opt}", dest=dest, default=None,
                               type=_FLAG_PARSERS.get(parse, str))
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    spec, command = _COMMANDS[args.subcommand]
    config = read_config(args.config) if args.config else {}
    resolved = _resolve(spec, args, config)
    command(resolved)


def main(argv=None):
    try:
        run(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CompletionNumericalError, SimplexNumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
