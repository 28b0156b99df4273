"""
Command-line interface.

    surprise-index validate   --config run.json
    surprise-index si         --config run.json --obs y.csv [--oracle grid|mc] [--samples N] [--seed S] [--out DIR]
    surprise-index montecarlo --config run.json [--seed S] [--workers W] [--out DIR]

Exit codes: 0 success, 1 unexpected failure, 2 config parse error (bad
JSON, missing or mistyped field), 3 dimension mismatch, 4 model or scenario
invariant violated.

Floats are written with ``repr`` (shortest round-trip decimal), so reruns
with identical inputs produce byte-identical files.
"""
import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .core import cumulative_si, marginalize
from .harness import model_joint, rng_metadata, run_monte_carlo
from .oracle import RNG_ALGORITHM, GridSpec, McSpec, grid_si, mc_si
from .validation import DimensionError, ModelValidationError, NotPositiveDefiniteError

log = logging.getLogger("surprise_index")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DIMENSION = 3
EXIT_INVARIANT = 4

GRID_MAX_DIM = 4


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def _write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_observations(path):
    """
    Per-step observations: CSV with one row per step (an optional
    non-numeric header row is skipped), or a JSON list of rows.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read observations {path}: {exc.strerror}"]) from exc
    if path.suffix.lower() == ".json":
        try:
            rows = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"invalid JSON in {path}: {exc}"]) from exc
    else:
        rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
        if rows:
            try:
                [float(c) for c in rows[0]]
            except ValueError:
                rows = rows[1:]
    try:
        arr = np.array(rows, dtype=float)
    except ValueError as exc:
        raise ConfigError([f"observations in {path} are not a numeric table: {exc}"]) from exc
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionError(f"observations must form a table of steps x components, got shape {arr.shape}")
    return arr


def _joint_with_warnings(scn):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        joint = model_joint(scn)
    notes = [str(w.message) for w in caught]
    if joint.jitter and not notes:
        notes.append(f"joint covariance needed jitter {joint.jitter!r}")
    return joint, notes


def cmd_validate(args):
    cfg = load_config(args.config)
    report = {"config": str(args.config), "config_sha256": cfg.hash, "valid": True, "scenarios": []}
    for label, scn in cfg.scenarios():
        joint, notes = _joint_with_warnings(scn)
        report["scenarios"].append({
            "label": label,
            "model": type(scn.model).__name__,
            "horizon": scn.horizon,
            "block_dim": joint.block_dim,
            "joint_dim": joint.dim,
            "runs": scn.runs,
            "warnings": notes,
        })
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_si(args):
    cfg = load_config(args.config, seed=args.seed)
    scn = cfg.scenario
    joint, notes = _joint_with_warnings(scn)
    for note in notes:
        log.warning(note)
    obs = load_observations(args.obs)
    if obs.shape != (joint.steps, joint.block_dim):
        raise DimensionError(
            f"observations have shape {obs.shape}, model expects {joint.steps} steps x {joint.block_dim} components"
        )
    y = obs.reshape(-1)
    trace = cumulative_si(joint, y)
    out = Path(args.out)
    _write_csv(out / "si_trace.csv", ["step", "epsilon", "dof", "si"],
               [(e.step, e.epsilon, e.dof, e.si) for e in trace])
    if args.oracle:
        rows = []
        p = joint.block_dim
        for k, entry in enumerate(trace, start=1):
            prefix = marginalize(joint, range(1, k + 1))
            yk = y[:k * p]
            if args.oracle == "grid":
                if prefix.dim > GRID_MAX_DIM:
                    log.info("grid oracle skipped for step %d (dimension %d > %d)", entry.step, prefix.dim, GRID_MAX_DIM)
                    continue
                est, se = grid_si(prefix, yk, GridSpec.around(prefix)), 0.0
            else:
                est, se = mc_si(prefix, yk, McSpec(args.samples, scn.seed))
            rows.append((entry.step, entry.dof, entry.si, est, se, abs(entry.si - est), args.oracle))
        _write_csv(out / "oracle_compare.csv",
                   ["step", "dof", "si_closed", "si_oracle", "stderr", "abs_diff", "method"], rows)
    log.info("wrote %s", out / "si_trace.csv")
    return EXIT_OK


def _summary_rows(summary):
    q = {name: summary.quantile(v) for name, v in (("q16", 0.16), ("q84", 0.84), ("q025", 0.025), ("q975", 0.975))}
    mean, std = summary.mean, summary.std
    for i, step in enumerate(summary.steps):
        yield (step, mean[i], std[i], q["q16"][i], q["q84"][i], q["q025"][i], q["q975"][i])


def _write_summary(directory, summary):
    _write_csv(directory / "mc_summary.csv",
               ["step", "si_mean", "si_std", "q16", "q84", "q025", "q975"], _summary_rows(summary))
    width = max(4, len(str(summary.runs - 1)))
    for r, trace in enumerate(summary.traces):
        _write_csv(directory / "runs" / f"run_{r:0{width}d}.csv", ["step", "epsilon", "dof", "si"],
                   [(e.step, e.epsilon, e.dof, e.si) for e in trace])


def cmd_montecarlo(args):
    cfg = load_config(args.config, seed=args.seed, workers=args.workers)
    out = Path(args.out)
    meta = {
        "package_version": __version__,
        "config_sha256": cfg.hash,
        "seed": cfg.scenario.seed,
        "runs": cfg.scenario.runs,
        "sweep": None if cfg.sweep_key is None else {cfg.sweep_key: list(cfg.sweep_values)},
        "jitter_warnings": [],
        "outputs": [],
        **rng_metadata(),
    }
    base_joint = None
    for label, scn in cfg.scenarios():
        # sweeps vary the truth only, so the model joint is shared
        if base_joint is None:
            base_joint, notes = _joint_with_warnings(scn)
            meta["jitter_warnings"].extend(notes)
        summary = run_monte_carlo(scn, base_joint)
        directory = out if label is None else out / label
        _write_summary(directory, summary)
        meta["outputs"].append(str((directory / "mc_summary.csv").relative_to(out)))
        log.info("%s: final-step mean SI %.4f", label or "run", summary.mean[-1])
    _write_json(out / "meta.json", meta)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="surprise-index", description="Surprise index of measurement sequences.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config and its model without running")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("si", help="cumulative SI of one observation sequence")
    p.add_argument("--config", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--oracle", choices=("grid", "mc"))
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_si)

    p = sub.add_parser("montecarlo", help="Monte Carlo SI study")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionError as exc:
        print(f"dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except ModelValidationError as exc:
        for msg in exc.problems:
            print(f"invariant violated: {msg}", file=sys.stderr)
        return EXIT_INVARIANT
    except NotPositiveDefiniteError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
