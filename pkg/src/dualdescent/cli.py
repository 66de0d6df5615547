"""Command-line experiment runner.

Usage::

    dualdescent CONFIG [--out DIR] [--quiet]

Writes the command's CSV output and ``summary.txt`` into ``DIR``.  The
summary starts with the canonical config, then a blank line, then one
``CHECK <name>: PASS|FAIL <details>`` line per check.  The exit status is 0
exactly when every check passes.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, mu_array, parse_config
from .descent import RunAborted, StepSchedule, run_online
from .dual_geometry import IDENTITY_TOLERANCES, identity_errors
from .efficiency import run_efficiency, warm_start
from .equivalence import (
    DEFAULT_TOLERANCE,
    verify_cross_parameterization,
    verify_equivalence,
)
from .families import ExponentialFamily, sample_stream, stream_rng

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3

TRAJECTORY_HEADER = ("t", "theta", "mu", "loss", "cumulative_regret", "projected")


class Outcome:
    """Checks and files produced by one command, written only after it finishes."""

    def __init__(self):
        self.checks: list[tuple[str, bool, str]] = []
        self.files: dict[str, str] = {}

    def check(self, name: str, ok: bool, details: str = ""):
        self.checks.append((name, bool(ok), details))

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(ok for _, ok, _ in self.checks)

    def summary(self, config: ExperimentConfig) -> str:
        lines = [config.to_text()]
        for name, ok, details in self.checks:
            lines.append(f"CHECK {name}: {'PASS' if ok else 'FAIL'} {details}".rstrip() + "\n")
        return "".join(lines[:1]) + "\n" + "".join(lines[1:])


def echoed_config(summary_text: str) -> str:
    """The config block at the top of a ``summary.txt``."""
    return summary_text.split("\n\n", 1)[0] + "\n"


def _vec(v) -> str:
    return ";".join(repr(float(x)) for x in np.atleast_1d(v))


def _stream_and_init(config: ExperimentConfig, fam: ExponentialFamily):
    """Observation stream plus the starting mean and schedule offset."""
    ys = sample_stream(fam, mu_array(config), config.T, stream_rng(config.seed))
    if config.init == "first-observation":
        k, m0 = warm_start(fam, ys[None])
        k = int(k[0])
        if k == 0:
            raise RunAborted("no prefix of the stream has an interior mean", None)
        if k >= config.T:
            raise RunAborted("warm start consumed the whole stream", None)
        return ys[k:], m0[0], k
    if config.init_value is not None:
        return ys, np.array(config.init_value), 0
    return ys, fam.pair.g(np.zeros(fam.dim)), 0


def _cmd_identities(config, fam, out: Outcome):
    errs = identity_errors(fam.pair, config.samples, config.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("check", "max_error", "tolerance", "pass"))
    for name, value in errs.items():
        tol = IDENTITY_TOLERANCES[name]
        ok = value <= tol
        w.writerow((name, repr(value), repr(tol), "PASS" if ok else "FAIL"))
        out.check(name, ok, f"max_error={value:.3e} tolerance={tol:.0e}")
    out.files["identities.csv"] = buf.getvalue()


def _cmd_equiv(config, fam, out: Outcome, cross: bool):
    fname = "cross_equiv.csv" if cross else "equiv.csv"
    ys, mu0, k = _stream_and_init(config, fam)
    schedule = StepSchedule(config.schedule, config.scale, offset=k)
    tol = config.tolerance or DEFAULT_TOLERANCE
    fn = verify_cross_parameterization if cross else verify_equivalence
    report = fn(fam, ys, schedule, fam.pair.h(mu0), tolerance=tol, seed=config.seed)
    name = "cross_equivalence" if cross else "equivalence"
    if report.diagnostic is not None:
        out.files[fname + ".partial"] = report.to_csv()
        out.check(name, False, report.summary())
        return
    out.files[fname] = report.to_csv()
    out.check(name, report.passed, report.summary())


def _cmd_efficiency(config, fam, out: Outcome):
    init = config.init or "first-observation"
    report = run_efficiency(fam, mu_array(config), config.T, config.M, config.seed,
                            init=init, init_value=config.init_value, workers=config.workers)
    buf = io.StringIO()
    report.write_summary_csv(buf)
    out.files["efficiency.csv"] = buf.getvalue()
    if config.per_replicate:
        buf = io.StringIO()
        report.write_replicates_csv(buf)
        out.files["replicates.csv"] = buf.getvalue()
    p = fam.dim
    for i in range(p):
        for j in range(p):
            out.check(f"efficiency[{i},{j}]", report.entry_pass[i, j],
                      f"scaled_cov={report.scaled_cov[i, j]:.6g} bound={report.bound[i, j]:.6g} "
                      f"ratio={report.ratio[i, j]:.4f} band=+-{3 * report.se[i, j]:.4f}")
    out.check("replicates", report.drop_ok,
              f"dropped={report.dropped} fallbacks={report.fallbacks} "
              f"projections={report.projections}")


def _trajectory_csv(traj, pair) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER)
    for it in traj.iterates:
        theta = it.theta if it.theta is not None else pair.h(it.mu)
        mu = it.mu if it.mu is not None else pair.g(it.theta)
        w.writerow((it.t, _vec(theta), _vec(mu), repr(it.loss),
                    repr(it.cumulative_regret_sum), int(it.projected)))
    return buf.getvalue()


def _cmd_trajectory(config, fam, out: Outcome):
    ys, mu0, k = _stream_and_init(config, fam)
    schedule = StepSchedule(config.schedule, config.scale, offset=k)
    primal = config.optimizer in ("gd", "mirror")
    init = fam.pair.h(mu0) if primal else mu0
    try:
        traj = run_online(config.optimizer, fam, list(ys), schedule, init, seed=config.seed)
    except RunAborted as exc:
        out.files["trajectory.csv.partial"] = _trajectory_csv(exc.trajectory, fam.pair)
        out.check("trajectory", False, f"aborted: {exc}")
        return
    out.files["trajectory.csv"] = _trajectory_csv(traj, fam.pair)
    out.check("trajectory", True,
              f"steps={len(traj)} regret={traj.iterates[-1].cumulative_regret_sum:.6g} "
              f"final={_vec(traj.final)} projections={traj.projection_count}")


def run(config: ExperimentConfig, out_dir, quiet: bool = False) -> int:
    """Execute ``config`` and write artifacts into ``out_dir``; returns the exit status."""
    fam = config.build_family()
    out = Outcome()
    try:
        if config.command == "identities":
            _cmd_identities(config, fam, out)
        elif config.command in ("equiv", "cross-equiv"):
            _cmd_equiv(config, fam, out, cross=config.command == "cross-equiv")
        elif config.command == "efficiency":
            _cmd_efficiency(config, fam, out)
        else:
            _cmd_trajectory(config, fam, out)
    except RunAborted as exc:
        out.check(config.command, False, f"aborted: {exc}")

    summary = out.summary(config)
    try:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in out.files.items():
            (out_dir / name).write_text(text, encoding="utf-8", newline="\n")
        (out_dir / "summary.txt").write_text(summary, encoding="utf-8", newline="\n")
    except OSError as exc:
        print(f"error: cannot write results to {out_dir}: {exc}", file=sys.stderr)
        return EXIT_IO
    if not quiet:
        sys.stdout.write(summary)
    return EXIT_OK if out.passed else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dualdescent",
        description="Mirror descent / natural gradient equivalence experiments.")
    parser.add_argument("config", help="flat key=value config file")
    parser.add_argument("--out", help="output directory (overrides the config's out key)")
    parser.add_argument("--quiet", action="store_true", help="do not echo the summary")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        config = parse_config(text)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or config.out or os.path.join(os.getcwd(), "results")
    return run(config, out_dir, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
