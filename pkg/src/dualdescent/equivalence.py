"""Step-by-step comparison of mirror descent and natural gradient descent.

Mirror descent on the natural parameter, pushed through ``g``, must match
natural gradient descent on the mean parameter at every step.  The two arms
compute their gradients independently (``g(theta) - y`` versus
``-hess_H(mu)(y - mu)``) so that the comparison does not reuse the chain
rule it is meant to confirm.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .descent import RunAborted, StepSchedule, run_online
from .families import (
    ExponentialFamily,
    Observation,
    grad_log_loss_mean,
    grad_log_loss_natural,
    log_loss_mean,
    log_loss_natural,
)

DEFAULT_TOLERANCE = 1e-8
CSV_HEADER = ("t", "theta", "mu", "g_theta", "deviation", "projected_md", "projected_ngd")


def join_vec(v) -> str:
    return ";".join(repr(float(x)) for x in np.atleast_1d(v))


@dataclass
class EquivalenceReport:
    family: str
    T: int
    schedule: StepSchedule
    seed: int | None
    tolerance: float
    variant: str = "primal"
    deviations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    final_deviation: float = float("nan")
    projections_md: int = 0
    projections_ngd: int = 0
    thetas: np.ndarray | None = None
    mus: np.ndarray | None = None
    g_thetas: np.ndarray | None = None
    projected_md: np.ndarray | None = None
    projected_ngd: np.ndarray | None = None
    diagnostic: str | None = None

    @property
    def max_deviation(self) -> float:
        if self.diagnostic is not None or self.deviations.size == 0:
            return float("nan")
        return float(max(np.max(self.deviations), self.final_deviation))

    @property
    def probative(self) -> bool:
        """False when a safeguard projection fired in either arm."""
        return self.projections_md == 0 and self.projections_ngd == 0

    @property
    def passed(self) -> bool:
        return (self.diagnostic is None and self.probative
                and self.max_deviation <= self.tolerance)

    def summary(self) -> str:
        if self.diagnostic is not None:
            return f"aborted: {self.diagnostic}"
        note = "" if self.probative else " non-probative"
        return (f"max_deviation={self.max_deviation:.3e} tolerance={self.tolerance:.0e} "
                f"projections_md={self.projections_md} "
                f"projections_ngd={self.projections_ngd}{note}")

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        if self.deviations.size == 0:
            return
        for i in range(self.deviations.size):
            w.writerow([i + 1, join_vec(self.thetas[i]), join_vec(self.mus[i]),
                        join_vec(self.g_thetas[i]), repr(float(self.deviations[i])),
                        int(self.projected_md[i]), int(self.projected_ngd[i])])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _as_observations(stream):
    return [s if isinstance(s, Observation) else Observation(s) for s in stream]


def _natural_losses(fam, obs):
    return [lambda th, y=o: (log_loss_natural(fam, th, y), grad_log_loss_natural(fam, th, y))
            for o in obs]


def _mean_losses(fam, obs):
    return [lambda mu, y=o: (log_loss_mean(fam, mu, y), grad_log_loss_mean(fam, mu, y))
            for o in obs]


def _fill(report, md, ngd, thetas, mus, final_theta, final_mu, dev_fn):
    pair_dev = np.max(np.abs(dev_fn(thetas, mus)), axis=-1)
    report.deviations = pair_dev
    report.final_deviation = float(np.max(np.abs(dev_fn(final_theta, final_mu))))
    report.thetas, report.mus = thetas, mus
    report.projected_md = np.array([it.projected for it in md.iterates])
    report.projected_ngd = np.array([it.projected for it in ngd.iterates])
    report.projections_md = md.projection_count
    report.projections_ngd = ngd.projection_count


def verify_equivalence(family: ExponentialFamily, stream, schedule: StepSchedule,
                       init_theta, tolerance: float = DEFAULT_TOLERANCE,
                       seed: int | None = None) -> EquivalenceReport:
    """Mirror descent on ``theta`` against natural gradient on ``mu = g(theta)``.

    Deviation at step ``t`` is ``max |g(theta_t) - mu_t|``.
    """
    obs = _as_observations(stream)
    pair = family.pair
    report = EquivalenceReport(family.name, len(obs), schedule, seed, tolerance)
    init_theta = np.atleast_1d(np.asarray(init_theta, dtype=float))
    try:
        md = run_online("mirror", family, obs, schedule, init_theta, seed=seed)
        ngd = run_online("natural", family, obs, schedule, pair.g(init_theta), seed=seed)
    except RunAborted as exc:
        report.diagnostic = str(exc)
        return report
    thetas, mus = md.thetas, ngd.mus
    _fill(report, md, ngd, thetas, mus, md.final, ngd.final,
          lambda th, mu: pair.g(th) - mu)
    report.g_thetas = pair.g(thetas)
    return report


def verify_cross_parameterization(family: ExponentialFamily, stream,
                                  schedule: StepSchedule, init_theta,
                                  tolerance: float = DEFAULT_TOLERANCE,
                                  seed: int | None = None) -> EquivalenceReport:
    """Mirror descent on ``mu`` (proximity ``B_H``) against natural gradient on ``theta``.

    The natural-gradient arm uses the primal metric ``hess_G``.  Deviation is
    ``max |h(mu_t) - theta_t|``.
    """
    obs = _as_observations(stream)
    pair = family.pair
    dual = pair.dual()
    report = EquivalenceReport(family.name, len(obs), schedule, seed, tolerance,
                               variant="cross")
    init_theta = np.atleast_1d(np.asarray(init_theta, dtype=float))
    try:
        # on the swapped pair, "theta" is the mean coordinate and vice versa
        md = run_online("mirror", dual, _mean_losses(family, obs), schedule,
                        pair.g(init_theta), seed=seed)
        ngd = run_online("natural", dual, _natural_losses(family, obs), schedule,
                         init_theta, seed=seed)
    except RunAborted as exc:
        report.diagnostic = str(exc)
        return report
    mus, thetas = md.thetas, ngd.mus
    _fill(report, md, ngd, thetas, mus, ngd.final, md.final,
          lambda th, mu: pair.h(mu) - th)
    report.g_thetas = pair.g(thetas)
    return report


def verify_grid(cells, workers: int = 1) -> list[EquivalenceReport]:
    """Run independent verifications; results are ordered by cell index.

    Each cell is a dict of keyword arguments plus ``"cross": bool``.
    """
    def one(cell):
        cell = dict(cell)
        fn = verify_cross_parameterization if cell.pop("cross", False) else verify_equivalence
        return fn(**cell)

    if workers <= 1:
        return [one(c) for c in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, cells))
