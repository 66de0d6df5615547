"""Monte Carlo check that streaming natural-gradient estimation is Fisher efficient.

With step sizes ``1/t`` the natural-gradient update on the mean-coordinate
log loss reduces to ``mu <- mu + (y_t - mu) / t``, i.e. the running sample
mean, whose covariance ``(1/T) hess_H(mu)^{-1}`` is the Cramer-Rao bound.

Initialisation modes
--------------------
``first-observation``
    The estimate after the first ``k`` observations is their plain mean,
    where ``k`` is the shortest prefix whose mean lies strictly inside the
    mean domain (``k = 1`` unless the first draws sit on a boundary, e.g.
    Poisson zeros or any Bernoulli draw).  From there on the natural-gradient
    recursion runs with ``alpha_t = 1/t`` on the global index ``t``, so the
    final estimate is exactly the sample mean of all ``T`` draws.  If no
    prefix qualifies the replicate falls back to ``fixed`` mode and is noted.
``fixed``
    A fixed interior value occupies the first slot of the ``1/t`` recursion
    and observation ``t`` is consumed with ``alpha = 1/(t + 1)``; the estimate
    is biased by ``O(1/T)`` and only asymptotically efficient.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .descent import StepRejected, StepSchedule, natural_gradient_step, run_online
from .dual_geometry import metric_dual
from .equivalence import join_vec
from .families import ExponentialFamily, grad_log_loss_mean, sample_stream, stream_rng

INIT_MODES = ("first-observation", "fixed")
SUMMARY_HEADER = ("family", "mu_true", "T", "M", "entry_i", "entry_j", "scaled_cov",
                  "bound", "ratio", "se", "pass")
_DISCRETE = ("poisson", "bernoulli")
KURTOSIS_WIDENING = 1.5
MAX_DROP_FRACTION = 0.01


def default_fixed_init(family: ExponentialFamily) -> np.ndarray:
    """The mean at natural parameter zero."""
    return family.pair.g(np.zeros(family.dim))


@dataclass
class EfficiencyReport:
    family: str
    mu_true: np.ndarray
    T: int
    M: int
    seed: int
    init_mode: str
    estimates: np.ndarray
    scaled_cov: np.ndarray
    scaled_mse: np.ndarray
    bound: np.ndarray
    ratio: np.ndarray
    se: np.ndarray
    entry_pass: np.ndarray
    projections: int = 0
    dropped: int = 0
    fallbacks: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def drop_ok(self) -> bool:
        return self.dropped <= MAX_DROP_FRACTION * self.M

    @property
    def passed(self) -> bool:
        return bool(np.all(self.entry_pass)) and self.drop_ok

    @property
    def mse_ratio(self) -> np.ndarray:
        return np.diag(self.scaled_mse) / np.diag(self.bound)

    def __eq__(self, other):
        if not isinstance(other, EfficiencyReport):
            return NotImplemented
        arrays = ("mu_true", "estimates", "scaled_cov", "scaled_mse", "bound",
                  "ratio", "se", "entry_pass")
        scalars = ("family", "T", "M", "seed", "init_mode", "projections",
                   "dropped", "fallbacks", "notes")
        return (all(getattr(self, a) == getattr(other, a) for a in scalars)
                and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays))

    def write_summary_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        p = self.bound.shape[0]
        for i in range(p):
            for j in range(p):
                w.writerow([self.family, join_vec(self.mu_true), self.T, self.M, i, j,
                            repr(float(self.scaled_cov[i, j])), repr(float(self.bound[i, j])),
                            repr(float(self.ratio[i, j])), repr(float(self.se[i, j])),
                            "PASS" if self.entry_pass[i, j] else "FAIL"])

    def write_replicates_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("replicate", "mu_hat"))
        for r, est in enumerate(self.estimates):
            w.writerow([r, join_vec(est)])

    def summary_csv(self) -> str:
        buf = io.StringIO()
        self.write_summary_csv(buf)
        return buf.getvalue()


def warm_start(family: ExponentialFamily, ys: np.ndarray):
    """Shortest interior prefix mean of each stream.

    ``ys`` has shape ``(..., T, p)``.  Returns ``(k, mean)`` with ``k`` the
    prefix length (0 where no prefix mean is interior) and ``mean`` the
    corresponding prefix mean.
    """
    T = ys.shape[-2]
    csum = np.cumsum(ys, axis=-2)
    counts = np.arange(1, T + 1, dtype=float)[:, None]
    cmean = csum / counts
    interior = family.pair.dual_domain.contains(cmean)
    has = interior.any(axis=-1)
    k = np.where(has, np.argmax(interior, axis=-1) + 1, 0)
    idx = np.maximum(k - 1, 0)
    mean = np.take_along_axis(cmean, idx[..., None, None], axis=-2)[..., 0, :]
    return k, mean


def _recurse(family, m, ys, t_start, schedule):
    """Natural-gradient steps on rows of ``m`` for observations ``t_start..T`` (1-based).

    ``t_start`` is per row.  Returns the final estimates and projection count.
    """
    pair = family.pair
    n, T, _ = ys.shape
    m = m.copy()
    projections = 0
    first = int(t_start.min()) if n else T + 1
    for t in range(first, T + 1):
        active = t_start <= t
        alpha = schedule.alpha(t)
        if active.all():
            grad = grad_log_loss_mean(family, m, ys[:, t - 1])
            m, proj = natural_gradient_step(pair, grad, m, alpha, return_projected=True)
        else:
            sub = m[active]
            grad = grad_log_loss_mean(family, sub, ys[active, t - 1])
            sub, proj = natural_gradient_step(pair, grad, sub, alpha, return_projected=True)
            m[active] = sub
        projections += int(np.count_nonzero(proj))
    return m, projections


def _estimate_rows(family, ys, init, init_value):
    """Final estimates for a batch of streams; raises StepRejected on failure."""
    n, T, p = ys.shape
    inv_t = StepSchedule("inv_t", 1.0)
    fallbacks = 0
    if init == "first-observation":
        k, m0 = warm_start(family, ys)
        fixed_rows = k == 0
        fallbacks = int(fixed_rows.sum())
        t_start = k + 1
    else:
        fixed_rows = np.ones(n, dtype=bool)
        m0 = np.empty((n, p))
        t_start = np.ones(n, dtype=int)
    out = np.empty((n, p))
    projections = 0
    if (~fixed_rows).any():
        est, proj = _recurse(family, m0[~fixed_rows], ys[~fixed_rows],
                             t_start[~fixed_rows], inv_t)
        out[~fixed_rows] = est
        projections += proj
    if fixed_rows.any():
        # fixed value fills slot 1, observation t is consumed at slot t + 1
        nf = int(fixed_rows.sum())
        start = np.broadcast_to(init_value, (nf, p)).astype(float)
        est, proj = _recurse(family, start, ys[fixed_rows], np.ones(nf, dtype=int),
                             StepSchedule("inv_t", 1.0, offset=1))
        out[fixed_rows] = est
        projections += proj
    return out, projections, fallbacks


def _run_chunk(family, mu_true, T, seed, rows, init, init_value):
    ys = np.stack([sample_stream(family, mu_true, T, stream_rng(seed, r)) for r in rows])
    try:
        est, proj, fb = _estimate_rows(family, ys, init, init_value)
        return est, np.ones(len(rows), dtype=bool), proj, fb
    except StepRejected:
        pass
    # isolate the failing replicates
    est = np.full((len(rows), family.dim), np.nan)
    ok = np.zeros(len(rows), dtype=bool)
    proj = fb = 0
    for i in range(len(rows)):
        try:
            e, p_, f_ = _estimate_rows(family, ys[i:i + 1], init, init_value)
        except StepRejected:
            continue
        est[i], ok[i] = e[0], True
        proj += p_
        fb += f_
    return est, ok, proj, fb


def efficiency_bands(family: ExponentialFamily, M: int) -> np.ndarray:
    """Relative Monte Carlo standard errors for each covariance entry."""
    widen = np.array([KURTOSIS_WIDENING if k in _DISCRETE else 1.0 for k in family.kinds])
    w = np.maximum.outer(widen, widen)
    se = np.full((family.dim, family.dim), math.sqrt(1.0 / M))
    np.fill_diagonal(se, math.sqrt(2.0 / M))
    return se * w


def run_efficiency(family: ExponentialFamily, mu_true, T: int, M: int, seed: int, *,
                   init: str = "first-observation", init_value=None,
                   workers: int = 1, chunk_size: int = 1000) -> EfficiencyReport:
    """Replicate the streaming estimator ``M`` times and compare ``T * Cov`` to the bound.

    Replicate ``r`` draws its stream from ``stream_rng(seed, r)``; aggregation
    is ordered by replicate index, so the report does not depend on
    ``workers`` or ``chunk_size``.
    """
    if T < 2 or M < 2:
        raise ValueError("need T >= 2 and M >= 2")
    if init not in INIT_MODES:
        raise ValueError(f"unknown init mode {init!r}")
    pair = family.pair
    mu_true = pair.dual_domain.check(np.atleast_1d(np.asarray(mu_true, dtype=float)), "mu_true")
    if init_value is None:
        init_value = default_fixed_init(family)
    init_value = pair.dual_domain.check(np.atleast_1d(np.asarray(init_value, dtype=float)),
                                        "init_value")

    chunks = [range(a, min(a + chunk_size, M)) for a in range(0, M, chunk_size)]

    def job(rows):
        return _run_chunk(family, mu_true, T, seed, rows, init, init_value)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, chunks))
    else:
        results = [job(c) for c in chunks]

    est = np.concatenate([r[0] for r in results])
    ok = np.concatenate([r[1] for r in results])
    projections = sum(r[2] for r in results)
    fallbacks = sum(r[3] for r in results)
    dropped = int((~ok).sum())
    est = est[ok]

    n = est.shape[0]
    centred = est - est.mean(axis=0)
    cov = centred.T @ centred / (n - 1)
    err = est - mu_true
    mse = err.T @ err / n
    scaled_cov, scaled_mse = T * cov, T * mse
    info = metric_dual(pair, mu_true)
    bound = np.linalg.solve(info, np.eye(family.dim))

    scale = np.sqrt(np.outer(np.diag(bound), np.diag(bound)))
    ratio = scaled_cov / scale
    se = efficiency_bands(family, M)
    target = np.eye(family.dim)
    entry_pass = np.abs(ratio - target) <= 3.0 * se

    notes = []
    if fallbacks:
        notes.append(f"{fallbacks} replicate(s) had no interior prefix and used fixed init")
    if dropped:
        notes.append(f"{dropped} replicate(s) dropped after step rejection")
    return EfficiencyReport(family.name, mu_true, T, M, seed, init, est, scaled_cov,
                            scaled_mse, bound, ratio, se, entry_pass,
                            projections=projections, dropped=dropped,
                            fallbacks=fallbacks, notes=notes)


def replicate_stream(family: ExponentialFamily, mu_true, T: int, seed: int,
                     replicate: int) -> np.ndarray:
    return sample_stream(family, mu_true, T, stream_rng(seed, replicate))


def replay_replicate(family: ExponentialFamily, mu_true, T: int, seed: int, replicate: int,
                     arm: str = "natural") -> np.ndarray:
    """Recompute one replicate's final estimate with :func:`run_online`.

    ``arm="mirror"`` runs mirror descent on the natural parameter instead and
    maps the result through ``g``.  First-observation mode only.
    """
    ys = replicate_stream(family, mu_true, T, seed, replicate)
    k, m0 = warm_start(family, ys[None])
    k, m0 = int(k[0]), m0[0]
    if k == 0:
        raise ValueError("replicate has no interior prefix")
    if k == T:
        return m0
    schedule = StepSchedule("inv_t", 1.0, offset=k)
    tail = list(ys[k:])
    if arm == "natural":
        return run_online("natural", family, tail, schedule, m0).final
    if arm == "mirror":
        traj = run_online("mirror", family, tail, schedule, family.pair.h(m0))
        return family.pair.g(traj.final)
    raise ValueError(f"unknown arm {arm!r}")


def _neumaier_running_mean(ys: np.ndarray) -> np.ndarray:
    p = ys.shape[1]
    out = np.empty_like(ys)
    for j in range(p):
        s = c = 0.0
        for t, v in enumerate(ys[:, j].tolist(), start=1):
            tot = s + v
            if abs(s) >= abs(v):
                c += (s - tot) + v
            else:
                c += (v - tot) + s
            s = tot
            out[t - 1, j] = (s + c) / t
    return out


def running_mean_identity_check(family: ExponentialFamily, stream, T: int | None = None) -> float:
    """Largest gap between the ``1/t`` natural-gradient estimate and the sample mean.

    The estimate after ``t`` observations is compared with a compensated
    running mean of ``y_1..y_t`` for every ``t`` from the warm-start point on.
    """
    ys = np.asarray([getattr(s, "y", s) for s in stream], dtype=float).reshape(len(stream), -1)
    if T is not None:
        ys = ys[:T]
    T = ys.shape[0]
    oracle = _neumaier_running_mean(ys)
    k, m = warm_start(family, ys[None])
    k, m = int(k[0]), m[0]
    if k == 0:
        raise ValueError("no prefix of the stream has an interior mean")
    pair = family.pair
    worst = float(np.max(np.abs(m - oracle[k - 1])))
    schedule = StepSchedule("inv_t", 1.0)
    for t in range(k + 1, T + 1):
        grad = grad_log_loss_mean(family, m, ys[t - 1])
        m = natural_gradient_step(pair, grad, m, schedule.alpha(t))
        worst = max(worst, float(np.max(np.abs(m - oracle[t - 1]))))
    return worst


def fixed_init_sweep(family: ExponentialFamily, mu_true, horizons, M: int, seed: int,
                     init_value, workers: int = 1) -> list[EfficiencyReport]:
    return [run_efficiency(family, mu_true, T, M, seed, init="fixed", init_value=init_value,
                           workers=workers) for T in horizons]
