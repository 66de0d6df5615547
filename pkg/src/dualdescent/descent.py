"""Online update rules: gradient, mirror, natural gradient and retraction steps.

Iterates must stay inside open domains.  When an update leaves the dual
(or primal) domain it is projected back to ``DOMAIN_MARGIN`` from the
violated finite boundary and flagged; a step is rejected outright only when
no interior point can be produced (non-finite values, singular metric).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .domains import DomainError, RegionDescriptor
from .dual_geometry import ConjugatePair
from .families import (
    ExponentialFamily,
    grad_log_loss_mean,
    grad_log_loss_natural,
    log_loss_mean,
    log_loss_natural,
)

MAX_CONDITION = 1e12

OPTIMIZERS = ("gd", "mirror", "mirror_map", "natural", "retraction")
_PRIMAL_OPTIMIZERS = ("gd", "mirror", "mirror_map")

_SCHEDULE_ALIASES = {
    "constant": "constant",
    "inv_t": "inv_t",
    "inverse-t": "inv_t",
    "inv_sqrt_t": "inv_sqrt_t",
    "inverse-sqrt-t": "inv_sqrt_t",
}


class StepRejected(RuntimeError):
    """An update could not produce a finite interior point."""


class RunAborted(StepRejected):
    """A run stopped early; ``trajectory`` holds the iterates produced so far."""

    def __init__(self, message: str, trajectory: Trajectory):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``c``, ``c / t`` or ``c / sqrt(t)`` for ``t >= 1``.

    ``offset`` shifts the index seen by the decaying schedules, so a run that
    starts after ``offset`` observations keeps its global ``1/t`` sequence.
    """

    kind: str = "constant"
    c: float = 1.0
    offset: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", _SCHEDULE_ALIASES[self.kind])
        except KeyError:
            raise ValueError(f"unknown schedule {self.kind!r}") from None
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError(f"schedule scale must be positive, got {self.c!r}")
        if self.offset < 0:
            raise ValueError("schedule offset must be nonnegative")

    def alpha(self, t: int) -> float:
        if t < 1:
            raise ValueError("step index starts at 1")
        if self.kind == "constant":
            return self.c
        t += self.offset
        if self.kind == "inv_t":
            return self.c / t
        return self.c / math.sqrt(t)

    def __str__(self):
        extra = f", offset={self.offset}" if self.offset else ""
        return f"{self.kind}(c={self.c:g}{extra})"


def _check_alpha(alpha):
    if not (math.isfinite(alpha) and alpha > 0):
        raise ValueError(f"step size must be positive, got {alpha!r}")


def _all_finite(x: np.ndarray) -> bool:
    if x.ndim == 1:
        return all(map(math.isfinite, x.tolist()))
    return bool(np.isfinite(x).all())


def _hit(mask) -> bool:
    # masks for single points are 0-d; bool() skips numpy's reduction machinery
    return bool(mask) if mask.ndim == 0 else bool(mask.any())


def _safeguard(domain: RegionDescriptor, x: np.ndarray, what: str):
    if not _all_finite(x):
        raise StepRejected(f"{what} is not finite: {x!r}")
    x, projected = domain.project(x)
    if _hit(projected) and not domain.contains(x).all():
        raise StepRejected(f"{what} cannot be moved inside the domain: {x!r}")
    return x, projected


def _result(x, projected, return_projected):
    if return_projected:
        return x, projected
    return x


def gd_step(grad, theta, alpha):
    """Plain gradient step ``theta - alpha * grad``."""
    return np.asarray(theta, dtype=float) - alpha * np.asarray(grad, dtype=float)


def mirror_map_step(pair: ConjugatePair, grad, dual_point, alpha, *,
                    return_projected: bool = False):
    """Mirror descent in dual coordinates: ``mu - alpha * grad``.

    ``grad`` is the natural-coordinate gradient evaluated at ``h(mu)``.
    """
    _check_alpha(alpha)
    mu = pair.dual_domain.check(dual_point, "dual_point")
    out, projected = _safeguard(pair.dual_domain, mu - alpha * np.asarray(grad, dtype=float),
                                "mirror image")
    return _result(out, projected, return_projected)


def mirror_step_proximal(pair: ConjugatePair, grad, theta, alpha, *,
                         return_projected: bool = False):
    """Solve ``argmin <x, grad> + B_G(x, theta) / alpha`` over the primal domain.

    The objective is strictly convex, so the minimiser is the unique solution
    of ``g(x) = g(theta) - alpha * grad``; it is computed by mapping that
    point back through ``h``.
    """
    _check_alpha(alpha)
    theta = pair.primal_domain.check(theta, "theta")
    try:
        mu = pair.dual_domain.check(pair.g(theta), "g(theta)")
    except DomainError as exc:
        raise StepRejected(f"mirror map left the dual domain: {exc}") from exc
    mu_next, proj_dual = mirror_map_step(pair, grad, mu, alpha, return_projected=True)
    out, proj_primal = _safeguard(pair.primal_domain, pair.h(mu_next), "mirror step")
    return _result(out, proj_dual | proj_primal, return_projected)


def natural_direction(pair: ConjugatePair, grad_mu, mu) -> np.ndarray:
    """Solve ``hess_H(mu) d = grad_mu`` against the diagonal metric."""
    diag = pair.hess_H_diag(mu)
    if diag.ndim == 1:
        d = diag.tolist()
        ok = all(0.0 < v < math.inf for v in d)
        cond = max(d) / min(d) if ok else math.inf
    else:
        ok = bool(np.isfinite(diag).all() and (diag > 0).all())
        cond = float(np.max(diag.max(axis=-1) / diag.min(axis=-1))) if ok else math.inf
    if not ok:
        raise StepRejected(f"metric is singular at mu={mu!r}")
    if cond > MAX_CONDITION:
        raise StepRejected(f"metric condition number {cond:.3e} exceeds "
                           f"{MAX_CONDITION:.0e} at mu={mu!r}")
    return np.asarray(grad_mu, dtype=float) / diag


def _identity_retraction(mu, v):
    return mu + v


RETRACTIONS: dict[str, Callable] = {"identity": _identity_retraction}


def _retract(pair, mu, v, retraction, return_projected):
    try:
        R = RETRACTIONS[retraction]
    except KeyError:
        raise ValueError(f"unknown retraction {retraction!r}") from None
    out, projected = _safeguard(pair.dual_domain, R(mu, v), "retraction")
    return _result(out, projected, return_projected)


def natural_gradient_step(pair: ConjugatePair, grad_mu, mu, alpha, *,
                          return_projected: bool = False):
    """``mu - alpha * hess_H(mu)^{-1} grad_mu`` on the dual manifold."""
    _check_alpha(alpha)
    mu = pair.dual_domain.check(mu, "mu")
    v = -alpha * natural_direction(pair, grad_mu, mu)
    return _retract(pair, mu, v, "identity", return_projected)


def retraction_step(pair: ConjugatePair, riemannian_grad, mu, alpha,
                    retraction: str = "identity", *, euclidean: bool = False,
                    return_projected: bool = False):
    """``R_mu(-alpha * riemannian_grad)``.

    With ``euclidean=True`` the supplied gradient is converted with the dual
    metric first.  The identity retraction reproduces
    :func:`natural_gradient_step` bit for bit.
    """
    _check_alpha(alpha)
    mu = pair.dual_domain.check(mu, "mu")
    if euclidean:
        riemannian_grad = natural_direction(pair, riemannian_grad, mu)
    v = -alpha * np.asarray(riemannian_grad, dtype=float)
    return _retract(pair, mu, v, retraction, return_projected)


@dataclass
class Iterate:
    t: int
    loss: float
    cumulative_regret_sum: float
    theta: np.ndarray | None = None
    mu: np.ndarray | None = None
    projected: bool = False  # the update taken from this iterate was safeguarded


@dataclass
class Trajectory:
    optimizer: str
    pair: ConjugatePair
    schedule: StepSchedule
    seed: int | None = None
    family: ExponentialFamily | None = None
    iterates: list[Iterate] = field(default_factory=list)
    final: np.ndarray | None = None
    diagnostic: str | None = None

    def __len__(self):
        return len(self.iterates)

    @property
    def projection_count(self) -> int:
        return sum(it.projected for it in self.iterates)

    @property
    def losses(self) -> np.ndarray:
        return np.array([it.loss for it in self.iterates])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([it.theta for it in self.iterates])

    @property
    def mus(self) -> np.ndarray:
        return np.array([it.mu for it in self.iterates])

    @property
    def points(self) -> np.ndarray:
        """Iterates in the optimizer's own coordinates, followed by the final point."""
        key = "theta" if self.optimizer in ("gd", "mirror") else "mu"
        pts = [getattr(it, key) for it in self.iterates]
        if self.final is not None:
            pts.append(self.final)
        return np.array(pts)


def _observation_loss(fam: ExponentialFamily, primal: bool, y):
    if primal:
        return lambda p: (float(log_loss_natural(fam, p, y)), grad_log_loss_natural(fam, p, y))
    return lambda p: (float(log_loss_mean(fam, p, y)), grad_log_loss_mean(fam, p, y))


def _callable_loss(f):
    def evaluate(p):
        value, grad = f(p)
        return float(value), np.asarray(grad, dtype=float)
    return evaluate


def run_online(optimizer: str, model, stream: Sequence, schedule: StepSchedule,
               init, T: int | None = None, *, seed: int | None = None) -> Trajectory:
    """Run one online optimizer over a loss stream.

    ``model`` is an :class:`ExponentialFamily` or a bare
    :class:`ConjugatePair`.  Stream entries are either observations (log
    losses of the family, in the optimizer's coordinates) or callables
    ``f(point) -> (loss, grad)``.  ``gd``, ``mirror`` and ``mirror_map`` are
    driven by natural-coordinate losses; ``natural`` and ``retraction`` by
    mean-coordinate losses.  ``init`` is in natural coordinates for ``gd`` and
    ``mirror``, and in mean coordinates otherwise.

    Each loss ``f_t`` is evaluated at the current iterate before the update
    that uses its gradient.
    """
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    if isinstance(model, ExponentialFamily):
        fam, pair = model, model.pair
    else:
        fam, pair = None, model
    T = len(stream) if T is None else T
    if T < 1:
        raise ValueError("horizon must be at least 1")
    if len(stream) < T:
        raise ValueError(f"stream has {len(stream)} entries, horizon is {T}")

    primal = optimizer in _PRIMAL_OPTIMIZERS
    if optimizer in ("gd", "mirror"):
        point = pair.primal_domain.check(np.atleast_1d(init), "init")
    else:
        point = pair.dual_domain.check(np.atleast_1d(init), "init")

    traj = Trajectory(optimizer, pair, schedule, seed=seed, family=fam)
    regret = 0.0
    for t in range(1, T + 1):
        entry = stream[t - 1]
        if callable(entry):
            evaluate = _callable_loss(entry)
        else:
            if fam is None:
                raise TypeError("observation streams need an ExponentialFamily")
            evaluate = _observation_loss(fam, primal, entry)

        # theta-gradient for mirror_map is taken at h(mu)
        eval_point = pair.h(point) if optimizer == "mirror_map" else point
        try:
            loss, grad = evaluate(eval_point)
        except DomainError as exc:
            traj.diagnostic = f"step {t}: {exc}"
            raise RunAborted(traj.diagnostic, traj) from exc
        regret += loss

        if optimizer == "gd":
            it = Iterate(t, loss, regret, theta=point)
        elif optimizer == "mirror":
            it = Iterate(t, loss, regret, theta=point, mu=pair.g(point))
        elif optimizer == "mirror_map":
            it = Iterate(t, loss, regret, theta=eval_point, mu=point)
        else:
            it = Iterate(t, loss, regret, mu=point)
        traj.iterates.append(it)

        alpha = schedule.alpha(t)
        try:
            if optimizer == "gd":
                point, projected = _safeguard(pair.primal_domain,
                                              gd_step(grad, point, alpha), "gradient step")
            elif optimizer == "mirror":
                point, projected = mirror_step_proximal(pair, grad, point, alpha,
                                                        return_projected=True)
            elif optimizer == "mirror_map":
                point, projected = mirror_map_step(pair, grad, point, alpha,
                                                   return_projected=True)
            elif optimizer == "natural":
                point, projected = natural_gradient_step(pair, grad, point, alpha,
                                                         return_projected=True)
            else:
                point, projected = retraction_step(pair, grad, point, alpha,
                                                   euclidean=True, return_projected=True)
        except (StepRejected, DomainError) as exc:
            traj.diagnostic = f"step {t}: {exc}"
            raise RunAborted(traj.diagnostic, traj) from exc
        it.projected = _hit(projected)
    traj.final = point
    return traj
