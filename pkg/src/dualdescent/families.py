"""Exponential families built on the conjugate-pair catalog.

A family with log-partition ``G`` has density
``p(y | theta) = carrier(y) * exp(<theta, y> - G(theta))`` and mean
``mu = g(theta)``.  Losses here are negative log-likelihoods with the
carrier dropped, normalised so that the natural- and mean-coordinate losses
are the same function: ``B_G(theta, h(y)) = B_H(y, g(theta))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .domains import DomainError
from .dual_geometry import ConjugatePair, metric_dual, product_pair, scalar_pair

FAMILY_NAMES = ("gaussian", "poisson", "bernoulli", "product")
DEFAULT_PRODUCT = ("gaussian", "poisson", "bernoulli")

_POISSON_INVERSION_LIMIT = 30.0
_MAX_RETRIES = 100


@dataclass(frozen=True)
class Observation:
    y: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float)).copy()
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        if not (np.isfinite(self.weight) and self.weight > 0):
            raise ValueError(f"weight must be positive, got {self.weight!r}")

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return np.array_equal(self.y, other.y) and self.weight == other.weight

    __hash__ = None


@dataclass(frozen=True)
class ExponentialFamily:
    name: str
    pair: ConjugatePair

    @property
    def dim(self) -> int:
        return self.pair.dim

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(c.kind for c in self.pair.components)

    def check_sample_space(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[-1:] != (self.dim,):
            raise DomainError(f"observation has trailing dimension {y.shape[-1:]}, "
                              f"expected {self.dim}")
        for i, kind in enumerate(self.kinds):
            col = y[..., i]
            if not np.all(np.isfinite(col)):
                raise DomainError(f"y[{i}] is not finite", coordinate=i)
            if kind == "poisson" and np.any((col < 0) | (col != np.round(col))):
                raise DomainError(f"y[{i}] must be a nonnegative integer for poisson",
                                  coordinate=i)
            if kind == "bernoulli" and np.any((col != 0) & (col != 1)):
                raise DomainError(f"y[{i}] must be 0 or 1 for bernoulli", coordinate=i)
        return y

    def observation(self, y, weight: float = 1.0) -> Observation:
        """Validated observation in this family's sample space."""
        obs = Observation(y, weight)
        self.check_sample_space(obs.y)
        return obs


def make_family(name: str, dim: int = 1, components=None) -> ExponentialFamily:
    """Catalog lookup.

    ``product`` takes ``components`` (default gaussian, poisson, bernoulli);
    the scalar families take ``dim`` independent coordinates.
    """
    if name == "product":
        kinds = tuple(components) if components else DEFAULT_PRODUCT
        return ExponentialFamily("product", product_pair(kinds))
    if name not in FAMILY_NAMES:
        raise ValueError(f"unknown family {name!r}")
    return ExponentialFamily(name, scalar_pair(name, dim))


def _unpack(y):
    if isinstance(y, Observation):
        return y.y, y.weight
    return np.asarray(y, dtype=float), 1.0


def _check_closure(fam: ExponentialFamily, y):
    dom = fam.pair.dual_domain
    if y.shape[-1:] != (fam.dim,):
        raise DomainError(f"observation has trailing dimension {y.shape[-1:]}, "
                          f"expected {fam.dim}")
    if y.ndim == 1 and all(lo <= v <= hi and math.isfinite(v)
                           for (lo, hi), v in zip(dom._bounds, y.tolist())):
        return
    ok = (y >= dom.lower) & (y <= dom.upper) & np.isfinite(y)
    if not ok.all():
        bad = ~ok
        i = int(np.argwhere(bad)[0][-1])
        raise DomainError(f"y[{i}] outside the closed mean domain", coordinate=i)


def log_loss_natural(fam: ExponentialFamily, theta, y):
    """Negative log-likelihood in natural coordinates, ``G(theta) - <theta, y> + H(y)``.

    Equals ``B_G(theta, h(y))`` for interior ``y`` and extends it by
    continuity to boundary observations (Poisson 0, Bernoulli 0/1).
    """
    theta = fam.pair.primal_domain.check(theta, "theta")
    y, w = _unpack(y)
    _check_closure(fam, y)
    val = fam.pair.G(theta) - (theta * y).sum(axis=-1) + fam.pair.H_closure(y)
    return w * np.maximum(val, 0.0)


def grad_log_loss_natural(fam: ExponentialFamily, theta, y):
    """``g(theta) - y``."""
    theta = fam.pair.primal_domain.check(theta, "theta")
    y, w = _unpack(y)
    return w * (fam.pair.g(theta) - y)


def log_loss_mean(fam: ExponentialFamily, mu, y):
    """Negative log-likelihood in mean coordinates, ``B_H(y, mu)`` extended to boundary ``y``."""
    mu = fam.pair.dual_domain.check(mu, "mu")
    y, w = _unpack(y)
    _check_closure(fam, y)
    pair = fam.pair
    val = pair.H_closure(y) - pair.H(mu) - (pair.h(mu) * (y - mu)).sum(axis=-1)
    return w * np.maximum(val, 0.0)


def grad_log_loss_mean(fam: ExponentialFamily, mu, y):
    """``-hess_H(mu) (y - mu)`` (diagonal metric, so elementwise)."""
    mu = fam.pair.dual_domain.check(mu, "mu")
    y, w = _unpack(y)
    return w * (-fam.pair.hess_H_diag(mu) * (y - mu))


def fisher_information_mean(fam: ExponentialFamily, mu) -> np.ndarray:
    """Fisher information in mean coordinates; this is the dual metric."""
    return metric_dual(fam.pair, mu)


def stream_rng(seed: int, replicate: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, replicate)``.

    Draws within the stream are positional, so step ``t`` of replicate ``r``
    is fixed by ``(seed, r, t)``.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replicate])))


def _poisson_inversion(lam: float, n: int, rng: np.random.Generator) -> np.ndarray:
    kmax = int(np.ceil(lam + 20.0 * np.sqrt(lam) + 20.0))
    k = np.arange(kmax + 1)
    cdf = np.cumsum(np.exp(k * np.log(lam) - lam - gammaln(k + 1.0)))
    u = rng.random(n)
    out = np.searchsorted(cdf, u, side="right")
    for _ in range(_MAX_RETRIES):
        over = out > kmax
        if not over.any():
            return out.astype(float)
        u_new = rng.random(int(over.sum()))
        out[over] = np.searchsorted(cdf, u_new, side="right")
    raise RuntimeError(f"poisson inversion exceeded its cap for lambda={lam}")


def sample_stream(fam: ExponentialFamily, mu, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. draws with mean ``mu``, shape ``(n, dim)``; advances ``rng``."""
    mu = fam.pair.dual_domain.check(np.atleast_1d(mu), "mu")
    out = np.empty((n, fam.dim))
    for i, kind in enumerate(fam.kinds):
        m = float(mu[i])
        if kind == "gaussian":
            out[:, i] = m + rng.standard_normal(n)
        elif kind == "poisson":
            if m < _POISSON_INVERSION_LIMIT:
                out[:, i] = _poisson_inversion(m, n, rng)
            else:
                out[:, i] = rng.poisson(m, n)
        elif kind == "bernoulli":
            out[:, i] = (rng.random(n) < m).astype(float)
        else:
            raise ValueError(f"no sampler for {kind!r}")
    return out


def sample(fam: ExponentialFamily, mu, rng: np.random.Generator) -> Observation:
    """One draw with mean ``mu``."""
    return Observation(sample_stream(fam, mu, 1, rng)[0])
