"""Convex-conjugate pairs, Bregman divergences and their Hessian metrics.

Every pair in the catalog is separable: ``G(theta) = sum_i G_i(theta_i)``,
so gradients act coordinatewise and both metric tensors are diagonal.  All
functions accept points with arbitrary leading batch axes; the last axis is
the parameter dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit, xlogy

from .domains import DomainError, RegionDescriptor

_INF = np.inf


def _gauss_G(x):
    return 0.5 * x * x


def _identity(x):
    return np.array(x, dtype=float, copy=True)


def _ones(x):
    return np.ones_like(x, dtype=float)


def _poisson_H(mu):
    return xlogy(mu, mu) - mu


def _reciprocal(mu):
    return 1.0 / mu


def _softplus(x):
    return np.logaddexp(0.0, x)


def _logistic_var(x):
    return expit(x) * expit(-x)


def _neg_entropy(mu):
    return xlogy(mu, mu) + xlogy(1.0 - mu, 1.0 - mu)


def _bernoulli_hess_H(mu):
    return 1.0 / (mu * (1.0 - mu))


@dataclass(frozen=True)
class ScalarConjugate:
    """One coordinate of a separable conjugate pair.

    ``H_closure`` evaluates ``H`` on the closure of the dual interval (using
    ``0 log 0 = 0``); it exists for losses at boundary observations only.
    ``primal_box``/``dual_box`` are compact test regions well inside the
    open domains.
    """

    kind: str
    primal: tuple[float, float]
    dual: tuple[float, float]
    G: Callable
    g: Callable
    hess_G: Callable
    H: Callable
    h: Callable
    hess_H: Callable
    H_closure: Callable
    primal_box: tuple[float, float]
    dual_box: tuple[float, float]
    swapped: bool = False

    def dual_component(self) -> ScalarConjugate:
        return ScalarConjugate(
            kind=self.kind, primal=self.dual, dual=self.primal,
            G=self.H, g=self.h, hess_G=self.hess_H,
            H=self.G, h=self.g, hess_H=self.hess_G, H_closure=self.G,
            primal_box=self.dual_box, dual_box=self.primal_box,
            swapped=not self.swapped)


GAUSSIAN = ScalarConjugate(
    "gaussian", (-_INF, _INF), (-_INF, _INF),
    _gauss_G, _identity, _ones, _gauss_G, _identity, _ones, _gauss_G,
    primal_box=(-5.0, 5.0), dual_box=(-5.0, 5.0))

POISSON = ScalarConjugate(
    "poisson", (-_INF, _INF), (0.0, _INF),
    np.exp, np.exp, np.exp, _poisson_H, np.log, _reciprocal, _poisson_H,
    primal_box=(-3.0, 3.0), dual_box=(0.05, 20.0))

BERNOULLI = ScalarConjugate(
    "bernoulli", (-_INF, _INF), (0.0, 1.0),
    _softplus, expit, _logistic_var, _neg_entropy, logit, _bernoulli_hess_H,
    _neg_entropy,
    primal_box=(-5.0, 5.0), dual_box=(0.01, 0.99))

SCALARS = {c.kind: c for c in (GAUSSIAN, POISSON, BERNOULLI)}


@dataclass(frozen=True, eq=False)
class ConjugatePair:
    """A separable strictly convex ``G`` together with its conjugate ``H``.

    Instances are immutable and safe to share.  ``g = grad G`` maps the
    primal domain onto the dual domain and ``h = grad H`` inverts it.
    """

    components: tuple[ScalarConjugate, ...]
    name: str = ""
    primal_domain: RegionDescriptor = field(init=False)
    dual_domain: RegionDescriptor = field(init=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a conjugate pair needs at least one coordinate")
        object.__setattr__(self, "components", comps)
        if not self.name:
            kinds = {c.kind for c in comps}
            object.__setattr__(self, "name", kinds.pop() if len(kinds) == 1 else "product")
        object.__setattr__(self, "primal_domain",
                           RegionDescriptor.from_intervals(c.primal for c in comps))
        object.__setattr__(self, "dual_domain",
                           RegionDescriptor.from_intervals(c.dual for c in comps))
        # runs of identical components, addressed by slices (cheaper than fancy indexing)
        groups: list[tuple[ScalarConjugate, slice]] = []
        start = 0
        for i in range(1, len(comps) + 1):
            if i == len(comps) or comps[i] != comps[start]:
                groups.append((comps[start], slice(start, i)))
                start = i
        object.__setattr__(self, "_groups", tuple(groups))

    @property
    def dim(self) -> int:
        return len(self.components)

    def __eq__(self, other):
        if not isinstance(other, ConjugatePair):
            return NotImplemented
        return self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def dual(self) -> ConjugatePair:
        """The same pair with the roles of ``(G, Theta)`` and ``(H, Phi)`` swapped."""
        return ConjugatePair(tuple(c.dual_component() for c in self.components),
                             name=self.name)

    def _map(self, attr: str, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if len(self._groups) == 1:
            return np.asarray(getattr(self._groups[0][0], attr)(x), dtype=float)
        out = np.empty(x.shape, dtype=float)
        for comp, ix in self._groups:
            out[..., ix] = getattr(comp, attr)(x[..., ix])
        return out

    # Unchecked evaluations; callers validate domains.
    def G(self, theta):
        return self._map("G", theta).sum(axis=-1)

    def H(self, mu):
        return self._map("H", mu).sum(axis=-1)

    def H_closure(self, mu):
        return self._map("H_closure", mu).sum(axis=-1)

    def g(self, theta):
        return self._map("g", theta)

    def h(self, mu):
        return self._map("h", mu)

    def hess_G_diag(self, theta):
        return self._map("hess_G", theta)

    def hess_H_diag(self, mu):
        return self._map("hess_H", mu)

    def hess_G(self, theta):
        return _diag_embed(self.hess_G_diag(theta))

    def hess_H(self, mu):
        return _diag_embed(self.hess_H_diag(mu))

    def primal_box(self):
        return np.array([c.primal_box for c in self.components]).T

    def dual_box(self):
        return np.array([c.dual_box for c in self.components]).T


def _diag_embed(d: np.ndarray) -> np.ndarray:
    out = np.zeros(d.shape + d.shape[-1:], dtype=float)
    idx = np.arange(d.shape[-1])
    out[..., idx, idx] = d
    return out


def scalar_pair(kind: str, dim: int = 1) -> ConjugatePair:
    """``dim`` independent copies of one catalog coordinate."""
    try:
        comp = SCALARS[kind]
    except KeyError:
        raise ValueError(f"unknown scalar family {kind!r}") from None
    if dim < 1:
        raise ValueError("dim must be positive")
    return ConjugatePair((comp,) * dim, name=kind)


def gaussian_pair(dim: int = 1) -> ConjugatePair:
    return scalar_pair("gaussian", dim)


def poisson_pair(dim: int = 1) -> ConjugatePair:
    return scalar_pair("poisson", dim)


def bernoulli_pair(dim: int = 1) -> ConjugatePair:
    return scalar_pair("bernoulli", dim)


def product_pair(kinds) -> ConjugatePair:
    comps = []
    for k in kinds:
        if k not in SCALARS:
            raise ValueError(f"unknown scalar family {k!r}")
        comps.append(SCALARS[k])
    return ConjugatePair(tuple(comps), name="product")


def _inner(a, b):
    return (a * b).sum(axis=-1)


def bregman_primal(pair: ConjugatePair, theta, theta_ref):
    """``B_G(theta, theta_ref) = G(theta) - G(theta_ref) - <g(theta_ref), theta - theta_ref>``."""
    theta = pair.primal_domain.check(theta, "theta")
    theta_ref = pair.primal_domain.check(theta_ref, "theta_ref")
    d = (pair.G(theta) - pair.G(theta_ref)
         - _inner(pair.g(theta_ref), theta - theta_ref))
    return np.maximum(d, 0.0)


def bregman_dual(pair: ConjugatePair, mu, mu_ref):
    """``B_H(mu, mu_ref)`` on the dual domain."""
    mu = pair.dual_domain.check(mu, "mu")
    mu_ref = pair.dual_domain.check(mu_ref, "mu_ref")
    d = pair.H(mu) - pair.H(mu_ref) - _inner(pair.h(mu_ref), mu - mu_ref)
    return np.maximum(d, 0.0)


def duality_gap(pair: ConjugatePair, theta, theta_ref):
    """``B_G(theta, theta_ref) - B_H(g(theta_ref), g(theta))``; zero in exact arithmetic."""
    bg = bregman_primal(pair, theta, theta_ref)
    theta = np.asarray(theta, dtype=float)
    theta_ref = np.asarray(theta_ref, dtype=float)
    bh = bregman_dual(pair, pair.g(theta_ref), pair.g(theta))
    return bg - bh


def metric_primal(pair: ConjugatePair, theta) -> np.ndarray:
    theta = pair.primal_domain.check(theta, "theta")
    return pair.hess_G(theta)


def metric_dual(pair: ConjugatePair, mu) -> np.ndarray:
    mu = pair.dual_domain.check(mu, "mu")
    return pair.hess_H(mu)


class ConjugateConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def numeric_conjugate(G: Callable, g: Callable, mu, *, tol: float = 1e-10,
                      max_expand: int = 60, maxiter: int = 500):
    """Evaluate ``sup_theta <theta, mu> - G(theta)`` by root-finding on ``g(theta) = mu``.

    ``G`` must be separable, so each coordinate of ``g`` depends only on the
    matching coordinate of ``theta``.  Each root is bracketed by doubling an
    interval around zero and then polished with Brent's method.

    Returns
    -------
    value : float
    argmax : ndarray
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    theta = np.zeros_like(mu)
    for i in range(mu.size):
        def resid(x, i=i):
            t = theta.copy()
            t[i] = x
            with np.errstate(over="ignore"):
                return float(np.atleast_1d(g(t))[i] - mu[i])

        lo, hi = -1.0, 1.0
        f_lo, f_hi = resid(lo), resid(hi)
        n = 0
        while f_lo * f_hi > 0:
            n += 1
            if n > max_expand:
                raise DomainError(
                    f"mu[{i}]={mu[i]!r} is outside the image of the gradient map",
                    coordinate=i)
            lo, hi = 2.0 * lo, 2.0 * hi
            # exp overflows past ~709; past that the bracket is meaningless
            lo, hi = max(lo, -700.0), min(hi, 700.0)
            f_lo, f_hi = resid(lo), resid(hi)
            if not (np.isfinite(f_lo) and np.isfinite(f_hi)):
                raise DomainError(
                    f"mu[{i}]={mu[i]!r} is outside the image of the gradient map",
                    coordinate=i)
        if f_lo == 0.0:
            theta[i] = lo
        elif f_hi == 0.0:
            theta[i] = hi
        else:
            theta[i] = brentq(resid, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                              maxiter=maxiter, disp=False)
        r = abs(resid(theta[i]))
        if r > tol * max(1.0, abs(mu[i])):
            raise ConjugateConvergenceError(
                f"root for mu[{i}] did not converge (residual {r:.3e})", r)
    value = float(np.dot(theta, mu) - G(theta))
    return value, theta


def identity_errors(pair: ConjugatePair, n: int = 1000, seed: int = 0) -> dict:
    """Max violations of the duality identities over ``n`` random interior pairs.

    Points are drawn uniformly from the pair's compact test boxes.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, pair.dim]))
    lo, hi = pair.primal_box()
    theta = rng.uniform(lo, hi, size=(n, pair.dim))
    theta_ref = rng.uniform(lo, hi, size=(n, pair.dim))
    dlo, dhi = pair.dual_box()
    mu = rng.uniform(dlo, dhi, size=(n, pair.dim))
    mu_ref = rng.uniform(dlo, dhi, size=(n, pair.dim))

    bg = bregman_primal(pair, theta, theta_ref)
    gap = np.abs(duality_gap(pair, theta, theta_ref)) / np.maximum(1.0, bg)
    bh = bregman_dual(pair, mu, mu_ref)
    gap_dual = (np.abs(bh - bregman_primal(pair, pair.h(mu_ref), pair.h(mu)))
                / np.maximum(1.0, bh))
    inverse = np.max(np.abs(pair.h(pair.g(theta)) - theta), axis=-1)
    recip = pair.hess_H(pair.g(theta)) @ pair.hess_G(theta) - np.eye(pair.dim)
    return {
        "duality_gap": float(np.max(gap)),
        "dual_duality_gap": float(np.max(gap_dual)),
        "inverse_map": float(np.max(inverse)),
        "hessian_reciprocity": float(np.max(np.abs(recip))),
    }


IDENTITY_TOLERANCES = {
    "duality_gap": 1e-10,
    "dual_duality_gap": 1e-10,
    "inverse_map": 1e-9,
    "hessian_reciprocity": 1e-7,
}
