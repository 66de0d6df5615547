"""Open box domains for primal and dual coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DOMAIN_MARGIN = 1e-9


class DomainError(ValueError):
    """A point lies outside (or on the boundary of) an open domain."""

    def __init__(self, message: str, coordinate: int | None = None):
        super().__init__(message)
        self.coordinate = coordinate


def _fmt_bound(b: float) -> str:
    if np.isinf(b):
        return "inf" if b > 0 else "-inf"
    return f"{b:g}"


@dataclass(frozen=True, eq=False)
class RegionDescriptor:
    """Product of open intervals ``(lower[i], upper[i])``.

    Infinite endpoints are allowed; finite ones are excluded from the region.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo >= hi):
            raise ValueError("every coordinate needs lower < upper")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "_bounds", tuple(zip(lo.tolist(), hi.tolist())))

    @classmethod
    def from_intervals(cls, intervals) -> RegionDescriptor:
        intervals = list(intervals)
        return cls(np.array([a for a, _ in intervals], dtype=float),
                   np.array([b for _, b in intervals], dtype=float))

    @property
    def dim(self) -> int:
        return self.lower.size

    def __eq__(self, other):
        if not isinstance(other, RegionDescriptor):
            return NotImplemented
        return (np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    def interval_str(self, i: int) -> str:
        return f"({_fmt_bound(self.lower[i])}, {_fmt_bound(self.upper[i])})"

    def _inside_point(self, x: np.ndarray) -> bool:
        # single points dominate the optimizer loops; numpy reductions on
        # length-p arrays cost more than a Python comparison chain
        return all(lo < v < hi for (lo, hi), v in zip(self._bounds, x.tolist()))

    def contains(self, x) -> np.ndarray:
        """Boolean membership, reduced over the last axis."""
        x = np.asarray(x, dtype=float)
        inside = (x > self.lower) & (x < self.upper)
        return np.all(inside, axis=-1)

    def check(self, x, name: str = "x") -> np.ndarray:
        """Return ``x`` as a float array or raise :class:`DomainError`.

        The error names the first offending coordinate.
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise DomainError(
                f"{name} has trailing dimension {x.shape[-1:] or 'scalar'}, "
                f"expected {self.dim}")
        if x.ndim == 1 and self._inside_point(x):
            return x
        inside = (x > self.lower) & (x < self.upper)
        if inside.all():
            return x
        idx = np.argwhere(~inside)[0]
        i = int(idx[-1])
        val = x[tuple(idx)]
        raise DomainError(
            f"{name}[{i}]={val!r} outside open domain {self.interval_str(i)}",
            coordinate=i)

    def project(self, x, margin: float = DOMAIN_MARGIN):
        """Pull coordinates that left the region back to ``margin`` inside.

        Only violated finite boundaries move a coordinate.  Returns the
        projected array and a boolean mask (over the leading axes) marking
        rows that were changed.  Non-finite input is left untouched.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            if self._inside_point(x):
                return x, np.False_
        elif ((x > self.lower) & (x < self.upper)).all():
            return x, np.zeros(x.shape[:-1], dtype=bool)
        lo = self.lower + margin
        hi = self.upper - margin
        below = np.isfinite(self.lower) & (x <= self.lower)
        above = np.isfinite(self.upper) & (x >= self.upper)
        if not (below.any() or above.any()):
            return x, np.zeros(x.shape[:-1], dtype=bool)
        out = np.where(below, lo, np.where(above, hi, x))
        return out, np.any(below | above, axis=-1)


def real_line(dim: int) -> RegionDescriptor:
    return RegionDescriptor(np.full(dim, -np.inf), np.full(dim, np.inf))
