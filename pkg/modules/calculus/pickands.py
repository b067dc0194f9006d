"""
============================================================================
CALCULUS MODULE — PICKANDS DEPENDENCE FUNCTIONS
============================================================================
Convex functions A on [0, 1] with max(w, 1-w) <= A(w) <= 1 that
parametrise bivariate max-stable pairs with unit-Frechet margins:
  • HuslerReissPickands — closed form with A', A''
  • GridPickands        — piecewise linear through grid points, slopes
                          projected onto a nondecreasing sequence
  • IncrementPickands   — A(w) = 1 - E[min(1 - w, wM)] from an increment
  • FlippedPickands     — w -> A(1 - w), the pair read in reverse
A' is the left derivative everywhere on (0, 1]; at 0 the right-hand limit.
============================================================================
"""

import logging
from abc import ABC, abstractmethod
from collections.abc import Mapping

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.stats import norm

from config import PICKANDS_CONVEXITY_TOL, PICKANDS_BOUND_TOL, MOMENT_TOLERANCE
from modules.errors import ConfigError, PreconditionError

logger = logging.getLogger(__name__)


class PickandsFunction(ABC):
    """Base interface; all evaluators are vectorised over w."""

    has_deriv2 = False

    def __call__(self, w):
        return self.evaluate(w)

    @abstractmethod
    def evaluate(self, w):
        """A(w)"""

    @abstractmethod
    def deriv(self, w):
        """Left derivative A'(w); right-hand limit at w = 0."""

    def deriv_right(self, w):
        """Right derivative; equals ``deriv`` wherever A is differentiable."""
        return self.deriv(w)

    def deriv2(self, w):
        raise PreconditionError(f"{self!r} has no second derivative",
                                "twice differentiable Pickands function")

    def flipped(self) -> "PickandsFunction":
        return FlippedPickands(self)

    @abstractmethod
    def to_dict(self) -> dict:
        ...


# ── Closed Forms ─────────────────────────────────────────────────────────────

class HuslerReissPickands(PickandsFunction):
    """
    A(w) = (1-w) Phi(lam + g) + w Phi(lam - g), g = log((1-w)/w) / (2 lam).
    Symmetric, so the pair it generates is exchangeable.
    """

    has_deriv2 = True

    def __init__(self, lam: float):
        if not lam > 0:
            raise ConfigError(f"Husler-Reiss lambda must be > 0, got {lam}",
                              "Pickands parameters")
        self.lam = float(lam)

    def __repr__(self):
        return f"HuslerReissPickands(lam={self.lam})"

    def _g(self, w):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log((1.0 - w) / w) / (2.0 * self.lam)

    def evaluate(self, w):
        w = np.asarray(w, dtype=float)
        g = self._g(w)
        return (1.0 - w) * norm.cdf(self.lam + g) + w * norm.cdf(self.lam - g)

    def deriv(self, w):
        # The density terms cancel: (1-w) phi(lam+g) = w phi(lam-g)
        g = self._g(w)
        return norm.cdf(self.lam - g) - norm.cdf(self.lam + g)

    def deriv2(self, w):
        w = np.asarray(w, dtype=float)
        g = self._g(w)
        interior = (w > 0.0) & (w < 1.0)
        safe = np.where(interior, w, 0.5)
        val = norm.pdf(self.lam + g) / (2.0 * self.lam * (1.0 - safe)) / safe / safe
        return np.where(interior, val, 0.0)

    def to_dict(self) -> dict:
        return {"type": "husler_reiss", "lambda": self.lam}


class GridPickands(PickandsFunction):
    """
    Piecewise linear A through (w_k, A_k). Segment slopes are projected onto
    a nondecreasing sequence (weighted by segment length, which keeps
    A(0) and A(1) fixed); slope decreases larger than PICKANDS_CONVEXITY_TOL
    are rejected as non-convex input rather than smoothed away.
    """

    def __init__(self, w, values):
        grid = np.asarray(w, dtype=float)
        vals = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != vals.shape or grid.size < 2:
            raise ConfigError("Pickands grid needs matching 1-d 'w' and 'A' "
                              "with at least 2 points", "Pickands grid")
        if grid[0] != 0.0 or grid[-1] != 1.0 or np.any(np.diff(grid) <= 0):
            raise ConfigError("Pickands grid must increase strictly from 0 to 1",
                              "Pickands grid")
        if abs(vals[0] - 1.0) > PICKANDS_BOUND_TOL or abs(vals[-1] - 1.0) > PICKANDS_BOUND_TOL:
            raise PreconditionError("A(0) = A(1) = 1 violated", "Pickands bounds")

        widths = np.diff(grid)
        slopes = np.diff(vals) / widths
        worst = float(np.max(-np.diff(slopes), initial=0.0))
        if worst > PICKANDS_CONVEXITY_TOL:
            raise PreconditionError(
                f"slope decreases by {worst:.3g} on the grid", "Pickands convexity")
        if worst > 0.0:
            slopes = isotonic_regression(slopes, weights=widths, increasing=True).x
            logger.debug(f"[Pickands] Projected grid slopes (max violation {worst:.2e})")

        vals = np.concatenate([[1.0], 1.0 + np.cumsum(slopes * widths)])
        vals[-1] = 1.0
        lower = np.maximum(grid, 1.0 - grid)
        if np.any(vals < lower - PICKANDS_BOUND_TOL) or np.any(vals > 1.0 + PICKANDS_BOUND_TOL):
            raise PreconditionError("max(w, 1-w) <= A(w) <= 1 violated on the grid",
                                    "Pickands bounds")
        if slopes[0] < -1.0 - PICKANDS_BOUND_TOL or slopes[-1] > 1.0 + PICKANDS_BOUND_TOL:
            raise PreconditionError("A' outside [-1, 1]", "Pickands bounds")

        self.grid = grid
        self.values = vals
        self.slopes = np.clip(slopes, -1.0, 1.0)

    def __repr__(self):
        return f"GridPickands({self.grid.size} points)"

    def evaluate(self, w):
        return np.interp(w, self.grid, self.values)

    def deriv(self, w):
        # w in (w_{k-1}, w_k] takes the slope of that segment; boundary
        # secants outside the interior
        k = np.searchsorted(self.grid, w, side="left") - 1
        return self.slopes[np.clip(k, 0, self.slopes.size - 1)]

    def deriv_right(self, w):
        k = np.searchsorted(self.grid, w, side="right") - 1
        return self.slopes[np.clip(k, 0, self.slopes.size - 1)]

    def increment_atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """
        Atoms of the increment generated by this piecewise linear A:
        mass 1 - A'(1) at 0 and mass w_k (s_{k+1} - s_k) at (1 - w_k)/w_k for
        every interior breakpoint.
        """
        inner = self.grid[1:-1]
        jumps = inner * np.diff(self.slopes)
        values = np.concatenate([[0.0], (1.0 - inner) / inner])
        weights = np.concatenate([[1.0 - self.slopes[-1]], jumps])
        keep = weights > 0.0
        return values[keep], weights[keep]

    def flipped(self) -> "GridPickands":
        return GridPickands(1.0 - self.grid[::-1], self.values[::-1])

    def to_dict(self) -> dict:
        return {"type": "pickands_grid", "w": self.grid.tolist(), "A": self.values.tolist()}


class FlippedPickands(PickandsFunction):
    """w -> A(1 - w): the Pickands function of the swapped pair (Y, X)."""

    def __init__(self, base: PickandsFunction):
        self.base = base
        self.has_deriv2 = base.has_deriv2

    def __repr__(self):
        return f"FlippedPickands({self.base!r})"

    def evaluate(self, w):
        return self.base.evaluate(1.0 - np.asarray(w, dtype=float))

    def deriv(self, w):
        return -self.base.deriv_right(1.0 - np.asarray(w, dtype=float))

    def deriv_right(self, w):
        return -self.base.deriv(1.0 - np.asarray(w, dtype=float))

    def deriv2(self, w):
        return self.base.deriv2(1.0 - np.asarray(w, dtype=float))

    def flipped(self) -> PickandsFunction:
        return self.base

    def to_dict(self) -> dict:
        return {"type": "flipped", "of": self.base.to_dict()}


class IncrementPickands(PickandsFunction):
    """
    A(w) = 1 - E[min(1 - w, wM)] for an increment M with E[M] <= 1.
    With z = (1-w)/w: A(w) = 1 - w E[M 1{M <= z}] - (1-w) P(M > z) and
    A'(w) = P(M > z) - E[M 1{M <= z}].
    """

    def __init__(self, increment):
        mean = increment.moment(1.0)
        if mean > 1.0 + MOMENT_TOLERANCE:
            raise PreconditionError(f"E[M] = {mean:.12g} exceeds 1",
                                    "increment mean at most one")
        self.increment = increment
        self.has_deriv2 = increment.has_density
        self._mean = mean

    def __repr__(self):
        return f"IncrementPickands({self.increment!r})"

    @staticmethod
    def _z(w):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore"):
            return (1.0 - w) / w

    def evaluate(self, w):
        w = np.asarray(w, dtype=float)
        z = self._z(w)
        finite = np.isfinite(z)
        zf = np.where(finite, z, 0.0)
        inner = w * self.increment.partial_mean(zf) + (1.0 - w) * self.increment.sf(zf)
        return np.where(finite, 1.0 - inner, 1.0)

    def deriv(self, w):
        z = self._z(w)
        finite = np.isfinite(z)
        zf = np.where(finite, z, 0.0)
        val = self.increment.sf(zf) - self.increment.partial_mean(zf)
        return np.where(finite, val, -self._mean)

    def deriv_right(self, w):
        z = self._z(w)
        finite = np.isfinite(z)
        zf = np.where(finite, z, 0.0)
        atom = self.increment.atom_mass(zf)
        val = self.increment.sf(zf) + atom - (self.increment.partial_mean(zf) - zf * atom)
        return np.where(finite, val, -self._mean)

    def deriv2(self, w):
        if not self.has_deriv2:
            return super().deriv2(w)
        w = np.asarray(w, dtype=float)
        interior = (w > 0.0) & (w < 1.0)
        safe = np.where(interior, w, 0.5)
        val = self.increment.density((1.0 - safe) / safe) / safe / safe / safe
        return np.where(interior, val, 0.0)

    def to_dict(self) -> dict:
        return {"type": "from_increment", "increment": self.increment.to_dict()}


# ── Helpers ──────────────────────────────────────────────────────────────────

def comonotone_pickands() -> GridPickands:
    """A(w) = max(w, 1 - w)"""
    return GridPickands([0.0, 0.5, 1.0], [1.0, 0.5, 1.0])


def independence_pickands() -> GridPickands:
    """A(w) = 1"""
    return GridPickands([0.0, 1.0], [1.0, 1.0])


def check_pickands(A: PickandsFunction, n: int = 1001) -> None:
    """Bounds, convexity and derivative range of A on an n-point grid."""
    w = np.linspace(0.0, 1.0, n)
    vals = np.asarray(A.evaluate(w), dtype=float)
    lower = np.maximum(w, 1.0 - w)
    if np.any(vals < lower - PICKANDS_BOUND_TOL) or np.any(vals > 1.0 + PICKANDS_BOUND_TOL):
        raise PreconditionError(f"{A!r} leaves [max(w, 1-w), 1]", "Pickands bounds")
    second = vals[:-2] - 2.0 * vals[1:-1] + vals[2:]
    if np.any(second < -PICKANDS_CONVEXITY_TOL * (w[1] - w[0])):
        raise PreconditionError(f"{A!r} is not convex on the evaluation grid",
                                "Pickands convexity")
    d = np.asarray(A.deriv(w), dtype=float)
    if np.any(d < -1.0 - PICKANDS_BOUND_TOL) or np.any(d > 1.0 + PICKANDS_BOUND_TOL):
        raise PreconditionError(f"{A!r} has A' outside [-1, 1]", "Pickands bounds")
    if np.any(np.diff(d) < -PICKANDS_CONVEXITY_TOL):
        raise PreconditionError(f"{A!r} has decreasing A'", "Pickands convexity")


def pickands_from_dict(spec: Mapping) -> PickandsFunction:
    kind = spec.get("type")
    if kind == "husler_reiss":
        return HuslerReissPickands(spec["lambda"])
    if kind == "pickands_grid":
        return GridPickands(spec["w"], spec["A"])
    if kind == "comonotone":
        return comonotone_pickands()
    if kind == "independence":
        return independence_pickands()
    if kind == "flipped":
        return pickands_from_dict(spec["of"]).flipped()
    raise ConfigError(f"unknown Pickands type {kind!r}", "Pickands spec")
