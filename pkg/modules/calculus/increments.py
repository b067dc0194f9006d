"""
============================================================================
CALCULUS MODULE — EDGE INCREMENT LAWS
============================================================================
Laws mu_e of the multiplicative increments M_e on [0, inf):
  • Discrete         — finite atoms, an explicit atom at 0 allowed
  • LogNormal        — lognormal positive part plus an optional zero atom
  • HuslerReiss      — LogNormal(-2 lam^2, 2 lam)
  • PickandsIncrement— P(M <= z) = A(w) - w A'(w), w = 1/(1+z)
  • Empirical        — equal-weight atoms at the samples
  • ReversedIncrement— reversal of a law with a density, by quadrature
Every variant evaluates its CDF exactly (or by quadrature), its partial
mean E[M 1{M <= z}], its alpha-moments, and a generalised inverse CDF.
============================================================================
"""

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Mapping

import numpy as np
from scipy.stats import lognorm, norm

from config import WEIGHT_TOLERANCE, MOMENT_TOLERANCE, RESAMPLE_POOL_FACTOR
from modules.calculus.numerics import generalized_inverse, integrate_log_axis
from modules.calculus.pickands import (
    PickandsFunction, GridPickands, HuslerReissPickands, IncrementPickands, check_pickands,
    pickands_from_dict,
)
from modules.calculus.workers import chunked_draw
from modules.errors import ConfigError, PreconditionError, NumericError

logger = logging.getLogger(__name__)


def _weighted(z: float, power: float, value: float) -> float:
    """z**power * value, exactly 0 where value is 0 even if z**power overflows."""
    if value == 0.0:
        return 0.0
    with np.errstate(over="ignore", divide="ignore"):
        return float(z**power * value)


class IncrementDistribution(ABC):
    """Law of a nonnegative increment M. Evaluators are vectorised over z."""

    kind = "abstract"
    has_density = False

    @abstractmethod
    def cdf(self, z):
        """P(M <= z)"""

    def cdf_left(self, z):
        """P(M < z); default for laws whose only atom sits at 0."""
        z = np.asarray(z, dtype=float)
        return np.where(z > 0.0, self.cdf(z), 0.0)

    def sf(self, z):
        return 1.0 - self.cdf(z)

    def atom_mass(self, z):
        return self.cdf(z) - self.cdf_left(z)

    @property
    def zero_mass(self) -> float:
        return float(self.cdf(0.0))

    @abstractmethod
    def partial_mean(self, z):
        """E[M 1{M <= z}]"""

    @abstractmethod
    def moment(self, alpha: float) -> float:
        """E[M^alpha], with 0^alpha = 0"""

    @abstractmethod
    def ppf(self, u):
        """Smallest z with P(M <= z) >= u."""

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.ppf(rng.random(size))

    def density(self, z):
        raise PreconditionError(f"{self!r} has no density on (0, inf)",
                                "increment density")

    @abstractmethod
    def to_dict(self) -> dict:
        ...


# ── Discrete ─────────────────────────────────────────────────────────────────

class Discrete(IncrementDistribution):
    """Finite atoms; values sorted and distinct, weights > 0 summing to 1."""

    kind = "discrete"

    def __init__(self, values, weights, normalize: bool = False):
        v = np.atleast_1d(np.asarray(values, dtype=float))
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        if v.ndim != 1 or v.shape != w.shape or v.size == 0:
            raise ConfigError("discrete law needs matching non-empty values and weights",
                              "discrete increment")
        if not np.all(np.isfinite(v)) or np.any(v < 0.0):
            raise ConfigError("discrete values must be finite and >= 0", "discrete increment")
        if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
            raise ConfigError("discrete weights must be > 0", "discrete increment")
        total = float(w.sum())
        if normalize:
            w = w / total
        elif abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ConfigError(f"discrete weights sum to {total!r}, not 1",
                              "discrete increment")

        uniq, inverse = np.unique(v, return_inverse=True)
        self.values = uniq
        self.weights = np.bincount(inverse, weights=w, minlength=uniq.size)
        self._cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        self._cum[-1] = 1.0
        self._mean_cum = np.concatenate([[0.0], np.cumsum(self.values * self.weights)])

    def __repr__(self):
        pairs = ", ".join(f"{v:g}: {w:g}" for v, w in zip(self.values, self.weights))
        return f"Discrete({{{pairs}}})"

    @property
    def is_degenerate(self) -> bool:
        return self.values.size == 1

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return self.values, self.weights

    def cdf(self, z):
        return self._cum[np.searchsorted(self.values, z, side="right")]

    def cdf_left(self, z):
        return self._cum[np.searchsorted(self.values, z, side="left")]

    def partial_mean(self, z):
        return self._mean_cum[np.searchsorted(self.values, z, side="right")]

    def moment(self, alpha: float) -> float:
        pos = self.values > 0.0
        return float(np.sum(self.weights[pos] * self.values[pos] ** alpha))

    def ppf(self, u):
        k = np.searchsorted(self._cum[1:], u, side="left")
        return self.values[np.clip(k, 0, self.values.size - 1)]

    def to_dict(self) -> dict:
        return {"type": "discrete",
                "atoms": [{"value": float(v), "weight": float(w)}
                          for v, w in zip(self.values, self.weights)]}


class Empirical(Discrete):
    """Equal-weight atoms at the observed samples."""

    kind = "empirical"

    def __init__(self, samples):
        s = np.sort(np.atleast_1d(np.asarray(samples, dtype=float)))
        if s.size == 0:
            raise ConfigError("empirical law needs at least one sample", "empirical increment")
        self.samples = s
        values, counts = np.unique(s, return_counts=True)
        super().__init__(values, counts.astype(float), normalize=True)

    def __repr__(self):
        return f"Empirical({self.samples.size} samples)"

    def moment(self, alpha: float) -> float:
        pos = self.samples[self.samples > 0.0]
        return float(np.sum(pos**alpha) / self.samples.size)

    def to_dict(self) -> dict:
        return {"type": "empirical", "samples": self.samples.tolist()}


# ── Lognormal Family ─────────────────────────────────────────────────────────

class LogNormal(IncrementDistribution):
    """
    M = 0 with probability ``zero_mass``, otherwise exp(N(mu, sigma^2)).
    """

    kind = "lognormal"
    has_density = True

    def __init__(self, mu: float, sigma: float, zero_mass: float = 0.0):
        if not np.isfinite(mu) or not sigma > 0:
            raise ConfigError(f"lognormal needs finite mu and sigma > 0, got ({mu}, {sigma})",
                              "lognormal increment")
        if not 0.0 <= zero_mass < 1.0:
            raise ConfigError(f"lognormal zero mass must lie in [0, 1), got {zero_mass}",
                              "lognormal increment")
        self.mu = float(mu)
        self.sigma = float(sigma)
        self.p0 = float(zero_mass)

    def __repr__(self):
        return f"LogNormal(mu={self.mu}, sigma={self.sigma}, zero_mass={self.p0})"

    def _std(self, z, shift: float = 0.0):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            logz = np.log(np.where(z > 0.0, z, 0.0))
        return (logz - self.mu - shift) / self.sigma

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        val = self.p0 + (1.0 - self.p0) * norm.cdf(self._std(z))
        return np.where(z < 0.0, 0.0, val)

    def partial_mean(self, z):
        scale = (1.0 - self.p0) * math.exp(self.mu + 0.5 * self.sigma**2)
        return scale * norm.cdf(self._std(z, shift=self.sigma**2))

    def moment(self, alpha: float) -> float:
        return (1.0 - self.p0) * math.exp(alpha * self.mu + 0.5 * (alpha * self.sigma) ** 2)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        pos = (u - self.p0) / (1.0 - self.p0)
        safe = np.clip(pos, 0.0, 1.0)
        val = np.exp(self.mu + self.sigma * norm.ppf(safe))
        return np.where(u <= self.p0, 0.0, val)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        pos = np.exp(self.mu + self.sigma * rng.standard_normal(size))
        return np.where(u < self.p0, 0.0, pos)

    def density(self, z):
        z = np.asarray(z, dtype=float)
        pdf = lognorm.pdf(np.where(z > 0.0, z, 1.0), s=self.sigma, scale=math.exp(self.mu))
        return np.where(z > 0.0, (1.0 - self.p0) * pdf, 0.0)

    def to_dict(self) -> dict:
        out = {"type": "lognormal", "mu": self.mu, "sigma": self.sigma}
        if self.p0 > 0.0:
            out["zero_mass"] = self.p0
        return out


class HuslerReiss(LogNormal):
    """Hüsler–Reiss increment exp{2 lam (Z - lam)}, Z standard normal."""

    kind = "husler_reiss"

    def __init__(self, lam: float):
        if not lam > 0:
            raise ConfigError(f"Husler-Reiss lambda must be > 0, got {lam}",
                              "Husler-Reiss increment")
        self.lam = float(lam)
        super().__init__(-2.0 * self.lam**2, 2.0 * self.lam)

    def __repr__(self):
        return f"HuslerReiss(lam={self.lam})"

    def to_dict(self) -> dict:
        return {"type": "husler_reiss", "lambda": self.lam}


# ── Pickands-Derived ─────────────────────────────────────────────────────────

class PickandsIncrement(IncrementDistribution):
    """Increment of the max-stable pair with Pickands function A."""

    kind = "pickands"

    def __init__(self, A: PickandsFunction):
        self.A = A
        self.has_density = A.has_deriv2

    def __repr__(self):
        return f"PickandsIncrement({self.A!r})"

    @staticmethod
    def _w(z):
        z = np.asarray(z, dtype=float)
        return 1.0 / (1.0 + np.maximum(z, 0.0))

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        w = self._w(z)
        val = np.clip(self.A.evaluate(w) - w * self.A.deriv(w), 0.0, 1.0)
        return np.where(z < 0.0, 0.0, val)

    def cdf_left(self, z):
        z = np.asarray(z, dtype=float)
        w = self._w(z)
        val = np.clip(self.A.evaluate(w) - w * self.A.deriv_right(w), 0.0, 1.0)
        return np.where(z <= 0.0, 0.0, val)

    def partial_mean(self, z):
        # E[min(1-w, wM)] = 1 - A(w) solved for the partial mean
        z = np.asarray(z, dtype=float)
        zp = np.maximum(z, 0.0)
        val = (1.0 + zp) * (1.0 - self.A.evaluate(self._w(zp))) - zp * self.sf(zp)
        return np.where(z < 0.0, 0.0, np.maximum(val, 0.0))

    def moment(self, alpha: float) -> float:
        if alpha == 1.0:
            return float(-self.A.deriv(0.0))
        value = alpha * integrate_log_axis(
            lambda z: _weighted(z, alpha - 1.0, float(self.sf(z))),
            what=f"E[M^{alpha}] of {self!r}")
        return value

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        p0 = self.zero_mass
        out = np.zeros_like(u)
        pos = u > p0
        if pos.any():
            out[pos] = generalized_inverse(self.cdf, u[pos], what=f"{self!r}")
        return out

    def density(self, z):
        if not self.has_density:
            return super().density(z)
        z = np.asarray(z, dtype=float)
        w = self._w(z)
        return np.where(z > 0.0, w**3 * self.A.deriv2(w), 0.0)

    def to_dict(self) -> dict:
        return {"type": "pickands", "A": self.A.to_dict()}


# ── Reversal By Quadrature ───────────────────────────────────────────────────

class ReversedIncrement(IncrementDistribution):
    """
    Law of M_{b,a} from a law of M_{a,b} with density q on (0, inf):
    P(M_{b,a} > z) = r E[M^alpha 1{zM < 1}], r = c_a / c_b, with density
    r z^(-alpha-2) q(1/z). Draws use weighted resampling of base draws.
    """

    kind = "reversed"
    has_density = True

    def __init__(self, base: IncrementDistribution, ratio: float, alpha: float):
        if not base.has_density:
            raise PreconditionError(f"cannot reverse {base!r} without a density",
                                    "reversible increment law")
        self.base = base
        self.ratio = float(ratio)
        self.alpha = float(alpha)
        self._pos_mass = self.ratio * base.moment(self.alpha)

    def __repr__(self):
        return f"ReversedIncrement({self.base!r}, ratio={self.ratio}, alpha={self.alpha})"

    def _tilted(self, lower: float, upper: float, power: float) -> float:
        q = self.base.density
        return self.ratio * integrate_log_axis(
            lambda m: _weighted(m, power, float(q(m))), lower, upper,
            what=f"reversal integral of {self.base!r}")

    def sf(self, z):
        z = np.asarray(z, dtype=float)

        def _one(x: float) -> float:
            if x < 0.0:
                return 1.0
            if x == 0.0:
                return self._pos_mass
            return self._tilted(0.0, 1.0 / x, self.alpha)

        return np.vectorize(_one, otypes=[float])(z)

    def cdf(self, z):
        return np.clip(1.0 - self.sf(z), 0.0, 1.0)

    def partial_mean(self, z):
        z = np.asarray(z, dtype=float)

        def _one(x: float) -> float:
            if x <= 0.0:
                return 0.0
            return self._tilted(1.0 / x, np.inf, self.alpha - 1.0)

        return np.vectorize(_one, otypes=[float])(z)

    def moment(self, alpha: float) -> float:
        return self._tilted(0.0, np.inf, self.alpha - alpha)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        pos = u > self.zero_mass
        if pos.any():
            out[pos] = generalized_inverse(self.cdf, u[pos], what=f"{self!r}")
        return out

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        pool = self.base.draw(rng, size * RESAMPLE_POOL_FACTOR)
        pool = pool[pool > 0.0]
        if pool.size == 0:
            raise NumericError(f"no positive base draws for {self!r}", "weighted resampling")
        weights = pool**self.alpha
        pick = rng.choice(pool.size, size=size, p=weights / weights.sum())
        zero = rng.random(size) < self.zero_mass
        return np.where(zero, 0.0, 1.0 / pool[pick])

    def density(self, z):
        z = np.asarray(z, dtype=float)
        safe = np.where(z > 0.0, z, 1.0)
        val = self.ratio * safe ** (-self.alpha - 2.0) * self.base.density(1.0 / safe)
        return np.where(z > 0.0, val, 0.0)

    def to_dict(self) -> dict:
        return {"type": "reversed", "of": self.base.to_dict(),
                "ratio": self.ratio, "alpha": self.alpha}


# ── Operations ───────────────────────────────────────────────────────────────

def increment_from_pickands(A: PickandsFunction) -> IncrementDistribution:
    """
    Law of M with P(M <= z) = A(w) - w A'(w). Hüsler–Reiss A gives the
    closed-form lognormal law; a piecewise linear A gives an exactly
    discrete law.
    """
    check_pickands(A)
    if isinstance(A, HuslerReissPickands):
        return HuslerReiss(A.lam)
    if isinstance(A, GridPickands):
        values, weights = A.increment_atoms()
        return Discrete(values, weights, normalize=True)
    return PickandsIncrement(A)


def pickands_from_increment(m: IncrementDistribution) -> PickandsFunction:
    """A(w) = 1 - E[min(1 - w, wM)]; requires E[M] <= 1."""
    return IncrementPickands(m)


def reverse_increment(m_ab: IncrementDistribution, c_a: float, c_b: float,
                      alpha: float) -> IncrementDistribution:
    """
    Law of M_{b,a} determined by M_{a,b}, the tail constants and alpha.
    Positive part is the M^alpha-tilt of M_{a,b} mapped by m -> 1/m; the
    remaining mass 1 - (c_a/c_b) E[M_{a,b}^alpha] sits at 0.
    """
    for name, val in (("c_a", c_a), ("c_b", c_b), ("alpha", alpha)):
        if not val > 0:
            raise ConfigError(f"{name} must be > 0, got {val}", "reversal parameters")
    ratio = c_a / c_b
    moment = m_ab.moment(alpha)
    if moment > c_b / c_a + MOMENT_TOLERANCE:
        raise PreconditionError(
            f"E[M^{alpha}] = {moment:.12g} exceeds c_b/c_a = {c_b / c_a:.12g}",
            "moment consistency of reversed increment")

    if isinstance(m_ab, ReversedIncrement) and m_ab.alpha == alpha \
            and math.isclose(m_ab.ratio * ratio, 1.0, rel_tol=1e-12):
        return m_ab.base

    if isinstance(m_ab, Discrete):
        values, weights = m_ab.atoms()
        pos = values > 0.0
        rev_values = 1.0 / values[pos]
        rev_weights = ratio * weights[pos] * values[pos] ** alpha
        zero = 1.0 - float(rev_weights.sum())
        if zero > WEIGHT_TOLERANCE:
            rev_values = np.concatenate([[0.0], rev_values])
            rev_weights = np.concatenate([[zero], rev_weights])
        if rev_values.size == 0:
            return Discrete([0.0], [1.0])
        return Discrete(rev_values, rev_weights, normalize=True)

    if isinstance(m_ab, LogNormal):
        zero = 1.0 - ratio * moment
        mu = -(m_ab.mu + alpha * m_ab.sigma**2)
        if zero <= WEIGHT_TOLERANCE:
            if isinstance(m_ab, HuslerReiss) and math.isclose(mu, m_ab.mu, rel_tol=1e-12):
                return HuslerReiss(m_ab.lam)
            zero = 0.0
        return LogNormal(mu, m_ab.sigma, zero_mass=zero)

    if isinstance(m_ab, PickandsIncrement) and alpha == 1.0 and c_a == c_b:
        return PickandsIncrement(m_ab.A.flipped())

    return ReversedIncrement(m_ab, ratio, alpha)


def alpha_moment(m: IncrementDistribution, alpha: float) -> float:
    if not alpha > 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}", "alpha")
    value = m.moment(alpha)
    if not np.isfinite(value):
        raise NumericError(f"E[M^{alpha}] of {m!r} is not finite", "divergent edge moment")
    return float(value)


def sample_increment(m: IncrementDistribution, n: int, seed: int,
                     block_size: int | None = None) -> np.ndarray:
    return chunked_draw(m.draw, n, seed, block_size)


def increment_density(m: IncrementDistribution, z):
    """Density of the positive part of M (defective by the zero atom)."""
    return m.density(z)


def reverse_density(q_ab: Callable, c_a: float, c_b: float, alpha: float) -> Callable:
    """z -> (c_a/c_b) z^(-alpha-2) q_ab(1/z)"""
    ratio = c_a / c_b

    def q_ba(z):
        z = np.asarray(z, dtype=float)
        return ratio * z ** (-alpha - 2.0) * q_ab(1.0 / z)

    return q_ba


def increment_from_dict(spec: Mapping) -> IncrementDistribution:
    kind = spec.get("type")
    if kind == "husler_reiss":
        return HuslerReiss(spec["lambda"])
    if kind == "lognormal":
        return LogNormal(spec["mu"], spec["sigma"], spec.get("zero_mass", 0.0))
    if kind == "discrete":
        atoms = spec["atoms"]
        values = [a["value"] if isinstance(a, Mapping) else a[0] for a in atoms]
        weights = [a["weight"] if isinstance(a, Mapping) else a[1] for a in atoms]
        return Discrete(values, weights)
    if kind == "empirical":
        return Empirical(spec["samples"])
    if kind in ("pickands_grid", "comonotone", "independence", "flipped"):
        return increment_from_pickands(pickands_from_dict(spec))
    if kind == "pickands":
        return increment_from_pickands(pickands_from_dict(spec["A"]))
    raise ConfigError(f"unknown increment type {kind!r}", "increment spec")
