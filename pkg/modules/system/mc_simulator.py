"""
============================================================================
SYSTEM MODULE — MARKOV TREE MONTE-CARLO SIMULATOR
============================================================================
Samples Markov trees whose neighbouring pairs are bivariate max-stable
with unit-Frechet margins (alpha = 1, c_v = 1, b(t) = t), conditions the
sample on high values of one component, and compares what it sees with
the theoretical tail tree:
  • sequential conditional sampling along E_r (inverse CDF by bisection)
  • exceedance conditioning X / X_u given X_u > t
  • KS / log-scale Wasserstein comparison, tail-constant estimates
  • pair and tree log-densities, Kendall-tau conditional independence
  • convergence trend and root-change verification report entries
============================================================================
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.stats import kendalltau

from config import MIN_EXCEEDANCES, MIN_COMPARE_POINTS
from modules.calculus.increments import IncrementDistribution, Discrete
from modules.calculus.laws import SampleMatrix, Estimate
from modules.calculus.numerics import generalized_inverse
from modules.calculus.pickands import PickandsFunction
from modules.calculus.tail_tree import root_change_expectation
from modules.calculus.tree_core import Tree, Edge, root_tree
from modules.calculus.workers import chunked_draw, seed_sequence
from modules.errors import ConfigError, PreconditionError

logger = logging.getLogger(__name__)


def report_entry(metric: str, value, threshold, passed: bool, **extra) -> dict:
    entry = {"metric": metric, "value": value, "threshold": threshold, "pass": bool(passed)}
    entry.update(extra)
    return entry


class MarkovTreeSampler:
    """
    Max-stable Markov tree on ``tree``, sampled from ``root`` outward.
    ``pickands[(a, b)]`` is the Pickands function of (X_a, X_b) for each
    directed edge of E_root.
    """

    alpha = 1.0

    def __init__(self, tree: Tree, root: str, pickands: Mapping[Edge, PickandsFunction]):
        self.tree = tree
        self.rooted = root_tree(tree, root)
        missing = [e for e in self.rooted.directed_edges if e not in pickands]
        if missing:
            raise ConfigError(f"no Pickands function for edge(s) {missing}", "pair dependence")
        self.pickands = {e: pickands[e] for e in self.rooted.directed_edges}

    def __repr__(self):
        return f"MarkovTreeSampler(root={self.root!r}, {len(self.pickands)} edges)"

    @classmethod
    def from_pairs(cls, tree: Tree, root: str,
                   pairs: Mapping[Edge, PickandsFunction]) -> "MarkovTreeSampler":
        """Orient pair dependence given in either direction away from ``root``."""
        oriented = {}
        for a, b in root_tree(tree, root).directed_edges:
            if (a, b) in pairs:
                oriented[(a, b)] = pairs[(a, b)]
            elif (b, a) in pairs:
                oriented[(a, b)] = pairs[(b, a)].flipped()
        return cls(tree, root, oriented)

    @property
    def root(self) -> str:
        return self.rooted.root

    @property
    def columns(self) -> tuple[str, ...]:
        return self.tree.nodes

    def _draw_block(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cols = {v: k for k, v in enumerate(self.columns)}
        out = np.empty((size, len(cols)))
        u0 = np.maximum(rng.random(size), np.finfo(float).tiny)
        out[:, cols[self.root]] = -1.0 / np.log(u0)
        for a, b in self.rooted.directed_edges:
            u = rng.random(size)
            out[:, cols[b]] = conditional_quantile(self.pickands[(a, b)], out[:, cols[a]], u)
        return out


# ── Conditional Sampling ─────────────────────────────────────────────────────

def conditional_cdf(A: PickandsFunction, x, y):
    """
    P(Y <= y | X = x) = exp{-(1/x)((x+y)/y A(w) - 1)} (A(w) - w A'(w)),
    w = x / (x + y).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = x / (x + y)
    a = A.evaluate(w)
    with np.errstate(over="ignore", invalid="ignore"):
        expo = -((x + y) / y * a - 1.0) / x
        val = np.exp(expo) * (a - w * A.deriv(w))
    return np.clip(np.where(np.isfinite(val), val, 0.0), 0.0, 1.0)


def conditional_quantile(A: PickandsFunction, x, u) -> np.ndarray:
    """Generalised inverse of y -> P(Y <= y | X = x), elementwise."""
    x = np.asarray(x, dtype=float)
    u = np.maximum(np.asarray(u, dtype=float), np.finfo(float).tiny)
    return generalized_inverse(lambda y: conditional_cdf(A, x, y), u, scale=x,
                               what="conditional max-stable CDF")


def conditional_sample_maxstable(A: PickandsFunction, x: float, seed: int) -> float:
    if not x > 0:
        raise ConfigError(f"x must be > 0, got {x}", "conditional sampling")
    rng = np.random.default_rng(seed_sequence(seed))
    return float(conditional_quantile(A, np.array([x]), rng.random(1))[0])


def sample_markov_tree(s: MarkovTreeSampler, n: int, seed: int,
                       block_size: int | None = None) -> SampleMatrix:
    X = SampleMatrix(chunked_draw(s._draw_block, n, seed, block_size), s.columns)
    logger.info(f"[Sim] Sampled {n} rows of the Markov tree from root {s.root}")
    return X


# ── Empirical Conditioning ──────────────────────────────────────────────────

@dataclass(frozen=True)
class Exceedances:
    samples: SampleMatrix
    t: float
    count: int


def empirical_tail_tree(X: SampleMatrix, u: str, q: float) -> Exceedances:
    """Rows with X_u above its empirical q-quantile t, divided by X_u."""
    if not 0.0 < q < 1.0:
        raise ConfigError(f"quantile must lie in (0, 1), got {q}", "exceedance quantile")
    expected = round(X.n * (1.0 - q), 6)
    if expected < MIN_EXCEEDANCES:
        raise PreconditionError(
            f"n (1 - q) = {expected:.0f} < {MIN_EXCEEDANCES} expected exceedances",
            "enough exceedances")
    col = X.column(u)
    t = float(np.quantile(col, q))
    keep = col > t
    scaled = X.values[keep] / col[keep, None]
    count = int(keep.sum())
    logger.info(f"[Sim] Conditioning on X_{u} > {t:.6g}: {count} exceedances")
    return Exceedances(SampleMatrix(scaled, X.columns), t, count)


def empirical_tail_constant(col, t_grid: Sequence[float]) -> list[dict]:
    """t P(X > t) at each threshold with binomial SEs."""
    col = np.asarray(col, dtype=float)
    n = col.size
    top = float(col.max())
    out = []
    for t in t_grid:
        p = float(np.mean(col > t))
        flagged = t >= top
        if flagged:
            logger.warning(f"[Sim] Threshold {t} is not below the sample maximum {top:.6g}")
        out.append({"t": float(t), "estimate": t * p,
                    "se": t * float(np.sqrt(p * (1.0 - p) / n)), "flagged": flagged})
    return out


# ── Distribution Comparison ─────────────────────────────────────────────────

def compare_distributions(empirical, reference: IncrementDistribution) -> dict:
    """
    KS distance between the empirical CDF and the reference CDF (checked on
    both sides of every sample point and reference atom) and the
    Wasserstein-1 distance of the log positive parts; the gap in mass at 0
    is reported separately.
    """
    x = np.sort(np.asarray(empirical, dtype=float))
    n = x.size
    if n < MIN_COMPARE_POINTS:
        raise PreconditionError(f"{n} points < {MIN_COMPARE_POINTS}", "enough comparison points")

    points = x
    if isinstance(reference, Discrete):
        points = np.union1d(x, reference.values)
    ecdf_right = np.searchsorted(x, points, side="right") / n
    ecdf_left = np.searchsorted(x, points, side="left") / n
    ks = float(max(np.max(np.abs(ecdf_right - reference.cdf(points))),
                   np.max(np.abs(ecdf_left - reference.cdf_left(points)))))

    p0 = reference.zero_mass
    positive = x[x > 0.0]
    if p0 >= 1.0 or positive.size == 0:
        raise PreconditionError("empty positive part on one side", "positive part for log-W1")
    m = positive.size
    levels = p0 + (1.0 - p0) * (np.arange(1, m + 1) - 0.5) / m
    ref_q = reference.ppf(levels)
    w1 = float(np.mean(np.abs(np.log(positive) - np.log(ref_q))))
    return {"ks": ks, "wasserstein_log": w1,
            "zero_mass_gap": float(np.mean(x == 0.0) - p0), "n": n}


# ── Densities ───────────────────────────────────────────────────────────────

def frechet_logpdf(x):
    x = np.asarray(x, dtype=float)
    return -2.0 * np.log(x) - 1.0 / x


def maxstable_pair_logpdf(A: PickandsFunction, x, y):
    """
    Log density of the max-stable pair with unit-Frechet margins and
    exponent function l(u, v) = (u + v) A(v / (u + v)), u = 1/x, v = 1/y.
    """
    if not A.has_deriv2:
        raise PreconditionError(f"{A!r} has no second derivative",
                                "twice differentiable Pickands function")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u, v = 1.0 / x, 1.0 / y
    s = u + v
    w = v / s
    a, d1, d2 = A.evaluate(w), A.deriv(w), A.deriv2(w)
    l_u = a - w * d1
    l_v = a + (1.0 - w) * d1
    return -s * a - 2.0 * np.log(x) - 2.0 * np.log(y) + np.log(l_u * l_v + w * (1.0 - w) * d2 / s)


def markov_tree_logpdf(s: MarkovTreeSampler, X: SampleMatrix) -> np.ndarray:
    """Sum of node log densities plus pair log density ratios over the edges."""
    total = np.zeros(X.n)
    for v in s.columns:
        total += frechet_logpdf(X.column(v))
    for (a, b), A in s.pickands.items():
        xa, xb = X.column(a), X.column(b)
        total += maxstable_pair_logpdf(A, xa, xb) - frechet_logpdf(xa) - frechet_logpdf(xb)
    return total


# ── Verification Properties ─────────────────────────────────────────────────

def kendall_tau_band(X: SampleMatrix, a: str, b: str, c: str,
                     band: tuple[float, float] = (0.45, 0.55)) -> dict:
    """Kendall tau of (X_a, X_c) among rows with X_b in a quantile band."""
    col_b = X.column(b)
    lo, hi = np.quantile(col_b, band)
    keep = (col_b >= lo) & (col_b <= hi)
    m = int(keep.sum())
    if m < MIN_COMPARE_POINTS:
        raise PreconditionError(f"{m} rows in the band < {MIN_COMPARE_POINTS}",
                                "enough comparison points")
    tau = float(kendalltau(X.column(a)[keep], X.column(c)[keep])[0])
    se = float(np.sqrt(2.0 * (2.0 * m + 5.0) / (9.0 * m * (m - 1.0))))
    return report_entry(f"kendall_tau({a},{c}|{b})", tau, 3.0 * se, abs(tau) <= 3.0 * se,
                        se=se, rows=m)


def convergence_trend(X: SampleMatrix, u: str, v: str, reference: IncrementDistribution,
                      quantiles: Sequence[float], exceedances: int) -> dict:
    """
    KS distance of Theta_{u,v} from ``reference`` at each quantile with the
    exceedance count held fixed (leading n_q = exceedances / (1 - q) rows).
    Passes when the last distance is below the first and at most one step
    goes up.
    """
    ks_values = []
    for q in quantiles:
        n_q = int(round(exceedances / (1.0 - q)))
        if n_q > X.n:
            raise PreconditionError(f"q = {q} needs {n_q} rows, have {X.n}", "enough exceedances")
        exc = empirical_tail_tree(X.rows(slice(0, n_q)), u, q)
        ks_values.append(compare_distributions(exc.samples.column(v), reference)["ks"])
    ups = sum(1 for k0, k1 in zip(ks_values[:-1], ks_values[1:]) if k1 > k0)
    passed = ups <= 1 and ks_values[-1] < ks_values[0]
    return report_entry(f"ks_trend({u}->{v})", ks_values, "decreasing, <= 1 inversion",
                        passed, quantiles=list(quantiles))


def root_change_verification(X: SampleMatrix, i: str, j: str, q: float,
                             alpha: float = 1.0) -> list[dict]:
    """
    Componentwise means of Theta_j from conditioning on X_j against the
    root-change prediction from the Theta_i exceedance sample.
    """
    theta_i = empirical_tail_tree(X, i, q).samples
    theta_j = empirical_tail_tree(X, j, q).samples
    entries = []
    for v in X.columns:
        k = X.index(v)
        pred = root_change_expectation(theta_i, i, j, lambda rows, k=k: rows[:, k], alpha)
        col = theta_j.column(v)
        direct = Estimate(float(col.mean()), float(col.std(ddof=1) / np.sqrt(col.size)))
        band = 3.0 * float(np.hypot(pred.se, direct.se))
        gap = abs(pred.value - direct.value)
        entries.append(report_entry(f"root_change_mean({i}->{j},{v})", gap, band, gap <= band,
                                    predicted=pred.to_dict(), direct=direct.to_dict()))
    return entries
