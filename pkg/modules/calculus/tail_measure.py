"""
============================================================================
CALCULUS MODULE — TAIL MEASURE FUNCTIONALS
============================================================================
Functionals of the tail measure nu evaluated from the law of one tail
vector Theta_i (exact discrete law or a sample):

  nu(x_J > y)           = c_i E[min_j y_j^-alpha Theta_{i,j}^alpha],  i in J
  nu(some x_j > y_j)    = c_i E[max_j y_j^-alpha Theta_{i,j}^alpha]
  nu(rho(x) > 1)        = c_i E[rho(Theta_i)^alpha]
  P_rho(A)              = nu(A and rho > 1) / nu(rho > 1)

The last three need nu({x_i = 0}) = 0, which holds exactly when
E[Theta_{i,j}^alpha] = c_j / c_i for every j with a tail constant.
Exact sources report se = 0; sampled sources report Monte-Carlo SEs.
============================================================================
"""

import itertools
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from config import (
    ZERO_MASS_EXACT_TOL, ZERO_MASS_SE_FACTOR, CONSISTENCY_EXACT_TOL,
    CONSISTENCY_SE_FACTOR, MAX_EVENT_BOXES,
)
from modules.calculus.increments import Discrete
from modules.calculus.laws import SampleMatrix, DiscreteLaw, Estimate
from modules.calculus.maxlinear import MaxLinearModel, maxlinear_tail_law, marginal_constants
from modules.calculus.tail_tree import (
    TailTree, sample_tail_tree, exact_tail_tree_discrete, theta_alpha_moment,
)
from modules.errors import ConfigError, PreconditionError, NumericError

logger = logging.getLogger(__name__)


# ── Sources ──────────────────────────────────────────────────────────────────

@dataclass
class ThetaSource:
    """
    Law of Theta_i for one conditioning index i. ``constants`` holds c_v for
    the nodes of I; ``moments`` optionally holds exact E[Theta_{i,j}^alpha].
    """

    index: str
    alpha: float
    constants: dict[str, float]
    law: DiscreteLaw | None = None
    samples: SampleMatrix | None = None
    moments: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if (self.law is None) == (self.samples is None):
            raise ConfigError("a source needs exactly one of law or samples", "theta source")
        if self.index not in self.constants:
            raise PreconditionError(f"source index {self.index!r} has no tail constant",
                                    "source index in I")
        self.container.index(self.index)

    def __repr__(self):
        kind = "exact" if self.is_exact else f"{self.samples.n} draws"
        return f"ThetaSource(i={self.index!r}, {kind})"

    @property
    def container(self):
        return self.law if self.law is not None else self.samples

    @property
    def is_exact(self) -> bool:
        return self.law is not None

    @property
    def columns(self) -> tuple[str, ...]:
        return self.container.columns

    @property
    def c_i(self) -> float:
        return self.constants[self.index]

    @property
    def available(self) -> list[str]:
        """The index set I: nodes carrying a tail constant."""
        return sorted(self.constants)

    def column(self, j: str) -> np.ndarray:
        if self.is_exact:
            return self.law.atoms[:, self.law.index(j)]
        return self.samples.column(j)

    def expect(self, values: np.ndarray) -> Estimate:
        """Mean of per-draw (or per-atom) values under the source law."""
        values = np.asarray(values, dtype=float)
        if self.is_exact:
            return Estimate(float(np.sum(self.law.probs * values)), 0.0)
        n = values.size
        se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return Estimate(float(np.mean(values)), se)

    def ratio(self, num: np.ndarray, den: np.ndarray) -> Estimate:
        """E[num] / E[den] with a delta-method SE for sampled sources."""
        top, bottom = self.expect(num), self.expect(den)
        if bottom.value <= 0.0:
            raise PreconditionError("denominator has zero mass", "positive rho-set mass")
        value = top.value / bottom.value
        if self.is_exact:
            return Estimate(value, 0.0)
        resid = np.asarray(num) - value * np.asarray(den)
        n = resid.size
        se = float(np.std(resid, ddof=1) / np.sqrt(n) / bottom.value) if n > 1 else 0.0
        return Estimate(value, se)

    def alpha_moment(self, j: str) -> Estimate:
        """E[Theta_{i,j}^alpha], exact where the source knows it."""
        if j in self.moments:
            return Estimate(self.moments[j], 0.0)
        return self.expect(self.column(j) ** self.alpha)

    # ── Constructors ────────────────────────────────────────────────────────

    @classmethod
    def from_law(cls, law: DiscreteLaw, i: str, alpha: float,
                 constants: Mapping[str, float]) -> "ThetaSource":
        return cls(str(i), float(alpha), dict(constants), law=law)

    @classmethod
    def from_tail_tree(cls, tt: TailTree, n: int | None = None,
                       seed: int = 0) -> "ThetaSource":
        """
        Exact when every edge law is discrete and ``n`` is None; otherwise
        ``n`` draws. Edge moments make the alpha-moments exact either way.
        """
        moments = {}
        for v in tt.columns:
            try:
                moments[v] = theta_alpha_moment(tt, v)
            except NumericError as exc:
                logger.warning(f"[Measure] No exact moment for Theta_{tt.root},{v}: {exc}")
        common = dict(index=tt.root, alpha=tt.alpha, constants=dict(tt.model.c),
                      moments=moments)
        if n is None:
            if not all(isinstance(m, Discrete) for m in tt.edge_laws.values()):
                raise ConfigError("a sample size is needed for non-discrete tail trees",
                                  "theta source")
            return cls(law=exact_tail_tree_discrete(tt), **common)
        return cls(samples=sample_tail_tree(tt, n, seed), **common)

    @classmethod
    def from_maxlinear(cls, ml: MaxLinearModel, i) -> "ThetaSource":
        constants = dict(zip(ml.nodes, marginal_constants(ml).tolist()))
        return cls(ml.nodes[ml.index(i)], ml.alpha, constants,
                   law=maxlinear_tail_law(ml, i))


# ── Functionals & Events ─────────────────────────────────────────────────────

@dataclass(frozen=True)
class RhoFunctional:
    """
    rho(x) = max_j w_j x_j | sum_j w_j x_j | min_{j in J} w_j x_j, where the
    nodes with a weight form J. Homogeneous of order one.
    """

    kind: str
    weights: tuple[tuple[str, float], ...]

    KINDS = ("max", "sum", "min")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown rho kind {self.kind!r}", "rho functional")
        if not self.weights:
            raise ConfigError("rho needs at least one weighted coordinate", "rho functional")
        for v, w in self.weights:
            if not w >= 0:
                raise ConfigError(f"rho weight for {v!r} must be >= 0", "rho functional")

    @classmethod
    def from_dict(cls, spec: Mapping) -> "RhoFunctional":
        kind = spec.get("kind")
        if kind == "coordinate":
            if "node" not in spec:
                raise ConfigError("coordinate rho needs 'node'", "rho functional")
            return cls("max", ((str(spec["node"]), 1.0),))
        weights = spec.get("weights")
        if weights is None:
            raise ConfigError("rho needs 'weights'", "rho functional")
        if not isinstance(weights, Mapping):
            weights = {str(v): 1.0 for v in weights}
        try:
            return cls(kind, tuple(sorted((str(v), float(w)) for v, w in weights.items())))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed rho weights: {exc}", "rho functional") from None

    def validate(self, available: Sequence[str]) -> None:
        """
        rho > 1 must force some coordinate in I away from 0. For max and sum
        every positive weight must sit on I. That is stricter than requiring
        {rho > 1} to lie inside {max(x_I) > eps}: a weight outside I is
        rejected even when nu puts no mass where it matters. For min, all of
        J must lie in I with positive weights.
        """
        avail = set(available)
        positive = [v for v, w in self.weights if w > 0.0]
        outside = [v for v in positive if v not in avail]
        if self.kind == "min":
            if any(w <= 0.0 for _, w in self.weights):
                raise PreconditionError("min-functional needs positive weights on all of J",
                                        "rho set inside {max(x_I) > eps}")
            if outside:
                raise PreconditionError(f"min-functional uses {outside} outside I",
                                        "rho set inside {max(x_I) > eps}")
            return
        if not positive:
            raise PreconditionError("rho has no positive weight", "rho set inside {max(x_I) > eps}")
        if outside:
            raise PreconditionError(f"rho puts positive weight on {outside} outside I",
                                    "rho set inside {max(x_I) > eps}")

    def evaluate(self, theta: np.ndarray, columns: Sequence[str]) -> np.ndarray:
        cols = list(columns)
        parts = np.stack([w * theta[:, cols.index(v)] for v, w in self.weights], axis=1)
        if self.kind == "max":
            return parts.max(axis=1)
        if self.kind == "sum":
            return parts.sum(axis=1)
        return parts.min(axis=1)


@dataclass(frozen=True)
class Box:
    """{x : lower_j < x_j <= upper_j}; unlisted coordinates are free."""

    lower: tuple[tuple[str, float], ...] = ()
    upper: tuple[tuple[str, float], ...] = ()

    def intersect(self, other: "Box") -> "Box":
        lo = dict(self.lower)
        for v, b in other.lower:
            lo[v] = max(lo.get(v, -np.inf), b)
        hi = dict(self.upper)
        for v, b in other.upper:
            hi[v] = min(hi.get(v, np.inf), b)
        return Box(tuple(sorted(lo.items())), tuple(sorted(hi.items())))

    def ray_measure(self, theta: np.ndarray, columns: Sequence[str],
                    rho_values: np.ndarray, alpha: float) -> np.ndarray:
        """
        Per row: integral of alpha z^(-alpha-1) over the z > 0 with z theta in
        the box and rho(z theta) > 1, done in s = 1/z.
        """
        cols = list(columns)
        s_hi = rho_values.astype(float).copy()
        s_lo = np.zeros_like(s_hi)
        empty = np.zeros(s_hi.shape, dtype=bool)
        for v, b in self.lower:
            t = theta[:, cols.index(v)]
            if b > 0.0:
                s_hi = np.minimum(s_hi, t / b)
            elif b == 0.0:
                empty |= t <= 0.0
        for v, b in self.upper:
            t = theta[:, cols.index(v)]
            if b < 0.0:
                empty |= True
            elif b == 0.0:
                empty |= t > 0.0
            elif np.isfinite(b):
                s_lo = np.maximum(s_lo, t / b)
        with np.errstate(invalid="ignore"):
            measure = np.maximum(s_hi, 0.0) ** alpha - s_lo**alpha
        return np.where(empty | (s_hi <= s_lo), 0.0, np.maximum(measure, 0.0))


@dataclass(frozen=True)
class Event:
    """Finite union of boxes."""

    boxes: tuple[Box, ...]

    @classmethod
    def everything(cls) -> "Event":
        return cls((Box(),))

    @classmethod
    def orthant(cls, J: Sequence[str], y: Sequence[float]) -> "Event":
        J, y = _thresholds(J, y)
        return cls((Box(tuple(sorted(zip(J, y)))),))

    @classmethod
    def union(cls, J: Sequence[str], y: Sequence[float]) -> "Event":
        J, y = _thresholds(J, y)
        return cls(tuple(Box(((j, b),)) for j, b in zip(J, y)))

    @classmethod
    def from_dict(cls, spec: Mapping) -> "Event":
        shape = spec.get("type", "box")
        try:
            if shape == "everything":
                return cls.everything()
            if shape == "orthant":
                return cls.orthant(spec["J"], spec["y"])
            if shape == "union":
                return cls.union(spec["J"], spec["y"])
            if shape == "box":
                return cls((_box_from_dict(spec),))
            if shape == "boxes":
                return cls(tuple(_box_from_dict(b) for b in spec["boxes"]))
        except KeyError as exc:
            raise ConfigError(f"{shape} event needs {exc}", "event descriptor") from None
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"malformed {shape} event: {exc}", "event descriptor") from None
        raise ConfigError(f"unsupported event shape {shape!r}", "event descriptor")

    def ray_measure(self, theta, columns, rho_values, alpha) -> np.ndarray:
        m = len(self.boxes)
        if m == 0:
            return np.zeros(theta.shape[0])
        if m > MAX_EVENT_BOXES:
            raise ConfigError(f"{m} boxes exceed the limit of {MAX_EVENT_BOXES}",
                              "event descriptor")
        total = np.zeros(theta.shape[0])
        for size in range(1, m + 1):
            sign = 1.0 if size % 2 else -1.0
            for subset in itertools.combinations(self.boxes, size):
                box = subset[0]
                for other in subset[1:]:
                    box = box.intersect(other)
                total += sign * box.ray_measure(theta, columns, rho_values, alpha)
        return np.maximum(total, 0.0)


def _thresholds(J: Sequence[str], y: Sequence[float]) -> tuple[list[str], list[float]]:
    J = [str(j) for j in J]
    y = [float(b) for b in y]
    if not J or len(J) != len(y):
        raise ConfigError("J and y must be non-empty and of equal length", "event descriptor")
    return J, y


def _box_from_dict(spec: Mapping) -> Box:
    lower = tuple(sorted((str(v), float(b)) for v, b in spec.get("lower", {}).items()))
    upper = tuple(sorted((str(v), float(b)) for v, b in spec.get("upper", {}).items()))
    return Box(lower, upper)


@dataclass
class ZeroMassReport:
    index: str
    entries: list[dict]

    @property
    def offending(self) -> list[str]:
        return [e["j"] for e in self.entries if not e["ok"]]

    @property
    def holds(self) -> bool:
        return not self.offending

    def to_dict(self) -> dict:
        return {"index": self.index, "entries": self.entries,
                "nu_zero_mass": "0" if self.holds else "inf"}


# ── Operations ───────────────────────────────────────────────────────────────

def _check_query(src: ThetaSource, J: Sequence[str], y: Sequence[float]) -> tuple[list, np.ndarray]:
    J = [str(j) for j in J]
    y = np.asarray(y, dtype=float)
    if not J or len(J) != y.size:
        raise ConfigError("J and y must be non-empty and of equal length", "orthant query")
    if np.any(y <= 0.0):
        raise ConfigError("thresholds y must be > 0", "orthant query")
    for j in J:
        src.container.index(j)
    return J, y


def _scaled_powers(src: ThetaSource, J: list, y: np.ndarray) -> np.ndarray:
    return np.stack([(src.column(j) / yj) ** src.alpha for j, yj in zip(J, y)], axis=1)


def nu_orthant(src: ThetaSource, J: Sequence[str], y: Sequence[float]) -> Estimate:
    J, y = _check_query(src, J, y)
    if src.index not in J:
        raise PreconditionError(f"source index {src.index!r} is not in J = {J}",
                                "source index in I and J")
    est = src.expect(_scaled_powers(src, J, y).min(axis=1))
    return Estimate(src.c_i * est.value, src.c_i * est.se)


def zero_mass_check(src: ThetaSource) -> ZeroMassReport:
    """E[Theta_{i,j}^alpha] against c_j / c_i for every j in I."""
    entries = []
    for j in src.available:
        if j not in src.columns:
            continue
        est = src.alpha_moment(j)
        target = src.constants[j] / src.c_i
        if src.is_exact or j in src.moments:
            ok = abs(est.value - target) <= ZERO_MASS_EXACT_TOL
        else:
            ok = abs(est.value - target) <= ZERO_MASS_SE_FACTOR * est.se + ZERO_MASS_EXACT_TOL
        entries.append({"j": j, "moment": float(est.value), "se": float(est.se),
                        "target": float(target), "ok": bool(ok)})
    report = ZeroMassReport(src.index, entries)
    if not report.holds:
        logger.info(f"[Measure] nu(x_{src.index} = 0) = inf: moment deficit at {report.offending}")
    return report


def _require_zero_mass(src: ThetaSource) -> None:
    report = zero_mass_check(src)
    if not report.holds:
        detail = ", ".join(f"j={e['j']}: E = {e['moment']:.6g} vs c_j/c_i = {e['target']:.6g}"
                           for e in report.entries if not e["ok"])
        raise PreconditionError(f"nu(x_{src.index} = 0) > 0 ({detail})",
                                "zero-mass precondition")


def nu_union(src: ThetaSource, J: Sequence[str], y: Sequence[float]) -> Estimate:
    J, y = _check_query(src, J, y)
    _require_zero_mass(src)
    est = src.expect(_scaled_powers(src, J, y).max(axis=1))
    return Estimate(src.c_i * est.value, src.c_i * est.se)


def consistency_check(sources: Sequence[ThetaSource], J: Sequence[str],
                      y: Sequence[float]) -> dict:
    """nu_orthant(J, y) from every source whose index lies in J, compared pairwise."""
    J = [str(j) for j in J]
    eligible = [s for s in sources if s.index in J]
    if len(eligible) < 2:
        raise PreconditionError(f"only {len(eligible)} source(s) with index in J = {J}",
                                "two or more sources for model consistency")
    values = {s.index: nu_orthant(s, J, y) for s in eligible}
    pairs = []
    for a, b in itertools.combinations(eligible, 2):
        va, vb = values[a.index], values[b.index]
        gap = abs(va.value - vb.value)
        if a.is_exact and b.is_exact:
            threshold = CONSISTENCY_EXACT_TOL
        else:
            threshold = CONSISTENCY_SE_FACTOR * float(np.hypot(va.se, vb.se))
        pairs.append({"i": a.index, "k": b.index, "discrepancy": gap,
                      "threshold": threshold, "ok": gap <= threshold})
    flagged = [p for p in pairs if not p["ok"]]
    if flagged:
        logger.warning(f"[Measure] Model consistency flagged for {len(flagged)} pair(s)")
    return {"J": J, "y": [float(v) for v in y],
            "values": {k: v.to_dict() for k, v in values.items()},
            "pairs": pairs, "consistent": not flagged}


def nu_rho_mass(src: ThetaSource, rho: RhoFunctional) -> Estimate:
    """nu(rho > 1) = c_i E[rho(Theta_i)^alpha]"""
    rho.validate(src.available)
    _require_zero_mass(src)
    for v, _ in rho.weights:
        src.container.index(v)
    theta = src.container.atoms if src.is_exact else src.samples.values
    est = src.expect(rho.evaluate(theta, src.columns) ** src.alpha)
    value = Estimate(src.c_i * est.value, src.c_i * est.se)
    if value.value == 0.0:
        logger.warning(f"[Measure] nu(S_rho) = 0 for {rho.kind}-functional at source "
                       f"{src.index}: conditioning on rho(X) > t is degenerate")
    return value


def mpd_probability(src: ThetaSource, rho: RhoFunctional, event: Event) -> Estimate:
    """Limit probability of X/t in A given rho(X) > t."""
    rho.validate(src.available)
    _require_zero_mass(src)
    theta = src.container.atoms if src.is_exact else src.samples.values
    rho_values = rho.evaluate(theta, src.columns)
    den = rho_values**src.alpha
    if src.expect(den).value <= 0.0:
        raise PreconditionError(f"nu(S_rho) = 0 at source {src.index}",
                                "positive rho-set mass")
    num = event.ray_measure(theta, src.columns, rho_values, src.alpha)
    return src.ratio(num, den)


def sufficient_subset(sources: Sequence[ThetaSource], I: Sequence[str],
                      K: Sequence[str]) -> dict[str, str]:
    """
    For every j in I outside K find i(j) in K whose source satisfies
    E[Theta_{i,j}^alpha] = c_j / c_i. Raises when some j is uncovered.
    """
    I, K = [str(v) for v in I], [str(v) for v in K]
    if not set(K) <= set(I):
        raise ConfigError(f"K = {K} is not a subset of I = {I}", "sufficient subset")
    by_index = {s.index: s for s in sources if s.index in K}
    missing = [k for k in K if k not in by_index]
    if missing:
        raise ConfigError(f"no source for K node(s) {missing}", "sufficient subset")

    reports = {k: {e["j"]: e for e in zero_mass_check(by_index[k]).entries} for k in K}
    assignment, uncovered = {}, []
    for j in I:
        if j in K:
            continue
        hit = next((k for k in K if reports[k].get(j, {}).get("ok")), None)
        if hit is None:
            uncovered.append(j)
        else:
            assignment[j] = hit
    if uncovered:
        raise PreconditionError(f"no i in K with E[Theta_i,j^alpha] = c_j/c_i for j in {uncovered}",
                                "sufficient subset K")
    logger.info(f"[Measure] Subset {K} covers I via {assignment}")
    return assignment
