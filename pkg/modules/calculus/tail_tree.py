"""
============================================================================
CALCULUS MODULE — TAIL TREES
============================================================================
Tail tree Theta_u of a Markov tree model: Theta_{u,u} = 1 and
Theta_{u,v} = product of independent increments M_e over the path p(u, v).

  • TailTreeModel  — alpha, tail constants c_v, stored increment laws per
                     directed edge; missing directions derived by reversal
  • TailTree       — the model oriented away from a root u
  • sampling with shared edge draws, alpha-moments, structural root change,
    root change by Theta^alpha reweighting, exact enumeration
============================================================================
"""

import logging
import threading
from collections.abc import Callable, Mapping
from functools import cached_property

import numpy as np

from config import (
    REVERSAL_CHECK_TOL, REVERSAL_GRID, MAX_ENUMERATION_STATES,
)
from modules.calculus.increments import (
    IncrementDistribution, Discrete, reverse_increment, alpha_moment,
)
from modules.calculus.laws import SampleMatrix, DiscreteLaw, Estimate
from modules.calculus.tree_core import Tree, RootedTree, Edge, root_tree, path
from modules.calculus.workers import chunked_draw
from modules.errors import ConfigError, PreconditionError

logger = logging.getLogger(__name__)


class TailTreeModel:
    """
    Markov tree model at the level of its tail: alpha, constants c_v and the
    increment law of each stored directed edge. A missing direction (b, a)
    is derived from (a, b) by reversal and cached.
    """

    def __init__(self, tree: Tree, alpha: float,
                 c: Mapping[str, float],
                 increments: Mapping[Edge, IncrementDistribution],
                 check: bool = True):
        if not alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {alpha}", "alpha")
        for v, cv in c.items():
            if not tree.has_node(v):
                raise ConfigError(f"tail constant given for unknown node {v!r}",
                                  "tail constants")
            if not cv > 0:
                raise ConfigError(f"tail constant c_{v} must be > 0, got {cv}",
                                  "tail constants")
        known = {frozenset(e) for e in tree.undirected_edges()}
        for a, b in increments:
            if frozenset((a, b)) not in known:
                raise ConfigError(f"increment given for ({a}, {b}), which is not a tree edge",
                                  "edge increments")
        for a, b in tree.undirected_edges():
            if (a, b) not in increments and (b, a) not in increments:
                raise ConfigError(f"edge {{{a}, {b}}} has no increment in either direction",
                                  "edge increments")

        self.tree = tree
        self.alpha = float(alpha)
        self.c = {str(v): float(cv) for v, cv in c.items()}
        self.stored = dict(increments)
        self._derived: dict[Edge, IncrementDistribution] = {}
        self._lock = threading.Lock()
        if check:
            self.check_reversals()

    def __repr__(self):
        return (f"TailTreeModel({len(self.tree)} nodes, alpha={self.alpha}, "
                f"{len(self.stored)} stored increments)")

    # ── Constants & Increments ──────────────────────────────────────────────

    def constant(self, v: str) -> float:
        if v not in self.c:
            raise PreconditionError(f"node {v!r} has no tail constant",
                                    "tail constants on reversal path")
        return self.c[v]

    def increment(self, a: str, b: str) -> IncrementDistribution:
        """Law of M_{a,b}, stored or derived from M_{b,a}."""
        if (a, b) in self.stored:
            return self.stored[(a, b)]
        with self._lock:
            if (a, b) not in self._derived:
                if (b, a) not in self.stored:
                    raise ConfigError(f"({a}, {b}) is not a tree edge", "edge increments")
                self._derived[(a, b)] = reverse_increment(
                    self.stored[(b, a)], self.constant(b), self.constant(a), self.alpha)
                logger.debug(f"[TailTree] Derived M_{a},{b} by reversal of M_{b},{a}")
            return self._derived[(a, b)]

    def check_reversals(self) -> None:
        """Stored pairs (M_ab, M_ba) must agree with the reversal relation."""
        grid = np.geomspace(*REVERSAL_GRID)
        for a, b in sorted(self.stored):
            if a > b and (b, a) in self.stored:
                continue
            if (b, a) not in self.stored:
                continue
            derived = reverse_increment(self.stored[(a, b)], self.constant(a),
                                        self.constant(b), self.alpha)
            gap = float(np.max(np.abs(derived.cdf(grid) - self.stored[(b, a)].cdf(grid))))
            if gap > REVERSAL_CHECK_TOL:
                raise PreconditionError(
                    f"stored M_{b},{a} differs from the reversal of M_{a},{b} "
                    f"by {gap:.3g} in CDF", "increment reversal consistency")
            logger.debug(f"[TailTree] Edge {{{a}, {b}}} reversal check gap {gap:.2e}")


class TailTree:
    """The model oriented away from ``root``: one law per directed edge of E_u."""

    def __init__(self, model: TailTreeModel, rooted: RootedTree,
                 edge_laws: Mapping[Edge, IncrementDistribution]):
        self.model = model
        self.rooted = rooted
        self.edge_laws = dict(edge_laws)

    def __repr__(self):
        return f"TailTree(root={self.root!r}, {len(self.edge_laws)} edges)"

    @property
    def root(self) -> str:
        return self.rooted.root

    @property
    def alpha(self) -> float:
        return self.model.alpha

    @property
    def columns(self) -> tuple[str, ...]:
        return self.model.tree.nodes

    @cached_property
    def paths(self) -> dict[str, tuple[Edge, ...]]:
        out = {self.root: ()}
        for a, b in self.rooted.directed_edges:
            out[b] = out[a] + ((a, b),)
        return out

    def _draw_block(self, rng: np.random.Generator, size: int,
                    capture_edges: bool = False) -> np.ndarray:
        cols = {v: k for k, v in enumerate(self.columns)}
        edges = self.rooted.directed_edges
        out = np.empty((size, len(cols) + (len(edges) if capture_edges else 0)))
        out[:, cols[self.root]] = 1.0
        for k, (a, b) in enumerate(edges):
            m = self.edge_laws[(a, b)].draw(rng, size)
            out[:, cols[b]] = out[:, cols[a]] * m
            if capture_edges:
                out[:, len(cols) + k] = m
        return out


# ── Operations ──────────────────────────────────────────────────────────────

def build_tail_tree(model: TailTreeModel, u: str) -> TailTree:
    rooted = root_tree(model.tree, u)
    laws = {e: model.increment(*e) for e in rooted.directed_edges}
    logger.info(f"[TailTree] Built tail tree at root {u} over {len(laws)} edge(s)")
    return TailTree(model, rooted, laws)


def sample_tail_tree(tt: TailTree, n: int, seed: int, capture_edges: bool = False,
                     block_size: int | None = None):
    """
    n draws of (Theta_{u,v})_v. Components sharing path edges reuse the same
    M_e draw. With ``capture_edges`` also returns the per-edge draws as a
    SampleMatrix whose columns are "a->b".
    """
    raw = chunked_draw(lambda rng, size: tt._draw_block(rng, size, capture_edges),
                       n, seed, block_size)
    d = len(tt.columns)
    theta = SampleMatrix(raw[:, :d], tt.columns)
    logger.debug(f"[TailTree] Sampled {n} draws of Theta_{tt.root}")
    if not capture_edges:
        return theta
    names = tuple(f"{a}->{b}" for a, b in tt.rooted.directed_edges)
    return theta, SampleMatrix(raw[:, d:], names)


def sample_exceedance_limit(tt: TailTree, n: int, seed: int,
                            block_size: int | None = None) -> SampleMatrix:
    """
    n draws of Y_u = Y_{u,u} Theta_u, the limit of X/t given X_u > t, with
    Y_{u,u} Pareto(alpha) independent of Theta_u.
    """
    alpha = tt.alpha

    def _draw(rng: np.random.Generator, size: int) -> np.ndarray:
        theta = tt._draw_block(rng, size)
        radius = (1.0 - rng.random(size)) ** (-1.0 / alpha)
        return theta * radius[:, None]

    return SampleMatrix(chunked_draw(_draw, n, seed, block_size), tt.columns)


def theta_alpha_moment(tt: TailTree, v: str) -> float:
    """E[Theta_{u,v}^alpha] as the product of edge moments along p(u, v)."""
    if v not in tt.paths:
        raise ConfigError(f"unknown node id {v!r}", "tree topology")
    value = 1.0
    for e in tt.paths[v]:
        value *= alpha_moment(tt.edge_laws[e], tt.alpha)
    return value


def change_root(model: TailTreeModel, u: str, u_bar: str) -> TailTree:
    """
    Tail tree at u_bar: edges on p(u, u_bar) switch to the reversed
    increment laws, all other edges keep their orientation and law.
    """
    if u == u_bar:
        return build_tail_tree(model, u)
    reversal = path(model.tree, u, u_bar)
    on_path = [reversal[0][0]] + [b for _, b in reversal]
    for v in on_path:
        model.constant(v)
    tt = build_tail_tree(model, u_bar)
    logger.info(f"[TailTree] Root change {u} → {u_bar} reverses {len(reversal)} edge(s)")
    return tt


def root_change_expectation(source, i: str, j: str, g: Callable[[np.ndarray], np.ndarray],
                            alpha: float) -> Estimate:
    """
    E[g(Theta_j)] predicted from draws (SampleMatrix) or the exact law
    (DiscreteLaw) of Theta_i:
        E[g(Theta_i / Theta_{i,j}) Theta_{i,j}^alpha] / E[Theta_{i,j}^alpha].
    ``g`` maps a (k, d) array of tail vectors to k values. Rows with
    Theta_{i,j} = 0 carry weight 0. Exact laws report se = 0.
    """
    theta, probs = _rows_and_probs(source)
    jj = source.index(j)
    source.index(i)
    tj = theta[:, jj]
    pos = tj > 0.0
    if not pos.any():
        raise PreconditionError(f"Theta_{i},{j} is identically 0; root change toward "
                                f"{j} is undefined from {i}", "root change weights")
    weights = np.zeros_like(tj)
    weights[pos] = tj[pos] ** alpha
    gval = np.zeros_like(tj)
    gval[pos] = np.asarray(g(theta[pos] / tj[pos, None]), dtype=float)

    if probs is not None:
        den = float(np.sum(probs * weights))
        return Estimate(float(np.sum(probs * gval * weights)) / den, 0.0)

    n = tj.size
    den = float(np.mean(weights))
    value = float(np.mean(gval * weights)) / den
    if n < 2:
        return Estimate(value, 0.0)
    resid = (gval - value) * weights
    se = float(np.sqrt(np.var(resid, ddof=1) / n) / den)
    return Estimate(value, se)


def root_change_law(law: DiscreteLaw, i: str, j: str, alpha: float) -> DiscreteLaw:
    """
    Exact Theta_{i,j}^alpha reweighting of a discrete law of Theta_i, i.e. the
    law of Theta_j on {Theta_{j,i} > 0}.
    """
    law.index(i)
    jj = law.index(j)
    tj = law.atoms[:, jj]
    pos = tj > 0.0
    if not pos.any():
        raise PreconditionError(f"Theta_{i},{j} is identically 0; root change toward "
                                f"{j} is undefined from {i}", "root change weights")
    weights = law.probs[pos] * tj[pos] ** alpha
    atoms = law.atoms[pos] / tj[pos, None]
    return DiscreteLaw.merged(law.columns, atoms, weights / weights.sum())


def exact_tail_tree_discrete(tt: TailTree) -> DiscreteLaw:
    """
    Full enumeration of the joint atoms of Theta_u when every edge law on
    E_u is Discrete. Path products are sums of logs with one final exp, and
    equal vectors are merged by exact equality.
    """
    states = 1
    for e, law in tt.edge_laws.items():
        if not isinstance(law, Discrete):
            raise PreconditionError(f"edge {e} has a non-discrete law {law!r}",
                                    "discrete increments for exact enumeration")
        states *= law.values.size
        if states > MAX_ENUMERATION_STATES:
            raise PreconditionError(
                f"more than {MAX_ENUMERATION_STATES} joint states at root {tt.root}",
                "state-space bound for exact enumeration")

    cols = {v: k for k, v in enumerate(tt.columns)}
    log_atoms = np.zeros((1, len(cols)))
    probs = np.ones(1)
    with np.errstate(divide="ignore"):
        for a, b in tt.rooted.directed_edges:
            values, weights = tt.edge_laws[(a, b)].atoms()
            k = values.size
            log_atoms = np.repeat(log_atoms, k, axis=0)
            probs = np.repeat(probs, k) * np.tile(weights, probs.size)
            log_atoms[:, cols[b]] = log_atoms[:, cols[a]] + np.tile(np.log(values),
                                                                    log_atoms.shape[0] // k)
    atoms = np.exp(log_atoms)

    law = DiscreteLaw.merged(tt.columns, atoms, probs)
    logger.info(f"[TailTree] Enumerated {states} state(s) into {len(law)} atom(s) "
                f"at root {tt.root}")
    return law


def _rows_and_probs(source):
    if isinstance(source, DiscreteLaw):
        return source.atoms, source.probs
    if isinstance(source, SampleMatrix):
        return source.values, None
    raise ConfigError(f"expected SampleMatrix or DiscreteLaw, got {type(source).__name__}",
                      "root change source")
