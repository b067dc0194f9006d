"""
============================================================================
CALCULUS MODULE — MAX-LINEAR MODELS
============================================================================
X_i = max_r a_{i,r} Z_r with Z_r i.i.d. Frechet(alpha), so that
t^alpha P(Z > t) -> 1 and c_i = sum_r a_{i,r}^alpha. Tail trees are
discrete with at most s atoms. Recursive max-linear models on a DAG are
turned into this form by a max-times dynamic programme over a
topological order.
============================================================================
"""

import logging
from collections.abc import Mapping, Sequence
from typing import NamedTuple

import networkx as nx
import numpy as np

from config import MOMENT_TOLERANCE
from modules.calculus.laws import SampleMatrix, DiscreteLaw
from modules.calculus.workers import chunked_draw
from modules.errors import ConfigError

logger = logging.getLogger(__name__)


class MaxLinearModel:
    """Coefficient matrix (a_{i,r}) of shape d x s and noise index alpha."""

    def __init__(self, coeff, alpha: float, nodes: Sequence[str] | None = None):
        a = np.asarray(coeff, dtype=float)
        if a.ndim != 2 or a.size == 0:
            raise ConfigError("coeff must be a non-empty d x s matrix", "max-linear coefficients")
        if not np.all(np.isfinite(a)) or np.any(a < 0.0):
            raise ConfigError("coefficients must be finite and >= 0", "max-linear coefficients")
        empty = np.flatnonzero(a.max(axis=1) <= 0.0)
        if empty.size:
            raise ConfigError(f"row(s) {[int(k) + 1 for k in empty]} have no positive "
                              f"coefficient", "max_r a_{i,r} > 0")
        if not alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {alpha}", "alpha")
        names = tuple(str(k + 1) for k in range(a.shape[0])) if nodes is None \
            else tuple(str(v) for v in nodes)
        if len(names) != a.shape[0] or len(set(names)) != len(names):
            raise ConfigError("node names must be distinct, one per row", "max-linear nodes")
        self.coeff = a
        self.alpha = float(alpha)
        self.nodes = names

    def __repr__(self):
        return f"MaxLinearModel(d={self.d}, s={self.s}, alpha={self.alpha})"

    @property
    def d(self) -> int:
        return self.coeff.shape[0]

    @property
    def s(self) -> int:
        return self.coeff.shape[1]

    def index(self, i) -> int:
        try:
            return self.nodes.index(str(i))
        except ValueError:
            raise ConfigError(f"unknown node {i!r}", "max-linear nodes") from None


class RecursiveMLModel:
    """
    X_i = max(max_{k in pa(i)} gamma_{ki} X_k, gamma_{ii} Z_i) on a DAG.
    Node attribute and edge attribute "gamma" hold the coefficients.
    """

    def __init__(self, dag: nx.DiGraph):
        if not nx.is_directed_acyclic_graph(dag):
            cycle = nx.find_cycle(dag)
            raise ConfigError(f"cycle detected through edges {cycle}", "DAG topology")
        for v, gamma in dag.nodes(data="gamma"):
            if gamma is None or not gamma > 0:
                raise ConfigError(f"node {v!r} needs gamma > 0, got {gamma}", "DAG coefficients")
        for a, b, gamma in dag.edges(data="gamma"):
            if gamma is None or not gamma > 0:
                raise ConfigError(f"edge ({a}, {b}) needs gamma > 0, got {gamma}",
                                  "DAG coefficients")
        self.dag = dag

    def __repr__(self):
        return f"RecursiveMLModel({self.dag.number_of_nodes()} nodes, " \
               f"{self.dag.number_of_edges()} edges)"

    @classmethod
    def from_spec(cls, nodes: Sequence[Mapping], edges: Sequence[Mapping]) -> "RecursiveMLModel":
        dag = nx.DiGraph()
        for node in nodes:
            v = str(node["id"])
            if v in dag:
                raise ConfigError(f"duplicate node id {v!r}", "DAG topology")
            dag.add_node(v, gamma=float(node["gamma"]))
        for edge in edges:
            a, b = str(edge["from"]), str(edge["to"])
            for end in (a, b):
                if end not in dag:
                    raise ConfigError(f"edge ({a}, {b}) has unknown endpoint {end}",
                                      "DAG topology")
            if a == b:
                raise ConfigError(f"cycle detected: self-loop at {a}", "DAG topology")
            dag.add_edge(a, b, gamma=float(edge["gamma"]))
        return cls(dag)

    @property
    def order(self) -> list[str]:
        return list(nx.lexicographical_topological_sort(self.dag))


class MomentCheck(NamedTuple):
    """E[Theta_{i,j}^alpha] against c_j / c_i; ``full_support`` means P(Theta_{j,i} > 0) = 1."""

    moment: float
    target: float
    full_support: bool
    deficit: float


# ── Exact Tail Quantities ───────────────────────────────────────────────────

def marginal_constants(ml: MaxLinearModel) -> np.ndarray:
    """c_i = sum_r a_{i,r}^alpha"""
    return np.sum(ml.coeff**ml.alpha, axis=1)


def maxlinear_tail_law(ml: MaxLinearModel, i) -> DiscreteLaw:
    """
    Law of Theta_i: atom (a_{j,r} / a_{i,r})_j with probability a_{i,r}^alpha / c_i
    for every factor r with a_{i,r} > 0.
    """
    k = ml.index(i)
    row = ml.coeff[k]
    support = np.flatnonzero(row > 0.0)
    weights = row[support] ** ml.alpha
    atoms = (ml.coeff[:, support] / row[support]).T
    atoms[:, k] = 1.0
    law = DiscreteLaw.merged(ml.nodes, atoms, weights / weights.sum())
    deficit = excluded_alpha_mass(ml, i)
    if np.any(deficit > 0.0):
        logger.debug(f"[MaxLinear] Theta_{ml.nodes[k]} excludes alpha-mass "
                     f"{dict(zip(ml.nodes, deficit.tolist()))}")
    return law


def excluded_alpha_mass(ml: MaxLinearModel, i) -> np.ndarray:
    """Per node j: sum of a_{j,r}^alpha over the factors r with a_{i,r} = 0."""
    k = ml.index(i)
    outside = ml.coeff[k] <= 0.0
    return np.sum(ml.coeff[:, outside] ** ml.alpha, axis=1)


def theta_moment_ml(ml: MaxLinearModel, i, j, alpha: float | None = None) -> MomentCheck:
    """E[Theta_{i,j}^alpha] = (1/c_i) sum_r a_{j,r}^alpha 1{a_{i,r} > 0}"""
    alpha = ml.alpha if alpha is None else float(alpha)
    ki, kj = ml.index(i), ml.index(j)
    powered = ml.coeff**alpha
    c_i = powered[ki].sum()
    inside = ml.coeff[ki] > 0.0
    moment = float(powered[kj, inside].sum() / c_i)
    target = float(powered[kj].sum() / c_i)
    deficit = float(powered[kj, ~inside].sum() / c_i)
    return MomentCheck(moment, target, deficit <= MOMENT_TOLERANCE, deficit)


# ── Recursive Models ────────────────────────────────────────────────────────

def sem_to_maxlinear(rm: RecursiveMLModel, alpha: float) -> MaxLinearModel:
    """
    b_{ii} = gamma_{ii}, b_{ji} = max_{k in pa(i)} b_{jk} gamma_{ki}; returned with
    a_{i,r} = b_{r,i}, rows and factors both in lexicographic topological order.
    """
    order = rm.order
    pos = {v: k for k, v in enumerate(order)}
    b = np.zeros((len(order), len(order)))
    for v in order:
        k = pos[v]
        b[k, k] = rm.dag.nodes[v]["gamma"]
        for parent in sorted(rm.dag.predecessors(v)):
            b[:, k] = np.maximum(b[:, k], b[:, pos[parent]] * rm.dag.edges[parent, v]["gamma"])
    logger.debug(f"[MaxLinear] Path coefficients for {len(order)} DAG nodes")
    return MaxLinearModel(b.T, alpha, nodes=order)


def sem_path_bruteforce(rm: RecursiveMLModel) -> np.ndarray:
    """b_{ji} by enumerating every directed path; same layout as the DP's b."""
    order = rm.order
    pos = {v: k for k, v in enumerate(order)}
    b = np.zeros((len(order), len(order)))
    for j in order:
        b[pos[j], pos[j]] = rm.dag.nodes[j]["gamma"]
        for i in order:
            if i == j:
                continue
            for p in nx.all_simple_paths(rm.dag, j, i):
                value = rm.dag.nodes[j]["gamma"]
                for a, c in zip(p[:-1], p[1:]):
                    value *= rm.dag.edges[a, c]["gamma"]
                b[pos[j], pos[i]] = max(b[pos[j], pos[i]], value)
    return b


def random_dag(rng: np.random.Generator, n_nodes: int, edge_prob: float = 0.4,
               levels: Sequence[float] = (0.5, 1.0, 2.0, 3.0)) -> RecursiveMLModel:
    """Random DAG on nodes "1".."n" with edges only from lower to higher index."""
    dag = nx.DiGraph()
    names = [str(k + 1) for k in range(n_nodes)]
    for v in names:
        dag.add_node(v, gamma=float(rng.choice(levels)))
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            if rng.random() < edge_prob:
                dag.add_edge(names[a], names[b], gamma=float(rng.choice(levels)))
    return RecursiveMLModel(dag)


# ── Sampling ────────────────────────────────────────────────────────────────

def sample_maxlinear(ml: MaxLinearModel, n: int, seed: int,
                     block_size: int | None = None) -> SampleMatrix:
    """Rows X_i = max_r a_{i,r} Z_r with P(Z <= z) = exp(-z^-alpha)."""
    coeff = ml.coeff
    inv_alpha = -1.0 / ml.alpha

    def _draw(rng: np.random.Generator, size: int) -> np.ndarray:
        z = rng.standard_exponential((size, ml.s)) ** inv_alpha
        return np.max(z[:, None, :] * coeff[None, :, :], axis=2)

    return SampleMatrix(chunked_draw(_draw, n, seed, block_size), ml.nodes)
