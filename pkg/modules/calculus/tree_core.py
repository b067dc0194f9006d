"""
============================================================================
CALCULUS MODULE — TREE CORE
============================================================================
Undirected trees, their root-directed versions E_u, and unique-path
queries p(u, v). Topology is validated with networkx. Node ids are opaque
strings; every traversal orders neighbours lexicographically so outputs
are identical from run to run.
============================================================================
"""

import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from functools import cached_property

import networkx as nx

from modules.errors import ConfigError

logger = logging.getLogger(__name__)

Edge = tuple[str, str]


@dataclass(frozen=True)
class Tree:
    """
    Undirected tree (V, E). Immutable; safe to share between workers.
    """

    nodes: tuple[str, ...]
    edges: frozenset[frozenset[str]]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes)))
        pairs = [tuple(sorted(e)) if len(e) == 2 else (min(e), min(e))
                 for e in self.edges]
        _validate_topology(self.nodes, pairs)

    # ── Graph Views ──────────────────────────────────────────────────────────

    @cached_property
    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(tuple(sorted(e)) for e in self.edges)
        return g

    @cached_property
    def _canonical(self) -> "RootedTree":
        # Parent pointers from the lexicographically smallest node serve
        # every path query.
        return root_tree(self, self.nodes[0])

    def has_node(self, v: str) -> bool:
        return v in self.graph

    def neighbours(self, v: str) -> list[str]:
        _require_node(self, v)
        return sorted(self.graph.neighbors(v))

    def undirected_edges(self) -> list[Edge]:
        return sorted(tuple(sorted(e)) for e in self.edges)

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class RootedTree:
    """Tree with every edge directed away from ``root`` (the set E_u)."""

    base: Tree
    root: str
    directed_edges: tuple[Edge, ...]     # breadth-first order

    @cached_property
    def parent(self) -> dict[str, str | None]:
        parents: dict[str, str | None] = {self.root: None}
        for a, b in self.directed_edges:
            parents[b] = a
        return parents

    @cached_property
    def depth(self) -> dict[str, int]:
        depths = {self.root: 0}
        for a, b in self.directed_edges:
            depths[b] = depths[a] + 1
        return depths

    @cached_property
    def order(self) -> tuple[str, ...]:
        """Nodes in breadth-first order, root first."""
        return (self.root,) + tuple(b for _, b in self.directed_edges)

    def children(self, v: str) -> list[str]:
        return [b for a, b in self.directed_edges if a == v]


# ── Validation ──────────────────────────────────────────────────────────────

def _validate_topology(nodes: tuple[str, ...], edges: list[Edge]) -> None:
    if len(set(nodes)) != len(nodes):
        dupes = sorted({v for v in nodes if nodes.count(v) > 1})
        raise ConfigError(f"duplicate node id(s) {dupes}", "tree topology")
    if len(nodes) < 2:
        raise ConfigError("a tree needs at least 2 nodes", "tree topology")

    known = set(nodes)
    g = nx.Graph()
    g.add_nodes_from(nodes)
    for a, b in edges:
        if a == b:
            raise ConfigError(f"self-loop at node {a}", "tree topology")
        for end in (a, b):
            if end not in known:
                raise ConfigError(f"edge ({a}, {b}) has unknown endpoint {end}",
                                  "tree topology")
        g.add_edge(a, b)

    if not nx.is_forest(g):
        cycle = nx.find_cycle(g)
        raise ConfigError(f"cycle detected through edges {cycle}", "tree topology")
    if not nx.is_connected(g):
        parts = [sorted(c) for c in nx.connected_components(g)]
        raise ConfigError(f"disconnected: components {sorted(parts)}", "tree topology")


def _require_node(t: Tree, v: str) -> None:
    if not t.has_node(v):
        raise ConfigError(f"unknown node id {v!r}", "tree topology")


# ── Operations ──────────────────────────────────────────────────────────────

def parse_tree(spec: Mapping) -> Tree:
    """
    Build a Tree from a document of the form
    ``{"nodes": [id | {"id": id, ...}], "edges": [[a, b] | {"from": a, "to": b}]}``.
    """
    raw_nodes = spec.get("nodes")
    raw_edges = spec.get("edges")
    if raw_nodes is None or raw_edges is None:
        raise ConfigError("document must list 'nodes' and 'edges'", "tree topology")

    nodes = [str(n["id"]) if isinstance(n, Mapping) else str(n) for n in raw_nodes]
    if len(set(nodes)) != len(nodes):
        dupes = sorted({v for v in nodes if nodes.count(v) > 1})
        raise ConfigError(f"duplicate node id(s) {dupes}", "tree topology")

    pairs = [_edge_endpoints(e) for e in raw_edges]
    edges: set[frozenset[str]] = set()
    for a, b in pairs:
        if a == b:
            raise ConfigError(f"self-loop at node {a}", "tree topology")
        key = frozenset((a, b))
        if key in edges:
            raise ConfigError(f"cycle detected: edge {{{a}, {b}}} listed twice",
                              "tree topology")
        edges.add(key)

    # Validation of endpoints, cycles and connectivity runs in Tree itself
    tree = Tree(tuple(nodes), frozenset(edges))
    logger.debug(f"[Tree] Parsed {len(tree.nodes)} nodes, {len(tree.edges)} edges")
    return tree


def _edge_endpoints(edge) -> Edge:
    if isinstance(edge, Mapping):
        return str(edge["from"]), str(edge["to"])
    a, b = edge
    return str(a), str(b)


def tree_from_edges(edges: Iterable[Edge]) -> Tree:
    """Convenience constructor: nodes are the union of edge endpoints."""
    edge_list = [(str(a), str(b)) for a, b in edges]
    nodes = sorted({v for e in edge_list for v in e})
    return parse_tree({"nodes": nodes, "edges": edge_list})


def root_tree(t: Tree, u: str) -> RootedTree:
    """Orient every edge away from ``u`` by breadth-first search."""
    _require_node(t, u)
    directed = tuple(nx.bfs_edges(t.graph, u, sort_neighbors=sorted))
    return RootedTree(base=t, root=u, directed_edges=directed)


def path(t: Tree, u: str, v: str) -> tuple[Edge, ...]:
    """
    Directed edges of the unique path p(u, v) = ((u0, u1), ..., (u_{n-1}, u_n)).
    The empty path u = v is rejected; callers use Theta_{u,u} = 1 directly.
    """
    _require_node(t, u)
    _require_node(t, v)
    if u == v:
        raise ConfigError(f"path({u}, {v}) is empty", "path query")

    canon = t._canonical
    up: list[str] = [u]
    down: list[str] = [v]
    a, b = u, v
    while canon.depth[a] > canon.depth[b]:
        a = canon.parent[a]
        up.append(a)
    while canon.depth[b] > canon.depth[a]:
        b = canon.parent[b]
        down.append(b)
    while a != b:
        a = canon.parent[a]
        b = canon.parent[b]
        up.append(a)
        down.append(b)

    # up ends at the meeting node, down ends there too
    walk = up + down[-2::-1]
    return tuple(zip(walk[:-1], walk[1:]))
