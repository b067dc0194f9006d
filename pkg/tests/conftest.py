"""Shared model fixtures for the test suite."""

import json
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from modules.calculus.increments import Discrete, HuslerReiss  # noqa: E402
from modules.calculus.maxlinear import MaxLinearModel  # noqa: E402
from modules.calculus.tail_tree import TailTreeModel  # noqa: E402
from modules.calculus.tree_core import tree_from_edges  # noqa: E402
from modules.calculus.workers import get_thread_cap, set_thread_cap  # noqa: E402

STAR_EDGES = [("1", "2"), ("2", "3"), ("2", "4")]
SIX_NODE_EDGES = [("1", "2"), ("2", "3"), ("2", "5"), ("5", "4"), ("5", "6")]
SEVEN_NODE_EDGES = [("1", "2"), ("1", "3"), ("1", "4"), ("4", "5"), ("4", "6"), ("5", "7")]


def degenerate(m: float) -> Discrete:
    return Discrete([m], [1.0])


@pytest.fixture
def star_tree():
    """Four nodes, centre 2."""
    return tree_from_edges(STAR_EDGES)


@pytest.fixture
def six_node_tree():
    return tree_from_edges(SIX_NODE_EDGES)


@pytest.fixture
def seven_node_tree():
    return tree_from_edges(SEVEN_NODE_EDGES)


@pytest.fixture
def hr_chain():
    """HR(1) chain 1-2-3 with unit tail constants."""
    tree = tree_from_edges([("1", "2"), ("2", "3")])
    increments = {("1", "2"): HuslerReiss(1.0), ("2", "3"): HuslerReiss(1.0)}
    return TailTreeModel(tree, 1.0, {v: 1.0 for v in tree.nodes}, increments)


@pytest.fixture
def comonotone_star(star_tree):
    increments = {e: degenerate(1.0) for e in STAR_EDGES}
    return TailTreeModel(star_tree, 1.0, {v: 1.0 for v in star_tree.nodes}, increments)


@pytest.fixture
def maxlin():
    """X_1 = max(Z_1, Z_2), X_2 = Z_1."""
    return MaxLinearModel([[1.0, 1.0], [1.0, 0.0]], 1.0)


@pytest.fixture
def restore_threads():
    cap = get_thread_cap()
    yield
    set_thread_cap(cap)


@pytest.fixture
def write_json(tmp_path):
    def _write(name: str, doc) -> str:
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)
    return _write
