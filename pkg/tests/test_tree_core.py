import itertools

import pytest

from modules.calculus.tree_core import parse_tree, tree_from_edges, root_tree, path
from modules.errors import ConfigError


class TestParseTree:
    """Topology validation."""

    def test_smallest_tree(self):
        t = parse_tree({"nodes": ["1", "2"], "edges": [["1", "2"]]})
        assert t.nodes == ("1", "2")
        assert t.undirected_edges() == [("1", "2")]

    def test_star(self, star_tree):
        assert len(star_tree) == 4
        assert star_tree.neighbours("2") == ["1", "3", "4"]

    def test_edge_dicts_and_numeric_ids(self):
        t = parse_tree({"nodes": [1, {"id": 2}], "edges": [{"from": 1, "to": 2}]})
        assert t.nodes == ("1", "2")

    def test_disconnected(self):
        with pytest.raises(ConfigError, match="disconnected") as exc:
            parse_tree({"nodes": ["1", "2", "3"], "edges": [["1", "2"]]})
        assert exc.value.condition == "tree topology"

    def test_cycle(self):
        with pytest.raises(ConfigError, match="cycle"):
            parse_tree({"nodes": ["1", "2", "3"],
                        "edges": [["1", "2"], ["2", "3"], ["3", "1"]]})

    def test_repeated_edge_is_a_cycle(self):
        with pytest.raises(ConfigError, match="cycle"):
            parse_tree({"nodes": ["1", "2"], "edges": [["1", "2"], ["2", "1"]]})

    def test_self_loop(self):
        with pytest.raises(ConfigError, match="self-loop"):
            parse_tree({"nodes": ["1", "2"], "edges": [["1", "2"], ["2", "2"]]})

    def test_unknown_endpoint(self):
        with pytest.raises(ConfigError, match="unknown endpoint"):
            parse_tree({"nodes": ["1", "2"], "edges": [["1", "9"]]})

    def test_duplicate_node(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_tree({"nodes": ["1", "1", "2"], "edges": [["1", "2"]]})

    def test_single_node_rejected(self):
        with pytest.raises(ConfigError):
            parse_tree({"nodes": ["1"], "edges": []})

    def test_missing_keys(self):
        with pytest.raises(ConfigError):
            parse_tree({"nodes": ["1", "2"]})


class TestRootTree:
    """Orientation away from a root."""

    def test_star_root_1(self, star_tree):
        rt = root_tree(star_tree, "1")
        assert rt.directed_edges == (("1", "2"), ("2", "3"), ("2", "4"))

    def test_star_root_3(self, star_tree):
        rt = root_tree(star_tree, "3")
        assert rt.directed_edges == (("3", "2"), ("2", "1"), ("2", "4"))
        assert rt.parent["1"] == "2"
        assert rt.depth == {"3": 0, "2": 1, "1": 2, "4": 2}
        assert rt.order == ("3", "2", "1", "4")
        assert rt.children("2") == ["1", "4"]

    def test_two_nodes(self):
        rt = root_tree(tree_from_edges([("1", "2")]), "1")
        assert rt.directed_edges == (("1", "2"),)

    def test_every_edge_once(self, seven_node_tree):
        for u in seven_node_tree.nodes:
            rt = root_tree(seven_node_tree, u)
            undirected = sorted(tuple(sorted(e)) for e in rt.directed_edges)
            assert undirected == seven_node_tree.undirected_edges()

    def test_unknown_root(self, star_tree):
        with pytest.raises(ConfigError, match="unknown node"):
            root_tree(star_tree, "9")


class TestPath:
    """Unique path queries."""

    def test_star(self, star_tree):
        assert path(star_tree, "1", "4") == (("1", "2"), ("2", "4"))
        assert path(star_tree, "4", "1") == (("4", "2"), ("2", "1"))

    def test_seven_node_tree(self, seven_node_tree):
        assert path(seven_node_tree, "1", "7") == (("1", "4"), ("4", "5"), ("5", "7"))
        assert path(seven_node_tree, "6", "7") == (("6", "4"), ("4", "5"), ("5", "7"))

    def test_reversal(self, six_node_tree):
        for u, v in itertools.permutations(six_node_tree.nodes, 2):
            forward = path(six_node_tree, u, v)
            backward = path(six_node_tree, v, u)
            assert backward == tuple((b, a) for a, b in reversed(forward))

    def test_path_ends(self, six_node_tree):
        for u, v in itertools.permutations(six_node_tree.nodes, 2):
            p = path(six_node_tree, u, v)
            assert p[0][0] == u and p[-1][1] == v
            assert all(p[k][1] == p[k + 1][0] for k in range(len(p) - 1))

    def test_empty_path_rejected(self, star_tree):
        with pytest.raises(ConfigError) as exc:
            path(star_tree, "2", "2")
        assert exc.value.condition == "path query"
