import pytest

from modules.calculus.increments import Discrete, HuslerReiss
from modules.calculus.pickands import HuslerReissPickands
from modules.errors import ConfigError, PreconditionError
from modules.calculus.tail_measure import Box, Event, RhoFunctional
from modules.system.model_config import load_model, load_query, model_from_dict, query_from_dict

HR_EDGE = {"type": "husler_reiss", "lambda": 1.0}


def _markov(edges, nodes=None, **extra):
    nodes = nodes or [{"id": v, "c": 1.0} for v in ("1", "2", "3")]
    return {"kind": "markov_tree", "alpha": 1.0, "nodes": nodes, "edges": edges, **extra}


class TestKinds:
    """The three model kinds share one document format."""

    def test_markov_tree(self):
        m = model_from_dict(_markov([{"from": "1", "to": "2", "increment": HR_EDGE},
                                     {"from": "2", "to": "3", "pickands": HR_EDGE}]))
        assert m.kind == "markov_tree"
        assert m.nodes == ("1", "2", "3")
        assert isinstance(m.tail_model.increment("1", "2"), HuslerReiss)
        assert isinstance(m.tail_model.increment("2", "3"), HuslerReiss)
        assert isinstance(m.pairs[("2", "3")], HuslerReissPickands)
        assert ("1", "2") not in m.pairs

    def test_numeric_ids_become_strings(self):
        m = model_from_dict(_markov(
            [{"from": 1, "to": 2, "increment": {"type": "discrete", "atoms": [[1, 1]]}}],
            nodes=[{"id": 1, "c": 1}, {"id": 2, "c": 1}]))
        assert m.nodes == ("1", "2")
        assert isinstance(m.tail_model.increment("1", "2"), Discrete)

    def test_stored_reverse_increment(self):
        m = model_from_dict(_markov(
            [{"from": "1", "to": "2", "increment": {"type": "discrete", "atoms": [[0.5, 1]]},
              "reverse_increment": {"type": "discrete", "atoms": [[0, 0.5], [2, 0.5]]}}],
            nodes=[{"id": "1", "c": 1}, {"id": "2", "c": 1}]))
        assert ("2", "1") in m.tail_model.stored

    def test_inconsistent_reverse_increment(self):
        with pytest.raises(PreconditionError):
            model_from_dict(_markov(
                [{"from": "1", "to": "2", "increment": {"type": "discrete", "atoms": [[0.5, 1]]},
                  "reverse_increment": {"type": "discrete", "atoms": [[2, 1]]}}],
                nodes=[{"id": "1", "c": 1}, {"id": "2", "c": 1}]))

    def test_tree_without_laws(self):
        m = model_from_dict(_markov([{"from": "1", "to": "2"}, {"from": "2", "to": "3"}]))
        assert m.tail_model is None
        with pytest.raises(ConfigError):
            m.require_tail_model()

    def test_max_linear(self):
        m = model_from_dict({"kind": "max_linear", "alpha": 1.0, "coeff": [[1, 1], [1, 0]],
                             "K": ["1"]})
        assert m.kind == "max_linear"
        assert m.nodes == ("1", "2")
        assert m.K == ["1"]
        assert m.max_linear.coeff.tolist() == [[1.0, 1.0], [1.0, 0.0]]
        with pytest.raises(ConfigError):
            m.require_tail_model()

    def test_recursive(self):
        m = model_from_dict({"kind": "recursive_ml", "alpha": 2.0,
                             "nodes": [{"id": "1", "gamma": 1}, {"id": "2", "gamma": 1}],
                             "edges": [{"from": "1", "to": "2", "gamma": 2}]})
        assert m.kind == "recursive_ml"
        assert m.max_linear.alpha == 2.0
        assert m.max_linear.coeff.tolist() == [[1.0, 0.0], [2.0, 1.0]]
        assert m.recursive is not None


class TestErrors:
    """Schema and semantic failures map to ConfigError conditions."""

    @pytest.mark.parametrize("doc", [
        {"kind": "gaussian"},
        {"alpha": 1.0, "coeff": [[1]]},
        {"kind": "max_linear", "alpha": 1.0, "coeff": [[1]], "extra": 1},
        {"kind": "max_linear", "alpha": -1.0, "coeff": [[1]]},
        {"kind": "markov_tree", "nodes": ["1", "2"],
         "edges": [{"from": "1", "to": "2", "increment": {"lambda": 1}}]},
    ])
    def test_schema(self, doc):
        with pytest.raises(ConfigError) as exc:
            model_from_dict(doc)
        assert exc.value.condition == "model schema"

    def test_law_missing_parameter(self):
        with pytest.raises(ConfigError) as exc:
            model_from_dict(_markov([{"from": "1", "to": "2",
                                      "increment": {"type": "husler_reiss"}},
                                     {"from": "2", "to": "3", "increment": HR_EDGE}]))
        assert exc.value.condition == "model schema"

    def test_law_bad_parameter(self):
        with pytest.raises(ConfigError) as exc:
            model_from_dict(_markov([{"from": "1", "to": "2",
                                      "increment": {"type": "husler_reiss", "lambda": -1}},
                                     {"from": "2", "to": "3", "increment": HR_EDGE}]))
        assert exc.value.condition == "Husler-Reiss increment"

    def test_topology(self):
        with pytest.raises(ConfigError) as exc:
            model_from_dict(_markov([{"from": "1", "to": "2", "increment": HR_EDGE}]))
        assert exc.value.condition == "tree topology"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            load_model(tmp_path / "absent.json")
        assert exc.value.condition == "model file"

    def test_bad_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError) as exc:
            load_model(path)
        assert exc.value.condition == "model file"

    def test_load_from_file(self, write_json):
        m = load_model(write_json("ml.json", {"kind": "max_linear", "alpha": 1,
                                              "coeff": [[2.0]]}))
        assert m.nodes == ("1",)


class TestQueries:
    """nu and mpd query documents."""

    def test_orthant(self):
        q = query_from_dict({"kind": "orthant", "J": [1, 2], "y": [2, 3]})
        assert q.J == ["1", "2"]
        assert q.y == [2.0, 3.0]

    def test_mpd_parts(self):
        q = query_from_dict({"rho": {"kind": "coordinate", "node": 1},
                             "A": {"type": "orthant", "J": ["2"], "y": [0.5]}}, kind="mpd")
        assert q.rho.build() == RhoFunctional("max", (("1", 1.0),))
        assert q.A.build() == Event((Box((("2", 0.5),)),))

    def test_rho_weight_list(self):
        q = query_from_dict({"kind": "rho_mass", "rho": {"kind": "sum", "weights": ["1", "2"]}})
        assert q.rho.build() == RhoFunctional("sum", (("1", 1.0), ("2", 1.0)))

    @pytest.mark.parametrize("doc", [
        {"kind": "orthant"},
        {"kind": "orthant", "J": ["1"]},
        {"kind": "union", "J": ["1"], "y": [1.0], "radius": 2},
        {"kind": "ball"},
        {"J": ["1"], "y": [1.0]},
        {"kind": "rho_mass", "rho": {"kind": "coordinate"}},
        {"kind": "rho_mass", "rho": {"kind": "max"}},
        {"kind": "mpd", "rho": {"kind": "max", "weights": {"1": 1}}, "A": {"type": "orthant"}},
        {"kind": "mpd", "rho": {"kind": "max", "weights": {"1": 1}}, "A": {"type": "boxes"}},
        {"kind": "mpd", "rho": {"kind": "max", "weights": {"1": 1}}, "A": {"type": "ball"}},
        ["orthant"],
    ])
    def test_schema(self, doc):
        with pytest.raises(ConfigError) as exc:
            query_from_dict(doc)
        assert exc.value.condition == "query"

    def test_pinned_kind_mismatch(self):
        with pytest.raises(ConfigError, match="expected a mpd query"):
            query_from_dict({"kind": "zero_mass"}, kind="mpd")

    def test_load_from_file(self, write_json, tmp_path):
        q = load_query(write_json("q.json", {"kind": "zero_mass"}))
        assert q.kind == "zero_mass"
        with pytest.raises(ConfigError) as exc:
            load_query(tmp_path / "absent.json")
        assert exc.value.condition == "query"
