import json

import pandas as pd
import pytest

from app import run

HR = {"type": "husler_reiss", "lambda": 1.0}

MAXLIN = {"kind": "max_linear", "alpha": 1.0, "coeff": [[1, 1], [1, 0]]}

COMONOTONE_STAR = {
    "kind": "markov_tree", "alpha": 1.0,
    "nodes": [{"id": v, "c": 1.0} for v in ("1", "2", "3", "4")],
    "edges": [{"from": a, "to": b, "increment": {"type": "discrete", "atoms": [[1, 1]]}}
              for a, b in (("1", "2"), ("2", "3"), ("2", "4"))],
}

HR_STAR = {
    "kind": "markov_tree", "alpha": 1.0,
    "nodes": [{"id": v, "c": 1.0} for v in ("1", "2", "3", "4")],
    "edges": [{"from": a, "to": b, "increment": HR, "pickands": HR}
              for a, b in (("1", "2"), ("2", "3"), ("2", "4"))],
}


@pytest.fixture
def cli(tmp_path):
    """Run the CLI with logs in tmp_path; returns (exit code, parsed --out file)."""
    def _run(*argv, out_name="out.json"):
        out = tmp_path / out_name
        code = run([*argv, "--out", str(out), "--log-dir", str(tmp_path / "logs")])
        if not out.exists():
            return code, None
        if out_name.endswith(".csv"):
            return code, out
        return code, json.loads(out.read_text())
    return _run


class TestCommands:

    def test_validate(self, cli, write_json):
        code, doc = cli("validate", "--model", write_json("m.json", HR_STAR))
        assert code == 0
        assert doc["valid"] and doc["kind"] == "markov_tree"
        assert doc["edges"] == [["1", "2"], ["2", "3"], ["2", "4"]]
        assert doc["pair_dependence"] == ["1->2", "2->3", "2->4"]

    def test_tailtree_exact(self, cli, write_json):
        code, doc = cli("tailtree", "exact", "--model", write_json("m.json", MAXLIN),
                        "--root", "1")
        assert code == 0
        assert doc["atoms"] == [{"theta": [1.0, 0.0], "p": 0.5},
                                {"theta": [1.0, 1.0], "p": 0.5}]
        assert doc["excluded_alpha_mass"] == {"1": 0.0, "2": 0.0}

    def test_tailtree_sample_csv(self, cli, write_json):
        code, path = cli("tailtree", "sample", "--model", write_json("m.json", COMONOTONE_STAR),
                         "--root", "1", "--n", "10", out_name="theta.csv")
        assert code == 0
        frame = pd.read_csv(path, dtype=float)
        assert list(frame.columns) == ["1", "2", "3", "4"]
        assert (frame.to_numpy() == 1.0).all()

    def test_tailtree_sample_json(self, cli, write_json):
        code, doc = cli("tailtree", "sample", "--model", write_json("m.json", COMONOTONE_STAR),
                        "--n", "3", "--format", "json")
        assert code == 0
        assert doc["columns"] == ["1", "2", "3", "4"]
        assert doc["rows"] == [[1.0, 1.0, 1.0, 1.0]] * 3

    def test_nu_orthant(self, cli, write_json):
        query = write_json("q.json", {"kind": "orthant", "J": ["1", "2"], "y": [2, 3]})
        code, doc = cli("nu", "--model", write_json("m.json", COMONOTONE_STAR),
                        "--root", "1", "--query", query)
        assert code == 0
        assert doc["value"] == pytest.approx(1.0 / 3.0)
        assert doc["se"] == 0.0 and doc["exact"]

    def test_nu_zero_mass(self, cli, write_json):
        code, doc = cli("nu", "--model", write_json("m.json", MAXLIN), "--root", "2",
                        "--query", write_json("q.json", {"kind": "zero_mass"}))
        assert code == 0
        assert doc["nu_zero_mass"] == "inf"

    def test_nu_consistency(self, cli, write_json):
        query = write_json("q.json", {"kind": "consistency", "J": ["1", "2"], "y": [1, 1]})
        code, doc = cli("nu", "--model", write_json("m.json", MAXLIN), "--query", query)
        assert code == 0
        assert doc["consistent"]

    def test_mpd(self, cli, write_json):
        query = write_json("q.json", {"rho": {"kind": "max", "weights": {"1": 1, "2": 1}},
                                      "A": {"type": "orthant", "J": ["1"], "y": [2]}})
        code, doc = cli("mpd", "--model", write_json("m.json", MAXLIN), "--root", "1",
                        "--query", query)
        assert code == 0
        assert doc["value"] == pytest.approx(0.5)

    def test_root_change_exact(self, cli, write_json):
        code, doc = cli("root-change", "--model", write_json("m.json", MAXLIN),
                        "--root", "1", "--target", "2")
        assert code == 0
        assert doc["exact"]
        assert doc["max_abs_gap"] == pytest.approx(0.0, abs=1e-12)
        assert doc["reweighted"] == [{"theta": [1.0, 1.0], "p": 1.0}]

    def test_root_change_sampled(self, cli, write_json):
        code, doc = cli("root-change", "--model", write_json("m.json", HR_STAR),
                        "--root", "1", "--target", "3", "--n", "20000")
        assert code == 0
        assert not doc["exact"]
        three = doc["means"]["3"]
        assert three["reweighted"]["value"] == pytest.approx(1.0)
        assert three["direct"]["value"] == 1.0

    def test_simulate_exceedances(self, cli, write_json):
        code, path = cli("simulate", "--model", write_json("m.json", HR_STAR), "--root", "1",
                         "--n", "20000", "--quantile", "0.9", out_name="sim.csv")
        assert code == 0
        frame = pd.read_csv(path, dtype=float)
        assert 1_900 <= len(frame) <= 2_000
        assert (frame["1"] == 1.0).all()


class TestDeterminism:

    def test_csv_identical_across_threads(self, tmp_path, write_json):
        model = write_json("m.json", HR_STAR)
        outputs = []
        for threads in ("1", "4"):
            out = tmp_path / f"theta_{threads}.csv"
            code = run(["tailtree", "sample", "--model", model, "--root", "2", "--n", "250000",
                        "--seed", "3", "--threads", threads, "--out", str(out),
                        "--log-dir", str(tmp_path)])
            assert code == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_seed_changes_output(self, cli, write_json):
        model = write_json("m.json", HR_STAR)
        _, a = cli("tailtree", "sample", "--model", model, "--n", "5", "--seed", "1",
                   "--format", "json", out_name="a.json")
        _, b = cli("tailtree", "sample", "--model", model, "--n", "5", "--seed", "2",
                   "--format", "json", out_name="b.json")
        assert a["rows"] != b["rows"]


class TestExitCodes:
    """0 ok, 1 config error, 2 precondition violated."""

    def test_missing_model_file(self, cli, tmp_path):
        code, doc = cli("validate", "--model", str(tmp_path / "absent.json"))
        assert code == 1 and doc is None

    def test_usage_error(self, cli):
        assert cli("tailtree")[0] == 1

    def test_bad_thread_count(self, cli, write_json):
        code, _ = cli("tailtree", "exact", "--model", write_json("m.json", MAXLIN),
                      "--threads", "0")
        assert code == 1

    def test_unknown_root(self, cli, write_json):
        code, _ = cli("tailtree", "exact", "--model", write_json("m.json", MAXLIN),
                      "--root", "9")
        assert code == 1

    def test_zero_mass_precondition(self, cli, write_json):
        query = write_json("q.json", {"kind": "union", "J": ["1", "2"], "y": [1, 1]})
        code, _ = cli("nu", "--model", write_json("m.json", MAXLIN), "--root", "2",
                      "--query", query)
        assert code == 2

    def test_exact_needs_discrete_laws(self, cli, write_json):
        code, _ = cli("tailtree", "exact", "--model", write_json("m.json", HR_STAR))
        assert code == 2

    def test_simulate_needs_pairs(self, cli, write_json):
        assert cli("simulate", "--model", write_json("m.json", MAXLIN))[0] == 1

    def test_unknown_query_kind(self, cli, write_json):
        code, _ = cli("nu", "--model", write_json("m.json", MAXLIN),
                      "--query", write_json("q.json", {"kind": "ball"}))
        assert code == 1

    def test_orthant_query_without_thresholds(self, cli, write_json):
        code, doc = cli("nu", "--model", write_json("m.json", MAXLIN), "--root", "1",
                        "--query", write_json("q.json", {"kind": "orthant"}))
        assert code == 1 and doc is None

    def test_mpd_event_without_thresholds(self, cli, write_json):
        query = write_json("q.json", {"rho": {"kind": "max", "weights": {"1": 1}},
                                      "A": {"type": "orthant"}})
        code, doc = cli("mpd", "--model", write_json("m.json", MAXLIN), "--root", "1",
                        "--query", query)
        assert code == 1 and doc is None

    def test_nu_mpd_event_without_thresholds(self, cli, write_json):
        query = write_json("q.json", {"kind": "mpd", "rho": {"kind": "coordinate", "node": "1"},
                                      "A": {"type": "union", "y": [1.0]}})
        code, _ = cli("nu", "--model", write_json("m.json", MAXLIN), "--query", query)
        assert code == 1

    def test_mpd_query_of_other_kind(self, cli, write_json):
        query = write_json("q.json", {"kind": "orthant", "J": ["1"], "y": [1.0]})
        code, _ = cli("mpd", "--model", write_json("m.json", MAXLIN), "--query", query)
        assert code == 1


class TestVerify:

    def test_fast_suites(self, cli):
        code, doc = cli("verify", "--suite", "hr_reversal", "--suite", "maxlinear_oracle",
                        "--suite", "nu_algebra", "--suite", "dag_dp")
        assert code == 0
        assert doc["pass"]
        assert sorted(doc["suites"]) == ["dag_dp", "hr_reversal", "maxlinear_oracle",
                                         "nu_algebra"]

    def test_model_suite(self, cli, write_json):
        model = write_json("m.json", dict(MAXLIN, K=["1"]))
        code, doc = cli("verify", "--suite", "model", "--model", model)
        assert code == 0
        metrics = {e["metric"]: e for e in doc["suites"]["model"]["entries"]}
        assert metrics["zero_mass_dichotomy(2)"]["value"] == "inf"
        assert metrics["sufficient_subset"]["value"] == {"2": "1"}

    @pytest.mark.slow
    def test_determinism_suite(self, cli):
        code, doc = cli("verify", "--suite", "determinism")
        assert code == 0, doc
