"""
============================================================================
SYSTEM MODULE — ACCEPTANCE SUITES
============================================================================
Each suite returns a list of report entries {metric, value, threshold,
pass}. Suites run one after another under a RunMonitor; a suite that
raises is recorded as a single failed entry and the run continues.
Timings and memory go to the telemetry log only, never into the report.
============================================================================
"""

import json
import logging
import math
import tempfile
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from config import (
    DEFAULT_SEED, REVERSAL_GRID, VERIFY_MOMENT_N, VERIFY_CONSISTENCY_N,
    VERIFY_CONVERGENCE_N, VERIFY_CONVERGENCE_Q, VERIFY_ROOT_CHANGE_N,
    VERIFY_ROOT_CHANGE_Q, VERIFY_DAG_TRIALS, VERIFY_DAG_MAX_NODES, MAX_MEMORY_LOGS,
)
from modules.calculus.increments import (
    Discrete, HuslerReiss, reverse_increment, alpha_moment, sample_increment,
    reverse_density,
)
from modules.calculus.maxlinear import (
    MaxLinearModel, marginal_constants, maxlinear_tail_law, theta_moment_ml,
    sem_to_maxlinear, sem_path_bruteforce, random_dag,
)
from modules.calculus.pickands import HuslerReissPickands
from modules.calculus.tail_measure import (
    ThetaSource, RhoFunctional, Event, nu_orthant, nu_union, nu_rho_mass,
    mpd_probability, consistency_check, zero_mass_check, sufficient_subset,
)
from modules.calculus.tail_tree import (
    TailTreeModel, build_tail_tree, root_change_law,
)
from modules.calculus.tree_core import tree_from_edges
from modules.calculus.workers import seed_sequence
from modules.errors import TailTreeError
from modules.system.mc_simulator import (
    MarkovTreeSampler, sample_markov_tree, empirical_tail_tree, compare_distributions,
    convergence_trend, root_change_verification, report_entry,
)
from modules.system.model_config import LoadedModel
from modules.system.sysmon import RunMonitor
from modules.system.telemetry import ReportLogger

logger = logging.getLogger(__name__)


@dataclass
class SuiteContext:
    seed: int = DEFAULT_SEED
    model: LoadedModel | None = None
    runner: Callable[[list[str]], int] | None = None


def _child_seed(seed: int, k: int) -> int:
    return int(seed_sequence(seed).spawn(k + 1)[k].generate_state(1)[0])


# ── Suites ───────────────────────────────────────────────────────────────────

def suite_hr_reversal(ctx: SuiteContext) -> list[dict]:
    z = np.geomspace(REVERSAL_GRID[0], REVERSAL_GRID[1], 1000)
    entries = []
    for lam in (0.5, 1.0, 2.0):
        hr = HuslerReiss(lam)
        gap = float(np.max(np.abs(reverse_increment(hr, 1.0, 1.0, 1.0).cdf(z) - hr.cdf(z))))
        entries.append(report_entry(f"hr_self_reversal(lambda={lam})", gap, 1e-8, gap <= 1e-8))
        q_rev = reverse_density(hr.density, 1.0, 1.0, 1.0)
        sym = float(np.max(np.abs(hr.density(z) - q_rev(z))))
        entries.append(report_entry(f"hr_density_symmetry(lambda={lam})", sym, 1e-10, sym <= 1e-10))
    return entries


def suite_hr_moment(ctx: SuiteContext, n: int = VERIFY_MOMENT_N) -> list[dict]:
    hr = HuslerReiss(1.0)
    exact = alpha_moment(hr, 1.0)
    draws = sample_increment(hr, n, ctx.seed)
    sigma = math.sqrt(math.expm1(4.0) / n)
    gap = abs(float(draws.mean()) - 1.0)
    return [report_entry("hr_moment_closed_form", exact, 1.0, exact == 1.0),
            report_entry("hr_moment_mc", float(draws.mean()), [1 - 3 * sigma, 1 + 3 * sigma],
                         gap <= 3 * sigma)]


def suite_maxlinear_oracle(ctx: SuiteContext) -> list[dict]:
    ml = MaxLinearModel([[1.0, 1.0], [1.0, 0.0]], 1.0)
    c = marginal_constants(ml)
    law1, law2 = maxlinear_tail_law(ml, "1"), maxlinear_tail_law(ml, "2")
    check12 = theta_moment_ml(ml, "1", "2")
    check21 = theta_moment_ml(ml, "2", "1")
    moved = root_change_law(law1, "1", "2", ml.alpha)
    same_atoms = moved.atoms.shape == law2.atoms.shape and bool(np.all(moved.atoms == law2.atoms))
    atom_gap = float(np.max(np.abs(moved.probs - law2.probs))) if same_atoms else math.inf
    return [
        report_entry("constants", c.tolist(), [2.0, 1.0], c.tolist() == [2.0, 1.0]),
        report_entry("theta_1_law", law1.to_records(), None,
                     law1.probability_of([1, 1]) == 0.5 and law1.probability_of([1, 0]) == 0.5),
        report_entry("theta_2_law", law2.to_records(), None, law2.probability_of([1, 1]) == 1.0),
        report_entry("moment_flag(1,2)", check12.moment, check12.target, check12.full_support),
        report_entry("moment_flag(2,1)", check21.moment, check21.target, not check21.full_support),
        report_entry("root_change_atoms(1->2)", atom_gap, 1e-12, atom_gap <= 1e-12),
    ]


def suite_dag_dp(ctx: SuiteContext, trials: int = VERIFY_DAG_TRIALS) -> list[dict]:
    rng = np.random.default_rng(seed_sequence(ctx.seed))
    mismatches = 0
    for _ in range(trials):
        rm = random_dag(rng, int(rng.integers(2, VERIFY_DAG_MAX_NODES + 1)))
        dp = sem_to_maxlinear(rm, 1.0).coeff.T
        if not np.array_equal(dp, sem_path_bruteforce(rm)):
            mismatches += 1
    return [report_entry("dag_dp_vs_bruteforce", mismatches, 0, mismatches == 0, trials=trials)]


def _hr_chain_model(length: int, lam: float = 1.0) -> TailTreeModel:
    names = [str(k + 1) for k in range(length)]
    tree = tree_from_edges(zip(names[:-1], names[1:]))
    increments = {(a, b): HuslerReiss(lam) for a, b in zip(names[:-1], names[1:])}
    return TailTreeModel(tree, 1.0, {v: 1.0 for v in names}, increments)


def _discrete_star_model() -> TailTreeModel:
    tree = tree_from_edges([("1", "2"), ("2", "3"), ("2", "4")])
    increments = {("1", "2"): Discrete([0.5, 1.5], [0.5, 0.5]),
                  ("2", "3"): Discrete([0.0, 2.0], [0.5, 0.5]),
                  ("2", "4"): Discrete([1.0], [1.0])}
    return TailTreeModel(tree, 1.0, {v: 1.0 for v in tree.nodes}, increments)


def suite_consistency(ctx: SuiteContext, n: int = VERIFY_CONSISTENCY_N) -> list[dict]:
    entries = []
    ml = MaxLinearModel([[1.0, 1.0], [1.0, 0.0]], 1.0)
    ml_sources = [ThetaSource.from_maxlinear(ml, i) for i in ml.nodes]
    star = _discrete_star_model()
    star_sources = [ThetaSource.from_tail_tree(build_tail_tree(star, v)) for v in ("1", "2")]
    for name, sources in (("maxlinear", ml_sources), ("discrete_star", star_sources)):
        report = consistency_check(sources, ["1", "2"], [1.0, 1.0])
        gap = max(p["discrepancy"] for p in report["pairs"])
        entries.append(report_entry(f"consistency_exact({name})", gap,
                                    report["pairs"][0]["threshold"], report["consistent"]))

    chain = _hr_chain_model(2)
    sampled = [ThetaSource.from_tail_tree(build_tail_tree(chain, v), n=n,
                                          seed=_child_seed(ctx.seed, k))
               for k, v in enumerate(("1", "2"))]
    report = consistency_check(sampled, ["1", "2"], [1.0, 1.0])
    pair = report["pairs"][0]
    entries.append(report_entry("consistency_mc(hr_chain)", pair["discrepancy"],
                                pair["threshold"], pair["ok"]))
    return entries


def _hr_chain_sample(ctx: SuiteContext, n: int):
    tree = tree_from_edges([("1", "2"), ("2", "3")])
    pairs = {("1", "2"): HuslerReissPickands(1.0), ("2", "3"): HuslerReissPickands(1.0)}
    return sample_markov_tree(MarkovTreeSampler(tree, "1", pairs), n, ctx.seed)


def suite_convergence(ctx: SuiteContext, n: int = VERIFY_CONVERGENCE_N,
                      quantiles=VERIFY_CONVERGENCE_Q) -> list[dict]:
    X = _hr_chain_sample(ctx, n)
    q_top = quantiles[-1]
    exc = empirical_tail_tree(X, "1", q_top)
    logs = np.log(exc.samples.column("2"))
    mean, var = float(logs.mean()), float(logs.var(ddof=1))
    ks = compare_distributions(exc.samples.column("2"), HuslerReiss(1.0))["ks"]
    exceedances = int(round(n * (1.0 - q_top)))
    return [
        report_entry("log_increment_mean", mean, [-2.06, -1.94], abs(mean + 2.0) <= 0.06),
        report_entry("log_increment_var", var, [3.75, 4.25], abs(var - 4.0) <= 0.25),
        report_entry("ks_vs_hr_lognormal", ks, 0.02, ks < 0.02),
        convergence_trend(X, "1", "2", HuslerReiss(1.0), quantiles, exceedances),
    ]


def suite_root_change(ctx: SuiteContext, n: int = VERIFY_ROOT_CHANGE_N,
                      q: float = VERIFY_ROOT_CHANGE_Q) -> list[dict]:
    X = _hr_chain_sample(ctx, n)
    return root_change_verification(X, "1", "2", q)


def suite_nu_algebra(ctx: SuiteContext) -> list[dict]:
    entries = []
    ml = MaxLinearModel([[1.0, 1.0], [1.0, 0.0]], 1.0)
    star = _discrete_star_model()
    sources = {"maxlinear": ThetaSource.from_maxlinear(ml, "1"),
               "discrete_star": ThetaSource.from_tail_tree(build_tail_tree(star, "1"))}
    for name, src in sources.items():
        J, y, lam = ["1", "2"], np.array([1.5, 2.5]), 2.5
        base = nu_orthant(src, J, y).value
        scaled = nu_orthant(src, J, lam * y).value
        homog = abs(scaled - lam ** -src.alpha * base)
        entries.append(report_entry(f"homogeneity({name})", homog, 1e-12, homog <= 1e-12))
        union = nu_union(src, J, y).value
        parts = nu_orthant(src, ["1"], y[:1]).value \
            + src.c_i * src.expect((src.column("2") / y[1]) ** src.alpha).value \
            - base
        ie = abs(union - parts)
        entries.append(report_entry(f"inclusion_exclusion({name})", ie, 1e-12, ie <= 1e-12))
        rho = RhoFunctional("max", (("1", 1.0), ("2", 1.0)))
        whole = mpd_probability(src, rho, Event.everything()).value
        entries.append(report_entry(f"mpd_whole_set({name})", whole, 1.0, abs(whole - 1.0) <= 1e-12))
        coord = nu_rho_mass(src, RhoFunctional.from_dict({"kind": "coordinate", "node": "1"})).value
        entries.append(report_entry(f"rho_coordinate_mass({name})", coord, src.c_i,
                                    abs(coord - src.c_i) <= 1e-12))
    return entries


_DETERMINISM_MODELS = {
    "star.json": {
        "kind": "markov_tree", "alpha": 1.0,
        "nodes": [{"id": v, "c": 1.0} for v in ("1", "2", "3", "4")],
        "edges": [{"from": "1", "to": "2", "increment": {"type": "husler_reiss", "lambda": 1.0},
                   "pickands": {"type": "husler_reiss", "lambda": 1.0}},
                  {"from": "2", "to": "3", "increment": {"type": "husler_reiss", "lambda": 0.5},
                   "pickands": {"type": "husler_reiss", "lambda": 0.5}},
                  {"from": "2", "to": "4", "increment": {"type": "husler_reiss", "lambda": 2.0},
                   "pickands": {"type": "husler_reiss", "lambda": 2.0}}],
    },
    "maxlin.json": {"kind": "max_linear", "alpha": 1.0, "coeff": [[1, 1], [1, 0]]},
    "orthant.json": {"kind": "orthant", "J": ["1", "2"], "y": [2, 3]},
    "mpd.json": {"kind": "mpd", "rho": {"kind": "max", "weights": {"1": 1, "2": 1}},
                 "A": {"type": "orthant", "J": ["1"], "y": [2]}},
}


def suite_determinism(ctx: SuiteContext, n: int = 250_000) -> list[dict]:
    if ctx.runner is None:
        return [report_entry("determinism", "no CLI runner", None, False)]
    commands = {
        "tailtree_sample.csv": ["tailtree", "sample", "--model", "star.json", "--root", "1",
                                "--n", str(n), "--format", "csv"],
        "tailtree_exact.json": ["tailtree", "exact", "--model", "maxlin.json", "--root", "1"],
        "root_change.json": ["root-change", "--model", "maxlin.json", "--root", "1",
                             "--target", "2"],
        "nu.json": ["nu", "--model", "star.json", "--root", "1", "--query", "orthant.json",
                    "--n", str(n)],
        "mpd.json": ["mpd", "--model", "maxlin.json", "--root", "1", "--query", "mpd.json"],
        "simulate.csv": ["simulate", "--model", "star.json", "--root", "1",
                         "--n", str(n // 10), "--format", "csv"],
    }
    entries = []
    with tempfile.TemporaryDirectory() as tmp:
        base = Path(tmp)
        for name, doc in _DETERMINISM_MODELS.items():
            (base / name).write_text(json.dumps(doc))
        for out_name, argv in commands.items():
            outputs, codes = [], []
            for threads in (1, 2, 8):
                out = base / f"{threads}_{out_name}"
                args = [str(base / a) if a in _DETERMINISM_MODELS else a for a in argv]
                codes.append(ctx.runner(args + ["--seed", str(ctx.seed), "--threads",
                                                str(threads), "--out", str(out)]))
                outputs.append(out.read_bytes() if out.exists() else b"")
            same = codes == [0, 0, 0] and outputs[0] != b"" and \
                all(o == outputs[0] for o in outputs[1:])
            entries.append(report_entry(f"byte_identical({out_name})", codes, [0, 0, 0], same))
    return entries


def suite_model(ctx: SuiteContext, n: int = 100_000) -> list[dict]:
    """Checks on the model file passed with --model: dichotomy and subset K."""
    model = ctx.model
    if model is None:
        return []
    sources = []
    if model.tail_model is not None:
        tm = model.tail_model
        for k, v in enumerate(sorted(tm.c)):
            tt = build_tail_tree(tm, v)
            exact = all(isinstance(m, Discrete) for m in tt.edge_laws.values())
            sources.append(ThetaSource.from_tail_tree(
                tt, n=None if exact else n, seed=_child_seed(ctx.seed, k)))
    elif model.max_linear is not None:
        sources = [ThetaSource.from_maxlinear(model.max_linear, v) for v in model.nodes]

    entries = []
    for src in sources:
        report = zero_mass_check(src)
        entries.append(report_entry(f"zero_mass_dichotomy({src.index})",
                                    report.to_dict()["nu_zero_mass"], None, True,
                                    offending=report.offending))
    if model.K:
        I = sorted({v for s in sources for v in s.available})
        try:
            assignment = sufficient_subset(sources, I, model.K)
            entries.append(report_entry("sufficient_subset", assignment, model.K, True))
        except TailTreeError as exc:
            entries.append(report_entry("sufficient_subset", str(exc), model.K, False))
    return entries


SUITES: dict[str, Callable[[SuiteContext], list[dict]]] = {
    "hr_reversal":      suite_hr_reversal,
    "hr_moment":        suite_hr_moment,
    "maxlinear_oracle": suite_maxlinear_oracle,
    "dag_dp":           suite_dag_dp,
    "consistency":      suite_consistency,
    "convergence":      suite_convergence,
    "root_change":      suite_root_change,
    "nu_algebra":       suite_nu_algebra,
    "determinism":      suite_determinism,
    "model":            suite_model,
}


def run_suites(names: list[str], ctx: SuiteContext,
               telemetry: ReportLogger | None = None) -> dict:
    """
    Run the named suites in order. With telemetry, suite failures and errors
    are logged as events and the WARN/ERROR ones are listed in the report.
    """
    results = {}
    for name in names:
        with RunMonitor(name) as mon:
            try:
                entries = SUITES[name](ctx)
            except Exception as exc:
                logger.warning(f"[Verify] Suite {name} raised: {exc}")
                if telemetry is not None:
                    telemetry.log_event("ERROR", name, f"raised {type(exc).__name__}: {exc}")
                entries = [report_entry(name, f"{type(exc).__name__}: {exc}", None, False)]
        passed = all(e["pass"] for e in entries)
        if telemetry is not None:
            telemetry.record_suite(name, entries, mon.get_status())
            failed = [e["metric"] for e in entries if not e["pass"]]
            if failed:
                telemetry.log_event("WARN", name, f"failed checks: {', '.join(failed)}")
            else:
                telemetry.log_event("INFO", name, f"{len(entries)} checks passed")
        logger.info(f"[Verify] {name}: {'PASS' if passed else 'FAIL'} ({len(entries)} checks)")
        results[name] = {"entries": entries, "pass": passed}

    report = {"suites": results, "pass": all(r["pass"] for r in results.values())}
    if telemetry is not None:
        report["events"] = [
            {k: e[k] for k in ("level", "source", "message")}
            for e in telemetry.get_recent_events(MAX_MEMORY_LOGS)
            if e["level"] != "INFO"
        ]
    return report
