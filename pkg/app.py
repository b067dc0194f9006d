"""
============================================================================
TAIL TREE TOOLKIT — COMMAND-LINE ENTRY POINT
============================================================================
Loads JSON model files, dispatches to the calculus and simulation modules,
and writes CSV sample matrices or JSON reports.

Subcommands:
    validate      schema and invariant checks of a model file
    tailtree      sample | exact  — the tail tree Theta_u at --root
    root-change   Theta at --target from Theta at --root, with cross-check
    nu            tail-measure queries (orthant, union, rho_mass, mpd, ...)
    mpd           limit probability of an event given rho(X) > t
    simulate      max-stable Markov tree draws (unit-Frechet margins)
    verify        acceptance suites, pass/fail JSON

Run with:
    python app.py tailtree exact --model maxlin.json --root 1

Exit codes: 0 ok, 1 config error, 2 precondition violated, 3 numeric failure.
============================================================================
"""

import argparse
import json
import logging
import os
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

import config
from modules.calculus.increments import Discrete
from modules.calculus.laws import DiscreteLaw, SampleMatrix
from modules.calculus.maxlinear import excluded_alpha_mass, maxlinear_tail_law
from modules.calculus.tail_measure import (
    ThetaSource, nu_orthant, nu_union, nu_rho_mass,
    mpd_probability, consistency_check, zero_mass_check,
)
from modules.calculus.tail_tree import (
    build_tail_tree, change_root, sample_tail_tree, sample_exceedance_limit,
    exact_tail_tree_discrete, root_change_expectation, root_change_law,
)
from modules.calculus.workers import get_thread_cap, set_thread_cap
from modules.errors import ConfigError, PreconditionError, TailTreeError
from modules.system.mc_simulator import (
    MarkovTreeSampler, sample_markov_tree, empirical_tail_tree,
)
from modules.system.model_config import LoadedModel, load_model, load_query
from modules.system.telemetry import ReportLogger
from modules.system.verify import SUITES, SuiteContext, run_suites

logger = logging.getLogger("app")

DEFAULT_SUITES = [name for name in SUITES if name != "model"]


# ── Logging Setup ────────────────────────────────────────────────────────────

def _setup_logging(verbose: bool, log_dir: str) -> None:
    """Configure the root logger once per process; later calls only adjust the level."""
    level = logging.DEBUG if verbose else logging.INFO
    root = logging.getLogger()
    if root.handlers:
        root.setLevel(level)
        return
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    try:
        os.makedirs(log_dir, exist_ok=True)
        handlers.append(logging.FileHandler(
            os.path.join(log_dir, f"app_{datetime.now().strftime('%Y%m%d')}.log")))
    except OSError as exc:
        print(f"[CLI] No log file in {log_dir}: {exc}", file=sys.stderr)
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s — %(message)s",
        handlers=handlers,
    )


# ── Argument Parsing ─────────────────────────────────────────────────────────

class _Parser(argparse.ArgumentParser):
    """Usage errors become ConfigError so they exit with code 1."""

    def error(self, message):
        raise ConfigError(message, "command line")


def _common(p: argparse.ArgumentParser, model_required: bool = True) -> None:
    p.add_argument("--model", required=model_required, help="model JSON file")
    p.add_argument("--root", help="root node id")
    p.add_argument("--n", type=int, default=100_000, help="sample size")
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--quantile", type=float, help="threshold quantile q")
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--log-dir", default=config.LOG_DIR)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tailtree", description="Tail trees of Markov trees.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _common(sub.add_parser("validate", help="check a model file"))

    p = sub.add_parser("tailtree", help="sample or enumerate Theta_u")
    p.add_argument("action", choices=("sample", "exact"))
    p.add_argument("--limit", action="store_true",
                   help="sample Y_u = Pareto radius x Theta_u instead of Theta_u")
    _common(p)

    p = sub.add_parser("root-change", help="move the tail tree to another root")
    p.add_argument("--target", required=True, help="new root id")
    _common(p)

    p = sub.add_parser("nu", help="tail-measure query")
    p.add_argument("--query", required=True, help="query JSON file")
    _common(p)

    p = sub.add_parser("mpd", help="limit probability given rho(X) > t")
    p.add_argument("--query", required=True, help="JSON file with 'rho' and 'A'")
    _common(p)

    _common(sub.add_parser("simulate", help="draw from the max-stable Markov tree"))

    p = sub.add_parser("verify", help="run acceptance suites")
    p.add_argument("--suite", action="append", choices=sorted(SUITES),
                   help="suite to run (repeatable; default: all)")
    _common(p, model_required=False)
    return parser


# ── Output ───────────────────────────────────────────────────────────────────

def _dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _emit_text(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).write_text(text, newline="\n")
    logger.info(f"[Output] Wrote {out}")


def _emit_samples(X: SampleMatrix, args) -> None:
    if (args.format or config.DEFAULT_FORMAT) == "csv":
        X.to_csv(args.out if args.out is not None else sys.stdout)
        return
    _emit_text(_dump_json({"columns": list(X.columns),
                           "rows": X.values.tolist()}), args.out)


def _law_doc(law: DiscreteLaw, root: str) -> dict:
    return {"root": root, "columns": list(law.columns), "atoms": law.to_records()}


# ── Shared Helpers ───────────────────────────────────────────────────────────

def _root(model: LoadedModel, args) -> str:
    root = args.root if args.root is not None else model.nodes[0]
    if root not in model.nodes:
        raise ConfigError(f"unknown node id {root!r}", "tree topology")
    return root


def _all_discrete(tt) -> bool:
    return all(isinstance(m, Discrete) for m in tt.edge_laws.values())


def _source(model: LoadedModel, root: str, args) -> ThetaSource:
    """Exact source where one exists, otherwise args.n tail-tree draws."""
    if model.max_linear is not None:
        return ThetaSource.from_maxlinear(model.max_linear, root)
    tt = build_tail_tree(model.require_tail_model(), root)
    if _all_discrete(tt):
        return ThetaSource.from_tail_tree(tt)
    return ThetaSource.from_tail_tree(tt, n=args.n, seed=args.seed)


def _exact_law(model: LoadedModel, root: str) -> DiscreteLaw:
    if model.max_linear is not None:
        return maxlinear_tail_law(model.max_linear, root)
    return exact_tail_tree_discrete(build_tail_tree(model.require_tail_model(), root))


def _has_exact_law(model: LoadedModel, root: str) -> bool:
    if model.max_linear is not None:
        return True
    return _all_discrete(build_tail_tree(model.require_tail_model(), root))


# ── Subcommands ──────────────────────────────────────────────────────────────

def cmd_validate(args) -> int:
    model = load_model(args.model)
    doc = {"kind": model.kind, "alpha": model.alpha, "nodes": list(model.nodes),
           "valid": True}
    if model.tail_model is not None:
        doc["edges"] = [list(e) for e in model.tree.undirected_edges()]
        doc["constants"] = {v: float(c) for v, c in sorted(model.tail_model.c.items())}
    if model.pairs:
        doc["pair_dependence"] = sorted(f"{a}->{b}" for a, b in model.pairs)
    if model.max_linear is not None:
        doc["coeff"] = model.max_linear.coeff.tolist()
    logger.info(f"[CLI] Model {args.model} is valid")
    _emit_text(_dump_json(doc), args.out)
    return 0


def cmd_tailtree(args) -> int:
    model = load_model(args.model)
    root = _root(model, args)
    if args.action == "exact":
        doc = _law_doc(_exact_law(model, root), root)
        if model.max_linear is not None:
            ml = model.max_linear
            doc["excluded_alpha_mass"] = dict(zip(ml.nodes, excluded_alpha_mass(ml, root).tolist()))
        _emit_text(_dump_json(doc), args.out)
        return 0
    tt = build_tail_tree(model.require_tail_model(), root)
    if args.limit:
        X = sample_exceedance_limit(tt, args.n, args.seed)
    else:
        X = sample_tail_tree(tt, args.n, args.seed)
    _emit_samples(X, args)
    return 0


def cmd_root_change(args) -> int:
    """
    Exact models: the Theta_{i,j}^alpha reweighting of the law at --root
    next to the direct law at --target restricted to {Theta_{j,i} > 0}.
    Sampled models: componentwise means of both sides with standard errors.
    """
    model = load_model(args.model)
    i = _root(model, args)
    j = args.target
    if j not in model.nodes:
        raise ConfigError(f"unknown node id {j!r}", "tree topology")
    alpha = model.alpha
    if model.tail_model is not None:
        change_root(model.tail_model, i, j)

    if _has_exact_law(model, i):
        moved = root_change_law(_exact_law(model, i), i, j, alpha)
        direct = _exact_law(model, j)
        keep = direct.atoms[:, direct.index(i)] > 0.0
        if not keep.any():
            raise PreconditionError(f"Theta_{j},{i} is identically 0",
                                    "root change weights")
        restricted = DiscreteLaw.merged(direct.columns, direct.atoms[keep],
                                        direct.probs[keep] / direct.probs[keep].sum())
        support = {tuple(a) for a in moved.atoms} | {tuple(a) for a in restricted.atoms}
        gap = max(abs(moved.probability_of(a) - restricted.probability_of(a))
                  for a in support)
        doc = {"from": i, "to": j, "exact": True,
               "reweighted": moved.to_records(), "direct": restricted.to_records(),
               "columns": list(moved.columns), "max_abs_gap": gap}
        _emit_text(_dump_json(doc), args.out)
        return 0

    tm = model.require_tail_model()
    theta_i = sample_tail_tree(build_tail_tree(tm, i), args.n, args.seed)
    theta_j = sample_tail_tree(change_root(tm, i, j), args.n, args.seed + 1)
    on = theta_j.rows(theta_j.column(i) > 0.0)
    columns = {}
    for v in theta_i.columns:
        k = theta_i.index(v)
        pred = root_change_expectation(theta_i, i, j, lambda rows, k=k: rows[:, k], alpha)
        col = on.column(v)
        se = float(col.std(ddof=1) / np.sqrt(col.size)) if col.size > 1 else 0.0
        columns[v] = {"reweighted": pred.to_dict(),
                      "direct": {"value": float(col.mean()), "se": se}}
    doc = {"from": i, "to": j, "exact": False, "n": args.n, "means": columns}
    _emit_text(_dump_json(doc), args.out)
    return 0


def cmd_nu(args) -> int:
    model = load_model(args.model)
    root = _root(model, args)
    query = load_query(args.query)
    doc: dict = {"kind": query.kind, "root": root}

    if query.kind == "consistency":
        sources = [_source(model, v, args) for v in query.J]
        doc.update(consistency_check(sources, query.J, query.y))
        _emit_text(_dump_json(doc), args.out)
        return 0

    src = _source(model, root, args)
    if query.kind == "zero_mass":
        doc.update(zero_mass_check(src).to_dict())
        _emit_text(_dump_json(doc), args.out)
        return 0
    if query.kind == "orthant":
        est = nu_orthant(src, query.J, query.y)
    elif query.kind == "union":
        est = nu_union(src, query.J, query.y)
    elif query.kind == "rho_mass":
        est = nu_rho_mass(src, query.rho.build())
    else:
        est = mpd_probability(src, query.rho.build(), query.A.build())
    doc.update(est.to_dict())
    doc["exact"] = src.is_exact
    _emit_text(_dump_json(doc), args.out)
    return 0


def cmd_mpd(args) -> int:
    model = load_model(args.model)
    root = _root(model, args)
    query = load_query(args.query, kind="mpd")
    src = _source(model, root, args)
    est = mpd_probability(src, query.rho.build(), query.A.build())
    doc = {"root": root, "exact": src.is_exact, **est.to_dict()}
    _emit_text(_dump_json(doc), args.out)
    return 0


def cmd_simulate(args) -> int:
    """Draws of X; with --quantile, the exceedance sample of Theta at --root instead."""
    model = load_model(args.model)
    if model.tree is None or not model.pairs:
        raise ConfigError("simulate needs a markov_tree model with 'pickands' edges",
                          "pair dependence")
    root = _root(model, args)
    sampler = MarkovTreeSampler.from_pairs(model.tree, root, model.pairs)
    X = sample_markov_tree(sampler, args.n, args.seed)
    if args.quantile is not None:
        X = empirical_tail_tree(X, root, args.quantile).samples
    _emit_samples(X, args)
    return 0


def cmd_verify(args) -> int:
    model = load_model(args.model) if args.model else None
    names = args.suite or DEFAULT_SUITES + (["model"] if model is not None else [])
    telemetry = ReportLogger(args.log_dir)
    try:
        ctx = SuiteContext(seed=args.seed, model=model, runner=run)
        report = run_suites(names, ctx, telemetry)
    finally:
        telemetry.close()
    _emit_text(_dump_json(report), args.out)
    logger.info(f"[CLI] verify: {'PASS' if report['pass'] else 'FAIL'}")
    return 0 if report["pass"] else 1


COMMANDS = {
    "validate":    cmd_validate,
    "tailtree":    cmd_tailtree,
    "root-change": cmd_root_change,
    "nu":          cmd_nu,
    "mpd":         cmd_mpd,
    "simulate":    cmd_simulate,
    "verify":      cmd_verify,
}


# ── Entry Point ──────────────────────────────────────────────────────────────

def run(argv: list[str]) -> int:
    try:
        args = build_parser().parse_args(argv)
    except TailTreeError as exc:
        _setup_logging(False, config.LOG_DIR)
        logger.error(f"[CLI] {exc}")
        return exc.exit_code
    except SystemExit as exc:
        return int(exc.code or 0)

    _setup_logging(args.verbose, args.log_dir)
    previous_cap = get_thread_cap()
    try:
        if args.threads is not None:
            set_thread_cap(args.threads)
        return COMMANDS[args.command](args)
    except TailTreeError as exc:
        logger.error(f"[CLI] {exc}")
        return exc.exit_code
    finally:
        set_thread_cap(previous_cap)


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
