"""Command-line driver: validate, solve, decompose, round, exact, compare, bench."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass

import numpy as np

from .cactus import Disconnected, NotACactus, decompose_cactus, orient_and_check
from .decompose import (
    DecompositionSet,
    ResidualFlow,
    decompose_solution,
    try_decompose_mcf,
    verify_decomposition,
)
from .extgraph import EmptyPlacement
from .lp import (
    LpSolution,
    ShapeMismatch,
    SolverFailure,
    build_formulation,
    check_solution,
    embed_var,
    filter_unembeddable_requests,
    solve_lp,
)
from .model import Mapping, Request, mapping_cost, validate_instance
from .oracle import Infeasible, InstanceTooLarge, enumerate_instance, exact_optimum
from .rounding import (
    BoundsReport,
    DegenerateInstance,
    RoundingOutcome,
    RoundingParams,
    round_cost,
    round_profit,
    sample_rounds,
    theoretical_bounds,
    wac_prune,
)
from .scenario import Scenario, ScenarioError, SpecError, load_scenario

COMMANDS = ("validate", "solve-lp", "decompose", "round", "exact", "compare-formulations", "bench")
FAMILIES = {"chain": "SCEP", "cactus": "SCGEP", "mcf": "MCF"}

EXIT_OK, EXIT_EXHAUSTED, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3, 4


class InputError(ValueError):
    pass


@dataclass
class Options:
    seed: int | None = None
    rounds: int | None = None
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    variant: str = "profit"
    formulation: str | None = None
    trials: int = 1000
    timings: bool = False


@dataclass
class RunResult:
    report: dict
    exit_code: int = EXIT_OK
    rows: list[dict] | None = None  # bench CSV rows


def _clean(x):
    """JSON-friendly, rounded copy of a report value."""
    if isinstance(x, dict):
        return {_key(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        r = round(x, 9)
        return 0.0 if r == 0 else r
    return x


def _key(k) -> str:
    if isinstance(k, tuple):
        return ":".join(str(p) for p in k)
    return str(k)


def _mapping_json(req: Request, m: Mapping, substrate) -> dict:
    return {
        "node_map": dict(sorted(m.node_map.items())),
        "edge_map": {f"{i}->{j}": [f"{u}->{v}" for u, v in m.edge_map.get((i, j), ())]
                     for (i, j) in req.edges},
        "cost": mapping_cost(req, m, substrate),
    }


def _kind(sc: Scenario, opts: Options) -> str:
    family = FAMILIES[opts.formulation] if opts.formulation else (
        "SCEP" if all(r.shape == "chain" for r in sc.requests) else "SCGEP")
    return f"{family}-{'P' if opts.variant == 'profit' else 'C'}"


def _params(sc: Scenario, opts: Options, bounds: BoundsReport | None) -> RoundingParams:
    base = sc.params
    pick = lambda flag, attr, fallback: (  # noqa: E731
        flag if flag is not None else getattr(base, attr) if base is not None else fallback)
    beta_default = bounds.beta if bounds is not None else 0.0
    gamma_default = bounds.gamma if bounds is not None else 0.0
    return RoundingParams(
        alpha=pick(opts.alpha, "alpha", 1.0 / 3.0),
        beta=pick(opts.beta, "beta", beta_default),
        gamma=pick(opts.gamma, "gamma", gamma_default),
        Q=pick(opts.rounds, "Q", 100),
        seed=pick(opts.seed, "seed", 0),
    )


def _bounds(sc: Scenario, requests: list[Request], variant: str, opt: float | None):
    try:
        return theoretical_bounds(sc.substrate, requests, variant, opt)
    except DegenerateInstance:
        return None


def _bounds_json(b: BoundsReport | None) -> dict | None:
    if b is None:
        return None
    return {
        "variant": b.variant,
        "delta_v": b.delta_v,
        "delta_e": b.delta_e,
        "epsilon": b.epsilon,
        "beta": b.beta,
        "gamma": b.gamma,
        "node_violation_probability": b.node_violation_prob,
        "edge_violation_probability": b.edge_violation_prob,
        "b_max": b.b_max,
    }


def _solve(sc: Scenario, kind: str, requests: list[Request]):
    lp = build_formulation(kind, sc.substrate, requests)
    return lp, solve_lp(lp)


def _lp_json(lp, sol: LpSolution) -> dict:
    return {
        "kind": lp.kind,
        "status": sol.status,
        "objective": sol.objective_value,
        "embedding": {rid: sol.value(embed_var(rid)) for rid in sorted(lp.models)},
        "unembeddable": sorted(rid for rid, m in lp.models.items() if m.unembeddable),
        "constraint_violations": len(check_solution(lp, sol, 1e-6)) if sol.status == "optimal" else 0,
    }


def _decomp_json(ds: DecompositionSet, substrate) -> dict:
    return {
        rid: [dict(weight=fm.weight, **_mapping_json(ds.requests[rid], fm.mapping, substrate))
              for fm in fms]
        for rid, fms in sorted(ds.mappings.items())
    }


def _outcome_json(out: RoundingOutcome, sc: Scenario, reqs: dict[str, Request]) -> dict:
    return {
        "status": out.status,
        "rounds_used": out.rounds_used,
        "objective": out.objective,
        "accepted_requests": out.accepted_requests,
        "max_node_violation": out.node_violation,
        "max_edge_violation": out.edge_violation,
        "mappings": {rid: _mapping_json(reqs[rid], m, sc.substrate)
                     for rid, m in sorted(out.mappings.items())},
    }


def cmd_validate(sc: Scenario, opts: Options) -> RunResult:
    problems = validate_instance(sc.substrate, sc.requests)
    shapes = {}
    for r in sc.requests:
        if r.shape != "cactus":
            continue
        try:
            dec = decompose_cactus(orient_and_check(r))
        except (NotACactus, Disconnected) as exc:
            problems.append(str(exc))
            continue
        shapes[r.id] = {
            "root": dec.root,
            "cycles": [{"source": c.source, "target": c.target,
                        "branching_nodes": sorted(c.branching_nodes)} for c in dec.cycles],
            "paths": [f"{p.source}->{p.target}" for p in dec.paths],
        }
    report = {
        "command": "validate",
        "substrate_nodes": len(sc.substrate.nodes),
        "requests": len(sc.requests),
        "violations": problems,
        "cactus": shapes,
    }
    return RunResult(report, EXIT_INPUT if problems else EXIT_OK)


def _require_valid(sc: Scenario) -> None:
    problems = validate_instance(sc.substrate, sc.requests)
    if problems:
        raise InputError("; ".join(problems))


def cmd_solve(sc: Scenario, opts: Options) -> RunResult:
    _require_valid(sc)
    lp, sol = _solve(sc, _kind(sc, opts), sc.requests)
    code = EXIT_INFEASIBLE if sol.status == "infeasible" else EXIT_OK
    return RunResult({"command": "solve-lp", "lp": _lp_json(lp, sol)}, code)


def cmd_decompose(sc: Scenario, opts: Options) -> RunResult:
    _require_valid(sc)
    lp, sol = _solve(sc, _kind(sc, opts), sc.requests)
    report = {"command": "decompose", "lp": _lp_json(lp, sol)}
    if sol.status != "optimal":
        report["status"] = "no solution exists"
        return RunResult(report, EXIT_INFEASIBLE)
    if lp.kind.startswith("MCF"):
        ds, residual = try_decompose_mcf(sol, lp.requests, sc.substrate)
        report["residual"] = residual
    else:
        ds = decompose_solution(lp, sol)
    rep = verify_decomposition(ds, sol, lp.requests, sc.substrate)
    report["decomposition"] = _decomp_json(ds, sc.substrate)
    report["verification"] = {"checks": rep.checks, "messages": rep.messages}
    return RunResult(report, EXIT_OK)


def _prepare_rounding(sc: Scenario, opts: Options, command: str):
    """Solve, decompose and (for cost) prune; returns the pieces rounding needs."""
    _require_valid(sc)
    kind = _kind(sc, opts)
    if kind.startswith("MCF"):
        raise InputError("rounding needs a decomposable formulation (chain or cactus)")
    requests = sc.requests
    report: dict = {"command": command}
    if opts.variant == "profit":
        requests = filter_unembeddable_requests(sc.substrate, requests, kind)
        report["filtered_requests"] = sorted(r.id for r in sc.requests if r not in requests)
    lp, sol = _solve(sc, kind, requests)
    report["lp"] = _lp_json(lp, sol)
    if sol.status != "optimal":
        report["status"] = "no solution exists"
        return report, None
    ds = decompose_solution(lp, sol)
    rep = verify_decomposition(ds, sol, requests, sc.substrate)
    report["verification"] = {"checks": rep.checks, "messages": rep.messages}
    report["decomposition_size"] = {rid: len(fms) for rid, fms in sorted(ds.mappings.items())}
    bounds = _bounds(sc, requests, opts.variant, sol.objective_value)
    report["bounds"] = _bounds_json(bounds)
    params = _params(sc, opts, bounds)
    report["params"] = {"alpha": params.alpha, "beta": params.beta, "gamma": params.gamma,
                        "Q": params.Q, "seed": params.seed}
    source = ds if opts.variant == "profit" else wac_prune(ds, sc.substrate)
    if opts.variant == "cost":
        report["wac"] = {rid: {"weighted_cost": e.weighted_cost, "retained": e.retained,
                               "dropped": e.dropped}
                         for rid, e in sorted(source.entries.items())}
    return report, (sol, source, params, {r.id: r for r in requests})


def cmd_round(sc: Scenario, opts: Options) -> RunResult:
    report, ctx = _prepare_rounding(sc, opts, "round")
    if ctx is None:
        return RunResult(report, EXIT_INFEASIBLE)
    sol, source, params, reqs = ctx
    if opts.variant == "profit":
        out = round_profit(source, params, sc.substrate, sol.objective_value)
    else:
        out = round_cost(source, params, sc.substrate)
    report["rounding"] = _outcome_json(out, sc, reqs)
    report["status"] = out.status
    return RunResult(report, EXIT_OK if out.status == "success" else EXIT_EXHAUSTED)


def cmd_exact(sc: Scenario, opts: Options) -> RunResult:
    _require_valid(sc)
    reqs = {r.id: r for r in sc.requests}
    enum = enumerate_instance(sc.substrate, sc.requests)
    report = {"command": "exact", "variant": opts.variant, "mapping_counts": enum.count()}
    try:
        res = exact_optimum(sc.substrate, sc.requests, opts.variant, enum)
    except Infeasible as exc:
        report["status"] = "no solution exists"
        report["reason"] = str(exc)
        return RunResult(report, EXIT_INFEASIBLE)
    report["status"] = "optimal"
    report["objective"] = res.objective
    report["selection"] = res.selection
    report["mappings"] = {rid: _mapping_json(reqs[rid], m, sc.substrate)
                          for rid, m in sorted(res.mappings.items())}
    return RunResult(report, EXIT_OK)


def cmd_compare(sc: Scenario, opts: Options) -> RunResult:
    _require_valid(sc)
    variant = "P" if opts.variant == "profit" else "C"
    new_family = "SCEP" if opts.formulation == "chain" else "SCGEP"
    lp_m, sol_m = _solve(sc, f"MCF-{variant}", sc.requests)
    lp_n, sol_n = _solve(sc, f"{new_family}-{variant}", sc.requests)
    report = {
        "command": "compare-formulations",
        "mcf": _lp_json(lp_m, sol_m),
        "new": _lp_json(lp_n, sol_n),
        "opt_mcf": sol_m.objective_value,
        "opt_new": sol_n.objective_value,
    }
    if sol_m.status == "optimal":
        ds, residual = try_decompose_mcf(sol_m, sc.requests, sc.substrate)
        report["residual"] = residual
        report["total_residual"] = sum(residual.values())
        report["mcf_decomposition_size"] = {rid: len(v) for rid, v in sorted(ds.mappings.items())}
    return RunResult(report, EXIT_OK)


def cmd_bench(sc: Scenario, opts: Options) -> RunResult:
    report, ctx = _prepare_rounding(sc, opts, "bench")
    if ctx is None:
        return RunResult(report, EXIT_INFEASIBLE, rows=[])
    sol, source, params, _ = ctx
    samples = sample_rounds(source, sc.substrate, params.seed, opts.trials)
    opt = sol.objective_value
    ratio = samples.objective / opt if opt else np.zeros_like(samples.objective)
    if opts.variant == "profit":
        ok = ((samples.objective >= params.alpha * opt - 1e-9)
              & (samples.node_violation <= 1 + params.beta + 1e-9)
              & (samples.edge_violation <= 1 + params.gamma + 1e-9))
    else:
        ok = ((samples.node_violation <= 2 + params.beta + 1e-9)
              & (samples.edge_violation <= 2 + params.gamma + 1e-9))
    report["trials"] = opts.trials
    report["summary"] = {
        "objective_mean": float(samples.objective.mean()),
        "objective_stderr": float(samples.objective.std(ddof=1) / math.sqrt(opts.trials))
        if opts.trials > 1 else 0.0,
        "alpha_mean": float(ratio.mean()),
        "alpha_min": float(ratio.min()),
        "node_violation_mean": float(samples.node_violation.mean()),
        "node_violation_max": float(samples.node_violation.max()),
        "edge_violation_mean": float(samples.edge_violation.mean()),
        "edge_violation_max": float(samples.edge_violation.max()),
        "acceptance_frequency": float(ok.mean()),
    }
    rows = [
        {"seed": params.seed, "trial": t, "objective": float(samples.objective[t]),
         "max_node_violation": float(samples.node_violation[t]),
         "max_edge_violation": float(samples.edge_violation[t])}
        for t in range(opts.trials)
    ]
    return RunResult(report, EXIT_OK, rows=rows)


HANDLERS = {
    "validate": cmd_validate,
    "solve-lp": cmd_solve,
    "decompose": cmd_decompose,
    "round": cmd_round,
    "exact": cmd_exact,
    "compare-formulations": cmd_compare,
    "bench": cmd_bench,
}


def run_scenario(sc: Scenario, command: str, opts: Options | None = None) -> RunResult:
    """Run one command; the report depends only on (scenario, options)."""
    opts = opts or Options()
    if command not in HANDLERS:
        raise InputError(f"unknown command {command!r}")
    start = time.perf_counter()
    result = HANDLERS[command](sc, opts)
    result.report = {"scenario": sc.name, **result.report}
    if opts.timings:
        result.report["seconds"] = time.perf_counter() - start
    result.report = _clean(result.report)
    if result.rows is not None:
        result.rows = _clean(result.rows)
    return result


def _flatten(obj, prefix: str = ""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list) and any(isinstance(v, (dict, list)) for v in obj):
        for n, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{n}]")
    else:
        yield prefix, obj


def render(result: RunResult, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(result.report, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        if result.rows is not None:
            fields = ["seed", "trial", "objective", "max_node_violation", "max_edge_violation"]
            w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(result.rows)
        else:
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["key", "value"])
            for k, v in _flatten(result.report):
                w.writerow([k, json.dumps(v)])
        return buf.getvalue()
    pairs = [(k, v if isinstance(v, str) else json.dumps(v)) for k, v in _flatten(result.report)]
    width = max((len(k) for k, _ in pairs), default=0)
    return "".join(f"{k.ljust(width)}  {v}\n" for k, v in pairs)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cactusembed",
        description="Embed service chains and cactus requests via LP relaxation and rounding.",
    )
    p.add_argument("--scenario", required=True,
                   help="scenario JSON file or bundled fixture name (fig2-chain, fig3-cactus, "
                        "fig5-nondecomposable)")
    p.add_argument("--command", required=True, choices=COMMANDS)
    p.add_argument("--seed", type=int)
    p.add_argument("--rounds", type=int, help="maximum rounding tries Q")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--variant", choices=("profit", "cost"), default="profit")
    p.add_argument("--formulation", choices=tuple(FAMILIES))
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "text", "csv"), default="json")
    p.add_argument("--trials", type=int, default=1000, help="bench trials")
    p.add_argument("--timings", action="store_true", help="add wall-clock seconds to the report")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    opts = Options(args.seed, args.rounds, args.alpha, args.beta, args.gamma, args.variant,
                   args.formulation, args.trials, args.timings)
    try:
        sc = load_scenario(args.scenario)
        result = run_scenario(sc, args.command, opts)
    except (ScenarioError, SpecError, InputError, ShapeMismatch, NotACactus, Disconnected,
            InstanceTooLarge, EmptyPlacement, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverFailure, ResidualFlow) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    text = render(result, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
