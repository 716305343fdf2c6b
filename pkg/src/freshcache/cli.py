"""Command-line interface.

Subcommands: solve, allocate, freshness, simulate, verify, sweep.
Exit codes: 0 success, 1 verification mismatch, 2 validation/parse failure,
3 infeasible instance, 4 search/oracle guard tripped, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from .errors import (
    AllocationMismatchError,
    DomainError,
    IncompleteAllocationError,
    InfeasibleError,
    OracleScaleError,
    ScenarioParseError,
    ScenarioValidationError,
    SearchBudgetError,
)
from .freshness import file_freshness, system_freshness, user_freshness
from .model import INFEASIBILITY_CODES, Scenario, validate_scheme, with_scaled_rates
from .oracle import GRID_MAX_ENTRIES, brute_force_assignments, grid_allocate
from .rate_alloc import AllocationInput, kkt_check
from .search import SolveResult, evaluate_scheme, solve_exhaustive, solve_sampled
from .scenario_io import (
    load_scenario,
    parse_rates,
    parse_scheme,
    write_result_table,
    write_trace,
)
from .simulator import simulate_system

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_GUARD = 4
EXIT_IO = 5

KKT_TOLERANCE = 1e-6


def _read_text(path: str) -> str:
    return Path(path).read_text()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_scheme(path: str, scenario: Scenario):
    scheme = parse_scheme(_read_text(path))
    report = validate_scheme(scenario, scheme)
    if report:
        raise ScenarioValidationError(
            "scheme failed validation: " + "; ".join(v.message for v in report), report=report
        )
    return scheme


def _json_float(x: float):
    return x if math.isfinite(x) else None


def _result_json(result: SolveResult) -> str:
    table = result.table
    doc = {
        "objective_sum": result.objective.sum_form,
        "objective_mean": result.objective.mean_form,
        "evaluated_count": result.evaluated_count,
        "assignment": [
            {"user": uid, "file": fid, "relay": relay}
            for (uid, fid), relay in sorted(result.best_scheme.assignment.items())
        ],
        "rates": [
            {"user": uid, "file": fid, "rate": rate}
            for relay_id in sorted(result.best_rates)
            for (uid, fid), rate in sorted(result.best_rates[relay_id].rates.items())
        ],
        "relays": [
            {
                "relay": relay_id,
                "alpha": alloc.diagnostics.alpha,
                "beta": alloc.diagnostics.beta,
                "water_level": _json_float(alloc.diagnostics.water_level),
                "dropped": [list(k) for k in sorted(alloc.diagnostics.dropped_keys)],
            }
            for relay_id, alloc in sorted(result.best_rates.items())
        ],
        "trace": [[i, v] for i, v in result.trace],
        "table": {
            "rows": [
                {
                    "file_index": r.file_index,
                    "user_index": r.user_index,
                    "user_rate": r.user_rate,
                    "relay_index": r.relay_index,
                    "relay_rate": r.relay_rate,
                    "server_rate": r.server_rate,
                }
                for r in table.rows
            ],
            "footer": {
                "users": table.footer.user_count,
                "relays": table.footer.relay_count,
                "files": table.footer.file_count,
                "objective_sum": table.footer.objective_sum,
                "objective_mean": table.footer.objective_mean,
            },
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def _run_solve(scenario: Scenario, args) -> SolveResult:
    if args.mode == "sampled":
        return solve_sampled(scenario, args.budget, args.seed, allow_empty_relay=args.allow_empty_relay)
    return solve_exhaustive(scenario, allow_empty_relay=args.allow_empty_relay, threads=args.threads)


def _cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    result = _run_solve(scenario, args)
    if args.format == "json":
        text = _result_json(result)
    else:
        text = write_result_table(result, fmt=args.format)
    _emit(text, args.out)
    if args.trace:
        Path(args.trace).write_text(write_trace(result))
    return EXIT_OK


def _cmd_allocate(args) -> int:
    scenario = load_scenario(args.scenario)
    scheme = _load_scheme(args.scheme, scenario)
    lines = ["file_index,user_index,relay_index,relay_rate"]
    reports = []
    _objective, per_relay = evaluate_scheme(scenario, scheme)
    rows = []
    for relay_id in sorted(per_relay):
        alloc = per_relay[relay_id]
        for (uid, fid), rate in alloc.rates.items():
            rows.append((fid, uid, relay_id, rate))
        entries = tuple(
            e
            for e in _relay_entries(scenario, scheme, relay_id)
        )
        report = kkt_check(AllocationInput(entries, scenario.relays[relay_id - 1].rate_budget), alloc, KKT_TOLERANCE)
        diag = alloc.diagnostics
        reports.append(
            f"relay={relay_id} alpha={diag.alpha:.6f} beta={diag.beta:.6f} "
            f"water_level={diag.water_level:.6f} stationarity={report.stationarity_residual:.3e} "
            f"budget_slackness={report.budget_slackness_residual:.3e} "
            f"drop_slackness={report.drop_slackness_residual:.3e} satisfied={report.satisfied}"
        )
    rows.sort()
    lines.extend(f"{fid},{uid},{relay_id},{rate:.4f}" for fid, uid, relay_id, rate in rows)
    lines.extend(reports)
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _relay_entries(scenario: Scenario, scheme, relay_id: int):
    from .rate_alloc import AllocationEntry

    for user in scenario.users:
        for h in user.holdings:
            if scheme.assignment.get((user.user_id, h.file_id)) == relay_id:
                yield AllocationEntry(
                    (user.user_id, h.file_id), h.user_rate, scenario.file_by_id[h.file_id].server_rate
                )


def _cmd_freshness(args) -> int:
    scenario = load_scenario(args.scenario)
    scheme = _load_scheme(args.scheme, scenario)
    rates = parse_rates(_read_text(args.rates))
    lines = []
    for user in scenario.users:
        value = user_freshness(scenario, scheme, rates, user.user_id)
        lines.append(f"user={user.user_id} freshness={value:.6f}")
    objective = system_freshness(scenario, scheme, rates)
    lines.append(f"objective_sum={objective.sum_form:.6f}")
    lines.append(f"objective_mean={objective.mean_form:.6f}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    scheme = _load_scheme(args.scheme, scenario)
    rates = parse_rates(_read_text(args.rates))
    sim = simulate_system(scenario, scheme, rates, args.horizon, args.seed)
    analytic = system_freshness(scenario, scheme, rates)
    lines = ["user_index,file_index,relay_index,relay_rate,analytic,estimate,half_width_95,cycles"]
    for user in scenario.users:
        for h in user.holdings:
            key = (user.user_id, h.file_id)
            est = sim.estimates[key]
            point = file_freshness(h.user_rate, scenario.file_by_id[h.file_id].server_rate, rates[key])
            lines.append(
                f"{user.user_id},{h.file_id},{scheme.assignment[key]},{rates[key]:.4f},"
                f"{point:.6f},{est.freshness_estimate:.6f},{est.half_width_95:.6f},{est.cycles_observed}"
            )
    lines.append(f"aggregate_sum_estimate={sim.aggregate.sum_form:.6f}")
    lines.append(f"aggregate_mean_estimate={sim.aggregate.mean_form:.6f}")
    lines.append(f"analytic_sum={analytic.sum_form:.6f}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _cmd_verify(args) -> int:
    scenario = load_scenario(args.scenario)
    solver = solve_exhaustive(scenario, allow_empty_relay=args.allow_empty_relay, threads=args.threads)
    reference = brute_force_assignments(scenario, allow_empty_relay=args.allow_empty_relay)
    objectives_match = solver.objective.sum_form == reference.objective.sum_form
    assignments_match = solver.best_scheme.assignment == reference.best_scheme.assignment
    lines = [
        f"exhaustive_objective={solver.objective.sum_form:.12f}",
        f"oracle_objective={reference.objective.sum_form:.12f}",
        f"objectives_match={objectives_match}",
        f"assignments_match={assignments_match}",
    ]
    grids_ok = True
    for relay_id in sorted(solver.best_rates):
        alloc = solver.best_rates[relay_id]
        entries = tuple(_relay_entries(scenario, solver.best_scheme, relay_id))
        if len(entries) > GRID_MAX_ENTRIES:
            lines.append(f"grid_check relay={relay_id} skipped ({len(entries)} entries)")
            continue
        alloc_input = AllocationInput(entries, scenario.relays[relay_id - 1].rate_budget)
        closed = sum(
            (e.user_rate / (e.user_rate + e.server_rate)) * alloc.rates[e.key] / (alloc.rates[e.key] + e.server_rate)
            for e in entries
        )
        _grid_rates, grid_obj = grid_allocate(alloc_input, args.grid_steps)
        ok = grid_obj <= closed + 1e-4
        grids_ok = grids_ok and ok
        lines.append(f"grid_check relay={relay_id} closed={closed:.8f} grid={grid_obj:.8f} ok={ok}")
    passed = objectives_match and assignments_match and grids_ok
    lines.append(f"verify={'PASS' if passed else 'FAIL'}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if passed else EXIT_MISMATCH


def _cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    try:
        factors = [float(f) for f in args.factors.split(",") if f.strip()]
    except ValueError as exc:
        raise DomainError(f"factors must be a comma-separated list of numbers, got {args.factors!r}") from exc
    if not factors:
        raise DomainError("factors must contain at least one number")
    lines = ["factor,objective_sum"]
    for factor in factors:
        scaled = with_scaled_rates(scenario, args.scale, factor)
        result = _run_solve(scaled, args)
        lines.append(f"{factor:g},{result.objective.sum_form:.6f}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freshcache", description="Freshness-optimal cache placement and rate allocation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_solver=False):
        p.add_argument("--scenario", required=True, help="scenario file path or bundled fixture name")
        p.add_argument("--out", default=None, help="write output to this file instead of stdout")
        if with_solver:
            p.add_argument("--mode", choices=("exhaustive", "sampled"), default="exhaustive")
            p.add_argument("--budget", type=int, default=10_000, help="evaluation budget for sampled mode")
            p.add_argument("--seed", type=int, default=0, help="seed for sampled mode")
            p.add_argument("--allow-empty-relay", action="store_true", help="permit relays with no assigned holdings")
            p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker processes for exhaustive mode")

    p_solve = sub.add_parser("solve", help="find the best placement and its rate allocation")
    add_common(p_solve, with_solver=True)
    p_solve.add_argument("--format", choices=("csv", "table", "json"), default="csv")
    p_solve.add_argument("--trace", default=None, help="write the improvement trace CSV to this file")
    p_solve.set_defaults(func=_cmd_solve)

    p_alloc = sub.add_parser("allocate", help="allocate rate budgets for a fixed placement")
    add_common(p_alloc)
    p_alloc.add_argument("--scheme", required=True, help="placement document")
    p_alloc.set_defaults(func=_cmd_allocate)

    p_fresh = sub.add_parser("freshness", help="score a fixed placement and rate table")
    add_common(p_fresh)
    p_fresh.add_argument("--scheme", required=True)
    p_fresh.add_argument("--rates", required=True, help="rate table document")
    p_fresh.set_defaults(func=_cmd_freshness)

    p_sim = sub.add_parser("simulate", help="Monte Carlo check of the analytic freshness values")
    add_common(p_sim)
    p_sim.add_argument("--scheme", required=True)
    p_sim.add_argument("--rates", required=True)
    p_sim.add_argument("--horizon", type=float, default=100_000.0)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.set_defaults(func=_cmd_simulate)

    p_verify = sub.add_parser("verify", help="cross-check the solver against brute-force oracles")
    add_common(p_verify)
    p_verify.add_argument("--allow-empty-relay", action="store_true")
    p_verify.add_argument("--threads", type=int, default=1)
    p_verify.add_argument("--grid-steps", type=int, default=1000)
    p_verify.set_defaults(func=_cmd_verify)

    p_sweep = sub.add_parser("sweep", help="re-solve under scaled user or server rates")
    add_common(p_sweep, with_solver=True)
    p_sweep.add_argument("--scale", choices=("user", "server"), required=True)
    p_sweep.add_argument("--factors", required=True, help="comma-separated scale factors")
    p_sweep.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        codes = {v.code for v in exc.report}
        if codes and codes <= INFEASIBILITY_CODES:
            return EXIT_INFEASIBLE
        return EXIT_VALIDATION
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SearchBudgetError, OracleScaleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (DomainError, IncompleteAllocationError, AllocationMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
