"""Command-line front-end: every module as a subcommand with JSON/CSV I/O.

Exit codes: 0 success, 2 validation error (machine-readable JSON on
stderr with {code, message, field?}), 1 internal error.  Unless --quiet,
each run echoes its fully resolved parameters to stderr for
reproducibility; stdout carries data only.  DUALCHAIN_LOG
(error|warn|info|debug) controls diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import random
import sys
from concurrent.futures import ThreadPoolExecutor

from . import chainsim, dynamics, equilibrium, ingest
from .core import DualchainError, GameConfig, MiningState, Strategy, config_from_json
from .payoff import payoff_triple

log = logging.getLogger("dualchain")

_POLICIES = {s.value: s for s in Strategy}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so errors map to exit 2."""

    def error(self, message):
        raise _UsageError(message)


def _setup_logging():
    level = os.environ.get("DUALCHAIN_LOG", "warn").lower()
    chosen = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}.get(level, logging.WARNING)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(chosen)


def _add_common(sub: argparse.ArgumentParser, config_required: bool = True):
    sub.add_argument("--config", required=config_required,
                     help="game config JSON {k, n_in, n_de, c_stick, powers}")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", help="output file (default stdout)")
    sub.add_argument("--format", choices=("json", "csv"), default=None)
    sub.add_argument("--quiet", action="store_true")


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _rows_to_csv(fields, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields)
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _echo(args, resolved: dict):
    if not args.quiet:
        print(f"# config: {json.dumps(resolved, sort_keys=True)}", file=sys.stderr)


def _config_dict(config: GameConfig) -> dict:
    return {"k": config.k, "n_in": config.n_in, "n_de": config.n_de,
            "c_stick": config.c_stick, "powers": list(config.powers)}


def _parse_state(text: str) -> MiningState:
    parts = text.split(",")
    if len(parts) != 2:
        raise _UsageError(f"state must be 'rF,rB', got {text!r}")
    return MiningState(float(parts[0]), float(parts[1]))


def _regime(spec: str) -> chainsim.DifficultyRegime:
    parts = spec.split(":")
    kind = parts[0]
    if kind == "epoch":
        return chainsim.EpochFixed(int(parts[1]) if len(parts) > 1 else 2016)
    if kind == "eda":
        vals = parts[1:]
        return chainsim.EpochWithEda(
            n=int(vals[0]) if len(vals) > 0 else 2016,
            eda_window=int(vals[1]) if len(vals) > 1 else 6,
            eda_threshold=float(vals[2]) if len(vals) > 2 else 12.0,
            eda_factor=float(vals[3]) if len(vals) > 3 else 0.8,
        )
    if kind == "perblock":
        return chainsim.PerBlockWindow(int(parts[1]) if len(parts) > 1 else 144)
    raise _UsageError(f"unknown regime {spec!r} (epoch:N | eda:N:W:T:F | perblock:W)")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_payoff(args) -> int:
    config = config_from_json(args.config)
    state = _parse_state(args.state)
    triple = payoff_triple(state, config)
    _echo(args, {"command": "payoff", "state": [state.r_f, state.r_b],
                 **_config_dict(config)})
    row = {
        "r_f": state.r_f, "r_b": state.r_b,
        "u_f": None if triple.divergent[0] else triple.u_f,
        "u_a": None if triple.divergent[1] else triple.u_a,
        "u_b": None if triple.divergent[2] else triple.u_b,
    }
    if args.format == "csv":
        _emit(_rows_to_csv(list(row), [row]), args.out)
    else:
        _emit(json.dumps(row) + "\n", args.out)
    return 0


def _cmd_zones(args) -> int:
    config = config_from_json(args.config)
    n = args.grid
    if n < 1:
        raise _UsageError("--grid must be >= 1")
    _echo(args, {"command": "zones", "grid": n, "tol": args.tol, **_config_dict(config)})
    rows = []
    for i in range(n):
        r_f = (i + 0.5) / n
        for j in range(n):
            r_b = (j + 0.5) / n * (1.0 - r_f)
            zone = equilibrium.zone_of(MiningState(r_f, r_b), config, args.tol)
            rows.append({"r_f": r_f, "r_b": r_b, "zone": zone.value})
    if args.format == "json":
        _emit(json.dumps(rows) + "\n", args.out)
    else:
        _emit(_rows_to_csv(("r_f", "r_b", "zone"), rows), args.out)
    return 0


def _cmd_equilibria(args) -> int:
    config = config_from_json(args.config)
    _echo(args, {"command": "equilibria", **_config_dict(config)})
    result = equilibrium.equilibria(config)
    _emit(json.dumps(result.to_dict()) + "\n", args.out)
    return 0


def _cmd_threshold(args) -> int:
    config = config_from_json(args.config)
    _echo(args, {"command": "threshold", **_config_dict(config)})
    _emit(json.dumps({"automatic_threshold": dynamics.automatic_threshold(config)}) + "\n",
          args.out)
    return 0


def _cmd_simulate(args) -> int:
    config = config_from_json(args.config)
    initial = _parse_state(args.initial)
    flow = dynamics.FlowConfig(
        migration_rate=args.rate,
        max_steps=args.max_steps,
        convergence_eps=args.eps,
        k_schedule=dynamics.Schedule.from_file(args.k_schedule) if args.k_schedule else None,
        c_stick_schedule=(
            dynamics.Schedule.from_file(args.c_stick_schedule)
            if args.c_stick_schedule else None
        ),
    )
    _echo(args, {"command": "simulate", "initial": [initial.r_f, initial.r_b],
                 "rate": args.rate, "max_steps": args.max_steps, "eps": args.eps,
                 **_config_dict(config)})
    traj = dynamics.simulate_flow(initial, flow, config)
    rows = [
        {"step": i, "r_f": s.r_f, "r_b": s.r_b, "zone": z.value, "k": k, "c_stick": c}
        for i, (s, z, k, c) in enumerate(zip(traj.states, traj.zones, traj.ks, traj.c_sticks))
    ]
    if args.format == "json":
        _emit(json.dumps({"outcome": traj.outcome.value, "steps_used": traj.steps_used,
                          "trajectory": rows}) + "\n", args.out)
    else:
        _emit(_rows_to_csv(("step", "r_f", "r_b", "zone", "k", "c_stick"), rows), args.out)
        if not args.quiet:
            print(f"# outcome: {traj.outcome.value} steps_used: {traj.steps_used}",
                  file=sys.stderr)
    return 0


def _cmd_best_response(args) -> int:
    config = config_from_json(args.config)
    with open(args.assignment) as fh:
        names = json.load(fh)
    try:
        assignment = [_POLICIES[n] for n in names]
    except KeyError as exc:
        raise _UsageError(f"unknown strategy {exc.args[0]!r}") from exc
    _echo(args, {"command": "best-response", "steps": args.steps, "seed": args.seed,
                 **_config_dict(config)})
    rng = random.Random(args.seed)
    history = 0
    for _ in range(args.steps):
        updated = dynamics.step_best_response(assignment, config, rng)
        if updated != assignment:
            history += 1
        assignment = updated
    state = dynamics.assignment_state(assignment, config)
    gains = [
        equilibrium.finite_deviation(state, c_i, s, config).payoff_gain
        for s, c_i in zip(assignment, config.powers)
    ]
    _emit(json.dumps({
        "assignment": [s.value for s in assignment],
        "r_f": state.r_f, "r_b": state.r_b,
        "changes": history,
        "max_gain": max(gains) if gains else 0.0,
        "converged": all(g <= 0.0 for g in gains),
    }) + "\n", args.out)
    return 0


def _load_agents(path: str) -> list[chainsim.MinerAgent]:
    with open(path) as fh:
        raw = json.load(fh)
    agents = []
    for entry in raw:
        policy = _POLICIES.get(entry.get("policy"))
        if policy is None:
            raise _UsageError(f"agent {entry.get('id')!r}: unknown policy {entry.get('policy')!r}")
        agents.append(chainsim.MinerAgent(str(entry["id"]), float(entry["power"]), policy))
    return agents


def _report_dict(report: chainsim.SimReport) -> dict:
    try:
        densities = {s.value: d for s, d in chainsim.empirical_payoffs(report).items()}
    except chainsim.InsufficientCycles:
        densities = None
    return {
        "duration": report.duration,
        "mode": report.mode,
        "seed": report.seed,
        "blocks": {c.value: n for c, n in report.blocks.items()},
        "mean_interval": {c.value: v for c, v in report.mean_interval.items()},
        "final_difficulty": {c.value: d for c, d in report.final_difficulty.items()},
        "fickle_cycles": report.fickle_cycles,
        "agent_rewards": report.agent_rewards,
        "policy_density": densities,
    }


def _cmd_chain_sim(args) -> int:
    with open(args.config) as fh:
        raw = json.load(fh)
    world = chainsim.ChainWorld(
        difficulty_a=float(raw["difficulty_a"]) if "difficulty_a" in raw else 1.0,
        difficulty_b=float(raw["difficulty_b"]) if "difficulty_b" in raw else float(raw["k"]),
        k=float(raw["k"]),
        k_schedule=(
            dynamics.Schedule.from_file(args.k_schedule) if args.k_schedule else None
        ),
    )
    agents = _load_agents(args.agents)
    regime_a = _regime(args.regime_a)
    regime_b = _regime(args.regime_b)
    _echo(args, {"command": "chain-sim", "duration": args.duration, "seed": args.seed,
                 "mode": args.mode, "regime_a": args.regime_a, "regime_b": args.regime_b,
                 "replicas": args.replicas, "k": world.k,
                 "difficulty_a": world.difficulty_a, "difficulty_b": world.difficulty_b})

    def one(seed: int) -> chainsim.SimReport:
        return chainsim.run(world, agents, regime_a, regime_b, args.duration, seed,
                            mode=args.mode)

    if args.replicas > 1:
        with ThreadPoolExecutor(max_workers=min(args.replicas, 8)) as pool:
            reports = list(pool.map(one, range(args.seed, args.seed + args.replicas)))
        merged = {
            "replicas": [_report_dict(r) for r in reports],
        }
        densities = [r["policy_density"] for r in merged["replicas"] if r["policy_density"]]
        if densities:
            keys = densities[0].keys()
            merged["mean_policy_density"] = {
                k: sum(d[k] for d in densities) / len(densities) for k in keys
            }
        _emit(json.dumps(merged) + "\n", args.out)
        return 0

    report = one(args.seed)
    if args.events:
        chainsim.write_events_csv(report, args.events)
    if args.series:
        chainsim.write_series_csv(
            chainsim.sample_series(report, step=args.series_step), args.series
        )
    _emit(json.dumps(_report_dict(report)) + "\n", args.out)
    return 0


def _cmd_analyze(args) -> int:
    config = config_from_json(args.config)
    _echo(args, {"command": "analyze", "input": args.input,
                 "hysteresis": args.hysteresis,
                 "baseline": [args.baseline_start, args.baseline_end],
                 **_config_dict(config)})
    loaded = ingest.load_series(args.input)
    if loaded.out_of_order_count:
        log.warning("sorted %d out-of-order records", loaded.out_of_order_count)
    periods = ingest.detect_fickle_periods(
        loaded.records, hysteresis=args.hysteresis,
        baseline=(args.baseline_start, args.baseline_end),
    )
    estimates, period_rf = ingest.estimate_state_path(loaded.records, periods)
    if args.out_periods:
        with open(args.out_periods, "w") as fh:
            json.dump([
                {"start_index": p.start_index, "end_index": p.end_index,
                 "trigger_ratio": p.trigger_ratio, "r_f_estimate": rf}
                for p, rf in zip(periods, period_rf)
            ], fh)
    if args.out_estimates:
        rows = [{
            "timestamp": e.timestamp, "basis": e.basis.value, "share": e.share,
            "r_f_est": "" if e.r_f is None else e.r_f,
            "r_b_est": "" if e.r_b is None else e.r_b,
        } for e in estimates]
        with open(args.out_estimates, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=("timestamp", "basis", "share",
                                                    "r_f_est", "r_b_est"))
            writer.writeheader()
            writer.writerows(rows)
    if args.out_zones:
        zones, _ = ingest.zone_path(estimates, config)
        with open(args.out_zones, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=("timestamp", "zone", "k"))
            writer.writeheader()
            writer.writerows(
                {"timestamp": e.timestamp, "zone": z.value, "k": e.k}
                for e, z in zip(estimates, zones)
            )
    summary = {"records": len(loaded.records), "periods": len(periods),
               "out_of_order": loaded.out_of_order_count}
    _emit(json.dumps(summary) + "\n", args.out)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="dualchain", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("payoff", help="profit densities at one state")
    _add_common(p)
    p.add_argument("--state", required=True, help="rF,rB")
    p.set_defaults(func=_cmd_payoff)

    p = subs.add_parser("zones", help="zone classification grid (CSV)")
    _add_common(p)
    p.add_argument("--grid", type=int, required=True)
    p.add_argument("--tol", type=float, default=equilibrium.ZONE_TOL)
    p.set_defaults(func=_cmd_zones)

    p = subs.add_parser("equilibria", help="equilibrium set (JSON)")
    _add_common(p)
    p.set_defaults(func=_cmd_equilibria)

    p = subs.add_parser("threshold", help="automatic-mining power threshold")
    _add_common(p)
    p.set_defaults(func=_cmd_threshold)

    p = subs.add_parser("simulate", help="zone-flow trajectory (CSV)")
    _add_common(p)
    p.add_argument("--initial", required=True, help="rF,rB")
    p.add_argument("--rate", type=float, default=0.001)
    p.add_argument("--max-steps", type=int, default=1_000_000)
    p.add_argument("--eps", type=float, default=0.005)
    p.add_argument("--k-schedule")
    p.add_argument("--c-stick-schedule")
    p.set_defaults(func=_cmd_simulate)

    p = subs.add_parser("best-response", help="iterated best-response updates")
    _add_common(p)
    p.add_argument("--assignment", required=True,
                   help="JSON list of per-player strategies")
    p.add_argument("--steps", type=int, default=1000)
    p.set_defaults(func=_cmd_best_response)

    p = subs.add_parser("chain-sim", help="block-level twin-chain simulation")
    _add_common(p)
    p.add_argument("--agents", required=True, help="JSON roster [{id,power,policy}]")
    p.add_argument("--regime-a", default="epoch:2016")
    p.add_argument("--regime-b", default="epoch:2016")
    p.add_argument("--duration", type=float, required=True, help="horizon in P_ag")
    p.add_argument("--mode", choices=("exponential", "deterministic"),
                   default="exponential")
    p.add_argument("--events", help="write event log CSV here")
    p.add_argument("--series", help="write sampled series CSV here")
    p.add_argument("--series-step", type=float, default=1.0)
    p.add_argument("--k-schedule")
    p.add_argument("--replicas", type=int, default=1)
    p.set_defaults(func=_cmd_chain_sim)

    p = subs.add_parser("analyze", help="series ingestion and reconstruction")
    _add_common(p)
    p.add_argument("--input", required=True, help="series CSV")
    p.add_argument("--hysteresis", type=float, default=0.02)
    p.add_argument("--baseline-start", type=int, default=0)
    p.add_argument("--baseline-end", type=int, default=1)
    p.add_argument("--out-periods")
    p.add_argument("--out-estimates")
    p.add_argument("--out-zones")
    p.set_defaults(func=_cmd_analyze)

    return parser


def dispatch(argv: list[str]) -> int:
    """Parse and run; returns the process exit code."""
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(json.dumps({"code": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except (DualchainError,) as exc:
        payload = {"code": exc.code, "message": str(exc)}
        if getattr(exc, "field", None):
            payload["field"] = exc.field
        print(json.dumps(payload), file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(json.dumps({"code": "invalid_input", "message": f"{type(exc).__name__}: {exc}"}),
              file=sys.stderr)
        return 2
    except Exception as exc:  # internal bug surface
        log.exception("internal error")
        print(json.dumps({"code": "internal", "message": f"{type(exc).__name__}: {exc}"}),
              file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
