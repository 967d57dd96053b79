"""Command line front end: config loading, solver subcommands, and sweep CSVs.

One TOML config file fully determines a run; command line flags override
config keys.  Every output embeds the effective merged configuration so a
result file is reproducible from its own header.  Exit codes: 0 success,
1 usage or I/O problem, 2 numerical failure (non-convergence), 3 exceeded
enumeration budget.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from . import serialize
from .actions import min_purchase_rule, reveal_rule, uniform_rule
from .bound import lower_bound, truncation_depth, worst_case_objective
from .errors import ConfigError, HorizonTooLarge, MeterGuardError, NonConvergence
from .model import Model, SystemConfig
from .oracle import ConstantPolicy, exact_objective
from .policies import bcp_search, threshold_policy, tp_evaluate, tp_optimize
from .solver_finite import DepthTable, finite_dp
from .solver_infinite import evaluate_stationary, relative_value_iteration

CSV_SCHEMA = 1
CSV_COLUMNS = [
    "method",
    "p_e",
    "gamma",
    "leakage_bits",
    "cost",
    "weighted",
    "stderr_weighted",
    "runtime_s",
    "status",
    "meta",
]
METHODS = ("lower-bound", "mdp", "tp-opt", "tp-fixed", "bcp")

DEFAULT_CONFIG = {
    "model": {
        "x_max": 1,
        "y_max": 1,
        "b_max": 2,
        "p_x": [0.5, 0.5],
        "p_e": 0.5,
        "gamma": 0.5,
    },
    "solver": {
        "belief_denominator": 10,
        "action_steps": 10,
        "vi_tolerance": 1e-6,
        "vi_max_iters": 3000,
        "seed": 20260301,
        "action_search": "coordinate",
        "restarts": 5,
        "node_budget": 500_000,
    },
    "bound": {"epsilon": 1e-4, "pmf_mode": "normalized"},
    "policies": {
        "tp_n_max": 15,
        "bcp_grid_steps": 10,
        "bcp_shared_pair": True,
        "bcp_leakage_only": False,
    },
    "sim": {"eval_slots": 200_000, "episodes": 100_000},
    "sweep": {
        "p_e_values": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
        "methods": list(METHODS),
    },
}


def load_config(path=None, overrides=()):
    """Defaults, then the TOML file, then ``section.key=value`` overrides."""
    conf = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path is not None:
        try:
            with open(path, "rb") as fh:
                loaded = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        for section, values in loaded.items():
            if section not in conf:
                raise ConfigError(f"unknown config section [{section}]")
            if not isinstance(values, dict):
                raise ConfigError(f"top-level key {section!r} must be a section")
            unknown = set(values) - set(conf[section])
            if unknown:
                raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
            conf[section].update(values)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        key, raw = item.split("=", 1)
        section, name = key.split(".", 1)
        if section not in conf or name not in conf[section]:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        conf[section][name] = value
    return conf


def system_config(conf, **replacements) -> SystemConfig:
    merged = dict(conf["model"])
    merged.update(conf["solver"])
    merged["p_x"] = tuple(merged["p_x"])
    merged.update(replacements)
    return SystemConfig.from_dict(merged)


def _dump_json(payload, path=None):
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


# -- subcommands ----------------------------------------------------------------


def cmd_solve_mdp(conf, args):
    cfg = system_config(conf)
    table, policy = relative_value_iteration(cfg)
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    serialize.save_value_table(table, os.path.join(out_dir, "value_table.txt"))
    serialize.save_policy(policy, os.path.join(out_dir, "policy.txt"))
    summary = {
        "command": "solve-mdp",
        "result": {
            "lambda": table.lam,
            "eps_q": table.eps_q,
            "iterations": table.iterations,
            "span": table.span,
            "converged": table.converged,
            "ref_id": table.ref_id,
        },
        "config": conf,
    }
    _dump_json(summary, os.path.join(out_dir, "summary.json"))
    _dump_json(summary["result"])
    if not table.converged:
        print("warning: value iteration did not converge; artifacts are flagged", file=sys.stderr)
        return 2
    return 0


def cmd_finite(conf, args):
    cfg = system_config(conf)
    table = DepthTable(cfg, args.horizon)
    objectives = {t: table.objective(t) for t in range(1, args.horizon + 1)}
    if args.save:
        sol = finite_dp(args.horizon, cfg, table)
        stages = [sol.stage_rules(t) for t in range(1, args.horizon + 1)]
        serialize.save_stage_rules(stages, args.save, {"horizon": args.horizon})
    _dump_json(
        {"command": "finite", "result": {"objectives": objectives}, "config": conf},
        args.out,
    )
    return 0


def cmd_tp(conf, args):
    cfg = system_config(conf)
    mode = "monte-carlo" if args.mc else "exact"
    episodes = args.episodes or conf["sim"]["episodes"]
    if args.n is not None:
        depth = DepthTable(cfg, args.n)
        tp = threshold_policy(args.n, cfg, depth)
        res = tp_evaluate(tp, cfg, mode=mode, episodes=episodes)
        result = {"n": args.n, "optimized": False, **_eval_dict(res)}
    else:
        n_max = args.n_max or conf["policies"]["tp_n_max"]
        depth = DepthTable(cfg, n_max)
        best_n, best, per_n = tp_optimize(cfg, n_max, depth_table=depth, mode=mode, episodes=episodes)
        result = {
            "n": best_n,
            "optimized": True,
            "searched": {n: r.weighted for n, r in per_n},
            **_eval_dict(best),
        }
    _dump_json({"command": "tp", "result": result, "config": conf}, args.out)
    return 0


def cmd_bcp(conf, args):
    cfg = system_config(conf)
    steps = args.grid_steps or conf["policies"]["bcp_grid_steps"]
    shared = conf["policies"]["bcp_shared_pair"]
    if args.shared_pair:
        shared = True
    if args.per_state:
        shared = False
    leakage_only = args.leakage_only or conf["policies"]["bcp_leakage_only"]
    bcp, res, trace = bcp_search(cfg, steps=steps, shared_pair=shared, leakage_only=leakage_only)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["p_charge", "p_discharge", "score"])
            for pc, pd, score in trace:
                writer.writerow([json.dumps(pc), json.dumps(pd), repr(score)])
    result = {
        "p_charge": bcp.p_charge.tolist(),
        "p_discharge": bcp.p_discharge.tolist(),
        "shared_pair": shared,
        "leakage_only": leakage_only,
        **_eval_dict(res),
    }
    _dump_json({"command": "bcp", "result": result, "config": conf}, args.out)
    return 0


def cmd_lower_bound(conf, args):
    cfg = system_config(conf)
    epsilon = args.epsilon or conf["bound"]["epsilon"]
    mode = args.pmf_mode or conf["bound"]["pmf_mode"]
    depth = DepthTable(cfg, truncation_depth(cfg, epsilon))
    selected = lower_bound(cfg, epsilon, depth_table=depth, pmf_mode=mode)
    other_mode = "paper" if mode == "normalized" else "normalized"
    other = lower_bound(cfg, epsilon, depth_table=depth, pmf_mode=other_mode)
    result = {
        "value": selected.value,
        "pmf_mode": mode,
        f"value_{other_mode}": other.value,
        "renewal_value": selected.renewal_value,
        "k_used": selected.k_used,
        "tail_bound": selected.tail_bound,
        "epsilon": epsilon,
        "worst_case": worst_case_objective(cfg),
        "terms": [{"t_k": t, "weight": w, "per_slot_optimum": u} for t, w, u in selected.terms],
    }
    _dump_json({"command": "lower-bound", "result": result, "config": conf}, args.out)
    return 0


def cmd_oracle(conf, args):
    cfg = system_config(conf)
    model = Model(cfg)
    if args.policy_file:
        from .belief import grid_for
        from .oracle import BeliefTrackingPolicy

        stationary = serialize.load_policy(args.policy_file)
        grid = grid_for(model)
        policy = BeliefTrackingPolicy(
            model, lambda beta, stage: stationary.tables[grid.quantize(beta)]
        )
        name = args.policy_file
    else:
        rules = {
            "reveal": reveal_rule,
            "min-purchase": min_purchase_rule,
            "uniform": uniform_rule,
        }
        if args.policy not in rules:
            raise ConfigError(f"unknown oracle policy {args.policy!r}; pick from {sorted(rules)}")
        policy = ConstantPolicy(rules[args.policy](model).table)
        name = args.policy
    leak, cost, weighted = exact_objective(policy, args.horizon, cfg)
    result = {
        "policy": name,
        "horizon": args.horizon,
        "leakage_bits_per_slot": leak,
        "cost_per_slot": cost,
        "weighted": weighted,
    }
    _dump_json({"command": "oracle", "result": result, "config": conf}, args.out)
    return 0


# -- sweep ------------------------------------------------------------------------


def _eval_dict(res):
    return {
        "leakage_bits": res.leakage_rate,
        "cost": res.cost_rate,
        "weighted": res.weighted,
        "stderr_weighted": res.stderr_weighted,
        "extras": res.extras,
    }


def _sweep_row(method, p_e, conf, depth_table):
    cfg = system_config(conf, p_e=p_e)
    started = time.perf_counter()
    status = "ok"
    leak = cost = weighted = stderr = math.nan
    meta = {}
    try:
        if method == "lower-bound":
            res = lower_bound(
                cfg, conf["bound"]["epsilon"], depth_table=depth_table, pmf_mode=conf["bound"]["pmf_mode"]
            )
            weighted = res.value
            stderr = 0.0
            meta = {
                "k_used": res.k_used,
                "tail_bound": res.tail_bound,
                "renewal_value": res.renewal_value,
                "pmf_mode": res.pmf_mode,
            }
        elif method == "mdp":
            table, policy = relative_value_iteration(cfg)
            mc = evaluate_stationary(
                policy, cfg, horizon=conf["sim"]["eval_slots"], mode="monte-carlo", episodes=1
            )
            leak, cost = mc.leakage_rate, mc.cost_rate
            weighted = table.lam
            stderr = mc.stderr_weighted
            meta = {
                "lambda": table.lam,
                "eps_q": table.eps_q,
                "iterations": table.iterations,
                "span": table.span,
                "converged": table.converged,
                "mc_weighted": mc.weighted,
            }
            if not table.converged:
                status = "not-converged"
        elif method == "tp-fixed":
            n = min(math.ceil(1.0 / p_e), conf["policies"]["tp_n_max"])
            res = tp_evaluate(threshold_policy(n, cfg, depth_table), cfg)
            leak, cost, weighted = res.leakage_rate, res.cost_rate, res.weighted
            stderr = res.stderr_weighted
            meta = {"n": n}
        elif method == "tp-opt":
            best_n, res, _ = tp_optimize(cfg, conf["policies"]["tp_n_max"], depth_table=depth_table)
            leak, cost, weighted = res.leakage_rate, res.cost_rate, res.weighted
            stderr = res.stderr_weighted
            meta = {"n": best_n}
        elif method == "bcp":
            bcp, res, _ = bcp_search(
                cfg,
                steps=conf["policies"]["bcp_grid_steps"],
                shared_pair=conf["policies"]["bcp_shared_pair"],
                leakage_only=conf["policies"]["bcp_leakage_only"],
            )
            leak, cost, weighted = res.leakage_rate, res.cost_rate, res.weighted
            stderr = res.stderr_weighted
            meta = {
                "p_charge": bcp.p_charge.tolist(),
                "p_discharge": bcp.p_discharge.tolist(),
                "eval_mode": res.extras.get("mode"),
            }
        else:
            raise ConfigError(f"unknown sweep method {method!r}")
    except MeterGuardError as exc:
        status = f"error:{type(exc).__name__}"
        meta = {"message": str(exc)}
    runtime = time.perf_counter() - started
    return {
        "method": method,
        "p_e": p_e,
        "gamma": conf["model"]["gamma"],
        "leakage_bits": "" if math.isnan(leak) else repr(leak),
        "cost": "" if math.isnan(cost) else repr(cost),
        "weighted": "" if math.isnan(weighted) else repr(weighted),
        "stderr_weighted": "" if math.isnan(stderr) else repr(stderr),
        "runtime_s": f"{runtime:.3f}",
        "status": status,
        "meta": json.dumps(meta, sort_keys=True, default=_jsonable),
    }


def cmd_sweep(conf, args):
    if args.methods is not None:
        methods = [m for m in args.methods.split(",") if m]
    else:
        methods = list(conf["sweep"]["methods"])
    if not methods:
        raise ConfigError("the sweep needs at least one method")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown sweep method {m!r}; pick from {METHODS}")
    if args.pe is not None:
        try:
            p_values = [float(v) for v in args.pe.split(",") if v]
        except ValueError as exc:
            raise ConfigError(f"malformed --pe list {args.pe!r}") from exc
    else:
        p_values = [float(v) for v in conf["sweep"]["p_e_values"]]
    if not p_values or any(not 0.0 < p <= 1.0 for p in p_values):
        raise ConfigError("sweep p_e values must lie in (0, 1]")
    base_cfg = system_config(conf)
    depth_needed = conf["policies"]["tp_n_max"]
    if "lower-bound" in methods:
        worst_pe = min(p_values)
        depth_needed = max(
            depth_needed,
            truncation_depth(base_cfg.replace(p_e=worst_pe), conf["bound"]["epsilon"]),
        )
    needs_depth = any(m in ("lower-bound", "tp-opt", "tp-fixed") for m in methods)
    depth_table = DepthTable(base_cfg, depth_needed) if needs_depth else None
    tasks = [(m, p) for m in methods for p in p_values]
    workers = int(os.environ.get("MG_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda mp: _sweep_row(mp[0], mp[1], conf, depth_table), tasks))
    else:
        rows = [_sweep_row(m, p, conf, depth_table) for m, p in tasks]
    with open(args.out, "w", newline="") as fh:
        fh.write(f"# schema={CSV_SCHEMA}\n")
        fh.write("# config=" + json.dumps(conf, sort_keys=True) + "\n")
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    failed = [r for r in rows if r["status"] != "ok"]
    if failed:
        print(f"{len(failed)} sweep rows failed", file=sys.stderr)
        return 2
    return 0


# -- entry point -------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="meterguard",
        description="Privacy-cost trade-off solvers for battery-buffered smart metering",
    )
    parser.add_argument("--config", help="TOML config file (defaults to the built-in binary instance)")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override a config key (repeatable)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-mdp", help="run relative value iteration and save artifacts")
    p.add_argument("--out-dir", default=".", help="directory for value table, policy and summary")

    p = sub.add_parser("finite", help="solve the battery-only problem for every horizon up to T")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--save", help="write the stage rules of the horizon-T solution here")
    p.add_argument("--out", help="write the JSON summary here instead of stdout")

    p = sub.add_parser("tp", help="evaluate or optimize the threshold policy")
    p.add_argument("--n", type=int, help="fixed target horizon")
    p.add_argument("--n-max", type=int, help="search horizons 1..n_max (default from config)")
    p.add_argument("--mc", action="store_true", help="Monte Carlo evaluation instead of exact")
    p.add_argument("--episodes", type=int, help="episodes for Monte Carlo mode")
    p.add_argument("--out", help="write the JSON summary here instead of stdout")

    p = sub.add_parser("bcp", help="grid-search the battery conditioned policy")
    p.add_argument("--grid-steps", type=int, help="probability grid steps (default from config)")
    p.add_argument("--shared-pair", action="store_true", help="one (charge, discharge) pair for all levels")
    p.add_argument("--per-state", action="store_true", help="independent parameters per battery level")
    p.add_argument("--leakage-only", action="store_true", help="minimize leakage instead of the weighted objective")
    p.add_argument("--trace", help="write one CSV row per searched candidate")
    p.add_argument("--out", help="write the JSON summary here instead of stdout")

    p = sub.add_parser("lower-bound", help="clairvoyant lower bound on the trade-off")
    p.add_argument("--epsilon", type=float, help="series truncation tolerance")
    p.add_argument("--pmf-mode", choices=["normalized", "paper"], help="interval pmf convention")
    p.add_argument("--out", help="write the JSON summary here instead of stdout")

    p = sub.add_parser("sweep", help="run methods across renewable rates and emit a CSV")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--methods", help="comma-separated subset of " + ",".join(METHODS))
    p.add_argument("--pe", help="comma-separated renewable rates overriding the config")

    p = sub.add_parser("oracle", help="exact small-horizon leakage of a policy (debugging)")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--policy", default="reveal", help="a named built-in rule")
    p.add_argument("--policy-file", help="serialized stationary policy to evaluate instead")
    p.add_argument("--out", help="write the JSON summary here instead of stdout")

    return parser


HANDLERS = {
    "solve-mdp": cmd_solve_mdp,
    "finite": cmd_finite,
    "tp": cmd_tp,
    "bcp": cmd_bcp,
    "lower-bound": cmd_lower_bound,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        conf = load_config(args.config, args.set)
        return HANDLERS[args.command](conf, args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NonConvergence as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except HorizonTooLarge as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
