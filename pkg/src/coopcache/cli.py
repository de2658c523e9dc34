"""Command-line entry point: validate, simulate, sweep, cache-opt, oracle."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import report
from .cache import CacheVector, Urp, occupancy_bits
from .cache_control import run_cache_optimization
from .config import ConfigError, ParsedConfig, load_default_config_text, parse_config
from .oracles import (
    MdpConvergenceError,
    MdpGrid,
    format_report,
    mc_effective_gain_check,
    service_rate_identity_check,
    surrogate_error_scan,
    tiny_mdp_average_cost,
    underflow_trend,
)
from .power import theta_tilde
from .queue import AssumptionError, validate_assumptions
from .sim import SimulationError, SweepResult, run_episode, sweep
from .special import RootBracketError, RootConvergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_NUMERIC = 4
OUT_ENV = "COOPCACHE_OUT"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coopcache", description=__doc__)
    parser.add_argument("--config", type=Path, help="INI file (default: the shipped reference setup)")
    parser.add_argument("--out", type=Path, help=f"output directory (default: ${OUT_ENV} or ./coopcache-out)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key, e.g. --set beta=20 or --set system.tau=1e-3",
    )
    parser.add_argument("--allow-invalid", action="store_true", help="report assumption violations without failing")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", help="check the price and slot assumptions")

    p = sub.add_parser("simulate", help="run one closed-loop episode")
    p.add_argument("--policy", choices=("proposed", "baseline1", "baseline2", "baseline3", "zero"))
    p.add_argument("--n-slots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", action="store_true", help="also write the per-slot trace")
    p.add_argument("--plot", action="store_true")

    p = sub.add_parser("sweep", help="tradeoff sweep over the configured grids")
    p.add_argument("--policy", action="append", help="restrict to these policies")
    p.add_argument("--n-slots", type=int)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--plot", action="store_true")

    p = sub.add_parser("cache-opt", help="run the cache-vector subgradient optimizer")
    p.add_argument("--n-urp", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--plot", action="store_true")

    p = sub.add_parser("oracle", help="independent checks of the closed forms")
    p.add_argument("--which", choices=("gain", "mdp", "surrogate", "service", "underflow", "all"), default="all")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--quick", action="store_true", help="smaller sample sizes")
    return parser


def _out_dir(args) -> Path:
    out = args.out or Path(os.environ.get(OUT_ENV, "coopcache-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> ParsedConfig:
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(str(args.config), f"cannot read config ({exc.strerror})") from None
    else:
        text = load_default_config_text()
    return parse_config(text, args.overrides)


def _check(parsed: ParsedConfig, args) -> list[str]:
    problems = validate_assumptions(parsed.system)
    if problems and not args.allow_invalid:
        raise AssumptionError("; ".join(problems))
    return problems


def _cache_vector(parsed: ParsedConfig) -> CacheVector:
    if parsed.sim.q is not None:
        return CacheVector(parsed.sim.q)
    c = parsed.cache
    return run_cache_optimization(
        parsed.system, c.n_urp, np.random.default_rng(c.seed), sigma0=c.sigma0, q_init=c.q_init, window=c.window
    ).q


def cmd_validate(parsed: ParsedConfig, args) -> int:
    problems = validate_assumptions(parsed.system)
    print(f"violations={len(problems)}")
    for line in problems:
        print(f"violation: {line}")
    return EXIT_ASSUMPTION if problems and not args.allow_invalid else EXIT_OK


def cmd_simulate(parsed: ParsedConfig, args) -> int:
    policy = args.policy or parsed.sim.policy
    if policy == "proposed":
        _check(parsed, args)
    out = _out_dir(args)
    q = _cache_vector(parsed) if policy == "proposed" else None
    bl = replace(parsed.baseline, baseline_id=int(policy[-1])) if policy.startswith("baseline") else None
    rec, tr = run_episode(
        parsed.system, policy, q, args.n_slots or parsed.sim.n_slots, args.seed or parsed.sim.seed,
        bl=bl, burn_in_frac=parsed.sim.burn_in_frac, trace=args.trace, check_assumptions=not args.allow_invalid,
    )
    path = report.write_csv(out / "episode.csv", "episode", report.EPISODE_COLUMNS, report.episode_rows(rec))
    print(f"wrote {path}")
    print(format_report("episode", {
        "policy": policy,
        "avg_power_per_user": rec.avg_power_per_user,
        "combined_cost": rec.combined_cost,
        "pr_comp": rec.pr_comp,
        "underflow_frequency": rec.underflow_frequency,
    }))
    if tr is not None:
        tpath = report.write_csv(out / "trace.csv", "trace", report.trace_columns(parsed.system.n_users), report.trace_rows(tr))
        print(f"wrote {tpath}")
        if args.plot:
            from .plots import plot_trace

            print(f"wrote {plot_trace(tr, parsed.system, out / 'trace.png')}")
    return EXIT_OK


def cmd_sweep(parsed: ParsedConfig, args) -> int:
    out = _out_dir(args)
    grids = [g for g in parsed.sweeps if not args.policy or g.policy in args.policy]
    if not grids:
        raise ConfigError("[sweep].policies", "no sweep grid matches the requested policies")
    if any(g.policy == "proposed" for g in grids) and not args.allow_invalid:
        for g in grids:
            if g.policy == "proposed":
                for beta, eta in g.points:
                    problems = validate_assumptions(parsed.system.replace(beta=beta, gamma=beta, eta=eta))
                    if problems:
                        raise AssumptionError(f"beta={beta:g}: " + "; ".join(problems))
    rows, aggregates = [], []
    n_failed = 0
    for g in grids:
        if args.n_slots:
            g = replace(g, n_slots=args.n_slots)
        if args.seeds:
            g = replace(g, seeds=tuple(args.seeds))
        res = sweep(g, parsed.system, parsed.baseline, n_urp=parsed.cache.n_urp, sigma0=parsed.cache.sigma0)
        for row in res.failures:
            print(f"failed: policy={row.policy} knob={row.eta_or_kappa:.12g} seed={row.seed} {row.error}", file=sys.stderr)
        n_failed += len(res.failures)
        rows += res.rows
        aggregates += res.aggregates
    merged = SweepResult(rows, aggregates)
    path = report.write_csv(out / "sweep.csv", "sweep", report.SWEEP_COLUMNS, report.sweep_rows(merged))
    print(f"wrote {path}")
    if args.plot:
        from .plots import plot_tradeoff

        print(f"wrote {plot_tradeoff(aggregates, out / 'tradeoff.png')}")
    return EXIT_NUMERIC if n_failed else EXIT_OK


def cmd_cache_opt(parsed: ParsedConfig, args) -> int:
    out = _out_dir(args)
    c = parsed.cache
    state = run_cache_optimization(
        parsed.system, args.n_urp or c.n_urp, np.random.default_rng(args.seed or c.seed),
        sigma0=c.sigma0, q_init=c.q_init, window=c.window,
    )
    path = report.write_csv(
        out / "cache_opt.csv", "cache-opt", report.cache_opt_columns(parsed.system.n_files), report.cache_opt_rows(state)
    )
    print(f"wrote {path}")
    print(format_report("cache-opt", {
        "final_q": ",".join(f"{v:.6g}" for v in state.q.q),
        "occupancy_bits": occupancy_bits(state.q, parsed.system.file_sizes),
    }))
    if args.plot:
        from .plots import plot_cache_opt

        print(f"wrote {plot_cache_opt(state, out / 'cache_opt.png')}")
    return EXIT_OK


def cmd_oracle(parsed: ParsedConfig, args) -> int:
    cfg = parsed.system
    out = _out_dir(args)
    lines = []
    which = args.which
    quick = args.quick
    if which in ("gain", "all"):
        for qm in (0.0, 0.25, 0.5, 0.75, 1.0):
            r = mc_effective_gain_check(qm, 20_000 if quick else 100_000, np.random.default_rng(args.seed))
            lines.append(format_report("gain", {
                "q_min": qm, "zero_mass": r.zero_mass, "tail_mean": r.tail_mean,
                "ks_stat": r.ks_stat, "ks_critical": r.ks_critical,
            }))
    if which in ("mdp", "all"):
        plan = [(10e-3, MdpGrid(100, 32, 32)), (5e-3, MdpGrid(200, 48, 48))]
        if not quick:
            plan.append((1e-3, MdpGrid(400, 64, 64)))
        for tau, grid in plan:
            c = cfg.replace(tau=tau)
            res = tiny_mdp_average_cost(grid, 0.5, c)
            th = theta_tilde(0.5, c)
            lines.append(format_report("mdp", {
                "tau": tau, "theta_vi": float(res.theta), "theta_closed_form": th,
                "rel_gap": abs(res.theta - th) / th,
            }))
    if which in ("surrogate", "all"):
        for qm in (0.0, 0.5, 1.0):
            gaps = surrogate_error_scan([0.1, 1, 2, 4, 8], qm, cfg)
            lines.append(format_report("surrogate", {"q_min": qm, **{f"gap_{r:g}": g for r, g in zip([0.1, 1, 2, 4, 8], gaps)}}))
    if which in ("service", "all"):
        n = 100_000 if quick else 1_000_000
        pi = Urp(tuple(range(cfg.n_users)))
        for qm in (0.5, 1.0):
            r = service_rate_identity_check(cfg, CacheVector.uniform(qm, cfg.n_files), pi, n, args.seed)
            a_s, b_s, e_s = r.per_second()
            lines.append(format_report("service", {
                "q_min": qm, "r_bar_a_bits_per_slot": r.r_bar_a, "r_bar_b_bits_per_slot": r.r_bar_b,
                "expected_bits_per_slot": r.expected, "r_bar_a_bps": a_s, "r_bar_b_bps": b_s,
                "expected_bps": e_s, "gap": r.gap,
            }))
    if which in ("underflow", "all"):
        sizes = (1e5, 1e6, 1e7)
        n = 100_000 if quick else 1_000_000
        freq = underflow_trend(cfg, CacheVector.uniform(0.5, cfg.n_files), sizes, n, args.seed)
        lines.append(format_report("underflow", {f"per_comp_slot_{s:g}": f for s, f in zip(sizes, freq)}))
    text = "\n".join(lines) + "\n"
    (out / "oracle_report.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "cache-opt": cmd_cache_opt,
    "oracle": cmd_oracle,
}


def _fail(kind: str, code: int, exc: BaseException, key: str | None = None) -> int:
    msg = " ".join(str(exc).split())
    key_part = f" key={key}" if key else ""
    print(f"error: kind={kind} exit={code}{key_part} message={msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        parsed = _load(args)
        return COMMANDS[args.command](parsed, args)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, exc, exc.key)
    except AssumptionError as exc:
        return _fail("assumption", EXIT_ASSUMPTION, exc)
    except (RootBracketError, RootConvergenceError, SimulationError, MdpConvergenceError,
            FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        return _fail("numeric", EXIT_NUMERIC, exc)
    except OSError as exc:
        return _fail("io", EXIT_CONFIG, exc)


if __name__ == "__main__":
    sys.exit(main())
