"""Command-line entry point.

Subcommands: simulate, infer, benchmark, eval, emit-plots. Errors exit
nonzero with a machine-readable JSON object on stderr. The output root can
be set with the DEFOSIM_OUT environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np


def _out_path(path: str) -> str:
    root = os.environ.get("DEFOSIM_OUT")
    if root and not os.path.isabs(path):
        os.makedirs(root, exist_ok=True)
        return os.path.join(root, path)
    return path


def cmd_simulate(args) -> int:
    from .params import SimParams
    from .sim import SimConfig, rollout

    params = SimParams(*args.params)
    traj = rollout(
        args.scenario, params, T=args.steps,
        config=SimConfig(seed=args.seed),
    )
    traj.dump_jsonl(_out_path(args.out))
    print(json.dumps({
        "out": _out_path(args.out),
        "steps": traj.length,
        "diverged": traj.diverged,
        "diverged_step": traj.diverged_step,
    }))
    return 0


def cmd_infer(args) -> int:
    from .benchmark import ExperimentConfig, hidden_truth
    from .sequential import (
        BULK_METHODS,
        initial_round_state,
        make_real_observation,
        run_bulk,
        run_round,
    )

    config = ExperimentConfig.from_json(args.config)
    setup = config.setup()
    seed = config.master_seeds[0]
    theta_star = hidden_truth(config.prior, seed)
    real_obs = make_real_observation(setup, theta_star, master_seed=seed)
    if args.method in BULK_METHODS:
        posterior, info = run_bulk(
            args.method, config.rounds * config.budget, real_obs, setup,
            master_seed=seed,
        )
    else:
        state = initial_round_state(setup, args.method, seed=seed)
        for _ in range(config.rounds):
            posterior, state = run_round(
                state, args.method, real_obs, config.budget, setup,
                master_seed=seed,
            )
        info = state.metrics[-1]
    out = _out_path(args.out)
    with open(out, "w") as f:
        json.dump({
            "method": args.method,
            "theta_star": theta_star.tolist(),
            "posterior": posterior.to_dict(),
            "info": info,
        }, f, indent=1)
    print(json.dumps({"out": out}))
    return 0


def cmd_benchmark(args) -> int:
    from .benchmark import ExperimentConfig, run_benchmark

    config = ExperimentConfig.from_json(args.config)
    if args.out:
        config.out_dir = _out_path(args.out)
    report = run_benchmark(config)
    print(json.dumps({
        "out": config.out_dir,
        "rows": len(report.rows),
    }))
    return 0


def cmd_eval(args) -> int:
    from .benchmark import ExperimentConfig, evaluate_posterior
    from .models import MixturePosterior
    from .params import SimParams
    from .sim import rollout

    with open(args.posterior) as f:
        posterior = MixturePosterior.from_dict(json.load(f)["posterior"])
    config = ExperimentConfig(scenario=args.scenario)
    setup = config.setup()
    theta_star = np.array(args.truth)
    reference = rollout(
        args.scenario, SimParams.from_array(theta_star), T=setup.T,
        config=setup.sim,
    )
    mean, std = evaluate_posterior(
        posterior, setup, reference.particles, n=args.n, seed=args.seed
    )
    print(json.dumps({"mean_distance": mean, "std_distance": std, "n": args.n}))
    return 0


def cmd_emit_plots(args) -> int:
    from .benchmark import EvalReport, emit_plot_data

    report = EvalReport.load(args.report)
    paths = emit_plot_data(report, _out_path(args.out))
    print(json.dumps({"csv": paths}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="defosim",
        description="Posterior inference of deformable-simulation parameters",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="roll out one scripted scene")
    s.add_argument("--scenario", required=True, choices=("wipe", "wind", "fling"))
    s.add_argument("--params", type=float, nargs=4, required=True,
                   metavar=("BEND", "ELASTIC", "FRICTION", "SCALE"))
    s.add_argument("--steps", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("infer", help="run one inference method")
    s.add_argument("--config", required=True)
    s.add_argument("--method", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("benchmark", help="run the full method x seed benchmark")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("eval", help="evaluate a stored posterior")
    s.add_argument("--posterior", required=True)
    s.add_argument("--scenario", required=True)
    s.add_argument("--truth", type=float, nargs=4, required=True)
    s.add_argument("--n", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("emit-plots", help="write CSV plot data from a report")
    s.add_argument("--report", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_emit_plots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:
        sys.stderr.write(json.dumps({
            "error": type(e).__name__,
            "message": str(e),
        }) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
