"""Command-line interface.

    rotlab predict   --config cfg.json | inline hyperparameter flags
    rotlab run       --config cfg.json [cfg2.json ...] [--out DIR] [--seed N] [--jobs N]
    rotlab check     --config cfg.json [--out DIR] [--seed N] [--reuse]
    rotlab converge  --omega0-sq X [--omega0-sq Y ...] --eta E --weight-decay L ...

Exit codes: 0 success / all checks pass, 1 check failure, 2 configuration
error (message names the offending field), 3 numeric failure (message names
the step and unit). The output directory defaults to --out, then the
ROTLAB_OUT environment variable, then ./runs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional

from .config import ConfigError, ExperimentConfig, load_config
from .optimizers import KINDS, OptimizerConfig
from .predictions import EquilibriumPrediction, NoEquilibrium, predict
from .report import build_report, load_summary
from .runner import NumericError, run_experiment, simulate_norm_walk
from .telemetry import format_value

EXIT_OK = 0
EXIT_CHECK_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

# Placeholders printed for prediction fields that need measured statistics
# the CLI cannot know up front.
_REQUIRES = {
    ("sgdm", "eta_g_hat"): "requires E[||g||^2]",
    ("sgdm", "tau_g_hat"): "requires E[||g||^2]",
    ("sgdm", "omega_norm_hat"): "requires E[||g_tilde||^2]",
    ("adaml2", "eta_r_hat"): "requires per-coordinate sqrt(E[g_tilde^2])",
    ("adaml2", "omega_norm_hat"): "requires per-coordinate sqrt(E[g_tilde^2])",
}


def _default_out(args) -> str:
    if args.out is not None:
        return args.out
    return os.environ.get("ROTLAB_OUT", "runs")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.validate()
    return cfg


def cmd_predict(args) -> int:
    if args.config is not None:
        cfg = load_config(args.config)
        opt = cfg.optimizer
        C = cfg.system.C
    else:
        opt = OptimizerConfig(
            kind=args.kind,
            eta=args.eta,
            weight_decay=args.weight_decay,
            momentum=args.momentum,
            beta1=args.beta1,
            beta2=args.beta2,
            eps=args.eps,
        )
        try:
            opt.validate()
        except ValueError as e:
            raise ConfigError(f"optimizer: {e}") from e
        C = args.c
    outcome = predict(opt, C, stats=None, exact=args.exact, partial=True)
    if isinstance(outcome, NoEquilibrium):
        print(f"no equilibrium: {outcome.reason}", file=sys.stderr)
        return EXIT_CONFIG
    payload = {"kind": outcome.kind, "C": C}
    for name in ("eta_g_hat", "eta_r_hat", "omega_norm_hat", "tau_g_hat", "tau_r_hat"):
        val = getattr(outcome, name)
        if val is None:
            payload[name] = _REQUIRES.get((outcome.kind, name))
        else:
            payload[name] = val
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _run_one(payload) -> dict:
    cfg_path, out_dir, seed = payload
    cfg = load_config(cfg_path)
    if seed is not None:
        cfg.seed = seed
        cfg.validate()
    result = run_experiment(cfg, out_dir)
    return {"name": cfg.name, "csv": result.csv_path, "summary": result.summary_path}


def cmd_run(args) -> int:
    out_dir = _default_out(args)
    payloads = [(path, out_dir, args.seed) for path in args.config]
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, payloads))
    else:
        results = [_run_one(p) for p in payloads]
    print(json.dumps(results if len(results) > 1 else results[0], indent=2))
    return EXIT_OK


def cmd_check(args) -> int:
    cfg = _load(args)
    out_dir = _default_out(args)
    csv_path = os.path.join(out_dir, f"{cfg.name}.csv")
    summary_path = os.path.join(out_dir, f"{cfg.name}_summary.json")
    if args.reuse and os.path.exists(csv_path) and os.path.exists(summary_path):
        summary = load_summary(summary_path)
    else:
        result = run_experiment(cfg, out_dir)
        summary = result.summary
    report = build_report(cfg, csv_path, summary)
    report_path = os.path.join(out_dir, f"{cfg.name}_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["all_pass"] else EXIT_CHECK_FAIL


def cmd_converge(args) -> int:
    from .predictions import norm_convergence_curve

    out_dir = _default_out(args)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "converge.csv")
    lam = args.weight_decay
    analytic_available = lam > 0 and args.eta * lam < 1
    summary = []
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("omega0_sq,step,measured,predicted,rel_err\n")
        for omega0_sq in args.omega0_sq:
            measured = simulate_norm_walk(
                omega0_sq=omega0_sq,
                eta=args.eta,
                weight_decay=lam,
                C=args.c,
                steps=args.steps,
                trials=args.trials,
                seed=args.seed if args.seed is not None else 0,
            )
            if analytic_available:
                walk_cfg = OptimizerConfig(kind="adamw", eta=args.eta, weight_decay=lam)
                analytic = norm_convergence_curve(omega0_sq, walk_cfg, args.c, args.steps)
                rel = (measured - analytic) / analytic
                for i in range(args.steps + 1):
                    fh.write(
                        f"{format_value(omega0_sq)},{i},{format_value(measured[i])},"
                        f"{format_value(analytic[i])},{format_value(rel[i])}\n"
                    )
                tail = slice(min(50, args.steps), None)
                summary.append(
                    {
                        "omega0_sq": omega0_sq,
                        "fixed_point": float(analytic[-1]) if args.steps > 0 else None,
                        "max_rel_err_after_50": float(max(abs(rel[tail]))),
                    }
                )
            else:
                for i in range(args.steps + 1):
                    fh.write(f"{format_value(omega0_sq)},{i},{format_value(measured[i])},n/a,\n")
                summary.append(
                    {"omega0_sq": omega0_sq, "fixed_point": "n/a", "max_rel_err_after_50": "n/a"}
                )
    print(json.dumps({"csv": csv_path, "curves": summary}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="print closed-form equilibrium predictions as JSON")
    p.add_argument("--config", help="experiment config JSON (optimizer + system.C)")
    p.add_argument("--kind", choices=KINDS, default="adamw")
    p.add_argument("--eta", type=float, default=1.25e-2)
    p.add_argument("--weight-decay", type=float, default=8e-2)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--c", type=int, default=128, help="weight vector dimension")
    p.add_argument("--exact", action="store_true", help="unsimplified norm denominator")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("run", help="run experiments, write telemetry CSV + summary JSON")
    p.add_argument("--config", nargs="+", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="run + compare measured vs predicted, exit 0 iff all pass")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--reuse", action="store_true", help="re-check stored outputs without re-running")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("converge", help="Monte-Carlo squared-norm curve vs the analytic recurrence")
    p.add_argument("--omega0-sq", type=float, action="append", required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--weight-decay", type=float, required=True)
    p.add_argument("--c", type=int, default=128)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_converge)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
