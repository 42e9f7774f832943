"""Command-line harness.

Subcommands: ``subspace`` (estimate + decompose + report k), ``mse``
(expected-MSE study over N), ``perturb`` (stability study), ``bayes``
(desk-scale inversion study), ``validate`` (invariant suite).

Exit codes: 0 on success, 2 when any verdict fails (a bound or property
violation), 1 on error.
"""
from __future__ import annotations

import argparse
import os
import sys

from .config import ExperimentConfig, RunManifest
from .exceptions import ToolkitError
from .harness import (
    run_bayes_experiment,
    run_mse_experiment,
    run_perturbation_experiment,
    run_subspace,
    run_validate,
    stage_seed,
)

_RUNNERS = {
    "subspace": run_subspace,
    "mse": run_mse_experiment,
    "perturb": run_perturbation_experiment,
    "bayes": run_bayes_experiment,
    "validate": run_validate,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; the CLI contract reserves 2 for
    # bound violations, so remap usage errors to 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="activesub", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("subspace", "estimate the gradient covariance, decompose, report k"),
        ("mse", "expected-MSE study over the Monte Carlo sample count N"),
        ("perturb", "perturbed-subspace stability study"),
        ("bayes", "linear-Gaussian inversion study with Hellinger bounds"),
        ("validate", "run the cross-module invariant suite"),
    ):
        p = sub.add_parser(name, help=help_text, parents=[], add_help=True)
        p.add_argument("--config", help="path to the JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory (default: ./activesub-<cmd>)")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker threads; results do not depend on this")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="result table format")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config is None:
            if args.command == "validate":
                cfg = ExperimentConfig()
            else:
                parser.print_usage(sys.stderr)
                sys.stderr.write("error: --config is required\n")
                return 1
        else:
            cfg = ExperimentConfig.from_json_file(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out_dir = args.out or f"activesub-{args.command}"
        runner = _RUNNERS[args.command]
        files, verdicts = runner(cfg, out_dir, threads=max(args.threads, 1), fmt=args.format)

        manifest = RunManifest(
            config_hash=cfg.config_hash(),
            stage_seeds={args.command: stage_seed(cfg.seed, args.command)},
            outputs=[os.path.basename(f) for f in files],
        )
        manifest_path = os.path.join(out_dir, "manifest.json")
        manifest.write(manifest_path)

        for name, passed, detail in verdicts:
            print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        print(f"wrote {len(files) + 1} files to {out_dir}")
        if any(not passed for _, passed, _ in verdicts):
            return 2
        return 0
    except ToolkitError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except Exception as exc:  # surface unexpected failures as exit 1, not tracebacks
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
