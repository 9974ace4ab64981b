"""Command-line entry point: ``qecinsitu <verb> [options]``.

Exit status is 0 on success, 1 when a validation suite fails and 2 for
configuration errors.
"""
from __future__ import annotations

import argparse
import sys

from .estimation import Policy
from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, run

EXIT_VALIDATION = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qecinsitu", description=__doc__.splitlines()[0])
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", metavar="PATH", help="JSON file with experiment settings")
    parser.add_argument("--seed", type=int, help="64-bit seed (required for estimate and hypothesis)")
    parser.add_argument("--runs", type=int)
    parser.add_argument("--rounds", type=int)
    parser.add_argument("--policy", choices=[p.value for p in Policy])
    parser.add_argument("--true-hypothesis", choices=("H0", "H1"), dest="true_hypothesis")
    parser.add_argument("--out", metavar="PATH", help="write CSV here instead of stdout")
    extra = parser.add_argument_group("channel parameters (five-qubit-likelihood, choi)")
    extra.add_argument("--px", type=float, dest="p_x")
    extra.add_argument("--py", type=float, dest="p_y")
    extra.add_argument("--pz", type=float, dest="p_z")
    extra.add_argument("--axis", type=float, nargs=3)
    extra.add_argument("--theta", type=float)
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {k: getattr(args, k) for k in
                 ("seed", "runs", "rounds", "policy", "true_hypothesis", "out", "p_x", "p_y", "p_z",
                  "axis", "theta")}
    overrides["experiment"] = args.experiment
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return ExperimentConfig.from_json(text, **overrides)
    return ExperimentConfig.from_mapping({k: v for k, v in overrides.items() if v is not None})


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        table = run(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"qecinsitu: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = table.write(cfg.out)
    if not cfg.out:
        sys.stdout.write(text)
    return 0 if table.passed else EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
