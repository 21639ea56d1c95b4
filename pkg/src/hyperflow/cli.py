"""hyperflow command line: simulate, perturbed, sweep, spectral, check, multiagent."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import experiments
from .analysis import ConvergenceError
from .experiments import ExperimentConfig
from .hypergraph import SpecError, StructuralError
from .integrator import StepError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2

COMMANDS = {
    "simulate": experiments.run_simulate,
    "perturbed": experiments.run_perturbed,
    "sweep": experiments.run_sweep,
    "spectral": experiments.run_spectral,
    "check": experiments.run_check,
    "multiagent": experiments.run_multiagent,
}


def parse_levels(text: str) -> list[float]:
    try:
        a, b, k = text.split(":")
        return [float(x) for x in np.linspace(float(a), float(b), int(k))]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must look like a:b:k, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hyperflow", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--spec", help="hypergraph spec file (overrides the built-in generator)")
    p.add_argument("--generator", help="built-in system: va-dense, nonuniqueness, complete:n:s")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--dt", type=float)
    p.add_argument("--t-final", type=float)
    p.add_argument("--delta-norm", type=float)
    p.add_argument("--symmetric", action="store_true", help="symmetrize the generated perturbation")
    p.add_argument("--levels", type=parse_levels)
    p.add_argument("--rho", type=float, help="input amplitude")
    p.add_argument("--no-svg", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def make_config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    cfg = ExperimentConfig.from_dict(doc)
    if args.spec is not None:
        cfg.spec = args.spec
    if args.generator is not None:
        cfg.generator = args.generator
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_dir = args.out
    if args.dt is not None:
        cfg.dt = args.dt
    if args.t_final is not None:
        cfg.t_final = args.t_final
    if args.delta_norm is not None:
        cfg.perturbation.delta_norm = args.delta_norm
    if args.symmetric:
        cfg.perturbation.symmetric = True
    if args.levels is not None:
        cfg.sweep.levels = args.levels
    if args.rho is not None:
        cfg.input.amplitude = args.rho
    if args.no_svg:
        cfg.svg = False
    cfg.__post_init__()
    return cfg


def _summary(command: str, result: dict) -> dict:
    drop = {"trajectory", "rows", "certificate", "constants"}
    if command in ("spectral", "check"):
        drop = set()
    out = {k: v for k, v in result.items() if k not in drop}
    return json.loads(json.dumps(out, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = make_config(args)
        result = COMMANDS[args.command](cfg)
    except (SpecError, ValueError, OSError, json.JSONDecodeError) as exc:
        if isinstance(exc, StructuralError):
            print(f"hyperflow {args.command}: structural failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"hyperflow {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConvergenceError, StepError, np.linalg.LinAlgError) as exc:
        print(f"hyperflow {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if args.command == "spectral" and not result.get("unique_equilibrium", False):
        print("hyperflow spectral: support graph or balance condition fails; no unique equilibrium claimed",
              file=sys.stderr)
    print(json.dumps(_summary(args.command, result), indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
