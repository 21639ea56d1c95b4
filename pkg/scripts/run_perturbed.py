"""Perturbed run with a sinusoidal input; checks the local ISS envelope."""
import argparse

from hyperflow.experiments import ExperimentConfig, run_perturbed

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--config")
p.add_argument("--out", default="results/perturbed")
p.add_argument("--delta-norm", type=float)
p.add_argument("--rho", type=float)
args = p.parse_args()

cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
if args.delta_norm is not None:
    cfg.perturbation.delta_norm = args.delta_norm
if args.rho is not None:
    cfg.input.amplitude = args.rho
rep = run_perturbed(cfg, args.out)["report"]
for key in ("pre_clip_norm", "post_clip_norm", "equilibrium_shift_norm", "steady_state_V",
            "envelope_floor", "violations", "excluded_samples"):
    print(f"{key:24s} {rep[key]}")
for key, val in rep["iss_constants"].items():
    print(f"  {key:8s} {val:.6g}")
