"""Baseline run: random start on the 8-node system, converging to the uniform state."""
import argparse

import numpy as np

from hyperflow.experiments import ExperimentConfig, run_simulate

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--config")
p.add_argument("--out", default="results/baseline")
args = p.parse_args()

cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
res = run_simulate(cfg, args.out)
traj = res["trajectory"]
print(f"max mass drift     {res['max_mass_drift']:.3e}")
print(f"|x(T) - v|_inf     {res['final_distance_inf']:.3e}")
print(f"max V increase     {np.diff(traj.entropy).max():.3e}")
print(f"c_gap, c           {res['certificate']['c_gap']:.4f}, {res['certificate']['c']:.4f}")
print(f"wrote {args.out}/trajectory.csv")
