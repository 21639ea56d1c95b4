"""Double-integrator swarm with paired zero-sum disturbance."""
import argparse

from hyperflow.experiments import ExperimentConfig, run_multiagent

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--config")
p.add_argument("--out", default="results/multiagent")
args = p.parse_args()

cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
res = run_multiagent(cfg, args.out)
print(f"momentum drift   {res['momentum_drift']:.3e}")
print(f"mean distance    {res['initial_mean_dist']:.4f} -> {res['final_mean_dist']:.4f}")
