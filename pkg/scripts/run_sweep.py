"""Sensitivity sweep: equilibrium shift against perturbation size, log-log slope."""
import argparse

from hyperflow.experiments import ExperimentConfig, run_sweep

p = argparse.ArgumentParser(description=__doc__)
p.add_argument("--config")
p.add_argument("--out", default="results/sweep")
p.add_argument("--fresh-directions", action="store_true", help="new random direction at every level")
args = p.parse_args()

cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
cfg.sweep.fresh_directions = args.fresh_directions or cfg.sweep.fresh_directions
res = run_sweep(cfg, args.out)
print("level    post_norm  measured    predicted   gap")
for row in res["rows"]:
    print("  ".join(f"{x:9.3e}" for x in row[[0, 2, 3, 4, 5]]))
print(f"fitted slope {res['slope']:.4f} over {res['fit_points']} points")
