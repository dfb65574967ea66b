"""Simulate one plant on one reference with both controllers and print the log tail."""

import argparse

from rampc import ExperimentConfig, run_closed_loop, sample_plant
from rampc.harness import TRAJECTORIES, derived_seeds


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trajectory", choices=TRAJECTORIES, default="rampSaw")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = ExperimentConfig()
    plant_seed, (noise_seed,) = derived_seeds(args.seed, 0, 1)
    plant = sample_plant(cfg.bounds, cfg.M_true, seed=plant_seed)
    for variant in ("ampc", "rampc"):
        rec = run_closed_loop(plant, variant, args.trajectory, cfg, noise_seed=noise_seed, diagnostics=True)
        upper, lower = rec.diagnostics["upper"][-1], rec.diagnostics["lower"][-1]
        print(f"{variant}: rms {rec.rms:.4f}, mean rounds {rec.diagnostics['rounds'].mean():.2f}")
        print(f"  final coefficient widths: {(upper - lower).round(3)}")
        print(f"  true head:                {plant.head(cfg.mpc.m).round(3)}")


if __name__ == "__main__":
    main()
