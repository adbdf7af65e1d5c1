"""Straight trajectories on the 2-D toy coupling: endpoint error vs NFE after CFM training.

    python scripts/toy_straightness.py --steps 4000
"""
import argparse

import numpy as np

from cfmsr.presets import endpoint_mse, toy_config, train_toy


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=4000)
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--time-scale", type=float, default=0.1)
    args = ap.parse_args()
    net, hist, test = train_toy(toy_config(args.steps, args.lr, seed=args.seed, time_scale=args.time_scale))
    print(f"final loss (mean of last 100 steps): {np.mean([h[1] for h in hist[-100:]]):.3e}")
    ref, _ = endpoint_mse(net, test, 50)
    for nfe in (1, 2, 4, 10, 50):
        mse, used = endpoint_mse(net, test, nfe)
        print(f"NFE={used:3d} endpoint MSE={mse:.3e} ratio to NFE=50: {mse / ref:.3f}")


if __name__ == "__main__":
    main()
