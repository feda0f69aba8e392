"""sigma_hat and KS of the normalized endpoint values across walk lengths.

    python3 scripts/clt_scaling.py configs/f2_brooks.json --lengths 256 1024 4096 --trials 20000
"""

import argparse
import csv
import sys

from quasiwalk.config import load_config
from quasiwalk.montecarlo import WalkConfig, clt_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--lengths", type=int, nargs="+", default=[256, 1024, 4096])
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int)
    args = p.parse_args()

    cfg = load_config(args.config)
    _, mu, phi = cfg.build()
    seed = cfg.seed if args.seed is None else args.seed
    out = csv.writer(sys.stdout)
    out.writerow(["n", "trials", "sigma_hat", "sigma_se", "ks", "verdict", "wall_time_ms"])
    for n in args.lengths:
        rep = clt_experiment(WalkConfig(mu, phi, n, args.trials, seed), args.threads)
        out.writerow([n, rep.trials, f"{rep.sigma_hat:.6f}", f"{rep.sigma_se:.6f}",
                      "" if rep.ks is None else f"{rep.ks:.5f}", rep.verdict, round(rep.wall_time_ms)])


if __name__ == "__main__":
    main()
