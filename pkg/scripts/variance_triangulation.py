"""Three independent estimates of the limiting standard deviation on F2.

Endpoint CLT, backward-product martingale increments and the boundary
cocycle second moment, printed with their standard errors and pairwise
z-scores.

    python3 scripts/variance_triangulation.py --word "a b" --clt-trials 20000
"""

import argparse
import math
from itertools import combinations

from quasiwalk.boundary import boundary_variance, sample_rays
from quasiwalk.group import FreeGroup
from quasiwalk.harmonic import monte_carlo_approx
from quasiwalk.martingale import martingale_sigma
from quasiwalk.measure import FiniteMeasure
from quasiwalk.montecarlo import WalkConfig, clt_experiment
from quasiwalk.quasimorphism import BrooksQuasimorphism


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--word", default="a b", help="Brooks counting word")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n", type=int, default=4096, help="walk length for the CLT estimate")
    p.add_argument("--clt-trials", type=int, default=20_000)
    p.add_argument("--K", type=int, default=256, help="backward product depth")
    p.add_argument("--M", type=int, default=10_000, help="martingale samples")
    p.add_argument("--rays", type=int, default=2000)
    p.add_argument("--L", type=int, default=128, help="ray prefix length")
    p.add_argument("--N", type=int, default=256, help="Cesaro horizon")
    args = p.parse_args()

    G = FreeGroup(["a", "b"])
    mu = FiniteMeasure.simple_random_walk(G)
    phi = BrooksQuasimorphism(G, G.parse(args.word))
    approx = monte_carlo_approx(phi, mu, args.N, seed=args.seed)

    clt = clt_experiment(WalkConfig(mu, phi, args.n, args.clt_trials, args.seed))
    mart = martingale_sigma(approx, args.K, args.M, seed=args.seed)
    bvar = boundary_variance(approx, sample_rays(mu, args.rays, seed=args.seed), args.L, seed=args.seed)
    est = {"clt": (clt.sigma_hat, clt.sigma_se), "martingale": (mart.sigma, mart.sigma_se),
           "boundary": (bvar.sigma, bvar.sigma_se)}
    for name, (s, se) in est.items():
        print(f"{name:>10}: {s:.4f} +- {se:.4f}")
    for (a, (x, sx)), (b, (y, sy)) in combinations(est.items(), 2):
        z = abs(x - y) / math.hypot(sx, sy) if sx or sy else 0.0
        print(f"{a} vs {b}: {z:.2f} SE, {100 * abs(x - y) / min(x, y):.1f}% apart")


if __name__ == "__main__":
    main()
