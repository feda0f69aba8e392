"""Backward-product martingale increments.

With q_K = w_{-K+1} ... w_{-1} a product of K-1 independent mu-steps and
w_0 one more step, the increment is

    Delta_K = phi_N(q_K w_0) - phi_N(q_K) - ell.

Its second moment estimates sigma^2.  In Monte Carlo mode phi_N is only
available through Cesaro samples, so Delta^2 is estimated by the product of
two increments computed from independent samples (unbiased for the square).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .group import Element
from .harmonic import HarmonicApprox
from .quasimorphism import Quasimorphism
from .rng import stream


@dataclass
class MartingaleSample:
    index: int
    K: int
    q: Element
    delta: float
    gap: float  # |Delta_K - Delta_{K/2}|


@dataclass
class MartingaleReport:
    K: int
    M: int
    seed: int
    ell: float
    sigma2: float
    sigma2_se: float
    mean: float
    mean_se: float
    gap_mean: float
    gap_max: float
    samples: list = field(repr=False, default_factory=list)

    @property
    def sigma(self) -> float:
        return math.sqrt(max(self.sigma2, 0.0))

    @property
    def sigma_se(self) -> float:
        s = self.sigma
        return self.sigma2_se / (2 * s) if s > 0 else 0.0

    def centered(self, k: float = 3.0) -> bool:
        return abs(self.mean) <= k * self.mean_se + 1e-12

    def summary(self) -> dict:
        return {"K": self.K, "M": self.M, "seed": self.seed, "ell": self.ell,
                "sigma_hat": self.sigma, "sigma_se": self.sigma_se, "sigma2": self.sigma2,
                "sigma2_se": self.sigma2_se, "mean": self.mean, "mean_se": self.mean_se,
                "cauchy_gap_mean": self.gap_mean, "cauchy_gap_max": self.gap_max}


def _product(G, atoms, idx) -> Element:
    z = G.identity()
    mul = G.mul
    for i in idx:
        z = mul(z, atoms[i])
    return z


def _one_sample(approx: HarmonicApprox, K: int, seed: int, i: int, ell: float):
    mu = approx.mu
    G = mu.group
    atoms, _ = mu._table()
    rng = stream(seed, "martingale", i)
    idx = mu.sample_indices(rng, K)
    past, w0 = idx[: K - 1], atoms[idx[K - 1]]
    q = _product(G, atoms, past)
    q_half = _product(G, atoms, past[len(past) - (K // 2 - 1):]) if K >= 4 else G.identity()
    if approx.cesaro_measure is not None:
        s = approx.cesaro_sample(None)
        d = approx.right_difference(q, w0, s) - ell
        dh = approx.right_difference(q_half, w0, s) - ell
        return q, d, d, dh
    sa = approx.cesaro_sample(stream(seed, "martingale-A", i))
    sb = approx.cesaro_sample(stream(seed, "martingale-B", i))
    da = approx.right_difference(q, w0, sa) - ell
    db = approx.right_difference(q, w0, sb) - ell
    dh = approx.right_difference(q_half, w0, sa) - ell
    return q, da, db, dh


def martingale_sigma(approx: HarmonicApprox, K: int, M: int, *, seed: int = 0,
                     ell: float | None = None, keep: bool = False) -> MartingaleReport:
    """sigma_hat^2 = mean Delta_K^2 over M independent backward products."""
    if K < 1 or M < 1:
        raise ValueError("need K >= 1 and M >= 1")
    ell = approx.ell if ell is None else ell
    prods, means, gaps, kept = [], [], [], []
    for i in range(M):
        q, da, db, dh = _one_sample(approx, K, seed, i, ell)
        prods.append(da * db)
        means.append(0.5 * (da + db))
        gaps.append(abs(da - dh))
        if keep:
            kept.append(MartingaleSample(i, K, q, 0.5 * (da + db), abs(da - dh)))
    p = np.asarray(prods)
    m = np.asarray(means)
    s2 = math.fsum(prods) / M
    mean = math.fsum(means) / M
    s2_se = float(p.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    mean_se = float(m.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return MartingaleReport(K, M, seed, ell, s2, s2_se, mean, mean_se,
                            math.fsum(gaps) / M, max(gaps), kept)


@dataclass
class SandwichRow:
    trial: int
    centered_value: float  # phi(z_n) - n ell
    proxy: float  # sum of rebuilt increments
    deviation: float


@dataclass
class SandwichReport:
    n: int
    rows: list
    bound: float  # 3 D+ + slack
    defect: float
    slack: float

    @property
    def max_deviation(self) -> float:
        return max(r.deviation for r in self.rows)

    @property
    def ok(self) -> bool:
        return self.max_deviation <= self.bound


def martingale_sandwich(phi: Quasimorphism, approx: HarmonicApprox, n: int, trials: int, *,
                        K: int = 64, seed: int = 0, cesaro_draws: int = 16,
                        ell: float | None = None, defect: float | None = None) -> SandwichReport:
    """Compare phi(z_n) - n ell with the sum of increments
    phi_N(q z_j w_j) - phi_N(q z_j) - ell, j < n.

    Trial i reuses the increments of walk trial i (stream (seed, "walk", i)),
    so z_n is the endpoint the CLT engine sees for the same seed; q is an
    independent backward product of depth K.
    """
    mu = approx.mu
    G = mu.group
    atoms, _ = mu._table()
    ell = approx.ell if ell is None else ell
    D = phi.defect_bound if defect is None else defect
    if D is None:
        raise ValueError("sandwich bound needs a defect bound")
    slack = approx.homogenization_tolerance + approx.residual_slack
    rows = []
    for i in range(trials):
        steps = mu.sample_indices(stream(seed, "walk", i), n)
        q = _product(G, atoms, mu.sample_indices(stream(seed, "sandwich-q", i), max(K - 1, 0)))
        rng = None if approx.cesaro_measure is not None else stream(seed, "sandwich-cesaro", i)
        sample = approx.cesaro_sample(rng, cesaro_draws)
        x = q
        z = G.identity()
        incs = []
        for j in steps:
            w = atoms[j]
            incs.append(approx.right_difference(x, w, sample) - ell)
            x = G.mul(x, w)
            z = G.mul(z, w)
        proxy = math.fsum(incs)
        val = phi(z) - n * ell
        rows.append(SandwichRow(i, val, proxy, abs(val - proxy)))
    return SandwichReport(n, rows, 3.0 * D + slack, D, slack)


def increments_table(report: MartingaleReport) -> list[tuple]:
    """(index, Delta, gap) rows for CSV export."""
    return [(s.index, s.delta, s.gap) for s in report.samples]
