"""Distortion, the psi_n corrections and Cesaro quasi-biharmonic approximations.

For a homogeneous (or approximately homogeneous) phi_hat, set

    psi_n(g) = sum_h d phi_hat(g, h) mu^{*n}(h)
    phi_N(g) = phi_hat(g) + (1/N) sum_{n<N} psi_n(g)

Telescoping the psi recursion gives, for every g,

    sum_s phi_N(g s) mu(s) - phi_N(g) - a_N / N = psi_N(g) / N,

with a_n = sum_h phi_hat(h) mu^{*n}(h), so the right residual is certified
by |psi_N| <= D_hat.  Equivalently phi_N(x) = sum_h phi_hat(x h) nu_N(h) - c_N
for the Cesaro measure nu_N = (1/N) sum_{n<N} mu^{*n}; this second form is
what evaluates phi_N away from the tabulated set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .group import CapacityError, Element, Group
from .measure import (
    DEFAULT_SUPPORT_CAP,
    FiniteMeasure,
    convolution_powers,
    is_symmetric,
    mixture,
)
from .quasimorphism import ConfigError, Quasimorphism, homogenize
from .rng import stream


class CoverageError(RuntimeError):
    """Evaluation set is not closed under the products a residual needs."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"{len(self.missing)} products missing from the evaluation table")


def walk_prefixes(mu: FiniteMeasure, n: int, rng: np.random.Generator) -> list[Element]:
    """[z_0, ..., z_n] for one walk with mu-distributed increments."""
    G = mu.group
    atoms, _ = mu._table()
    idx = mu.sample_indices(rng, n)
    out = [G.identity()]
    z = out[0]
    mul = G.mul
    for i in idx:
        z = mul(z, atoms[i])
        out.append(z)
    return out


def walk_product(mu: FiniteMeasure, n: int, rng: np.random.Generator) -> Element:
    G = mu.group
    atoms, _ = mu._table()
    z = G.identity()
    mul = G.mul
    for i in mu.sample_indices(rng, n):
        z = mul(z, atoms[i])
    return z


# -- distortion ------------------------------------------------------------------

@dataclass
class DistortionEstimate:
    a: list  # a_n = int phi d mu^{*n}, n = 0..N
    N: int
    ell: float
    error: float  # certified |ell - ell_mu| (plus 3 SE in MC mode)
    defect: float
    mode: str = "exact"
    se: list | None = None
    truncation: float = 0.0

    def subadditivity_gap(self) -> float:
        """max |a_{m+n} - a_m - a_n| over tabulated m + n <= N."""
        a = self.a
        gap = 0.0
        for m in range(len(a)):
            for n in range(len(a) - m):
                gap = max(gap, abs(a[m + n] - a[m] - a[n]))
        return gap


def _defect_of(phi: Quasimorphism, defect: float | None) -> float:
    if defect is not None:
        return float(defect)
    if phi.defect_bound is not None:
        return float(phi.defect_bound)
    raise ConfigError(f"{phi.description}: no defect bound available")


def distortion(phi: Quasimorphism, mu: FiniteMeasure, N: int, mode: str = "exact", *,
               samples: int = 4000, seed: int = 0, tau=0, defect: float | None = None,
               powers: Sequence[FiniteMeasure] | None = None) -> DistortionEstimate:
    if N < 1:
        raise ValueError("N must be >= 1")
    phi.group.check_same(mu.group)
    D = _defect_of(phi, defect)
    if mode == "exact":
        if powers is None:
            powers = convolution_powers(mu, N, tau)
        a = [sum(phi(h) * float(p) for h, p in m.items()) for m in powers[: N + 1]]
        lost = 1.0 - float(powers[N].retained_mass)
        trunc = max(abs(phi(h)) for h in powers[N].weights) * lost if lost > 0 else 0.0
        return DistortionEstimate(a, N, a[N] / N, D / N + trunc, D, "exact", None, trunc)
    if mode == "monte-carlo":
        vals = np.zeros((samples, N + 1))
        for i in range(samples):
            zs = walk_prefixes(mu, N, stream(seed, "distortion", i))
            vals[i] = [phi(z) for z in zs]
        a = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / math.sqrt(samples) if samples > 1 else np.zeros(N + 1)
        err = D / N + 3.0 * se[N] / N
        return DistortionEstimate(a.tolist(), N, a[N] / N, err, D, "monte-carlo", se.tolist())
    raise ConfigError(f"unknown mode {mode!r}")


# -- psi_n ---------------------------------------------------------------------------

def _require_homogeneous(phi_hat: Quasimorphism) -> None:
    if not (phi_hat.homogeneous or getattr(phi_hat, "approximately_homogeneous", False)):
        raise ConfigError("psi needs a homogeneous or homogenized quasimorphism")


def psi(phi_hat: Quasimorphism, mu: FiniteMeasure, n: int, g: Element, mode: str = "exact", *,
        powers: Sequence[FiniteMeasure] | None = None, samples: int = 64, seed: int = 0):
    """psi_n(g); returns (value, standard error)."""
    _require_homogeneous(phi_hat)
    G = mu.group
    pg = phi_hat(g)
    if mode == "exact":
        if powers is None:
            powers = convolution_powers(mu, n)
        m = powers[n]
        mul = G.mul
        val = sum((phi_hat(mul(g, h)) - pg - phi_hat(h)) * float(p) for h, p in m.items())
        return val, 0.0
    vals = []
    for i in range(samples):
        h = walk_product(mu, n, stream(seed, "psi", g, n, i))
        vals.append(phi_hat(G.mul(g, h)) - pg - phi_hat(h))
    vals = np.asarray(vals)
    se = vals.std(ddof=1) / math.sqrt(samples) if samples > 1 else 0.0
    return float(vals.mean()), float(se)


# -- the Cesaro approximation ----------------------------------------------------------

@dataclass
class ResidualRow:
    g: Element
    right: float
    left: float
    right_se: float = 0.0
    left_se: float = 0.0


@dataclass
class HarmonicApprox:
    phi: Quasimorphism
    phi_hat: Quasimorphism
    mu: FiniteMeasure
    N: int
    mode: str
    eval_set: list
    values: dict  # closure element -> phi_N (normalized)
    psi_table: dict  # closure element -> [psi_0, ..., psi_N]
    distortion: DistortionEstimate
    defect_hat: float
    homogenization_tolerance: float
    samples: int = 0
    seed: int = 0
    value_se: dict = field(default_factory=dict)
    cesaro_measure: FiniteMeasure | None = None
    offset: float = 0.0  # c_N
    normalization: float = 0.0

    @property
    def ell(self) -> float:
        return self.distortion.ell

    @property
    def group(self) -> Group:
        return self.mu.group

    @property
    def residual_slack(self) -> float:
        return 2.0 * self.defect_hat / self.N

    # Cesaro sampling -------------------------------------------------------------
    def cesaro_sample(self, rng: np.random.Generator | None, m: int | None = None):
        """Weighted atoms (h, w) representing nu_N.

        Exact mode returns nu_N itself; Monte Carlo mode returns m draws,
        each h = product of n increments with n uniform on {0..N-1}.
        """
        if self.cesaro_measure is not None:
            return [(h, float(p)) for h, p in self.cesaro_measure.items()]
        m = m or self.samples
        ns = rng.integers(0, self.N, size=m)
        w = 1.0 / m
        return [(walk_product(self.mu, int(n), rng), w) for n in ns]

    def value_with(self, x: Element, sample) -> float:
        """phi_N(x) against a Cesaro sample (exact in exact mode)."""
        G = self.group
        ph = self.phi_hat
        # sum_h phi_hat(h) nu_N(h) = c_N, so this is already normalized at e
        return sum(w * (ph(G.mul(x, h)) - ph(h)) for h, w in sample)

    def difference(self, g: Element, x: Element, sample) -> float:
        """phi_N(g x) - phi_N(x) with common Cesaro atoms."""
        G = self.group
        ph = self.phi_hat
        gx = G.mul(g, x)
        return sum(w * (ph(G.mul(gx, h)) - ph(G.mul(x, h))) for h, w in sample)

    def right_difference(self, x: Element, s: Element, sample) -> float:
        """phi_N(x s) - phi_N(x) with common Cesaro atoms."""
        G = self.group
        ph = self.phi_hat
        xs = G.mul(x, s)
        return sum(w * (ph(G.mul(xs, h)) - ph(G.mul(x, h))) for h, w in sample)

    def __call__(self, x: Element) -> float:
        v = self.values.get(x)
        if v is not None:
            return v
        rng = None if self.cesaro_measure is not None else stream(self.seed, "value", x)
        return self.value_with(x, self.cesaro_sample(rng))


def cesaro_measure(powers: Sequence[FiniteMeasure], N: int) -> FiniteMeasure:
    return mixture(list(powers[:N]))


def closure_set(G: Group, eval_set: Iterable[Element], mu: FiniteMeasure) -> list[Element]:
    seen = {}
    for g in eval_set:
        seen.setdefault(g, None)
    seen.setdefault(G.identity(), None)
    base = list(seen)
    for g in base:
        for s in mu.weights:
            seen.setdefault(G.mul(g, s), None)
            seen.setdefault(G.mul(s, g), None)
    return list(seen)


def biharmonic_approx(phi: Quasimorphism, mu: FiniteMeasure, N: int, eval_set: Iterable[Element],
                      mode: str = "exact", *, depth: int = 6, defect: float | None = None,
                      samples: int = 32, seed: int = 0, tau=0, threads: int = 1) -> HarmonicApprox:
    """Tabulate phi_N on eval_set and its one-step neighbours."""
    G = mu.group
    phi.group.check_same(G)
    if N < 1:
        raise ValueError("N must be >= 1")
    eval_set = list(eval_set)
    phi_hat, cert = homogenize(phi, depth, defect)
    defect_hat = float(phi_hat.defect_bound if phi_hat.defect_bound is not None else _defect_of(phi, defect))
    closure = closure_set(G, eval_set, mu)

    if mode == "exact":
        powers = convolution_powers(mu, N, tau)
        dist = distortion(phi_hat, mu, N, "exact", powers=powers, defect=defect_hat)

        def row(g):
            return [psi(phi_hat, mu, n, g, "exact", powers=powers)[0] for n in range(N + 1)]

        psi_table = _map_ordered(row, closure, threads)
        values = {g: phi_hat(g) + sum(psi_table[g][:N]) / N for g in closure}
        nu = cesaro_measure(powers, N)
        offset = sum(dist.a[:N]) / N
        se = {}
    elif mode == "monte-carlo":
        dist = distortion(phi_hat, mu, N, "monte-carlo", samples=max(samples * 8, 256), seed=seed,
                          defect=defect_hat)

        def row(g):
            pg = phi_hat(g)
            acc = np.zeros((samples, N + 1))
            for i in range(samples):
                hs = walk_prefixes(mu, N, stream(seed, "psi-walk", g, i))
                acc[i] = [phi_hat(G.mul(g, h)) - pg - phi_hat(h) for h in hs]
            return acc

        raw = _map_ordered(row, closure, threads)
        psi_table = {g: raw[g].mean(axis=0).tolist() for g in closure}
        values = {}
        se = {}
        for g in closure:
            per_walk = phi_hat(g) + raw[g][:, :N].mean(axis=1)
            values[g] = float(per_walk.mean())
            se[g] = float(per_walk.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
        nu = None
        offset = 0.0
    else:
        raise ConfigError(f"unknown mode {mode!r}")

    e = G.identity()
    norm = values[e]
    values = {g: v - norm for g, v in values.items()}
    return HarmonicApprox(phi, phi_hat, mu, N, mode, eval_set, values, psi_table, dist, defect_hat,
                          cert.tolerance, samples if mode != "exact" else 0, seed, se, nu, offset, norm)


def monte_carlo_approx(phi: Quasimorphism, mu: FiniteMeasure, N: int, *, depth: int = 6,
                       defect: float | None = None, samples: int = 4, seed: int = 0,
                       ell: float | None = None) -> HarmonicApprox:
    """Untabulated Monte Carlo phi_N, evaluated only through Cesaro samples.

    Used where phi_N is needed at long words (boundary and martingale checks);
    ell defaults to 0 for symmetric mu and to a Monte Carlo distortion otherwise.
    """
    phi_hat, cert = homogenize(phi, depth, defect)
    defect_hat = float(phi_hat.defect_bound)
    if ell is None and is_symmetric(mu):
        dist = DistortionEstimate([0.0] * (N + 1), N, 0.0, 0.0, defect_hat, "symmetric")
    elif ell is None:
        dist = distortion(phi_hat, mu, N, "monte-carlo", samples=2000, seed=seed, defect=defect_hat)
    else:
        dist = DistortionEstimate([n * ell for n in range(N + 1)], N, float(ell), 0.0, defect_hat, "supplied")
    return HarmonicApprox(phi, phi_hat, mu, N, "monte-carlo", [], {mu.group.identity(): 0.0}, {}, dist,
                          defect_hat, cert.tolerance, samples, seed)


def _map_ordered(fn, items, threads: int) -> dict:
    items = list(items)
    if threads <= 1:
        return {g: fn(g) for g in items}
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as ex:
        results = list(ex.map(fn, items))
    return dict(zip(items, results))


# -- residuals -------------------------------------------------------------------------

@dataclass
class ResidualReport:
    rows: list
    ell: float
    slack: float  # certified bound for the right residual (exact mode)
    mode: str

    def max_right(self) -> float:
        return max(abs(r.right) for r in self.rows)

    def max_left(self) -> float:
        return max(abs(r.left) for r in self.rows)


def residuals(approx: HarmonicApprox, side: str = "both", ell: float | None = None) -> ResidualReport:
    """Right: sum_s phi_N(g s) mu(s) - phi_N(g) - ell; left: the same with s g."""
    G = approx.group
    ell = approx.ell if ell is None else ell
    vals = approx.values
    missing = []
    rows = []
    atoms = [(s, float(p)) for s, p in approx.mu.items()]
    for g in approx.eval_set:
        if g not in vals:
            missing.append(g)
            continue
        right = left = 0.0
        for s, p in atoms:
            gs, sg = G.mul(g, s), G.mul(s, g)
            if side in ("right", "both"):
                if gs not in vals:
                    missing.append(gs)
                    continue
                right += vals[gs] * p
            if side in ("left", "both"):
                if sg not in vals:
                    missing.append(sg)
                    continue
                left += vals[sg] * p
        rows.append(ResidualRow(g, right - vals[g] - ell, left - vals[g] - ell))
    if missing:
        raise CoverageError(missing)
    if approx.mode == "monte-carlo":
        se = approx.value_se
        for r in rows:
            s2 = sum(p * p * se.get(G.mul(r.g, s), 0.0) ** 2 for s, p in atoms) + se.get(r.g, 0.0) ** 2
            l2 = sum(p * p * se.get(G.mul(s, r.g), 0.0) ** 2 for s, p in atoms) + se.get(r.g, 0.0) ** 2
            r.right_se, r.left_se = math.sqrt(s2), math.sqrt(l2)
    return ResidualReport(rows, ell, approx.residual_slack, approx.mode)


def residual_identity_gap(approx: HarmonicApprox, ell: float | None = None) -> float:
    """max_g |right residual - (psi_N(g)/N + a_N/N - ell)| (exact mode)."""
    rep = residuals(approx, "right", ell)
    N = approx.N
    aN = approx.distortion.a[N]
    gap = 0.0
    for r in rep.rows:
        predicted = approx.psi_table[r.g][N] / N + aN / N - rep.ell
        gap = max(gap, abs(r.right - predicted))
    return gap


def psi_recursion_gap(phi_hat: Quasimorphism, mu: FiniteMeasure, n: int, g: Element,
                      powers: Sequence[FiniteMeasure]) -> float:
    """|sum_h psi~_n(g, h) mu(h) - psi_{n+1}(g)| with
    psi~_n(g, h) = sum_k d phi_hat(g, h k) mu^{*n}(k)."""
    G = mu.group
    pg = phi_hat(g)
    total = 0.0
    for h, p in mu.items():
        inner = 0.0
        for k, q in powers[n].items():
            hk = G.mul(h, k)
            inner += (phi_hat(G.mul(g, hk)) - pg - phi_hat(hk)) * float(q)
        total += inner * float(p)
    target = psi(phi_hat, mu, n + 1, g, "exact", powers=powers)[0]
    return abs(total - target)


# -- tameness ----------------------------------------------------------------------------

@dataclass
class TamenessVerdict:
    tame: bool
    horizon: int
    constant: float | None  # C for tame-to-horizon
    witness: tuple | None  # (n, g, value) for non-tame
    curve: list  # s_n, n = 0..horizon
    exact_horizon: int  # s_n is exact up to here, a certified lower bound beyond
    threshold: float
    ell: float

    def __str__(self):
        if self.tame:
            return f"tame-to-horizon({self.horizon}, C={self.constant:g})"
        n, _, v = self.witness
        return f"non-tame-witness(n={n}, value={v:g})"


def tameness_check(phi: Quasimorphism, mu: FiniteMeasure, horizon: int = 64, growth_threshold: float = 3.0, *,
                   ell: float | None = None, defect: float | None = None,
                   support_cap: int = 200_000) -> TamenessVerdict:
    """Semi-decide mu-tameness of phi up to a finite horizon.

    s_n = max over supp mu^{*n} of |phi(g) - n ell| is computed exactly while
    the support fits under ``support_cap``.  Beyond that, products of the
    extremal elements of shorter horizons (which lie in supp mu^{*n}) give
    certified lower bounds.  A witness is returned when s at the last horizon
    exceeds threshold * (1 + D) and s is strictly increasing along
    horizon/4, horizon/2, horizon.
    """
    G = mu.group
    D = phi.defect_bound if defect is None else defect
    if D is None:
        D = phi.defect_floor
    if ell is None:
        ell = 0.0 if is_symmetric(mu) else distortion(phi, mu, min(horizon, 8), defect=D).ell
    supp = list(mu.weights)
    hi = [G.identity()]  # maximizer of phi - n ell at each n
    lo = [G.identity()]
    curve = [abs(phi(G.identity()))]
    layer = {G.identity()}
    exact_h = 0
    n = 0
    while n < horizon:
        nxt_size = len(layer) * len(supp)
        if nxt_size > support_cap * 4:
            break
        layer = {G.mul(x, s) for x in layer for s in supp}
        n += 1
        if len(layer) > support_cap:
            n -= 1
            break
        best_hi = max(layer, key=lambda x: (phi(x), _neg_key(G, x)))
        best_lo = min(layer, key=lambda x: (phi(x), G.sort_key(x)))
        hi.append(best_hi)
        lo.append(best_lo)
        curve.append(max(abs(phi(best_hi) - n * ell), abs(phi(best_lo) - n * ell)))
        exact_h = n
    for n in range(exact_h + 1, horizon + 1):
        cands_hi = [G.mul(hi[m], hi[n - m]) for m in range(1, n)]
        cands_lo = [G.mul(lo[m], lo[n - m]) for m in range(1, n)]
        bh = max(cands_hi, key=lambda x: phi(x))
        bl = min(cands_lo, key=lambda x: phi(x))
        hi.append(bh)
        lo.append(bl)
        curve.append(max(abs(phi(bh) - n * ell), abs(phi(bl) - n * ell)))
    H = len(curve) - 1
    marks = [max(H // 4, 0), max(H // 2, 0), H]
    s = [curve[m] for m in marks]
    limit = growth_threshold * (1.0 + D)
    if s[2] > limit and s[0] < s[1] < s[2]:
        n = H
        g = hi[n] if abs(phi(hi[n]) - n * ell) >= abs(phi(lo[n]) - n * ell) else lo[n]
        return TamenessVerdict(False, H, None, (n, g, curve[n]), curve, exact_h, limit, ell)
    return TamenessVerdict(True, H, max(curve), None, curve, exact_h, limit, ell)


def _neg_key(G, x):
    # ties go to the shortlex-smallest element
    k = G.sort_key(x)
    return tuple(-v if isinstance(v, int) else tuple(-t for t in v) for v in k)
