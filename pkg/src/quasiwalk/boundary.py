"""Boundary rays of free groups and the cocycle attached to a Cesaro approximation.

A boundary point of F_k is an infinite reduced word.  Rays are generated
lazily from their own random stream:

* ``hitting`` mode (uniform nearest-neighbour mu only) samples the exit law
  exactly: first letter uniform over 2k, each later letter uniform over the
  2k-1 letters that do not cancel;
* ``trajectory-limit`` mode runs the walk itself and emits a letter once the
  reduced prefix up to it has stayed unchanged for ``window`` steps.

The cocycle is alpha(g, xi) = lim_L [phi_N(g p_L) - phi_N(p_L)] along the
prefixes p_L of xi; every value carries the gap to the L/2 value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product as iproduct
from typing import Sequence

import numpy as np

from .group import Element, Group, free_inv, free_mul
from .harmonic import HarmonicApprox
from .measure import FiniteMeasure, support_generates
from .rng import stream

DEFAULT_WINDOW = 64
FLOAT_SLACK = 1e-9


class UnsupportedGroupError(ValueError):
    """Boundary operations are only defined for free groups here."""


class ModeError(ValueError):
    """Sampling mode does not fit the measure."""


def _require_free(G: Group) -> None:
    if G.kind != "free":
        raise UnsupportedGroupError(f"{G!r} has no boundary model; need a free group")


def cylinder_measure(k: int, word: Element) -> Fraction:
    """Hitting-measure mass of the cylinder of reduced ``word`` in F_k."""
    if not word:
        return Fraction(1)
    return Fraction(1, 2 * k) * Fraction(1, 2 * k - 1) ** (len(word) - 1)


class BoundaryRay:
    """Lazily extended infinite reduced word."""

    def __init__(self, mu: FiniteMeasure, mode: str, rng: np.random.Generator, *,
                 window: int = DEFAULT_WINDOW, key=()):
        G = mu.group
        _require_free(G)
        if mode not in ("hitting", "trajectory-limit"):
            raise ModeError(f"unknown ray mode {mode!r}")
        if mode == "hitting" and not mu.is_nearest_neighbor_uniform():
            raise ModeError("hitting mode needs the uniform nearest-neighbour measure")
        if window < 1:
            raise ValueError("stability window must be >= 1")
        self.group = G
        self.mu = mu
        self.mode = mode
        self.rng = rng
        self.window = int(window)
        self.key = key
        self.letters: list[int] = []
        self.violations = 0
        # trajectory-limit state: reduced word, write time per position, clock
        self._stack: list[int] = []
        self._stamp: list[int] = []
        self._t = 0

    @property
    def length(self) -> int:
        return len(self.letters)

    def prefix(self, L: int) -> Element:
        if L > len(self.letters):
            self.extend(L)
        return tuple(self.letters[:L])

    def extend(self, L: int) -> None:
        if self.mode == "hitting":
            self._extend_hitting(L)
        else:
            self._extend_trajectory(L)

    def _extend_hitting(self, L: int) -> None:
        k = self.group.rank
        out = self.letters
        if not out and L > 0:
            r = int(self.rng.integers(0, 2 * k))
            out.append(r // 2 + 1 if r % 2 == 0 else -(r // 2 + 1))
        need = L - len(out)
        if need <= 0:
            return
        # r in [0, 2k-1) indexes the letters other than the inverse of the previous one
        table = _successors(k)
        for r in self.rng.integers(0, 2 * k - 1, size=need):
            out.append(table[out[-1]][r])

    def _extend_trajectory(self, L: int) -> None:
        atoms, _ = self.mu._table()
        stack, stamp, out = self._stack, self._stamp, self.letters
        W = self.window
        while len(out) < L:
            for i in self.mu.sample_indices(self.rng, 256):
                self._t += 1
                for x in atoms[i]:
                    if stack and stack[-1] == -x:
                        stack.pop()
                        stamp.pop()
                    else:
                        stack.append(x)
                        stamp.append(self._t)
                if len(stack) < len(out):
                    # the walk backtracked into an emitted letter: restart from the emitted prefix
                    self.violations += 1
                    stack[:] = out
                    stamp[:] = [self._t] * len(out)
                while len(out) < len(stack) and self._t - stamp[len(out)] >= W:
                    out.append(stack[len(out)])
                if len(out) >= L:
                    break


_SUCCESSORS: dict = {}


def _successors(k: int) -> dict:
    t = _SUCCESSORS.get(k)
    if t is None:
        letters = [s for i in range(1, k + 1) for s in (i, -i)]
        t = {x: [s for s in letters if s != -x] for x in letters}
        _SUCCESSORS[k] = t
    return t


class TranslatedRay:
    """The ray h xi; its depth-L prefix is the reduced word h p_L.

    Its length is within |h| of L, and its tail is the tail of p_L, so
    differences against the untranslated ray at the same depth line up.
    """

    def __init__(self, h: Element, ray):
        self.h = tuple(h)
        self.base = ray
        self.group = ray.group
        self.key = (ray.key, "translate", self.h)

    def prefix(self, L: int) -> Element:
        return free_mul(self.h, self.base.prefix(L))


def sample_ray(mu: FiniteMeasure, mode: str, rng: np.random.Generator, *,
               window: int = DEFAULT_WINDOW, key=()) -> BoundaryRay:
    _require_free(mu.group)
    if mode == "trajectory-limit" and not support_generates(mu, 6).generates:
        raise ModeError("support of mu does not generate the group")
    return BoundaryRay(mu, mode, rng, window=window, key=key)


def sample_rays(mu: FiniteMeasure, count: int, mode: str = "hitting", *, seed: int = 0,
                window: int = DEFAULT_WINDOW, label: str = "ray") -> list[BoundaryRay]:
    """Rays 0..count-1, ray i driven by stream(seed, label, i)."""
    _require_free(mu.group)
    if mode == "trajectory-limit" and not support_generates(mu, 6).generates:
        raise ModeError("support of mu does not generate the group")
    return [BoundaryRay(mu, mode, stream(seed, label, i), window=window, key=(label, i))
            for i in range(count)]


# -- cocycle -------------------------------------------------------------------------

@dataclass
class CocycleValue:
    value: float
    gap: float  # |value(L) - value(L/2)|
    L: int


def _sample_for(approx: HarmonicApprox, rng, m: int | None = None):
    return approx.cesaro_sample(rng, m)


def cocycle(approx: HarmonicApprox, g: Element, ray, L: int, sample=None, *,
            rng: np.random.Generator | None = None) -> CocycleValue:
    """phi_N(g p_L) - phi_N(p_L), with the same Cesaro atoms at L and L/2."""
    G = approx.group
    _require_free(G)
    if L < G.length(g):
        raise ValueError(f"prefix length {L} shorter than |g| = {G.length(g)}")
    if sample is None:
        if rng is None and approx.cesaro_measure is None:
            rng = stream(approx.seed, "cocycle", _key_path(ray.key), g)
        sample = _sample_for(approx, rng)
    v = approx.difference(g, ray.prefix(L), sample)
    half = max(L // 2, G.length(g))
    v_half = approx.difference(g, ray.prefix(half), sample) if half < L else v
    return CocycleValue(v, abs(v - v_half), L)


def _key_path(key) -> str:
    return repr(key)


@dataclass
class IdentityRow:
    g: Element
    h: Element
    residual: float
    gap_sum: float


@dataclass
class IdentityReport:
    rows: list
    L: int

    @property
    def max_residual(self) -> float:
        return max(r.residual for r in self.rows)

    @property
    def total_gap(self) -> float:
        return math.fsum(r.gap_sum for r in self.rows)

    def within_gaps(self, slack: float = FLOAT_SLACK) -> bool:
        """Every residual is covered by its own summed gaps (plus float slack)."""
        return all(r.residual <= r.gap_sum + slack for r in self.rows)


def cocycle_identity_check(approx: HarmonicApprox, triples: Sequence[tuple], L: int, *,
                           seed: int = 0) -> IdentityReport:
    """|alpha(gh, xi) - alpha(g, h xi) - alpha(h, xi)| per triple (g, h, ray).

    The three terms share one Cesaro sample drawn from stream(seed, "identity", i).
    """
    rows = []
    G = approx.group
    for i, (g, h, ray) in enumerate(triples):
        rng = None if approx.cesaro_measure is not None else stream(seed, "identity", i)
        sample = _sample_for(approx, rng)
        gh = G.mul(g, h)
        Lr = max(L, G.length(gh), G.length(g), G.length(h))
        a_gh = cocycle(approx, gh, ray, Lr, sample)
        a_g = cocycle(approx, g, TranslatedRay(h, ray), Lr, sample)
        a_h = cocycle(approx, h, ray, Lr, sample)
        res = abs(a_gh.value - a_g.value - a_h.value)
        rows.append(IdentityRow(g, h, res, a_gh.gap + a_g.gap + a_h.gap))
    return IdentityReport(rows, L)


def random_triples(G: Group, rays: Sequence, radius: int, seed: int = 0) -> list[tuple]:
    """(g, h, ray) with g, h uniform on ball(radius), one per ray."""
    ball = G.enumerate_ball(radius)
    rng = stream(seed, "triples")
    idx = rng.integers(0, len(ball), size=(len(rays), 2))
    return [(ball[i], ball[j], r) for (i, j), r in zip(idx, rays)]


# -- integral representation -----------------------------------------------------------

def value_estimate(approx: HarmonicApprox, x: Element, m: int, rng) -> tuple[float, float]:
    """(phi_N(x), standard error); exact in exact mode."""
    if approx.cesaro_measure is not None:
        return approx(x), 0.0
    G = approx.group
    ph = approx.phi_hat
    sample = approx.cesaro_sample(rng, m)
    vals = np.array([ph(G.mul(x, h)) - ph(h) for h, _ in sample])
    se = float(vals.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return float(vals.mean()), se


@dataclass
class IntegralCheck:
    g: Element
    mean: float
    se: float
    reference: float
    reference_se: float
    discrepancy: float
    max_gap: float
    max_excursion: float  # max |alpha(g, xi) - phi_N(g)| over sampled xi
    rays: int
    L: int
    values: list = field(repr=False, default_factory=list)
    gaps: list = field(repr=False, default_factory=list)

    @property
    def combined_se(self) -> float:
        return math.hypot(self.se, self.reference_se)

    def passes(self, k: float = 3.0) -> bool:
        return self.discrepancy <= k * self.combined_se + FLOAT_SLACK


def integral_representation_check(approx: HarmonicApprox, g: Element, rays: Sequence, L: int, *,
                                  reference_samples: int = 20000, seed: int = 0) -> IntegralCheck:
    """Mean of alpha(g, xi) over the rays against phi_N(g).

    Each ray gets its own Cesaro sample, so the spread of the alpha values
    already contains the Cesaro sampling noise and the SE is honest.
    """
    vals, gaps = [], []
    for r in rays:
        rng = None if approx.cesaro_measure is not None else stream(seed, "intrep", g, _key_path(r.key))
        c = cocycle(approx, g, r, L, rng=rng)
        vals.append(c.value)
        gaps.append(c.gap)
    vals = np.asarray(vals)
    M = len(vals)
    mean = math.fsum(vals.tolist()) / M
    se = float(vals.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    ref, ref_se = value_estimate(approx, g, reference_samples, stream(seed, "reference", g))
    if not g:
        ref, ref_se = 0.0, 0.0
    return IntegralCheck(g, mean, se, ref, ref_se, abs(ref - mean), max(gaps, default=0.0),
                         float(np.max(np.abs(vals - ref))) if M else 0.0, M, L, vals.tolist(), gaps)


@dataclass
class BoundaryVariance:
    sigma2: float
    se: float
    ell: float
    rays: int
    L: int
    values: np.ndarray = field(repr=False, default=None)

    @property
    def sigma(self) -> float:
        return math.sqrt(max(self.sigma2, 0.0))

    @property
    def sigma_se(self) -> float:
        s = self.sigma
        return self.se / (2 * s) if s > 0 else 0.0


def boundary_variance(approx: HarmonicApprox, rays: Sequence, L: int, *, seed: int = 0,
                      ell: float | None = None) -> BoundaryVariance:
    """sigma^2 = E (alpha(g, xi) - ell)^2 with g ~ mu, xi ~ nu.

    In Monte Carlo mode each term is the product of two estimates built from
    independent Cesaro samples, which is unbiased for the square.
    """
    G = approx.group
    _require_free(G)
    ell = approx.ell if ell is None else ell
    mu = approx.mu
    exact = approx.cesaro_measure is not None
    terms = []
    for r in rays:
        path = _key_path(r.key)
        g = mu.sample(stream(seed, "bvar-g", path))
        Lr = max(L, G.length(g))
        if exact:
            a = cocycle(approx, g, r, Lr).value - ell
            terms.append(a * a)
        else:
            a1 = cocycle(approx, g, r, Lr, rng=stream(seed, "bvar-A", path)).value - ell
            a2 = cocycle(approx, g, r, Lr, rng=stream(seed, "bvar-B", path)).value - ell
            terms.append(a1 * a2)
    t = np.asarray(terms)
    M = len(t)
    s2 = math.fsum(t.tolist()) / M
    se = float(t.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return BoundaryVariance(s2, se, ell, M, L, t)


def homomorphism_boundary_variance(phi, mu: FiniteMeasure, ell: float = 0.0) -> float:
    """Closed form sum_g (phi(g) - ell)^2 mu(g) for a homomorphism."""
    return sum((phi(g) - ell) ** 2 * float(p) for g, p in mu.items())


# -- stationarity and cylinders -----------------------------------------------------------

def _all_reduced(k: int, length: int):
    letters = [s for i in range(1, k + 1) for s in (i, -i)]
    if length == 0:
        yield ()
        return
    for w in iproduct(letters, repeat=length):
        if all(w[i + 1] != -w[i] for i in range(length - 1)):
            yield w


def cylinders(k: int, max_length: int) -> list[Element]:
    return [w for n in range(1, max_length + 1) for w in _all_reduced(k, n)]


def translated_cylinder_mass(k: int, g: Element, word: Element) -> Fraction:
    """nu({xi : g xi starts with word}) by exact cylinder calculus."""
    total = Fraction(0)
    m = len(g) + len(word)
    for p in _all_reduced(k, m):
        if free_mul(g, p)[: len(word)] == word:
            total += cylinder_measure(k, p)
    return total


@dataclass
class StationarityRow:
    word: Element
    lhs: float
    rhs: float
    residual: float
    se: float = 0.0


def stationarity_check(mu: FiniteMeasure, max_length: int = 3, *, rays: Sequence | None = None,
                       words: Sequence[Element] | None = None) -> list[StationarityRow]:
    """Residual of sum_g mu(g) nu(g^-1 C_w) = nu(C_w) on cylinder indicators.

    Without rays the left side is computed exactly with Fractions; with rays
    it is a Monte Carlo average over g ~ mu (one draw per ray) and xi = ray.
    """
    G = mu.group
    _require_free(G)
    if not mu.is_nearest_neighbor_uniform():
        raise ModeError("stationarity of the hitting measure needs the uniform nearest-neighbour measure")
    k = G.rank
    words = list(words) if words is not None else [()] + cylinders(k, max_length)
    rows = []
    if rays is None:
        wts = {g: Fraction(p) for g, p in mu.items()}
        for w in words:
            lhs = sum(p * translated_cylinder_mass(k, g, w) for g, p in wts.items())
            rhs = cylinder_measure(k, w)
            rows.append(StationarityRow(w, float(lhs), float(rhs), float(abs(lhs - rhs))))
        return rows
    gs = [mu.sample(stream(0, "stationarity", _key_path(r.key))) for r in rays]
    for w in words:
        hits = np.array([free_mul(g, r.prefix(len(g) + len(w)))[: len(w)] == w for g, r in zip(gs, rays)],
                        dtype=float)
        lhs = float(hits.mean())
        rhs = float(cylinder_measure(k, w))
        se = math.sqrt(max(rhs * (1 - rhs), 0.0) / len(rays))
        rows.append(StationarityRow(w, lhs, rhs, abs(lhs - rhs), se))
    return rows


@dataclass
class CylinderFrequency:
    word: Element
    frequency: float
    expected: float
    se: float

    def within(self, k: float = 3.0) -> bool:
        return abs(self.frequency - self.expected) <= k * self.se


def cylinder_frequencies(rays: Sequence, max_length: int = 2) -> list[CylinderFrequency]:
    """Empirical ray frequencies of every cylinder up to ``max_length``."""
    G = rays[0].group
    k = G.rank
    counts: dict = {}
    for r in rays:
        p = r.prefix(max_length)
        for n in range(1, max_length + 1):
            counts[p[:n]] = counts.get(p[:n], 0) + 1
    M = len(rays)
    out = []
    for w in cylinders(k, max_length):
        q = float(cylinder_measure(k, w))
        out.append(CylinderFrequency(w, counts.get(w, 0) / M, q, math.sqrt(q * (1 - q) / M)))
    return out


# -- Radon-Nikodym kernel --------------------------------------------------------------------

def rn_derivative(g: Element, ray, L: int, k: int) -> float:
    """d(g_* nu)/d nu at xi via the cylinder ratio nu(g^-1 C_L)/nu(C_L).

    g^-1 C_L is the cylinder of the reduced word g^-1 p_L as soon as L
    exceeds |g| (the cancellation cannot eat the whole prefix), so the ratio
    is (2k-1)^(|p_L| - |g^-1 p_L|).
    """
    p = ray.prefix(L)
    m = len(free_mul(free_inv(g), p))
    if m == 0 or len(p) <= len(g):
        raise ValueError("prefix too short for the cylinder ratio")
    return float(Fraction(2 * k - 1) ** (len(p) - m))


def kernel_weights(K: int) -> np.ndarray:
    """c_j with sigma_K = sum_{j=1..K} c_j rho(g^j, .), c_j = (1/K) sum_{k=j..K} 1/k."""
    inv = 1.0 / np.arange(1, K + 1)
    tail = np.cumsum(inv[::-1])[::-1]
    return tail / K


@dataclass
class KernelCheck:
    g: Element
    reconstruction: float
    se: float
    target: float  # finite-depth expectation (1/K) sum_k (phi_N(g^{k+1}) - phi_N(g))/k
    target_se: float
    phi_hat: float
    discrepancy: float  # |reconstruction - target|
    homogenization_gap: float  # |reconstruction - phi_hat(g)|
    kernel_mean: float  # sample mean of sigma_K / proposal density, should be ~1
    rays: int
    K: int
    L: int

    @property
    def combined_se(self) -> float:
        return math.hypot(self.se, self.target_se)

    def passes(self, k: float = 3.0) -> bool:
        return self.discrepancy <= k * self.combined_se + FLOAT_SLACK


def rn_kernel_check(approx: HarmonicApprox, g: Element, rays: int, *, K: int = 16, L: int = 128,
                    seed: int = 0, reference_samples: int = 4000) -> KernelCheck:
    """Reconstruct phi_hat(g) as int alpha(g, xi) sigma_K(g, xi) d nu(xi).

    sigma_K is the double Cesaro average of the cylinder-ratio derivatives
    rho(g^j, .), j <= K.  Because rho(g^j, .) has variance growing like
    (2k-1)^j under nu, xi is drawn from the defensive mixture
    1/2 nu + 1/2 sigma_K nu (the second half realized as g^j xi' with
    j ~ c_j) and weighted by sigma_K / (1/2 + sigma_K / 2), which is bounded
    by 2.
    """
    mu = approx.mu
    G = mu.group
    _require_free(G)
    if not mu.is_nearest_neighbor_uniform():
        raise ModeError("the kernel check needs the uniform nearest-neighbour measure")
    k = G.rank
    c = kernel_weights(K)
    powers = [G.power(g, j) for j in range(K + 2)]
    L_rho = L + (K + 1) * G.length(g)
    rng = stream(seed, "kernel", g)
    est, wts, gaps = [], [], []
    for i in range(rays):
        base = BoundaryRay(mu, "hitting", stream(seed, "kernel-ray", g, i), key=("kernel", i))
        if rng.random() < 0.5:
            xi = base
        else:
            j = int(rng.choice(np.arange(1, K + 1), p=c / c.sum()))
            xi = TranslatedRay(powers[j], base)
        sigma = float(sum(cj * rn_derivative(powers[j], xi, L_rho, k) for j, cj in zip(range(1, K + 1), c)))
        w = sigma / (0.5 + 0.5 * sigma)
        a = cocycle(approx, g, xi, max(L, G.length(g)), rng=stream(seed, "kernel-alpha", g, i))
        est.append(a.value * w)
        wts.append(w)
        gaps.append(a.gap)
    est = np.asarray(est)
    recon = math.fsum(est.tolist()) / rays
    se = float(est.std(ddof=1) / math.sqrt(rays)) if rays > 1 else 0.0
    # finite-K expectation: sum_j c_j E alpha(g, g^j xi) = (1/K) sum_k (phi_N(g^{k+1}) - phi_N(g))/k
    ref_rng = stream(seed, "kernel-target", g)
    vals, ses = [], []
    for kk in range(1, K + 2):
        v, s = value_estimate(approx, powers[kk], reference_samples, ref_rng)
        vals.append(v)
        ses.append(s)
    # vals[i] estimates phi_N(g^(i+1)); vals[0] enters every term
    H = sum(1.0 / kk for kk in range(1, K + 1))
    target = (sum(vals[kk] / kk for kk in range(1, K + 1)) - H * vals[0]) / K
    target_se = math.sqrt(sum((ses[kk] / kk) ** 2 for kk in range(1, K + 1)) + (H * ses[0]) ** 2) / K
    if not g:
        target, target_se = 0.0, 0.0
    ph = approx.phi_hat(g)
    return KernelCheck(g, recon, se, target, target_se, ph, abs(recon - target), abs(recon - ph),
                       float(np.mean(wts)), rays, K, L)
