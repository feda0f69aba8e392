"""Finitely supported probability measures on F_k and Z^d."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .group import CapacityError, Element, Group

FLOAT_MASS_TOL = 1e-12
DEFAULT_SUPPORT_CAP = 1_500_000


def _as_weight(w, exact: bool):
    if exact:
        if isinstance(w, str):
            return Fraction(w)
        return Fraction(w).limit_denominator(10**12) if isinstance(w, float) else Fraction(w)
    return float(Fraction(w)) if isinstance(w, str) else float(w)


class FiniteMeasure:
    """Sparse table element -> weight.

    In exact mode weights are Fractions and the total mass is exactly 1; in
    floating mode the mass is 1 within 1e-12.  ``retained_mass`` is the mass
    kept before renormalization when the measure came out of a truncated
    convolution power (1 otherwise).
    """

    __slots__ = ("group", "weights", "exact", "retained_mass", "_sampler")

    def __init__(self, group: Group, weights: Mapping[Element, object], exact: bool = False,
                 normalize: bool = False, retained_mass=1):
        self.group = group
        self.exact = exact
        w = {}
        for g, p in weights.items():
            p = _as_weight(p, exact)
            if p < 0:
                raise ValueError(f"negative weight {p} at {g}")
            if p > 0:
                w[g] = w.get(g, 0) + p
        total = sum(w.values())
        if total <= 0:
            raise ValueError("measure has no mass")
        if normalize:
            w = {g: p / total for g, p in w.items()}
        else:
            if exact and total != 1:
                raise ValueError(f"exact measure has total mass {total}")
            if not exact and abs(total - 1.0) > FLOAT_MASS_TOL:
                raise ValueError(f"measure has total mass {total}")
        self.weights = w
        self.retained_mass = retained_mass
        self._sampler = None

    # -- constructors ---------------------------------------------------------
    @classmethod
    def delta(cls, group: Group, g: Element, exact: bool = True) -> "FiniteMeasure":
        return cls(group, {g: 1}, exact=exact)

    @classmethod
    def uniform(cls, group: Group, elements: Iterable[Element], exact: bool = True) -> "FiniteMeasure":
        elements = list(elements)
        p = Fraction(1, len(elements)) if exact else 1.0 / len(elements)
        w: dict = {}
        for g in elements:
            w[g] = w.get(g, 0) + p
        return cls(group, w, exact=exact)

    @classmethod
    def simple_random_walk(cls, group: Group, exact: bool = True) -> "FiniteMeasure":
        return cls.uniform(group, group.symmetric_generators(), exact=exact)

    # -- basic queries ----------------------------------------------------------
    def __len__(self):
        return len(self.weights)

    def __getitem__(self, g):
        return self.weights.get(g, 0)

    def items(self):
        return self.weights.items()

    def support(self) -> list[Element]:
        return sorted(self.weights, key=self.group.sort_key)

    def total_mass(self):
        return sum(self.weights.values())

    def as_float(self) -> "FiniteMeasure":
        if not self.exact:
            return self
        return FiniteMeasure(self.group, {g: float(p) for g, p in self.weights.items()},
                             exact=False, normalize=True, retained_mass=float(self.retained_mass))

    def expectation(self, f) -> float:
        return sum(f(g) * p for g, p in self.weights.items())

    def max_length(self) -> int:
        return max(self.group.length(g) for g in self.weights)

    def is_nearest_neighbor_uniform(self) -> bool:
        gens = self.group.symmetric_generators()
        if len(self.weights) != len(gens) or set(self.weights) != set(gens):
            return False
        vals = list(self.weights.values())
        return max(vals) - min(vals) <= (0 if self.exact else FLOAT_MASS_TOL)

    def __repr__(self):
        G = self.group
        body = ", ".join(f"{G.format(g)}: {self.weights[g]}" for g in self.support()[:8])
        more = "" if len(self) <= 8 else f", ... ({len(self)} atoms)"
        return f"FiniteMeasure({{{body}{more}}})"

    def __eq__(self, other):
        return isinstance(other, FiniteMeasure) and self.group == other.group and self.weights == other.weights

    # -- sampling ---------------------------------------------------------------
    def _table(self):
        if self._sampler is None:
            atoms = self.support()
            p = np.array([float(self.weights[g]) for g in atoms])
            cdf = np.cumsum(p)
            cdf /= cdf[-1]
            self._sampler = (atoms, cdf)
        return self._sampler

    def sample_indices(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Indices into ``support()`` of ``size`` i.i.d. draws."""
        _, cdf = self._table()
        idx = np.searchsorted(cdf, rng.random(size), side="right")
        return np.minimum(idx, len(cdf) - 1)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        atoms, _ = self._table()
        if size is None:
            return atoms[int(self.sample_indices(rng, 1)[0])]
        return [atoms[i] for i in self.sample_indices(rng, size)]


def convolve(mu: FiniteMeasure, nu: FiniteMeasure) -> FiniteMeasure:
    """(mu * nu)(g) = sum_{hk = g} mu(h) nu(k)."""
    mu.group.check_same(nu.group)
    G = mu.group
    exact = mu.exact and nu.exact
    if not exact:
        mu, nu = mu.as_float(), nu.as_float()
    mul = G.mul
    out: dict = {}
    get = out.get
    right = list(nu.weights.items())
    for h, p in mu.weights.items():
        for k, q in right:
            g = mul(h, k)
            out[g] = get(g, 0) + p * q
    return FiniteMeasure(G, out, exact=exact, normalize=not exact)


def _truncate(measure_weights: dict, G: Group, tau, exact: bool):
    """Keep the heaviest atoms (ties by shortlex) until mass >= 1 - tau."""
    if not tau:
        return measure_weights, (Fraction(1) if exact else 1.0)
    order = sorted(measure_weights.items(), key=lambda kv: (-kv[1], G.sort_key(kv[0])))
    kept = {}
    mass = 0
    target = 1 - tau
    for g, p in order:
        kept[g] = p
        mass += p
        if mass >= target:
            break
    return kept, mass


def convolve_power(mu: FiniteMeasure, n: int, tau=0, cap: int = DEFAULT_SUPPORT_CAP) -> FiniteMeasure:
    """mu^{*n}, truncated by mass.

    The budget tau is split evenly over the n convolution steps, so the
    reported ``retained_mass`` (product of per-step retentions) is >= 1 - tau.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if not 0 <= tau < 1:
        raise ValueError("truncation threshold must satisfy 0 <= tau < 1")
    G = mu.group
    if n == 0:
        return FiniteMeasure.delta(G, G.identity(), exact=mu.exact)
    return convolution_powers(mu, n, tau, cap)[-1]


def convolution_powers(mu: FiniteMeasure, n: int, tau=0, cap: int = DEFAULT_SUPPORT_CAP) -> list[FiniteMeasure]:
    """[mu^{*0}, mu^{*1}, ..., mu^{*n}] sharing the same truncation rule."""
    G = mu.group
    exact = mu.exact
    if tau and exact:
        tau = Fraction(tau).limit_denominator(10**15) if isinstance(tau, float) else Fraction(tau)
    step_tau = tau / n if (tau and n) else 0
    out = [FiniteMeasure.delta(G, G.identity(), exact=exact)]
    cur = out[0]
    retained = Fraction(1) if exact else 1.0
    for _ in range(n):
        if tau == 0 and len(cur) * len(mu) > cap * 4:
            raise CapacityError(
                f"convolution power support would exceed cap {cap}; pass a truncation threshold tau > 0")
        nxt = convolve(cur, mu)
        if len(nxt) > cap and tau == 0:
            raise CapacityError(
                f"convolution power support {len(nxt)} exceeds cap {cap}; pass a truncation threshold tau > 0")
        w, kept = _truncate(nxt.weights, G, step_tau, exact)
        retained = retained * kept
        if kept != 1:
            nxt = FiniteMeasure(G, w, exact=exact, normalize=True, retained_mass=retained)
        else:
            nxt.retained_mass = retained
        out.append(nxt)
        cur = nxt
    return out


def mixture(measures: list[FiniteMeasure], coefficients=None) -> FiniteMeasure:
    G = measures[0].group
    exact = all(m.exact for m in measures)
    if coefficients is None:
        c = Fraction(1, len(measures)) if exact else 1.0 / len(measures)
        coefficients = [c] * len(measures)
    w: dict = {}
    for c, m in zip(coefficients, measures):
        for g, p in m.weights.items():
            w[g] = w.get(g, 0) + c * p
    return FiniteMeasure(G, w, exact=exact, normalize=not exact)


def pushforward_inverse(mu: FiniteMeasure) -> FiniteMeasure:
    G = mu.group
    return FiniteMeasure(G, {G.inv(g): p for g, p in mu.weights.items()}, exact=mu.exact,
                         normalize=not mu.exact)


def is_symmetric(mu: FiniteMeasure) -> bool:
    G = mu.group
    for g, p in mu.weights.items():
        q = mu.weights.get(G.inv(g), 0)
        if mu.exact:
            if p != q:
                return False
        elif abs(p - q) > FLOAT_MASS_TOL:
            return False
    return True


def symmetrize(mu: FiniteMeasure) -> FiniteMeasure:
    half = Fraction(1, 2) if mu.exact else 0.5
    return mixture([mu, pushforward_inverse(mu)], [half, half])


@dataclass(frozen=True)
class GenerationVerdict:
    generates: bool
    radius: int | None = None  # ball radius certified to be covered

    def __str__(self):
        return f"yes-by-radius({self.radius})" if self.generates else "unknown"


def support_generates(mu: FiniteMeasure, horizon: int) -> GenerationVerdict:
    """Semi-decide whether supp(mu) generates the group as a semigroup.

    Products of 1..horizon support elements are collected; if they contain
    every generator and its inverse the answer is yes, witnessed by the
    largest ball they (together with e) cover.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    G = mu.group
    supp = list(mu.weights)
    reached = set(supp)
    layer = set(supp)
    for _ in range(horizon - 1):
        layer = {G.mul(x, s) for x in layer for s in supp}
        reached |= layer
        if len(reached) > DEFAULT_SUPPORT_CAP:
            break
    reached.add(G.identity())
    r = 0
    while r < horizon and all(g in reached for g in G.sphere(r + 1)):
        r += 1
    if r >= 1:
        return GenerationVerdict(True, r)
    return GenerationVerdict(False)


def measure_from_spec(group: Group, spec) -> FiniteMeasure:
    """spec: {"atoms": [{"element": str, "weight": "p/q" | float}], "symmetric": bool},
    {"type": "simple-random-walk"}, {"type": "uniform", "elements": [str]} or a bare
    list of atoms."""
    kind = spec.get("type") if isinstance(spec, dict) else None
    if kind == "simple-random-walk":
        return FiniteMeasure.simple_random_walk(group)
    if kind == "uniform":
        return FiniteMeasure.uniform(group, [group.parse(str(x)) for x in spec["elements"]])
    if kind not in (None, "atoms"):
        raise ValueError(f"unknown measure type {kind!r}")
    atoms = spec["atoms"] if isinstance(spec, dict) else spec
    exact = all(isinstance(a["weight"], (str, int)) for a in atoms)
    w: dict = {}
    for a in atoms:
        g = group.parse(str(a["element"]))
        p = _as_weight(a["weight"], exact)
        w[g] = w.get(g, 0) + p
    mu = FiniteMeasure(group, w, exact=exact)
    if isinstance(spec, dict) and spec.get("symmetric"):
        mu = symmetrize(mu)
    return mu
