"""Evaluable quasimorphisms and their basic invariants.

Built-in families: homomorphisms, Brooks counting quasimorphisms on free
groups, deterministic bounded noise, linear combinations and power-doubling
homogenizations of any of these.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .group import AlphabetError, Element, FreeGroup, Group, cyclic_split, free_inv


CACHE_MAX_WORD = 24
CACHE_MAX_ENTRIES = 2_000_000


class ConfigError(ValueError):
    """Raised for missing or inconsistent construction parameters."""


class Quasimorphism:
    """A real function on a group with defect bookkeeping.

    ``defect_bound`` is an assumed ceiling D+, ``defect_floor`` a certified
    lower bound D- that only ever grows.
    """

    def __init__(self, group: Group, *, defect_bound: float | None = None,
                 homogeneous: bool = False, description: str = ""):
        self.group = group
        self.defect_bound = defect_bound
        self.defect_floor = 0.0
        self.homogeneous = homogeneous
        self.description = description

    def __call__(self, g: Element) -> float:
        return self.evaluate(g)

    def evaluate(self, g: Element) -> float:
        raise NotImplementedError

    def power_value(self, g: Element, n: int) -> float:
        """phi(g**n); subclasses override with closed forms."""
        return self.evaluate(self.group.power(g, n))

    def raise_floor(self, value: float) -> None:
        # monotone max; a single float store is atomic under the GIL
        if value > self.defect_floor:
            self.defect_floor = value

    def __repr__(self):
        return f"<{type(self).__name__} {self.description}>"


class Homomorphism(Quasimorphism):
    """g -> sum_i c_i * (exponent sum of generator i)."""

    def __init__(self, group: Group, coefficients: Sequence[float]):
        if len(coefficients) != group.rank:
            raise AlphabetError(f"need {group.rank} coefficients, got {len(coefficients)}")
        self.coefficients = tuple(float(c) for c in coefficients)
        super().__init__(group, defect_bound=0.0, homogeneous=True,
                         description=f"hom{list(self.coefficients)}")
        if group.kind == "free":
            c = (0.0,) + self.coefficients
            self._letter = {i: c[i] for i in range(1, group.rank + 1)}
            self._letter.update({-i: -c[i] for i in range(1, group.rank + 1)})

    def evaluate(self, g):
        if self.group.kind == "free":
            lt = self._letter
            return float(sum(lt[x] for x in g))
        return float(sum(c * a for c, a in zip(self.coefficients, g)))

    def power_value(self, g, n):
        return n * self.evaluate(g)


def count_subword(word: Element, pattern: Element) -> int:
    """Occurrences of pattern as a contiguous subword, overlaps allowed."""
    m = len(pattern)
    if m == 0 or m > len(word):
        return 0
    if m == 1:
        return word.count(pattern[0])
    if m == 2:
        p0, p1 = pattern
        return sum(1 for x, y in zip(word, word[1:]) if x == p0 and y == p1)
    return sum(1 for i in range(len(word) - m + 1) if word[i : i + m] == pattern)


def count_cyclic(word: Element, pattern: Element) -> int:
    """Occurrences of pattern in the cyclic word, one per starting position."""
    n = len(word)
    if n == 0:
        return 0
    m = len(pattern)
    reps = -(-(n + m - 1) // n)
    ext = (word * reps)[: n + m - 1]
    return count_subword(ext, pattern)


class BrooksQuasimorphism(Quasimorphism):
    """phi_w = C_w - C_{w^-1} on a free group (small counting, overlaps allowed)."""

    def __init__(self, group: FreeGroup, word: Element, defect_bound: float | None = None):
        if group.kind != "free":
            raise AlphabetError("Brooks quasimorphisms need a free group")
        word = tuple(word)
        if not word or group.reduce(word) != word:
            raise ValueError("Brooks word must be nonempty and reduced")
        if defect_bound is None:
            defect_bound = 6.0 * (len(word) - 1) + 2.0
        self.word = word
        self.inverse_word = free_inv(word)
        super().__init__(group, defect_bound=float(defect_bound),
                         description=f"brooks[{group.format(word)}]")

    def evaluate(self, g):
        return float(count_subword(g, self.word) - count_subword(g, self.inverse_word))

    def cyclic_value(self, c: Element) -> int:
        return count_cyclic(c, self.word) - count_cyclic(c, self.inverse_word)

    def power_value(self, g, n):
        if n < 0:
            return self.power_value(free_inv(g), -n)
        if n == 0 or not g:
            return 0.0
        p, c = cyclic_split(g)
        m = len(self.word)
        # beyond k0 copies the count grows by one cyclic count per copy of c
        k0 = -(-m // len(c)) + 1
        if n <= k0:
            return self.evaluate(p + c * n + free_inv(p))
        base = self.evaluate(p + c * k0 + free_inv(p))
        return base + (n - k0) * self.cyclic_value(c)


def _hash_unit(seed: int, g: Element) -> float:
    h = hashlib.blake2b(struct.pack(f"<q{len(g)}q", seed, *g), digest_size=8).digest()
    return int.from_bytes(h, "little") / 2.0**64


class BoundedNoise(Quasimorphism):
    """Deterministic pseudo-random function with values in [-A, A].

    The value at the identity is 0 so that the function is normalized.
    """

    def __init__(self, group: Group, amplitude: float, seed: int = 0):
        self.amplitude = float(amplitude)
        self.seed = int(seed)
        super().__init__(group, defect_bound=3.0 * self.amplitude,
                         description=f"noise[A={amplitude},seed={seed}]")

    def evaluate(self, g):
        if g == self.group.identity():
            return 0.0
        return self.amplitude * (2.0 * _hash_unit(self.seed, g) - 1.0)


class Combination(Quasimorphism):
    def __init__(self, terms: Sequence[tuple[float, Quasimorphism]]):
        if not terms:
            raise ConfigError("empty combination")
        group = terms[0][1].group
        for _, q in terms:
            group.check_same(q.group)
        self.terms = [(float(c), q) for c, q in terms]
        bounds = [q.defect_bound for _, q in self.terms]
        bound = None if any(b is None for b in bounds) else sum(abs(c) * b for (c, _), b in zip(self.terms, bounds))
        homog = all(q.homogeneous for _, q in self.terms)
        super().__init__(group, defect_bound=bound, homogeneous=homog,
                         description=" + ".join(f"{c}*{q.description}" for c, q in self.terms))

    def evaluate(self, g):
        return sum(c * q.evaluate(g) for c, q in self.terms)

    def power_value(self, g, n):
        return sum(c * q.power_value(g, n) for c, q in self.terms)


def combine(terms: Sequence[tuple[float, Quasimorphism]]) -> Combination:
    return Combination(terms)


@dataclass(frozen=True)
class HomogenizationCertificate:
    power: int  # N = 2**depth
    defect: float
    tolerance: float  # |phi_hat(g) - phi(g^N)/N| <= D/N


class Homogenization(Quasimorphism):
    """g -> phi(g^N)/N with N = 2**depth; within D/N of the true homogenization."""

    def __init__(self, base: Quasimorphism, depth: int, defect: float):
        self.base = base
        self.depth = int(depth)
        self.power = 2**self.depth
        self.tolerance = defect / self.power
        # |d phi_hat| <= 2 D(phi) for the exact limit, plus 3 D/N of slack
        super().__init__(base.group, defect_bound=2.0 * defect + 3.0 * self.tolerance,
                         homogeneous=base.homogeneous,
                         description=f"homog[{base.description}, 2^{depth}]")
        self.approximately_homogeneous = True
        self.base_defect = defect
        self._cache: dict = {}

    def evaluate(self, g):
        v = self._cache.get(g)
        if v is None:
            v = self.base.power_value(g, self.power) / self.power
            if len(g) <= CACHE_MAX_WORD and len(self._cache) < CACHE_MAX_ENTRIES:
                self._cache[g] = v
        return v

    def evaluate_by_doubling(self, g) -> float:
        """Same value via explicit repeated squaring of the word."""
        x = g
        for _ in range(self.depth):
            x = self.group.mul(x, x)
        return self.base.evaluate(x) / self.power

    def power_value(self, g, n):
        return self.evaluate(self.group.power(g, n)) if not self.base.homogeneous else n * self.evaluate(g)


def homogenize(phi: Quasimorphism, depth: int, defect: float | None = None):
    """Return (phi_hat, certificate)."""
    if defect is None:
        defect = phi.defect_bound
    if defect is None:
        raise ConfigError(f"homogenizing {phi.description} needs a defect bound")
    defect = max(float(defect), phi.defect_floor)
    if phi.homogeneous:
        cert = HomogenizationCertificate(1, defect, 0.0)
        return phi, cert
    if isinstance(phi, BoundedNoise):
        # a bounded function homogenizes to 0 exactly
        zero = Homomorphism(phi.group, [0.0] * phi.group.rank)
        return zero, HomogenizationCertificate(1, defect, 0.0)
    if isinstance(phi, Combination):
        parts = [(c, homogenize(q, depth, q.defect_bound if q.defect_bound is not None else defect))
                 for c, q in phi.terms]
        hat = Combination([(c, h) for c, (h, _) in parts])
        hat.approximately_homogeneous = True
        tol = sum(abs(c) * cert.tolerance for c, (_, cert) in parts)
        hat.defect_bound = 2.0 * defect + 3.0 * tol
        return hat, HomogenizationCertificate(2**int(depth), defect, tol)
    hat = Homogenization(phi, depth, defect)
    return hat, HomogenizationCertificate(hat.power, defect, hat.tolerance)


def differential(phi: Quasimorphism, g: Element, h: Element) -> float:
    G = phi.group
    return phi(G.mul(g, h)) - phi(g) - phi(h)


def defect_lower_bound(phi: Quasimorphism, radius: int = 2, pairs: int = 0,
                       seed: int = 0, pair_length: int = 12) -> float:
    """max |d phi| over all pairs in ball(radius) plus random pairs.

    Random pairs are reduced words of length up to ``pair_length`` drawn from
    a fixed stream, so results are monotone in ``radius`` and ``pairs``.
    """
    G = phi.group
    ball = G.enumerate_ball(radius)
    vals = {g: phi(g) for g in ball}
    best = 0.0
    for g in ball:
        pg = vals[g]
        for h in ball:
            v = abs(phi(G.mul(g, h)) - pg - vals[h])
            if v > best:
                best = v
    if pairs:
        rng = np.random.Generator(np.random.Philox(key=[seed, 0x5EED]))
        gens = G.symmetric_generators()
        for _ in range(pairs):
            g = G.product(gens[i] for i in rng.integers(len(gens), size=rng.integers(pair_length + 1)))
            h = G.product(gens[i] for i in rng.integers(len(gens), size=rng.integers(pair_length + 1)))
            v = abs(differential(phi, g, h))
            if v > best:
                best = v
    phi.raise_floor(best)
    return best


def quasimorphism_from_spec(group: Group, spec: dict) -> Quasimorphism:
    kind = spec.get("type")
    if kind == "hom":
        q: Quasimorphism = Homomorphism(group, spec["coefficients"])
    elif kind == "brooks":
        q = BrooksQuasimorphism(group, group.parse(spec["word"]), spec.get("defect_bound"))
    elif kind == "combine":
        q = combine([(t.get("coefficient", 1.0), quasimorphism_from_spec(group, t)) for t in spec["terms"]])
    elif kind == "bounded-noise":
        q = BoundedNoise(group, spec["amplitude"], spec.get("seed", 0))
    else:
        raise ConfigError(f"unknown quasimorphism type {kind!r}")
    if spec.get("homogenize"):
        q, _ = homogenize(q, int(spec.get("doubling_depth", 6)), spec.get("defect_bound"))
    return q
