"""Exact arithmetic in free groups F_k and free abelian groups Z^d.

Elements are plain tuples so they can serve directly as dictionary keys:

* free group: a freely reduced tuple of nonzero ints, ``+i`` for the i-th
  generator (1-based) and ``-i`` for its inverse; the identity is ``()``.
* free abelian group: a length-d tuple of exponents.

Both encodings are canonical, so equal elements compare equal.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Sequence

Element = tuple


class AlphabetError(ValueError):
    """Symbol or element does not belong to the group's alphabet."""


class CapacityError(RuntimeError):
    """An enumeration or convolution would exceed the configured size cap."""


DEFAULT_BALL_CAP = 2_000_000


class Group:
    """Common interface of the two supported group families."""

    kind: str
    rank: int
    names: tuple[str, ...]

    def __init__(self, names: Sequence[str]):
        names = tuple(names)
        if len(names) < 1:
            raise ValueError("rank must be at least 1")
        if len(set(names)) != len(names):
            raise ValueError(f"generator names must be distinct: {names}")
        for nm in names:
            if not nm or not nm.isidentifier() or nm == "e":
                raise ValueError(f"invalid generator name {nm!r}")
        self.names = names
        self.rank = len(names)
        self._index = {nm: i + 1 for i, nm in enumerate(names)}

    def __eq__(self, other):
        return type(self) is type(other) and self.names == other.names

    def __hash__(self):
        return hash((type(self).__name__, self.names))

    def __repr__(self):
        return f"{type(self).__name__}({list(self.names)!r})"

    def check_same(self, other: "Group") -> None:
        if self != other:
            raise AlphabetError(f"alphabet mismatch: {self!r} vs {other!r}")

    # -- text syntax ---------------------------------------------------------
    def _letters(self, text: str) -> list[int]:
        letters = []
        for tok in text.split():
            if tok == "e":
                continue
            exp = 1
            name = tok
            if "^" in tok:
                name, _, p = tok.partition("^")
                try:
                    exp = int(p)
                except ValueError:
                    raise AlphabetError(f"bad exponent in token {tok!r}") from None
            if name not in self._index:
                raise AlphabetError(f"unknown symbol {name!r} for {self!r}")
            i = self._index[name]
            letters.extend([i if exp > 0 else -i] * abs(exp))
        return letters

    def parse(self, text: str) -> Element:
        """Parse ``"a b^-1 a"`` style text; ``e`` is the identity."""
        return self.reduce(self._letters(text))

    # -- to be provided by subclasses -----------------------------------------
    def identity(self) -> Element:
        raise NotImplementedError

    def reduce(self, raw: Iterable[int]) -> Element:
        raise NotImplementedError

    def mul(self, g: Element, h: Element) -> Element:
        raise NotImplementedError

    def inv(self, g: Element) -> Element:
        raise NotImplementedError

    def length(self, g: Element) -> int:
        raise NotImplementedError

    def format(self, g: Element) -> str:
        raise NotImplementedError

    def sphere(self, radius: int) -> list[Element]:
        raise NotImplementedError

    def ball_size(self, radius: int) -> int:
        raise NotImplementedError

    def sort_key(self, g: Element):
        """Deterministic shortlex total order."""
        return (self.length(g), g)

    def generators(self) -> list[Element]:
        return [self.reduce([i]) for i in range(1, self.rank + 1)]

    def symmetric_generators(self) -> list[Element]:
        out = []
        for i in range(1, self.rank + 1):
            out.append(self.reduce([i]))
            out.append(self.reduce([-i]))
        return out

    def power(self, g: Element, n: int) -> Element:
        """g**n by repeated squaring."""
        if n < 0:
            return self.power(self.inv(g), -n)
        result = self.identity()
        base = g
        while n:
            if n & 1:
                result = self.mul(result, base)
            n >>= 1
            if n:
                base = self.mul(base, base)
        return result

    def product(self, elements: Iterable[Element]) -> Element:
        out = self.identity()
        for x in elements:
            out = self.mul(out, x)
        return out

    def enumerate_ball(self, radius: int, cap: int = DEFAULT_BALL_CAP) -> list[Element]:
        """All elements of word length <= radius, in shortlex order."""
        if radius < 0:
            raise ValueError("radius must be >= 0")
        size = self.ball_size(radius)
        if size > cap:
            raise CapacityError(f"ball of radius {radius} has {size} elements (cap {cap})")
        out = []
        for r in range(radius + 1):
            out.extend(self.sphere(r))
        return out


class FreeGroup(Group):
    kind = "free"

    def __init__(self, names: Sequence[str] | int):
        if isinstance(names, int):
            names = "abcdefghijklmnopqrstuvwxyz"[:names] if names <= 26 else [f"x{i}" for i in range(names)]
        super().__init__(list(names))

    def identity(self) -> Element:
        return ()

    def reduce(self, raw: Iterable[int]) -> Element:
        stack: list[int] = []
        k = self.rank
        for x in raw:
            if x == 0 or abs(x) > k:
                raise AlphabetError(f"letter {x} outside alphabet of rank {k}")
            if stack and stack[-1] == -x:
                stack.pop()
            else:
                stack.append(x)
        return tuple(stack)

    def mul(self, g: Element, h: Element) -> Element:
        return free_mul(g, h)

    def inv(self, g: Element) -> Element:
        return free_inv(g)

    def length(self, g: Element) -> int:
        return len(g)

    def format(self, g: Element) -> str:
        if not g:
            return "e"
        return " ".join(self.names[x - 1] if x > 0 else self.names[-x - 1] + "^-1" for x in g)

    def sphere(self, radius: int) -> list[Element]:
        if radius == 0:
            return [()]
        letters = [x for i in range(1, self.rank + 1) for x in (i, -i)]
        out = []

        def grow(prefix):
            if len(prefix) == radius:
                out.append(tuple(prefix))
                return
            for x in letters:
                if prefix and prefix[-1] == -x:
                    continue
                prefix.append(x)
                grow(prefix)
                prefix.pop()

        grow([])
        out.sort(key=self.sort_key)
        return out

    def ball_size(self, radius: int) -> int:
        k2 = 2 * self.rank
        return 1 + sum(k2 * (k2 - 1) ** (r - 1) for r in range(1, radius + 1))

    def sort_key(self, g: Element):
        return (len(g), tuple(abs(x) * 2 - (x > 0) for x in g))


class FreeAbelianGroup(Group):
    kind = "free-abelian"

    def __init__(self, names: Sequence[str] | int):
        if isinstance(names, int):
            names = ["t"] if names == 1 else [f"t{i}" for i in range(1, names + 1)]
        super().__init__(list(names))

    def identity(self) -> Element:
        return (0,) * self.rank

    def reduce(self, raw: Iterable[int]) -> Element:
        v = [0] * self.rank
        for x in raw:
            if x == 0 or abs(x) > self.rank:
                raise AlphabetError(f"letter {x} outside alphabet of rank {self.rank}")
            v[abs(x) - 1] += 1 if x > 0 else -1
        return tuple(v)

    def vector(self, coords: Sequence[int]) -> Element:
        if len(coords) != self.rank:
            raise AlphabetError(f"expected {self.rank} coordinates, got {len(coords)}")
        return tuple(int(c) for c in coords)

    def mul(self, g: Element, h: Element) -> Element:
        return tuple(a + b for a, b in zip(g, h))

    def inv(self, g: Element) -> Element:
        return tuple(-a for a in g)

    def power(self, g: Element, n: int) -> Element:
        return tuple(n * a for a in g)

    def length(self, g: Element) -> int:
        return sum(abs(a) for a in g)

    def parse(self, text: str) -> Element:
        text = text.strip()
        # bare integers are accepted for Z
        if self.rank == 1:
            try:
                return (int(text),)
            except ValueError:
                pass
        return super().parse(text)

    def format(self, g: Element) -> str:
        if self.rank == 1:
            return str(g[0])
        toks = []
        for nm, a in zip(self.names, g):
            if a:
                toks.append(nm if a == 1 else f"{nm}^{a}")
        return " ".join(toks) or "e"

    def sphere(self, radius: int) -> list[Element]:
        out = []
        d = self.rank
        for v in itertools.product(range(-radius, radius + 1), repeat=d):
            if sum(abs(a) for a in v) == radius:
                out.append(tuple(v))
        out.sort(key=self.sort_key)
        return out

    def ball_size(self, radius: int) -> int:
        # number of lattice points with l1 norm <= r
        from math import comb

        d = self.rank
        return sum(comb(d, i) * comb(radius, i) * 2**i for i in range(d + 1))


# -- free-group kernels on raw tuples (hot paths) ----------------------------

def free_mul(u: Element, v: Element) -> Element:
    lu = len(u)
    if not lu:
        return v
    if not v:
        return u
    n = min(lu, len(v))
    i = 0
    while i < n and u[lu - 1 - i] == -v[i]:
        i += 1
    if i:
        return u[: lu - i] + v[i:]
    return u + v


def free_inv(u: Element) -> Element:
    return tuple(-x for x in reversed(u))


def cyclic_split(u: Element) -> tuple[Element, Element]:
    """Write reduced u = p c p^-1 with c cyclically reduced; return (p, c)."""
    i, j = 0, len(u) - 1
    while i < j and u[i] == -u[j]:
        i += 1
        j -= 1
    return u[:i], u[i : j + 1]


def group_from_spec(spec: dict) -> Group:
    kind = spec.get("kind", "free")
    names = spec.get("generators") or spec.get("rank")
    if names is None:
        raise ValueError("group config needs 'generators' or 'rank'")
    if kind == "free":
        return FreeGroup(names)
    if kind in ("free-abelian", "abelian"):
        return FreeAbelianGroup(names)
    raise ValueError(f"unknown group kind {kind!r}")
