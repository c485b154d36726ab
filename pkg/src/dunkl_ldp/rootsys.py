"""Classical root systems in standard coordinates.

Roots, Weyl-group orbits, fundamental weights and the partial-sum
inequalities that decide when a weight multiplicity is forced to vanish.
Weights are kept as exact ``Fraction`` tuples so that half-integral
(spinor-type) coordinates never drift.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

FAMILIES = ("A", "B", "C", "D", "BC")
WEYL_ORBIT_CAP = 2**20


class WeylGroupTooLarge(ValueError):
    """Raised instead of silently truncating an orbit enumeration."""


class ChamberError(ValueError):
    """A point is on or outside the boundary of the positive Weyl chamber."""


@dataclass(frozen=True)
class RootSystemSpec:
    family: str
    rank: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown root-system family {self.family!r}")
        if int(self.rank) != self.rank or self.rank < 1:
            raise ValueError(f"rank must be a positive integer, got {self.rank!r}")

    @property
    def ambient_dim(self) -> int:
        return self.rank

    @property
    def dim(self) -> int:
        """Dimension of the space the roots span (type A is trace-free)."""
        return self.rank - 1 if self.family == "A" else self.rank

    def to_json(self) -> dict:
        return {"family": self.family, "rank": self.rank}


@dataclass(frozen=True)
class MultiplicityParam:
    """Multiplicities indexed by squared root length 1, 2 and 4."""

    k_short: float = 0.0
    k_medium: float = 0.0
    k_long: float = 0.0

    def __post_init__(self):
        for name in ("k_short", "k_medium", "k_long"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def ones(cls) -> "MultiplicityParam":
        return cls(1, 1, 1)

    def for_length2(self, length2) -> float:
        return {1: self.k_short, 2: self.k_medium, 4: self.k_long}[int(length2)]

    @property
    def beta(self) -> float:
        return 2 * self.k_medium


def positive_roots(spec: RootSystemSpec) -> list[tuple[int, ...]]:
    n, fam = spec.rank, spec.family
    roots = []

    def unit(*pairs):
        v = [0] * n
        for idx, val in pairs:
            v[idx] += val
        return tuple(v)

    if fam in ("B", "BC"):
        roots += [unit((j, 1)) for j in range(n)]
    if fam in ("C", "BC"):
        roots += [unit((j, 2)) for j in range(n)]
    for j, k in itertools.combinations(range(n), 2):
        roots.append(unit((j, 1), (k, -1)))
        if fam != "A":
            roots.append(unit((j, 1), (k, 1)))
    return roots


def simple_roots(spec: RootSystemSpec) -> list[tuple[int, ...]]:
    n, fam = spec.rank, spec.family
    out = []
    for i in range(n - 1):
        v = [0] * n
        v[i], v[i + 1] = 1, -1
        out.append(tuple(v))
    last = [0] * n
    if fam in ("B", "BC"):
        last[-1] = 1
    elif fam == "C":
        last[-1] = 2
    elif fam == "D":
        if n < 2:
            return out
        last[-2] = last[-1] = 1
    else:
        return out
    out.append(tuple(last))
    return out


def root_multiplicities(spec: RootSystemSpec, k: MultiplicityParam) -> list:
    return [k.for_length2(sum(c * c for c in a)) for a in positive_roots(spec)]


def total_multiplicity(spec: RootSystemSpec, k: MultiplicityParam) -> float:
    """gamma = sum of k_alpha over the positive roots, without listing them."""
    n = spec.rank
    pairs = n * (n - 1) // 2
    ends = {"A": 0, "B": k.k_short, "C": k.k_long, "D": 0, "BC": k.k_short + k.k_long}[spec.family]
    return (pairs if spec.family == "A" else 2 * pairs) * k.k_medium + n * ends


def rho(spec: RootSystemSpec, k: MultiplicityParam | None = None) -> tuple:
    """Weighted half-sum of positive roots, coordinate by coordinate.

    Exact (``Fraction``) when the multiplicities are ints or Fractions,
    float otherwise.  ``k`` defaults to all ones.
    """
    k = MultiplicityParam.ones() if k is None else k
    n, fam = spec.rank, spec.family

    def exact(v):
        return Fraction(v) if isinstance(v, (int, Fraction)) else float(v)

    km, ks, kl = exact(k.k_medium), exact(k.k_short), exact(k.k_long)
    half = Fraction(1, 2)
    out = []
    for i in range(1, n + 1):
        if fam == "A":
            out.append(half * km * (n - 2 * i + 1))
            continue
        c = km * (n - i)
        if fam in ("B", "BC"):
            c = c + half * ks
        if fam in ("C", "BC"):
            c = c + kl
        out.append(c)
    return tuple(out)


def rho_from_roots(spec: RootSystemSpec, k: MultiplicityParam | None = None) -> tuple:
    """Reference half-sum by explicit summation over the root list."""
    k = MultiplicityParam.ones() if k is None else k
    total = [Fraction(0)] * spec.rank
    for root, mult in zip(positive_roots(spec), root_multiplicities(spec, k)):
        if not isinstance(mult, (int, Fraction)):
            mult = float(mult)
        for i, c in enumerate(root):
            if c:
                total[i] = total[i] + mult * c
    return tuple(Fraction(1, 2) * t if isinstance(t, (int, Fraction)) else 0.5 * t for t in total)


def weyl_group_order(spec: RootSystemSpec) -> int:
    n = spec.rank
    if spec.family == "A":
        return math.factorial(n)
    if spec.family == "D":
        return 2 ** max(n - 1, 0) * math.factorial(n)
    return 2**n * math.factorial(n)


def _check_cap(spec: RootSystemSpec, cap: int):
    order = weyl_group_order(spec)
    if order > cap:
        raise WeylGroupTooLarge(f"|W({spec.family}{spec.rank})| = {order} exceeds cap {cap}")


def _sign_patterns(spec: RootSystemSpec) -> Iterator[tuple[int, ...]]:
    n = spec.rank
    if spec.family == "A":
        yield (1,) * n
        return
    for signs in itertools.product((1, -1), repeat=n):
        if spec.family == "D" and math.prod(signs) != 1:
            continue
        yield signs


def _perm_parity(perm: Sequence[int]) -> int:
    seen = [False] * len(perm)
    parity = 1
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            parity = -parity
    return parity


def weyl_group(spec: RootSystemSpec, cap: int = WEYL_ORBIT_CAP) -> Iterator[tuple[tuple[int, ...], tuple[int, ...], int]]:
    """Yield ``(perm, signs, det)``; the element maps x to (signs[i] * x[perm[i]])_i."""
    _check_cap(spec, cap)
    for perm in itertools.permutations(range(spec.rank)):
        par = _perm_parity(perm)
        for signs in _sign_patterns(spec):
            yield perm, signs, par * math.prod(signs)


def weyl_orbit(spec: RootSystemSpec, x: Sequence, cap: int = WEYL_ORBIT_CAP) -> set[tuple]:
    if len(x) != spec.rank:
        raise ValueError("vector length does not match rank")
    _check_cap(spec, cap)
    x = tuple(x)
    orbit = set()
    for perm in set(itertools.permutations(x)):
        for signs in _sign_patterns(spec):
            orbit.add(tuple(s * c for s, c in zip(signs, perm)))
    return orbit


def reflect(root: Sequence, x: Sequence) -> tuple:
    """Reflection s_root(x) = x - 2<x,root>/<root,root> root."""
    num = sum(a * b for a, b in zip(x, root))
    den = sum(a * a for a in root)
    coef = Fraction(2 * num) / den if isinstance(num, (int, Fraction)) else 2 * num / den
    return tuple(c - coef * r for c, r in zip(x, root))


def fundamental_weights(spec: RootSystemSpec) -> list[tuple[Fraction, ...]]:
    n, fam = spec.rank, spec.family
    half = Fraction(1, 2)

    def partial(k):
        return tuple(Fraction(1) if i < k else Fraction(0) for i in range(n))

    if fam == "A":
        # trace-free representatives of the partial-sum weights
        return [tuple(c - Fraction(k, n) for c in partial(k)) for k in range(1, n)]
    if fam == "C" or fam == "BC":
        return [partial(k) for k in range(1, n + 1)]
    if fam == "B":
        return [partial(k) for k in range(1, n)] + [(half,) * n]
    if n < 2:
        raise ValueError("type D needs rank at least 2")
    spin_minus = tuple(half if i < n - 1 else -half for i in range(n))
    return [partial(k) for k in range(1, n - 1)] + [spin_minus, (half,) * n]


def trace_zero(x: Sequence) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x - x.mean()


def as_weight(coords: Iterable) -> tuple[Fraction, ...]:
    out = []
    for c in coords:
        f = Fraction(c).limit_denominator(2) if isinstance(c, float) else Fraction(c)
        if f.denominator > 2:
            raise ValueError(f"weight coordinate {c!r} is not a half-integer")
        out.append(f)
    return tuple(out)


def is_dominant(spec: RootSystemSpec, lam: Sequence) -> bool:
    lam = list(lam)
    if any(lam[i] < lam[i + 1] for i in range(len(lam) - 1)):
        return False
    if spec.family in ("B", "C", "BC"):
        return lam[-1] >= 0
    if spec.family == "D" and len(lam) >= 2:
        return lam[-2] >= abs(lam[-1])
    return True


def is_integral(spec: RootSystemSpec, lam: Sequence) -> bool:
    lam = as_weight(lam)
    dens = {c.denominator for c in lam}
    if spec.family in ("B", "D"):
        return len(dens) == 1
    return dens == {1}


def in_root_lattice(spec: RootSystemSpec, v: Sequence) -> bool:
    v = as_weight(v)
    if any(c.denominator != 1 for c in v):
        return False
    total = sum(v)
    if spec.family == "A":
        return total == 0
    if spec.family in ("C", "D"):
        return total % 2 == 0
    return True


def multiplicity_may_be_nonzero(spec: RootSystemSpec, lam: Sequence, eta: Sequence) -> bool:
    """Necessary condition for mult_lam(eta) > 0 with both weights dominant.

    Partial sums of lam dominate those of eta (equality of the total for
    type A), the extra spinor inequality for type D, and lam - eta lies in
    the root lattice.
    """
    if len(lam) != spec.rank or len(eta) != spec.rank:
        raise ValueError("weight length does not match rank")
    lam, eta = as_weight(lam), as_weight(eta)
    diff = [a - b for a, b in zip(lam, eta)]
    if not in_root_lattice(spec, diff):
        return False
    partial = list(itertools.accumulate(diff))
    if any(p < 0 for p in partial):
        return False
    if spec.family == "A" and partial[-1] != 0:
        return False
    if spec.family == "D" and spec.rank >= 2:
        extra = sum(diff[:-1]) - diff[-1]
        if extra < 0:
            return False
    return True


def _rational_json(c) -> dict:
    f = Fraction(c)
    return {"num": f.numerator, "den": f.denominator}


def weight_to_json(spec: RootSystemSpec, coords: Sequence) -> dict:
    return {"family": spec.family, "rank": spec.rank, "coords": [_rational_json(c) for c in as_weight(coords)]}


def weight_from_json(record: dict) -> tuple[RootSystemSpec, tuple[Fraction, ...]]:
    spec = RootSystemSpec(record["family"], int(record["rank"]))
    coords = tuple(Fraction(c["num"], c["den"]) for c in record["coords"])
    if len(coords) != spec.rank:
        raise ValueError("coords length does not match rank")
    return spec, coords
