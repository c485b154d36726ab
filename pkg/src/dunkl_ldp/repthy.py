"""Exact representation theory at small rank and the matching large-N quantities.

Characters are evaluated in the real-exponential form
    ch_lambda(-i y) = sum_w det(w) e^{<w(lambda+rho), y>} / sum_w det(w) e^{<w(rho), y>},
either by summing over the Weyl group (small rank) or through the
determinant form of the alternating sums (any rank).  Weight
multiplicities come from Freudenthal's recursion in exact arithmetic.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import mpmath
import numpy as np

from . import rate
from .bessel import haar_mc, hciz_exact
from .measures import QuantileMeasure, wasserstein1
from .rootsys import (
    MultiplicityParam,
    RootSystemSpec,
    WeylGroupTooLarge,
    WEYL_ORBIT_CAP,
    as_weight,
    is_dominant,
    positive_roots,
    rho,
    weyl_group,
    weyl_group_order,
)

FREUDENTHAL_MAX_RANK = 8
FREUDENTHAL_MAX_DIM = 10**7
KOSTKA_MAX_BOXES = 12
PERTURBATION = 1e-6
CACHE_ENV = "DUNKL_LDP_CACHE"
ONES = MultiplicityParam(1, 1, 1)


class BudgetExceeded(RuntimeError):
    """An exact enumeration would exceed its declared size budget."""


class DegenerateArgument(ArithmeticError):
    """The Weyl denominator vanishes and perturbation did not settle the value."""


# --------------------------------------------------------------------------
# orbits and monomials


def dominant_representative(spec: RootSystemSpec, v: Sequence) -> tuple:
    """The unique dominant element of the Weyl orbit of v."""
    if spec.family == "A":
        return tuple(sorted(v, reverse=True))
    a = sorted((abs(c) for c in v), reverse=True)
    if spec.family == "D" and a[-1] != 0:
        negatives = sum(1 for c in v if c < 0)
        if negatives % 2:
            a[-1] = -a[-1]
    return tuple(a)


def orbit_size(spec: RootSystemSpec, v: Sequence) -> int:
    n = spec.rank
    if spec.family == "A":
        counts = Counter(v)
        return math.factorial(n) // math.prod(math.factorial(c) for c in counts.values())
    a = [abs(c) for c in v]
    counts = Counter(a)
    zeros = counts.get(0, 0)
    size = math.factorial(n) // math.prod(math.factorial(c) for c in counts.values()) * 2 ** (n - zeros)
    if spec.family == "D" and zeros == 0:
        size //= 2
    return size


def max_pairing(spec: RootSystemSpec, eta: Sequence, y: Sequence) -> float:
    """max over w of <w(eta), y>."""
    if spec.family == "A":
        return float(np.dot(np.sort(np.asarray(eta, dtype=float)), np.sort(np.asarray(y, dtype=float))))
    a = np.sort(np.abs(np.asarray(eta, dtype=float)))
    b = np.sort(np.abs(np.asarray(y, dtype=float)))
    value = float(np.dot(a, b))
    if spec.family == "D" and a[0] > 0 and b[0] > 0:
        neg_eta = int(np.sum(np.asarray(eta, dtype=float) < 0))
        neg_y = int(np.sum(np.asarray(y, dtype=float) < 0))
        if (neg_eta + neg_y) % 2:
            value -= 2 * a[0] * b[0]
    return value


def _orbit(spec: RootSystemSpec, eta: Sequence, cap: int) -> set:
    if orbit_size(spec, eta) > cap:
        raise WeylGroupTooLarge(f"orbit of size {orbit_size(spec, eta)} exceeds cap {cap}")
    eta = tuple(eta)
    if spec.family == "A":
        return set(itertools.permutations(eta))
    out = set()
    for perm in set(itertools.permutations(eta)):
        for signs in itertools.product((1, -1), repeat=spec.rank):
            if spec.family == "D" and math.prod(signs) != 1:
                continue
            out.add(tuple(s * c for s, c in zip(signs, perm)))
    return out


def monomial_poly(spec: RootSystemSpec, eta: Sequence, y: Sequence, exact: bool = True,
                  cap: int = WEYL_ORBIT_CAP) -> float:
    """log M_eta(y), the sum of e^{<v, y>} over the distinct orbit points v.

    With ``exact=False`` the orbit is not enumerated and the upper bound
    log|W.eta| + max_w <w eta, y> is returned; it differs from the exact
    value by at most log|W.eta|.
    """
    y = [float(c) for c in y]
    if len(eta) != spec.rank or len(y) != spec.rank:
        raise ValueError("weight and point must have length rank")
    if not exact:
        return math.log(orbit_size(spec, eta)) + max_pairing(spec, eta, y)
    exps = [sum(float(a) * b for a, b in zip(v, y)) for v in _orbit(spec, eta, cap)]
    top = max(exps)
    return top + math.log(math.fsum(math.exp(e - top) for e in exps))


def monomial_symmetric(mu: Sequence[int], x: Sequence[float]) -> float:
    """Monomial symmetric polynomial m_mu(x) by direct summation over distinct permutations."""
    mu = list(mu) + [0] * (len(x) - len(mu))
    total = 0.0
    for p in set(itertools.permutations(mu)):
        total += math.prod(xi**e for xi, e in zip(x, p))
    return total


# --------------------------------------------------------------------------
# Weyl products


def delta_g(spec: RootSystemSpec, x: Sequence):
    """Product of <alpha, x> over the positive roots (k = 1 convention)."""
    n, fam = spec.rank, spec.family
    out = 1
    for i in range(n):
        for j in range(i + 1, n):
            out *= x[i] - x[j]
            if fam != "A":
                out *= x[i] + x[j]
    if fam in ("B", "C"):
        for c in x:
            out *= c
    if fam == "C":
        out *= 2**n
    if fam == "BC":
        for c in x:
            out *= 2 * c * c
    return out


def deltahat_g(spec: RootSystemSpec, x: Sequence) -> complex:
    """Product of (e^{i<alpha,x>/2} - e^{-i<alpha,x>/2}) over the positive roots."""
    out = 1 + 0j
    for a in positive_roots(spec):
        t = sum(c * float(v) for c, v in zip(a, x))
        out *= 2j * math.sin(t / 2)
    return out


def log_weyl_denominator(spec: RootSystemSpec, y: Sequence) -> float:
    """log prod 2 sinh(<alpha, y>/2) for y in the open chamber."""
    total = 0.0
    for a in positive_roots(spec):
        t = sum(c * float(v) for c, v in zip(a, y))
        if t <= 0:
            raise DegenerateArgument("y is not in the open positive chamber")
        total += math.log(2 * math.sinh(t / 2))
    return total


# --------------------------------------------------------------------------
# characters


def _shifted(spec: RootSystemSpec, lam: Sequence) -> list[Fraction]:
    r = rho(spec, ONES)
    return [Fraction(a) + b for a, b in zip(as_weight(lam), r)]


def _alternant_det(spec: RootSystemSpec, ell: Sequence, y: Sequence, dps: int):
    """sum_w det(w) e^{<w ell, y>} as an mpmath number (determinant form)."""
    with mpmath.workdps(dps):
        ell = [mpmath.mpf(Fraction(c).numerator) / Fraction(c).denominator for c in ell]
        y = [mpmath.mpf(float(c)) for c in y]
        n = len(ell)
        if spec.family == "A":
            return mpmath.det(mpmath.matrix([[mpmath.exp(ell[i] * y[j]) for j in range(n)] for i in range(n)]))
        S = mpmath.matrix([[2 * mpmath.sinh(ell[i] * y[j]) for j in range(n)] for i in range(n)])
        if spec.family in ("B", "C", "BC"):
            return mpmath.det(S)
        C = mpmath.matrix([[2 * mpmath.cosh(ell[i] * y[j]) for j in range(n)] for i in range(n)])
        return (mpmath.det(C) + mpmath.det(S)) / 2


def _alternant_sum(spec: RootSystemSpec, ell: Sequence, y: Sequence, dps: int, cap: int):
    """The same alternating sum by explicit enumeration of W."""
    with mpmath.workdps(dps):
        ell_f = [mpmath.mpf(Fraction(c).numerator) / Fraction(c).denominator for c in ell]
        y = [mpmath.mpf(float(c)) for c in y]
        terms = []
        for perm, signs, det in weyl_group(spec, cap):
            e = mpmath.fsum(s * ell_f[p] * yi for p, s, yi in zip(perm, signs, y))
            terms.append(det * mpmath.exp(e))
        return mpmath.fsum(terms)


def _character_ratio(spec, lam, y, method: str, cap: int) -> float:
    ell = _shifted(spec, lam)
    r = rho(spec, ONES)
    scale = sum(abs(float(a)) * abs(float(b)) for a, b in zip(ell, y))
    dps = 30 + int(scale / math.log(10)) + 4 * spec.rank
    last = None
    for _ in range(6):
        if method == "orbit":
            num, den = _alternant_sum(spec, ell, y, dps, cap), _alternant_sum(spec, r, y, dps, cap)
        else:
            num, den = _alternant_det(spec, ell, y, dps), _alternant_det(spec, r, y, dps)
        with mpmath.workdps(dps):
            if den == 0 or num == 0:
                value = None
            else:
                ratio = num / den
                if ratio <= 0:
                    value = None
                else:
                    value = float(mpmath.log(ratio))
        if value is not None and last is not None and abs(value - last) <= 1e-12 * max(1.0, abs(value)):
            return value
        last = value
        dps *= 2
    if last is None:
        raise DegenerateArgument("Weyl denominator vanishes at y")
    return last


def _is_regular(spec: RootSystemSpec, y: Sequence) -> bool:
    for a in positive_roots(spec):
        if sum(c * float(v) for c, v in zip(a, y)) == 0:
            return False
    return True


def weyl_character(spec: RootSystemSpec, lam: Sequence, y: Sequence, method: str = "auto",
                   cap: int = WEYL_ORBIT_CAP, seed: int = 0) -> float:
    """log ch_lambda(-i y), the character at the real exponential point e^y.

    ``method``: "orbit" sums over W (needs |W| <= cap), "det" uses the
    determinant form, "auto" picks orbit for small groups.  Non-regular y
    are handled by two random perturbations of sizes h and h/2 followed by
    Richardson extrapolation; if the two disagree the call refuses.
    """
    if len(lam) != spec.rank or len(y) != spec.rank:
        raise ValueError("weight and point must have length rank")
    if not is_dominant(spec, as_weight(lam)):
        raise ValueError("highest weight must be dominant")
    if method == "auto":
        method = "orbit" if weyl_group_order(spec) <= 5000 else "det"
    if method not in ("orbit", "det"):
        raise ValueError(f"unknown method {method!r}")
    y = [float(c) for c in y]
    if all(a == 0 for a in as_weight(lam)):
        return 0.0
    if _is_regular(spec, y):
        return _character_ratio(spec, lam, y, method, cap)
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(spec.rank)
    scale = max(1.0, max(abs(c) for c in y))
    h = PERTURBATION * scale
    f1 = _character_ratio(spec, lam, list(np.asarray(y) + h * direction), method, cap)
    f2 = _character_ratio(spec, lam, list(np.asarray(y) + h / 2 * direction), method, cap)
    if abs(f1 - f2) > 1e-4 * max(1.0, abs(f2)):
        raise DegenerateArgument("perturbed character values disagree")
    return 2 * f2 - f1


def weyl_dimension(spec: RootSystemSpec, lam: Sequence) -> int:
    ell = _shifted(spec, lam)
    r = rho(spec, ONES)
    value = Fraction(delta_g(spec, ell)) / Fraction(delta_g(spec, r))
    if value.denominator != 1:
        raise ArithmeticError("Weyl dimension formula returned a non-integer")
    return int(value)


# --------------------------------------------------------------------------
# Kirillov formula


@dataclass
class KirillovResult:
    lhs: float
    rhs: float
    std_error: float
    passed: bool
    decidable: bool = True

    def to_json(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "std_error": self.std_error,
                "pass": self.passed, "decidable": self.decidable}


def kirillov_prefactor(spec: RootSystemSpec, lam: Sequence, y: Sequence) -> float:
    """log of Delta(y) / Deltahat(-i y) * Delta(lambda+rho) / Delta(rho)."""
    ell = _shifted(spec, lam)
    r = rho(spec, ONES)
    log_delta_y = math.log(abs(delta_g(spec, [float(c) for c in y])))
    log_dims = math.log(Fraction(delta_g(spec, ell)) / Fraction(delta_g(spec, r)))
    return log_delta_y - log_weyl_denominator(spec, y) + log_dims


def kirillov_check(spec: RootSystemSpec, lam: Sequence, y: Sequence, mc_budget: int = 100_000,
                   seed: int = 0, n_sigma: float = 3.0, max_se: float = 0.05, rtol: float = 1e-8) -> KirillovResult:
    """Compare the Weyl character with the orbital-integral (k = 1 Bessel) side.

    Type A uses the exact HCIZ determinant, the other families the Haar
    Monte Carlo estimate; the check passes within ``n_sigma`` standard
    errors.  A standard error above ``max_se`` makes the check undecidable.
    """
    if delta_g(spec, [float(c) for c in y]) == 0:
        raise ValueError("y must be regular")
    lhs = weyl_character(spec, lam, y)
    ell = [float(c) for c in _shifted(spec, lam)]
    pre = kirillov_prefactor(spec, lam, y)
    if spec.family == "A":
        rhs = pre + hciz_exact(ell, [float(c) for c in y])
        ok = abs(lhs - rhs) <= rtol * max(1.0, abs(lhs))
        return KirillovResult(lhs, rhs, 0.0, ok)
    log_j, se = haar_mc(spec, ONES, ell, [float(c) for c in y], samples=mc_budget, seed=seed)
    rhs = pre + log_j
    if se > max_se:
        return KirillovResult(lhs, rhs, se, False, decidable=False)
    return KirillovResult(lhs, rhs, se, abs(lhs - rhs) <= n_sigma * se + 1e-12)


def schur_integral_rhs(lam: Sequence[int], y: Sequence[float]) -> float:
    """log s_lambda(e^y) through the unitary-group integral of exp(N Tr(Y U D U*))."""
    N = len(y)
    lam = list(lam) + [0] * (N - len(lam))
    D = [(lam[i] + N - 1 - i) / N for i in range(N)]
    log_pref = -sum(math.lgamma(i + 1) for i in range(2, N))
    for i in range(N):
        for j in range(i + 1, N):
            log_pref += math.log(abs((y[i] - y[j]) * (lam[i] - lam[j] - i + j)))
            log_pref -= math.log(abs(math.exp(y[i]) - math.exp(y[j])))
    return log_pref + hciz_exact([N * d for d in D], list(y))


# --------------------------------------------------------------------------
# Freudenthal multiplicities


@dataclass
class WeightMultTable:
    spec: RootSystemSpec
    lam: tuple
    entries: dict = field(default_factory=dict)  # dominant weight -> multiplicity
    dim: int = 0

    def mult(self, eta: Sequence) -> int:
        return self.entries.get(dominant_representative(self.spec, as_weight(eta)), 0)

    def total(self) -> int:
        return sum(m * orbit_size(self.spec, eta) for eta, m in self.entries.items())

    def to_json(self) -> dict:
        return {
            "family": self.spec.family,
            "rank": self.spec.rank,
            "lambda": [str(c) for c in self.lam],
            "entries": [{"eta": [str(c) for c in eta], "mult": m} for eta, m in sorted(self.entries.items(), reverse=True)],
            "dim": self.dim,
        }

    @classmethod
    def from_json(cls, record: dict) -> "WeightMultTable":
        spec = RootSystemSpec(record["family"], int(record["rank"]))
        lam = tuple(Fraction(c) for c in record["lambda"])
        entries = {tuple(Fraction(c) for c in e["eta"]): int(e["mult"]) for e in record["entries"]}
        return cls(spec, lam, entries, int(record["dim"]))


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _dominant_below(spec: RootSystemSpec, lam: tuple, roots: list, r: tuple) -> list[tuple]:
    """Dominant weights reachable from lam by subtracting positive roots through
    dominant weights, inside the ball |mu + rho| <= |lam + rho|."""
    bound = _dot([a + b for a, b in zip(lam, r)], [a + b for a, b in zip(lam, r)])
    seen = {lam}
    stack = [lam]
    while stack:
        mu = stack.pop()
        for a in roots:
            nu = tuple(c - d for c, d in zip(mu, a))
            if nu in seen or not is_dominant(spec, nu):
                continue
            s = [x + y for x, y in zip(nu, r)]
            if _dot(s, s) > bound:
                continue
            seen.add(nu)
            stack.append(nu)
    return sorted(seen, key=lambda v: _dot(v, r), reverse=True)


def _cache_path(spec: RootSystemSpec, lam: tuple) -> Path | None:
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    key = f"{spec.family}{spec.rank}:" + ",".join(str(c) for c in lam)
    digest = hashlib.sha256(key.encode()).hexdigest()[:24]
    return Path(root) / f"mult-{spec.family}{spec.rank}-{digest}.json"


def freudenthal_multiplicities(spec: RootSystemSpec, lam: Sequence, max_dim: int = FREUDENTHAL_MAX_DIM,
                               use_cache: bool = True) -> WeightMultTable:
    """Exact multiplicities of every dominant weight of V_lambda.

    Tables are cached as JSON under $DUNKL_LDP_CACHE when it is set.
    """
    if spec.family == "BC":
        raise ValueError("BC is not the root system of a simple Lie algebra")
    if spec.rank > FREUDENTHAL_MAX_RANK:
        raise BudgetExceeded(f"rank {spec.rank} above {FREUDENTHAL_MAX_RANK}")
    lam = as_weight(lam)
    if len(lam) != spec.rank or not is_dominant(spec, lam):
        raise ValueError("lambda must be a dominant weight of the right length")
    dim = weyl_dimension(spec, lam)
    if dim > max_dim:
        raise BudgetExceeded(f"dim V_lambda = {dim} above {max_dim}")

    path = _cache_path(spec, lam) if use_cache else None
    if path is not None and path.exists():
        table = WeightMultTable.from_json(json.loads(path.read_text()))
        if table.lam == lam:
            return table

    roots = [tuple(Fraction(c) for c in a) for a in positive_roots(spec)]
    r = rho(spec, ONES)
    lam_rho = [a + b for a, b in zip(lam, r)]
    top = _dot(lam_rho, lam_rho)
    lam_norm = _dot(lam, lam)
    mult: dict[tuple, int] = {}
    for mu in _dominant_below(spec, lam, roots, r):
        if mu == lam:
            mult[mu] = 1
            continue
        mu_rho = [a + b for a, b in zip(mu, r)]
        denom = top - _dot(mu_rho, mu_rho)
        acc = Fraction(0)
        for a in roots:
            j = 1
            while True:
                nu = tuple(c + j * d for c, d in zip(mu, a))
                if _dot(nu, nu) > lam_norm:
                    break
                m = mult.get(dominant_representative(spec, nu), 0)
                if m:
                    acc += m * _dot(nu, a)
                j += 1
        value = 2 * acc / denom
        if value.denominator != 1:
            raise ArithmeticError(f"non-integral multiplicity at {mu}")
        if value:
            mult[mu] = int(value)
    table = WeightMultTable(spec, lam, mult, dim)
    if table.total() != dim:
        raise ArithmeticError("multiplicities do not add up to the Weyl dimension")
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(table.to_json()))
        tmp.replace(path)
    return table


def char_decomposition_check(spec: RootSystemSpec, lam: Sequence, y: Sequence, rtol: float = 1e-8) -> bool:
    """sum over dominant eta of mult(eta) M_eta(y) against the Weyl character."""
    table = freudenthal_multiplicities(spec, lam)
    logs = [math.log(m) + monomial_poly(spec, eta, y) for eta, m in table.entries.items()]
    top = max(logs)
    lhs = top + math.log(math.fsum(math.exp(v - top) for v in logs))
    rhs = weyl_character(spec, lam, y)
    return abs(lhs - rhs) <= rtol * max(1.0, abs(rhs))


# --------------------------------------------------------------------------
# Kostka numbers


def _is_partition(p: Sequence[int]) -> bool:
    return all(int(c) == c and c >= 0 for c in p) and all(p[i] >= p[i + 1] for i in range(len(p) - 1))


def _horizontal_strips(shape: tuple, size: int, limit: tuple):
    """Shapes nu inside ``limit`` with nu / shape a horizontal strip of ``size`` boxes."""
    rows = len(limit)
    shape = shape + (0,) * (rows - len(shape))

    def rec(i, left, acc):
        if i == rows:
            if left == 0:
                yield tuple(acc)
            return
        cap = limit[i] if i == 0 else min(limit[i], shape[i - 1])
        for new in range(shape[i], min(cap, shape[i] + left) + 1):
            yield from rec(i + 1, left - (new - shape[i]), acc + [new])

    yield from rec(0, size, [])


def kostka(lam: Sequence[int], mu: Sequence[int], max_boxes: int = KOSTKA_MAX_BOXES) -> int:
    """Number of semistandard tableaux of shape lam and content mu."""
    lam = tuple(int(c) for c in lam if c)
    mu = tuple(int(c) for c in mu)
    if not _is_partition(lam) or any(c < 0 for c in mu):
        raise ValueError("lam must be a partition and mu a composition")
    if sum(lam) > max_boxes:
        raise BudgetExceeded(f"{sum(lam)} boxes above {max_boxes}")
    if sum(lam) != sum(mu):
        return 0

    @lru_cache(maxsize=None)
    def count(shape: tuple, k: int) -> int:
        if k == len(mu):
            return int(shape == lam)
        return sum(count(nxt, k + 1) for nxt in _horizontal_strips(shape, mu[k], lam))

    return count((0,) * len(lam), 0)


def partitions(n: int, max_parts: int | None = None, max_part: int | None = None):
    """Partitions of n in reverse lexicographic order."""
    max_part = n if max_part is None else max_part

    def rec(left, cap, parts):
        if left == 0:
            yield tuple(parts)
            return
        if max_parts is not None and len(parts) == max_parts:
            return
        for p in range(min(left, cap), 0, -1):
            yield from rec(left - p, p, parts + [p])

    yield from rec(n, max_part, [])


def schur_from_kostka(lam: Sequence[int], x: Sequence[float]) -> float:
    """s_lambda(x) = sum over mu of K_{lambda mu} m_mu(x)."""
    n = sum(lam)
    return sum(kostka(lam, mu) * monomial_symmetric(mu, x)
               for mu in partitions(n, max_parts=len(x)))


# --------------------------------------------------------------------------
# large-N multiplicity asymptotics


def scaled_weight_measure(spec: RootSystemSpec, eta: Sequence) -> QuantileMeasure:
    """m[eta]: empirical measure of (eta + rho) / (2N), rho for k = 1."""
    N = spec.rank
    r = rho(spec, ONES)
    vals = np.sort([float(Fraction(a) + b) / (2 * N) for a, b in zip(as_weight(eta), r)])
    return QuantileMeasure(vals)


def monom_asymp(mu: QuantileMeasure, nu: QuantileMeasure) -> float:
    """int (2 T_mu(q) - q) T_nu(q) dq."""
    return rate.monomial_term(mu, nu)


@dataclass
class LdpRow:
    N: int
    log_sup_mult: float
    minus_rate: float
    best_eta: tuple | None
    candidates: int

    def as_tuple(self):
        return self.N, self.log_sup_mult, self.minus_rate


def mult_ldp_table(lam_seq: Callable[[int], Sequence] | dict, mu: QuantileMeasure, N_list: Sequence[int],
                   family: str = "C", delta: float = 0.1, rate_value: float | None = None,
                   rate_opts: dict | None = None) -> list[LdpRow]:
    """Rows (N, sup over m[eta] in the W1 ball B_delta(mu) of log(mult)/N^2, -rate(mu)).

    The ball is taken in Wasserstein-1 distance between the atomic measure
    m[eta] and mu.  The rate is computed once with rate.rate_script_I unless
    ``rate_value`` is supplied.
    """
    rows = []
    if rate_value is None:
        ref_lam = lam_seq(N_list[-1]) if callable(lam_seq) else lam_seq[N_list[-1]]
        m_lam = scaled_weight_measure(RootSystemSpec(family, N_list[-1]), ref_lam)
        res = rate.rate_script_I(mu, m_lam, **(rate_opts or {}))
        rate_value = float(res.value)
    for N in N_list:
        spec = RootSystemSpec(family, N)
        lam = lam_seq(N) if callable(lam_seq) else lam_seq[N]
        table = freudenthal_multiplicities(spec, lam)
        best, best_eta, count = -math.inf, None, 0
        for eta, m in table.entries.items():
            if wasserstein1(scaled_weight_measure(spec, eta), mu) < delta:
                count += 1
                if math.log(m) / N**2 > best:
                    best, best_eta = math.log(m) / N**2, eta
        rows.append(LdpRow(N, best, -rate_value, best_eta, count))
    return rows
