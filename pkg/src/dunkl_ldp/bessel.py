"""Generalized Bessel functions through their group-integral specializations.

Everything is returned as a natural log.  The exact evaluator covers the
unitary (HCIZ) case; Haar Monte Carlo covers the orthogonal, unitary and
symplectic Itzykson-Zuber integrals, the rectangular type-B integrals and
the Harish-Chandra integrals over SO(2N+1), Sp(N) and SO(2N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
import numpy as np
from scipy.special import gammaln, ive

from .measures import AtomicMeasure, wasserstein1
from .rootsys import MultiplicityParam, RootSystemSpec, positive_roots, rho, total_multiplicity, weyl_group_order

EPS = np.finfo(float).eps
# refuse once the estimated relative error of the determinant passes 1e-6
MAX_REL_ERROR = 1e-6
MC_BATCH = 10_000
JACKKNIFE_GROUPS = 100


class CancellationError(ArithmeticError):
    """The determinant formula lost more digits than the accuracy budget allows."""

    def __init__(self, message: str, lost_digits: float):
        super().__init__(f"{message} (about {lost_digits:.1f} digits lost)")
        self.lost_digits = lost_digits


class UnsupportedMultiplicity(ValueError):
    """No group-integral realization is known for this (family, k)."""


@dataclass(frozen=True)
class GbfQuery:
    spec: RootSystemSpec
    k: MultiplicityParam
    lam: tuple
    x: tuple
    method: str = "hciz_exact"
    samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("hciz_exact", "haar_mc", "gibbs_mc"):
            raise ValueError(f"unknown evaluation method {self.method!r}")
        if len(self.lam) != self.spec.rank or len(self.x) != self.spec.rank:
            raise ValueError("argument length does not match rank")

    def evaluate(self) -> tuple[float, float]:
        """(log J, std-error of log J); the error is 0 for the exact method."""
        if self.method == "hciz_exact":
            if self.spec.family != "A" or self.k.k_medium != 1:
                raise UnsupportedMultiplicity("the determinant formula needs type A with k = 1")
            return hciz_exact(self.lam, self.x), 0.0
        if self.method == "haar_mc":
            return haar_mc(self.spec, self.k, self.lam, self.x, self.samples, self.seed)
        raise UnsupportedMultiplicity("gibbs_mc samples the tilted law; it does not estimate J")


# --------------------------------------------------------------------------
# exact unitary integral


def _groups(values: np.ndarray) -> list[tuple[float, int]]:
    """(value, multiplicity) for an ascending array.

    Entries closer than double resolution of the largest entry count as
    ties; the confluent limit is continuous, so this moves the result by
    about machine epsilon, while such gaps cannot be resolved otherwise.
    """
    tie = 4 * EPS * float(np.max(np.abs(values)))
    out: list[tuple[float, int]] = []
    for v in values:
        if out and v - out[-1][0] <= tie:
            out[-1] = (v, out[-1][1] + 1)
        else:
            out.append((v, 1))
    return out


def _orders(groups) -> list[tuple[float, int]]:
    """Expand groups into (value, derivative order) per row."""
    return [(v, r) for v, m in groups for r in range(m)]


def _log_vandermonde(groups, log=math.log) -> float:
    total = 0.0
    for i, (a, ma) in enumerate(groups):
        for b, mb in groups[i + 1:]:
            total += ma * mb * log(b - a)
    return total


def _entry_poly(lam, x, r, s, power=lambda v, p: v**p, fact=math.factorial):
    """d^r/dlam^r d^s/dx^s exp(lam x) / (r! s!), without the exp factor."""
    total = 0
    for t in range(min(r, s) + 1):
        total = total + power(lam, s - t) * power(x, r - t) / (fact(t) * fact(r - t) * fact(s - t))
    return total


def _log_superfactorial(n: int) -> float:
    # log prod_{p=1}^{n-1} p!
    return float(sum(gammaln(p + 1) for p in range(1, n)))


def _hciz_double(rows, cols) -> tuple[float, float]:
    """(log det, lost digits) of the confluent exponential matrix."""
    lam = np.array([v for v, _ in rows])
    x = np.array([v for v, _ in cols])
    expo = np.outer(lam, x)
    shift_r = expo.max(axis=1)
    shift_c = (expo - shift_r[:, None]).max(axis=0)
    poly = np.array([[_entry_poly(a, b, r, s) for b, s in cols] for a, r in rows])
    mat = poly * np.exp(expo - shift_r[:, None] - shift_c[None, :])
    sign, logdet = np.linalg.slogdet(mat)
    hadamard = float(np.sum(np.log(np.linalg.norm(mat, axis=1))))
    if sign <= 0 or not np.isfinite(logdet):
        return float("nan"), float("inf")
    lost = (hadamard - logdet) / math.log(10)
    return float(logdet + shift_r.sum() + shift_c.sum()), max(lost, 0.0)


def _hciz_mp(rows, cols, dps: int) -> float:
    with mpmath.workdps(dps):
        mat = mpmath.matrix(len(rows), len(cols))
        for i, (a, r) in enumerate(rows):
            for j, (b, s) in enumerate(cols):
                am, bm = mpmath.mpf(a), mpmath.mpf(b)
                mat[i, j] = _entry_poly(am, bm, r, s, power=lambda v, p: v**p, fact=mpmath.factorial) * mpmath.exp(am * bm)
        try:
            det = mpmath.det(mat)
        except (ZeroDivisionError, TypeError):
            # singular at this working precision (mpmath's LU has no pivot)
            return float("nan")
        if det <= 0:
            return float("nan")
        return float(mpmath.log(det))


def hciz_exact(lam: Sequence[float], x: Sequence[float], precision: str = "auto") -> float:
    """log of the unitary integral of exp(Tr(diag(lam) U diag(x) U*)).

    Repeated entries are handled by derivative rows/columns (the confluent
    limit of the divided differences).  ``precision`` is ``"double"``
    (refuse on cancellation), ``"extended"`` (always arbitrary precision)
    or ``"auto"`` (double, escalating to extended precision when needed).
    """
    if precision not in ("auto", "double", "extended"):
        raise ValueError(f"unknown precision {precision!r}")
    lam = np.sort(np.asarray(lam, dtype=float))
    x = np.sort(np.asarray(x, dtype=float))
    if lam.shape != x.shape or lam.ndim != 1:
        raise ValueError("lam and x must be vectors of equal length")
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(x))):
        raise ValueError("arguments must be finite")
    n = lam.size
    if n == 1:
        return float(lam[0] * x[0])
    glam, gx = _groups(lam), _groups(x)
    if len(glam) == 1 or len(gx) == 1:
        # a scalar matrix commutes with U
        return float(lam.sum() * x.sum() / n)
    rows, cols = _orders(glam), _orders(gx)
    const = _log_superfactorial(n)
    vander = _log_vandermonde(glam) + _log_vandermonde(gx)

    lost = float("inf")
    if precision != "extended":
        logdet, lost = _hciz_double(rows, cols)
        rel_error = n * EPS * 10**min(lost, 300)
        if rel_error <= MAX_REL_ERROR:
            return logdet + const - vander
        if precision == "double":
            raise CancellationError("determinant formula is ill-conditioned in double precision", lost)

    dps = 30 + int(min(lost, 10 * n * n) if math.isfinite(lost) else 4 * n * n)
    previous = _hciz_mp(rows, cols, dps)
    for _ in range(8):
        dps *= 2
        current = _hciz_mp(rows, cols, dps)
        if math.isfinite(current) and math.isfinite(previous) and abs(current - previous) <= 1e-12 * max(1.0, abs(current)):
            return current + const - vander
        previous = current
    raise CancellationError("extended precision did not converge", lost)


# --------------------------------------------------------------------------
# Haar sampling


def _fix_phases(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    d = np.diagonal(r, axis1=-2, axis2=-1)
    phase = d / np.abs(d)
    return q * phase[..., None, :]


def haar_orthogonal(n: int, size: int, rng: np.random.Generator, special: bool = False) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((size, n, n)))
    q = _fix_phases(q, r)
    if special:
        flip = np.linalg.det(q) < 0
        q[flip, :, 0] *= -1
    return q


def haar_unitary(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((size, n, n)) + 1j * rng.standard_normal((size, n, n))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    return _fix_phases(q, r)


def _partner(v: np.ndarray) -> np.ndarray:
    # quaternionic partner (a; b) -> (-conj b; conj a), orthogonal to v
    n = v.shape[-1] // 2
    return np.concatenate([-np.conj(v[..., n:]), np.conj(v[..., :n])], axis=-1)


def haar_symplectic_columns(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """First n columns (a_j; b_j) of a Haar element of Sp(n) inside U(2n).

    Quaternionic Gram-Schmidt on Gaussian columns; the remaining columns
    are the partners (-conj b_j; conj a_j).  Shape (size, n, 2n), column-major.
    """
    z = rng.standard_normal((size, n, 2 * n)) + 1j * rng.standard_normal((size, n, 2 * n))
    cols = np.empty_like(z)
    for j in range(n):
        v = z[:, j, :]
        for i in range(j):
            for basis in (cols[:, i, :], _partner(cols[:, i, :])):
                v = v - np.sum(np.conj(basis) * v, axis=-1, keepdims=True) * basis
        cols[:, j, :] = v / np.linalg.norm(v, axis=-1, keepdims=True)
    return cols


def haar_symplectic(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    cols = haar_symplectic_columns(n, size, rng)
    full = np.concatenate([cols, _partner(cols)], axis=1)
    return np.swapaxes(full, -1, -2)


def _rotation_blocks(n: int) -> list[tuple[int, int]]:
    return [(2 * i, 2 * i + 1) for i in range(n)]


def _exponent_sampler(spec: RootSystemSpec, k: MultiplicityParam, lam: np.ndarray, x: np.ndarray):
    """Return draw(rng, size) -> exponents whose exp averages to J_{k,lam}(x)."""
    fam, n = spec.family, spec.rank
    km = k.k_medium

    if fam == "A":
        if n == 1:
            return lambda rng, size: np.full(size, lam[0] * x[0])
        if km == 0.5:
            def draw(rng, size):
                return np.einsum("sij,i,j->s", haar_orthogonal(n, size, rng) ** 2, lam, x)
        elif km == 1:
            def draw(rng, size):
                return np.einsum("sij,i,j->s", np.abs(haar_unitary(n, size, rng)) ** 2, lam, x)
        elif km == 2:
            def draw(rng, size):
                cols = haar_symplectic_columns(n, size, rng)
                # quaternion entry (i, j) has squared norm |a_j,i|^2 + |b_j,i|^2
                weight = np.abs(cols[:, :, :n]) ** 2 + np.abs(cols[:, :, n:]) ** 2
                return np.einsum("sji,i,j->s", weight, lam, x)
        else:
            raise UnsupportedMultiplicity("type A needs k in {1/2, 1, 2}")
        return draw

    ones = fam in ("B", "C", "D") and km == 1 and (
        (fam == "B" and k.k_short == 1) or (fam == "C" and k.k_long == 1) or fam == "D")
    if ones:
        return _harish_chandra_sampler(fam, n, lam, x)

    if fam == "B":
        m = _rectangular_width(n, k)
        beta = int(round(2 * km)) if n > 1 else _rank_one_beta(k)
        lx = np.outer(lam, x)

        def draw(rng, size):
            if beta == 1:
                u = haar_orthogonal(n, size, rng)
                v = haar_orthogonal(m, size, rng)[:, :n, :n]
                return np.einsum("sij,sij,ij->s", u, v, lx)
            u = haar_unitary(n, size, rng)
            v = haar_unitary(m, size, rng)[:, :n, :n]
            return np.einsum("sij,sij,ij->s", u, np.conj(v), lx).real
        return draw
    raise UnsupportedMultiplicity(f"no group integral for family {fam} with k={k}")


def _rank_one_beta(k: MultiplicityParam) -> int:
    if k.k_medium in (0.5, 1):
        return int(round(2 * k.k_medium))
    for beta in (1, 2):
        width = (2 * k.k_short + 1) / beta
        if abs(width - round(width)) < 1e-12:
            return beta
    raise UnsupportedMultiplicity("k_short must make 2 k_short + 1 an integer multiple of beta")


def _rectangular_width(n: int, k: MultiplicityParam) -> int:
    """m with k_short = (beta (m - n + 1) - 1) / 2 and k_medium = beta / 2."""
    beta = 2 * k.k_medium if n > 1 else _rank_one_beta(k)
    if beta not in (1, 2):
        raise UnsupportedMultiplicity("rectangular integrals need k_medium in {1/2, 1}")
    width = (2 * k.k_short + 1) / beta + n - 1
    m = int(round(width))
    if abs(width - m) > 1e-12 or m < n:
        raise UnsupportedMultiplicity(f"k_short={k.k_short} does not come from an integer width m >= {n}")
    return m


def _harish_chandra_sampler(fam: str, n: int, lam: np.ndarray, x: np.ndarray):
    """Exponent <Ad_g H_lam, H_x> with <A, B> = -Tr(AB)/2 on the compact group."""
    if fam == "C":
        def draw(rng, size):
            cols = haar_symplectic_columns(n, size, rng)
            # column j is the image of the basis vector carrying +i lam_j
            weight = np.abs(cols[:, :, :n]) ** 2 - np.abs(cols[:, :, n:]) ** 2
            return np.einsum("sji,i,j->s", weight, x, lam)
        return draw

    dim = 2 * n + 1 if fam == "B" else 2 * n
    blocks = _rotation_blocks(n)
    gen = np.zeros((dim, dim))
    for a, b in blocks:
        gen[a, b], gen[b, a] = -1.0, 1.0

    def cartan(v):
        out = np.zeros((dim, dim))
        for (a, b), c in zip(blocks, v):
            out[a, b], out[b, a] = -c, c
        return out

    h_lam, h_x = cartan(lam), cartan(x)

    def draw(rng, size):
        g = haar_orthogonal(dim, size, rng, special=True)
        conj = g @ h_lam @ np.swapaxes(g, -1, -2)
        return -0.5 * np.einsum("sij,ji->s", conj, h_x)
    return draw


def _jackknife_log_mean(expo: np.ndarray, groups: int = JACKKNIFE_GROUPS) -> tuple[float, float]:
    top = expo.max()
    w = np.exp(expo - top)
    total = w.sum()
    estimate = float(top + math.log(total / w.size))
    groups = min(groups, w.size)
    if groups < 2:
        return estimate, float("inf")
    chunks = np.array_split(w, groups)
    sums = np.array([c.sum() for c in chunks])
    sizes = np.array([c.size for c in chunks])
    leave_out = top + np.log((total - sums) / (w.size - sizes))
    se = math.sqrt((groups - 1) / groups * float(np.sum((leave_out - leave_out.mean()) ** 2)))
    return estimate, se


def haar_mc(spec: RootSystemSpec, k: MultiplicityParam, lam: Sequence[float], x: Sequence[float],
            samples: int = 100_000, seed: int = 0, batch: int = MC_BATCH) -> tuple[float, float]:
    """(log-estimate, jackknife std-error of the log-estimate) of J_{k,lam}(x).

    Batches draw from independent Philox streams keyed by ``seed`` so the
    result does not depend on how batches are scheduled.
    """
    lam = np.asarray(lam, dtype=float)
    x = np.asarray(x, dtype=float)
    if lam.shape != (spec.rank,) or x.shape != (spec.rank,):
        raise ValueError("argument length does not match rank")
    draw = _exponent_sampler(spec, k, lam, x)
    if not np.any(x) or not np.any(lam):
        return 0.0, 0.0
    if samples < 2:
        raise ValueError("need at least two samples")
    parts = []
    for b, start in enumerate(range(0, samples, batch)):
        rng = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 1, b]))
        parts.append(draw(rng, min(batch, samples - start)))
    return _jackknife_log_mean(np.concatenate(parts))


# --------------------------------------------------------------------------
# normalization constants and densities


def norm_const(spec: RootSystemSpec, k: MultiplicityParam) -> float:
    """log c_k, the inverse of the Gaussian-weighted chamber integral."""
    n, fam = spec.rank, spec.family
    km = float(k.k_medium)
    j = np.arange(1, n + 1)
    common = math.lgamma(n + 1) + float(np.sum(gammaln(1 + km) - gammaln(1 + j * km)))
    if fam == "A":
        return common - 0.5 * (n - 1) * math.log(2 * math.pi)
    if fam == "B":
        k1 = float(k.k_short)
        return (common - n * (k1 + (n - 1) * km - 0.5) * math.log(2)
                - float(np.sum(gammaln(0.5 + k1 + (j - 1) * km))))
    if fam == "D":
        return (common - (n * (n - 1) * km - n / 2 + 1) * math.log(2)
                - float(np.sum(gammaln(0.5 + (j - 1) * km))))
    return norm_const_from_roots(spec, k)


def norm_const_from_roots(spec: RootSystemSpec, k: MultiplicityParam) -> float:
    """Macdonald-Mehta product over the positive roots (any family)."""
    r = np.array([float(c) for c in rho(spec, k)])
    total = math.log(weyl_group_order(spec)) - 0.5 * spec.dim * math.log(2 * math.pi)
    for root in positive_roots(spec):
        a = np.array(root, dtype=float)
        len2 = float(a @ a)
        mult = float(k.for_length2(len2))
        pairing = 2 * float(r @ a) / len2
        total += math.lgamma(1 + pairing) - math.lgamma(1 + pairing + mult) + mult * math.log(2 / len2)
    return total


def log_root_product(spec: RootSystemSpec, k: MultiplicityParam, y) -> float:
    """sum over positive roots of 2 k_alpha log<alpha, y>; -inf off the open chamber."""
    y = np.asarray(y, dtype=float)
    total = 0.0
    for root in positive_roots(spec):
        mult = float(k.for_length2(sum(c * c for c in root)))
        if mult == 0:
            continue
        p = float(np.dot(root, y))
        if p <= 0:
            return float("-inf")
        total += 2 * mult * math.log(p)
    return total


def _bessel_rank_one(k1: float, z: float) -> float:
    # Gamma(k1 + 1/2) (z/2)^(1/2 - k1) I_{k1 - 1/2}(z), in logs
    z = abs(z)
    if z == 0:
        return 0.0
    nu = k1 - 0.5
    if z < 1e-8:
        return z * z / (4 * (nu + 1))
    return float(math.lgamma(k1 + 0.5) + (0.5 - k1) * math.log(z / 2) + math.log(ive(nu, z)) + z)


def log_bessel(spec: RootSystemSpec, k: MultiplicityParam, lam, x, samples: int = 100_000, seed: int = 0) -> float:
    """log J_{k,lam}(x) by the cheapest exact route, Monte Carlo otherwise."""
    lam = np.asarray(lam, dtype=float)
    x = np.asarray(x, dtype=float)
    if not np.any(lam) or not np.any(x):
        return 0.0
    if spec.rank == 1 and spec.family in ("B", "C", "BC"):
        # the rank-one Dunkl operator only sees the total end multiplicity
        end = {"B": k.k_short, "C": k.k_long, "BC": k.k_short + k.k_long}[spec.family]
        return _bessel_rank_one(float(end), float(lam[0] * x[0]))
    if spec.family == "A" and spec.rank == 1:
        return float(lam[0] * x[0])
    if spec.family == "A" and k.k_medium == 1:
        return hciz_exact(lam, x)
    return haar_mc(spec, k, lam, x, samples, seed)[0]


def transition_density(spec: RootSystemSpec, k: MultiplicityParam, x, y, t: float = 1.0, **mc) -> float:
    """log p_t(x, y) for the radial Dunkl process (type A inputs are projected to trace zero)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.family == "A":
        x, y = x - x.mean(), y - y.mean()
    gamma = total_multiplicity(spec, k)
    st = math.sqrt(t)
    return (norm_const(spec, k) - (gamma + spec.dim / 2) * math.log(t)
            - (float(x @ x) + float(y @ y)) / (2 * t)
            + log_bessel(spec, k, x / st, y / st, **mc)
            + log_root_product(spec, k, y))


def transition_density_p1(spec: RootSystemSpec, k: MultiplicityParam, x, y, **mc) -> float:
    return transition_density(spec, k, x, y, 1.0, **mc)


# --------------------------------------------------------------------------
# large-N constants


def coefficient_C(alpha: float, beta: float) -> float:
    if alpha < 0 or beta <= 0:
        raise ValueError("need alpha >= 0 and beta > 0")
    a2loga = alpha * alpha * math.log(alpha) if alpha > 0 else 0.0
    return beta / 4 * (3 * (alpha + 1) + a2loga - (alpha + 1) ** 2 * math.log(alpha + 1))


def dyson_bessel_multiplicity(N: int, beta: float, alpha_N: float) -> tuple[RootSystemSpec, MultiplicityParam]:
    """Root system and multiplicities behind the Dyson Bessel process."""
    if alpha_N > 0:
        return RootSystemSpec("B", N), MultiplicityParam(k_short=beta * N * alpha_N / 2, k_medium=beta / 2)
    return RootSystemSpec("D", N), MultiplicityParam(k_medium=beta / 2)


def log_C_kN(N: int, alpha_N: float, beta: float) -> float:
    """log C_{k,N} = log c_k + (beta/2)(alpha_N N^2 + N(N-1)) log(beta N)."""
    spec, k = dyson_bessel_multiplicity(N, beta, alpha_N)
    return norm_const(spec, k) + beta / 2 * (alpha_N * N * N + N * (N - 1)) * math.log(beta * N)


# --------------------------------------------------------------------------
# continuity estimate


def _fold(spec_family: str, v: np.ndarray) -> np.ndarray:
    return np.sort(v) if spec_family == "A" else np.sort(np.abs(v))


def continuity_ratio_bound(x, y, y_prime, beta: float, N: int, family: str = "A") -> float:
    """Upper bound on |log J_x(y) - log J_x(y')| / N^2.

    Uses max |x_i| / sqrt(N / beta) times the W1 distance between the
    empirical measures of y / sqrt(beta N) and y' / sqrt(beta N).
    """
    x = np.asarray(x, dtype=float)
    scale = math.sqrt(beta * N)
    mu = AtomicMeasure(_fold(family, np.asarray(y, dtype=float)) / scale)
    nu = AtomicMeasure(_fold(family, np.asarray(y_prime, dtype=float)) / scale)
    if not np.any(x):
        return 0.0
    return float(np.max(np.abs(x)) / math.sqrt(N / beta) * wasserstein1(mu, nu))


# --------------------------------------------------------------------------
# Metropolis chain for the tilted unitary law


@dataclass
class GibbsResult:
    observables: np.ndarray  # (steps, n_obs)
    acceptance_rate: float
    autocorrelation_time: list[float] = field(default_factory=list)


def integrated_autocorrelation(series: np.ndarray, window: int | None = None) -> float:
    """Sokal's self-consistent window estimate of the integrated autocorrelation time."""
    s = np.asarray(series, dtype=float)
    s = s - s.mean()
    n = s.size
    var = float(s @ s) / n
    if var == 0 or n < 4:
        return 1.0
    f = np.fft.rfft(s, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (var * n)
    tau = 1.0
    for lag in range(1, n):
        tau += 2 * acf[lag]
        if window is None and lag >= 5 * tau:
            break
        if window is not None and lag >= window:
            break
    return float(max(tau, 1.0))


def gibbs_sampler(A, B, N: int | None = None, steps: int = 10_000, seed: int = 0,
                  functions: Sequence[Callable[[np.ndarray], np.ndarray]] | None = None,
                  step_size: float | None = None, burn_in: int = 0) -> GibbsResult:
    """Metropolis random walk on U(N) targeting exp(N Tr(A U B U*)) dU.

    ``A`` and ``B`` are diagonals (vectors) or Hermitian matrices.  For every
    f in ``functions`` the chain emits (1/N) Tr f(A) U B U*; by default f(x)=x
    and f(x)=1.  Proposals multiply by exp(i eps H) with H from the GUE,
    which is symmetric with respect to Haar measure.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    A = np.diag(A) if A.ndim == 1 else A
    B = np.diag(B) if B.ndim == 1 else B
    N = A.shape[0] if N is None else N
    if A.shape != (N, N) or B.shape != (N, N):
        raise ValueError("A and B must be N x N")
    if N > 16:
        raise ValueError("the Metropolis chain is meant for N <= 16")
    functions = list(functions) if functions is not None else [lambda v: v, lambda v: np.ones_like(v)]
    evals, evecs = np.linalg.eigh(A)
    f_of_a = [evecs @ np.diag(f(evals)) @ evecs.conj().T for f in functions]
    eps = 1.0 / math.sqrt(N) if step_size is None else step_size

    rng = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 2, 0]))
    U = haar_unitary(N, 1, rng)[0]

    def energy(u):
        return N * float(np.real(np.trace(A @ u @ B @ u.conj().T)))

    e = energy(U)
    out = np.empty((steps, len(functions)))
    accepted = 0
    for step in range(burn_in + steps):
        g = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / 2
        h = g + g.conj().T
        w, v = np.linalg.eigh(h)
        prop = (v * np.exp(1j * eps * w)) @ v.conj().T @ U
        e_new = energy(prop)
        if math.log(rng.random() + 1e-300) < e_new - e:
            U, e = prop, e_new
            if step >= burn_in:
                accepted += 1
        if step >= burn_in:
            conj = U @ B @ U.conj().T
            out[step - burn_in] = [float(np.real(np.trace(fa @ conj))) / N for fa in f_of_a]
    taus = [integrated_autocorrelation(out[:, j]) for j in range(out.shape[1])]
    return GibbsResult(out, accepted / max(steps, 1), taus)
