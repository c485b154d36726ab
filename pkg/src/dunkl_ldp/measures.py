"""Probability measures on the line, stored as quantile functions.

The canonical representation samples the quantile function at the
midpoints q_j = (j - 1/2)/M.  Atomic measures are kept separately and
converted on demand.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_GRID = 512


class Divergent(float):
    """A tagged infinite value (``+inf`` or ``-inf``).

    Behaves like a float in comparisons, but callers can test
    ``isinstance(x, Divergent)`` instead of guessing whether an infinity
    was produced on purpose.
    """

    def __new__(cls, sign: int = 1, reason: str = ""):
        obj = super().__new__(cls, math.copysign(math.inf, sign))
        obj.reason = reason
        return obj

    def __repr__(self):
        return f"Divergent({'+' if self > 0 else '-'}inf)"


def is_divergent(x) -> bool:
    return isinstance(x, Divergent)


def midpoints(M: int) -> np.ndarray:
    return (np.arange(M) + 0.5) / M


@dataclass(frozen=True)
class QuantileMeasure:
    values: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("quantile values must be a non-empty 1-d array")
        if not np.all(np.isfinite(v)):
            raise ValueError("quantile values must be finite")
        tol = 1e-12 * max(1.0, float(np.max(np.abs(v))))
        if np.any(np.diff(v) < -tol):
            raise ValueError("quantile values must be non-decreasing")
        v = np.maximum.accumulate(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "symmetric", bool(self.symmetric))

    @property
    def M(self) -> int:
        return self.values.size

    @property
    def grid(self) -> np.ndarray:
        return midpoints(self.M)

    def moment(self, p: int = 2) -> float:
        return float(np.mean(self.values**p))

    def integrate(self, f) -> float:
        """Integral of f against the measure (midpoint rule in q)."""
        return float(np.mean(f(self.values)))

    def at(self, q) -> np.ndarray:
        """Piecewise-constant evaluation of the sampled quantile function."""
        idx = np.clip(np.floor(np.asarray(q) * self.M).astype(int), 0, self.M - 1)
        return self.values[idx]

    def resample(self, M: int) -> "QuantileMeasure":
        if M == self.M:
            return self
        q, g, v = midpoints(M), self.grid, self.values
        out = np.interp(q, g, v)
        if self.M >= 2:
            # linear extrapolation beyond the outermost nodes, so upsampling creates no flat ends
            lo, hi = q < g[0], q > g[-1]
            out[lo] = v[0] + (q[lo] - g[0]) * (v[1] - v[0]) / (g[1] - g[0])
            out[hi] = v[-1] + (q[hi] - g[-1]) * (v[-1] - v[-2]) / (g[-1] - g[-2])
        return QuantileMeasure(out, self.symmetric)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.values))))
        return bool(np.all(np.abs(self.values + self.values[::-1]) <= tol * scale))

    def to_json(self) -> dict:
        return {"M": self.M, "values": [float(v) for v in self.values], "symmetric": self.symmetric}

    @classmethod
    def from_json(cls, record: dict) -> "QuantileMeasure":
        values = np.asarray(record["values"], dtype=float)
        if "M" in record and int(record["M"]) != values.size:
            raise ValueError("M does not match number of values")
        return cls(values, bool(record.get("symmetric", False)))

    @classmethod
    def from_function(cls, quantile_fn, M: int = DEFAULT_GRID, symmetric: bool = False) -> "QuantileMeasure":
        return cls(np.asarray(quantile_fn(midpoints(M)), dtype=float), symmetric)


@dataclass(frozen=True)
class AtomicMeasure:
    atoms: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float).ravel()
        if atoms.size == 0:
            raise ValueError("need at least one atom")
        if self.weights is None:
            weights = np.full(atoms.size, 1.0 / atoms.size)
        else:
            weights = np.asarray(self.weights, dtype=float).ravel()
            if weights.shape != atoms.shape or np.any(weights < 0):
                raise ValueError("weights must be non-negative and match atoms")
            if not math.isclose(weights.sum(), 1.0, rel_tol=1e-9):
                raise ValueError("weights must sum to 1")
        order = np.argsort(atoms, kind="stable")
        object.__setattr__(self, "atoms", atoms[order])
        object.__setattr__(self, "weights", weights[order])

    @property
    def n(self) -> int:
        return self.atoms.size

    def is_equal_weight(self) -> bool:
        return bool(np.allclose(self.weights, 1.0 / self.n, rtol=1e-12, atol=0))


def quantile(mu: AtomicMeasure, M: int = DEFAULT_GRID) -> QuantileMeasure:
    """Right-continuous inverse CDF of an atomic measure on the midpoint grid."""
    cdf = np.cumsum(mu.weights)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, midpoints(M), side="right")
    return QuantileMeasure(mu.atoms[np.minimum(idx, mu.n - 1)])


def symmetrize(mu):
    """Half the measure plus half its reflection through the origin."""
    if isinstance(mu, AtomicMeasure):
        return AtomicMeasure(np.concatenate([mu.atoms, -mu.atoms]), np.concatenate([mu.weights, mu.weights]) / 2)
    if mu.symmetric:
        return mu
    merged = np.sort(np.concatenate([mu.values, -mu.values]))
    # pairwise averaging keeps the exact mirror property on the grid
    values = 0.5 * (merged[0::2] + merged[1::2])
    values = 0.5 * (values - values[::-1])
    return QuantileMeasure(values, symmetric=True)


def _as_quantiles(mu, M: int) -> QuantileMeasure:
    return quantile(mu, M) if isinstance(mu, AtomicMeasure) else mu


def wasserstein1(mu, nu) -> float:
    """W1 distance.

    Exact for two atomic measures (area between the CDFs), the quantile
    L1 distance for quantile forms; mixed inputs are compared on the
    quantile grid of the non-atomic one.
    """
    if isinstance(mu, AtomicMeasure) and isinstance(nu, AtomicMeasure):
        if mu.n == nu.n and mu.is_equal_weight() and nu.is_equal_weight():
            return float(np.mean(np.abs(mu.atoms - nu.atoms)))
        xs = np.union1d(mu.atoms, nu.atoms)
        F = np.cumsum(np.bincount(np.searchsorted(xs, mu.atoms), mu.weights, xs.size))
        G = np.cumsum(np.bincount(np.searchsorted(xs, nu.atoms), nu.weights, xs.size))
        return float(np.sum(np.abs(F - G)[:-1] * np.diff(xs)))
    M = nu.M if isinstance(mu, AtomicMeasure) else mu.M
    a, b = _as_quantiles(mu, M), _as_quantiles(nu, M)
    if a.M != b.M:
        b = b.resample(a.M)
    return float(np.mean(np.abs(a.values - b.values)))


def has_atom(mu: QuantileMeasure, rel_tol: float = 1e-12) -> bool:
    v = mu.values
    scale = max(float(np.ptp(v)), float(np.max(np.abs(v))), 1e-300)
    return bool(np.any(np.diff(v) <= rel_tol * scale))


def sigma_entropy(mu: QuantileMeasure) -> float:
    """Logarithmic energy  int int log|x - y| dmu(x) dmu(y).

    Off-diagonal grid cells use the midpoint rule.  The diagonal band
    |q - q'| < 1/M is replaced by the exact integral for a quantile
    function that is linear across the cell, h^2 (log(local spacing) - 3/2).
    Two equal grid values mean an atom of mass at least 2/M, and the
    energy is reported as ``Divergent(-1)``.
    """
    v = mu.values
    M = v.size
    if M < 2:
        return Divergent(-1, "single grid point")
    if has_atom(mu):
        return Divergent(-1, "atom")
    diff = np.abs(v[:, None] - v[None, :])
    np.fill_diagonal(diff, 1.0)
    off = np.log(diff).sum()
    spacing = np.empty(M)
    spacing[1:-1] = 0.5 * (v[2:] - v[:-2])
    spacing[0] = v[1] - v[0]
    spacing[-1] = v[-1] - v[-2]
    diag = np.sum(np.log(spacing) - 1.5)
    return float((off + diag) / M**2)


def log_energy_atoms(x: np.ndarray, y: np.ndarray | None = None) -> float:
    """Mean of log|x_i - y_j| over distinct pairs; used for atomic inputs."""
    x = np.asarray(x, dtype=float)
    if y is None:
        d = np.abs(x[:, None] - x[None, :])
        iu = np.triu_indices(x.size, 1)
        return float(2 * np.log(d[iu]).sum() / x.size**2)
    y = np.asarray(y, dtype=float)
    return float(np.log(np.abs(x[:, None] - y[None, :])).mean())


def scaled_shifted_measure(lam: Sequence, spec) -> AtomicMeasure:
    """Atoms (lam + rho)_i / (2N) with rho the half-sum of positive roots."""
    from .rootsys import rho

    r = rho(spec)
    if len(lam) != spec.rank:
        raise ValueError("weight length does not match rank")
    atoms = np.array([float(a + b) for a, b in zip(lam, r)]) / (2 * spec.rank)
    return AtomicMeasure(atoms)


def truncate(nu, delta: float):
    """Move the mass outside [-1/delta, 1/delta] to an atom at zero."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    bound = 1.0 / delta
    if isinstance(nu, AtomicMeasure):
        atoms = np.where(np.abs(nu.atoms) > bound, 0.0, nu.atoms)
        return AtomicMeasure(atoms, nu.weights)
    values = np.sort(np.where(np.abs(nu.values) > bound, 0.0, nu.values))
    return QuantileMeasure(values, nu.symmetric)


def quantile_inner(mu: QuantileMeasure, nu: QuantileMeasure) -> float:
    """int_0^1 T_mu(q) T_nu(q) dq."""
    if mu.M != nu.M:
        nu = nu.resample(mu.M)
    return float(np.mean(mu.values * nu.values))


# standard test laws ------------------------------------------------------


def _invert_cdf(cdf, q, lo, hi, iters=80):
    a = np.full_like(q, lo, dtype=float)
    b = np.full_like(q, hi, dtype=float)
    for _ in range(iters):
        m = 0.5 * (a + b)
        below = cdf(m) < q
        a = np.where(below, m, a)
        b = np.where(below, b, m)
    return 0.5 * (a + b)


def semicircle_cdf(x, radius: float = 2.0):
    u = np.clip(np.asarray(x, dtype=float) / radius, -1.0, 1.0)
    return 0.5 + (u * np.sqrt(1 - u * u) + np.arcsin(u)) / np.pi


def semicircle(M: int = DEFAULT_GRID, radius: float = 2.0) -> QuantileMeasure:
    q = midpoints(M)
    x = _invert_cdf(lambda v: semicircle_cdf(v, radius), q, -radius, radius)
    x = 0.5 * (x - x[::-1])
    return QuantileMeasure(x, symmetric=True)


def semicircle_quantile(q, radius: float = 2.0) -> np.ndarray:
    q = np.atleast_1d(np.asarray(q, dtype=float))
    return _invert_cdf(lambda v: semicircle_cdf(v, radius), q, -radius, radius)


def arcsine(M: int = DEFAULT_GRID, a: float = 1.0) -> QuantileMeasure:
    return QuantileMeasure(-a * np.cos(np.pi * midpoints(M)), symmetric=True)


def uniform(M: int = DEFAULT_GRID, lo: float = 0.0, hi: float = 1.0) -> QuantileMeasure:
    return QuantileMeasure(lo + (hi - lo) * midpoints(M), symmetric=np.isclose(lo, -hi))


# file formats ------------------------------------------------------------


def write_quantile_csv(path, mu: QuantileMeasure):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantile"])
        for v in mu.values:
            w.writerow([format(float(v), ".17g")])


def read_quantile_csv(path, symmetric: bool | None = None) -> QuantileMeasure:
    values = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if values:
                    raise
    mu = QuantileMeasure(np.array(values))
    if symmetric is None:
        symmetric = mu.is_symmetric(1e-12)
    return QuantileMeasure(mu.values, symmetric)


def write_quantile_json(path, mu: QuantileMeasure):
    with open(path, "w") as fh:
        json.dump(mu.to_json(), fh)


def read_quantile_json(path) -> QuantileMeasure:
    with open(path) as fh:
        return QuantileMeasure.from_json(json.load(fh))
