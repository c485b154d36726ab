"""Particle integrators for radial Dunkl, Dyson Bessel and modified Dyson Bessel SDEs.

All integrators share one generic form

    dY = sigma dB + sigma^2 F_k(Y) dt + extra(Y) dt

where F_k is the radial Dunkl drift (homogeneous of degree -1) and
sigma = 1 for the radial Dunkl coordinates X, sigma = 1/sqrt(beta N) for
the Dyson Bessel coordinates s = X / sqrt(beta N).  Step-size control is
scale invariant, so both coordinate systems see the same time grid and,
with a shared seed, the same noise.

States are stored in the closed chamber order: decreasing coordinates,
last coordinate >= 0 for B/C/BC and >= -(second to last) for D.
Ensembles are handled by leading batch axes on the state array.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .measures import AtomicMeasure, QuantileMeasure, quantile, symmetrize
from .rootsys import ChamberError, MultiplicityParam, RootSystemSpec, positive_roots, total_multiplicity

WARM_START_C = 1e-3
SCHEMES = ("euler_maruyama", "tamed_euler")


class SimulationError(RuntimeError):
    def __init__(self, message: str, **diagnostics):
        super().__init__(message + "; " + ", ".join(f"{k}={v}" for k, v in diagnostics.items()))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SimConfig:
    spec: RootSystemSpec
    k: MultiplicityParam
    t_end: float = 1.0
    dt: float = 1e-3
    seed: int = 0
    scheme: str = "euler_maruyama"
    eps_min: float | None = None
    ramp: float = 0.05
    max_halvings: int = 20

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (self.dt > 0 and self.t_end > 0):
            raise ValueError("dt and t_end must be positive")
        fam, n, k = self.spec.family, self.spec.rank, self.k
        if n >= 2 and k.k_medium < 0.5:
            raise ValueError("k_medium must be at least 1/2 so that particles cannot collide")
        if fam in ("B", "C", "BC"):
            end = (k.k_short if fam != "C" else 0) + (k.k_long if fam != "B" else 0)
            if 0 < end < 0.5:
                raise ValueError("k_short + k_long must be 0 or at least 1/2")

    @property
    def N(self) -> int:
        return self.spec.rank

    @property
    def beta(self) -> float:
        return 2.0 * self.k.k_medium

    @property
    def alpha_N(self) -> float:
        return 2.0 * (_end_mult(self.spec, self.k)) / (self.beta * self.N)

    @property
    def epsilon(self) -> float:
        return self.dt**0.6 if self.eps_min is None else self.eps_min

    @classmethod
    def dyson_bessel(cls, N: int, beta: float, alpha_N: float, **kw) -> "SimConfig":
        """B-type (alpha_N > 0) or D-type (alpha_N = 0) radial Dunkl parameters for the Dyson Bessel process."""
        if alpha_N < 0:
            raise ValueError("alpha_N must be non-negative")
        if 0 < alpha_N < 1.0 / (beta * N) * (1 - 1e-12):
            raise ValueError("alpha_N must be 0 or at least 1/(beta N)")
        family = "B" if alpha_N > 0 else "D"
        if family == "D" and N < 2:
            family = "B"
        k = MultiplicityParam(k_short=beta * N * alpha_N / 2, k_medium=beta / 2)
        return cls(RootSystemSpec(family, N), k, **kw)

    def to_json(self) -> dict:
        d = asdict(self)
        d["spec"] = self.spec.to_json()
        d["beta"] = self.beta
        d["alpha_N"] = self.alpha_N
        return d


def _end_mult(spec: RootSystemSpec, k: MultiplicityParam) -> float:
    """Coefficient of 1/x_i in the drift coming from the roots e_i and 2e_i."""
    return {"A": 0.0, "D": 0.0, "B": k.k_short, "C": k.k_long, "BC": k.k_short + k.k_long}[spec.family]


@dataclass
class ParticlePath:
    times: np.ndarray
    states: np.ndarray
    seed: int
    config: SimConfig
    coords: str = "s"
    log_weight: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


# drifts --------------------------------------------------------------------


def chamber_pairings(spec: RootSystemSpec, x: np.ndarray) -> np.ndarray:
    """Pairings of x with the simple roots; all positive iff x is interior."""
    x = np.asarray(x, dtype=float)
    parts = [x[..., :-1] - x[..., 1:]]
    fam = spec.family
    if fam in ("B", "BC"):
        parts.append(x[..., -1:])
    elif fam == "C":
        parts.append(2 * x[..., -1:])
    elif fam == "D" and x.shape[-1] >= 2:
        parts.append(x[..., -2:-1] + x[..., -1:])
    return np.concatenate(parts, axis=-1)


def in_open_chamber(spec: RootSystemSpec, x: np.ndarray) -> np.ndarray:
    return np.all(chamber_pairings(spec, x) > 0, axis=-1)


def fold_to_chamber(spec: RootSystemSpec, x: np.ndarray) -> np.ndarray:
    """Image of x in the closed chamber under the Weyl group."""
    fam = spec.family
    if fam == "A":
        return -np.sort(-x, axis=-1)
    y = -np.sort(-np.abs(x), axis=-1)
    if fam == "D":
        parity = np.prod(np.where(x < 0, -1.0, 1.0), axis=-1)
        y[..., -1] *= parity
    return y


def _pair_sum(x: np.ndarray, sign: int, floor: float = 0.0) -> np.ndarray:
    """sum_{j != i} 1/(x_i + sign * x_j), with |denominator| floored."""
    d = x[..., :, None] + sign * x[..., None, :]
    if floor > 0:
        d = np.copysign(np.maximum(np.abs(d), floor), d)
    idx = np.arange(x.shape[-1])
    d[..., idx, idx] = np.inf
    return np.sum(1.0 / d, axis=-1)


def _scatter_pairs(r: np.ndarray, sign: int, n: int, iu, ju) -> np.ndarray:
    """Row sums of the n x n matrix with r above the diagonal and sign * r below."""
    full = np.zeros(r.shape[:-1] + (n, n))
    full[..., iu, ju] = r
    full[..., ju, iu] = sign * r
    return full.sum(axis=-1)


def _dunkl_drift(spec: RootSystemSpec, k: MultiplicityParam, x: np.ndarray, floor: float = 0.0) -> np.ndarray:
    fam = spec.family
    out = k.k_medium * _pair_sum(x, -1, floor) if x.shape[-1] > 1 else np.zeros_like(x)
    if fam != "A" and x.shape[-1] > 1:
        out = out + k.k_medium * _pair_sum(x, +1, floor)
    end = _end_mult(spec, k)
    if end:
        xs = np.maximum(np.abs(x), floor) * np.where(x < 0, -1.0, 1.0) if floor > 0 else x
        out = out + end / xs
    return out


def drift_radial_dunkl(spec: RootSystemSpec, k: MultiplicityParam, state) -> np.ndarray:
    """sum over positive roots of k_alpha alpha / <alpha, x>, in closed form."""
    x = np.asarray(state, dtype=float)
    if x.shape[-1] != spec.rank:
        raise ValueError("state length does not match rank")
    if not np.all(in_open_chamber(spec, x)):
        raise ChamberError("state is not strictly inside the positive Weyl chamber")
    return _dunkl_drift(spec, k, x)


def drift_from_roots(spec: RootSystemSpec, k: MultiplicityParam, state) -> np.ndarray:
    """Same drift by direct summation over the root list (slow reference)."""
    x = np.asarray(state, dtype=float)
    out = np.zeros_like(x)
    for root in positive_roots(spec):
        a = np.asarray(root, dtype=float)
        mult = k.for_length2(a @ a)
        if mult:
            out += mult * a / (x @ a)
    return out


# smooth hyperbolic corrections ---------------------------------------------------


# below this the closed forms lose more digits to cancellation than the truncated series
SERIES_CUT = 0.1


def _series_switch(x, small, series, exact):
    x = np.asarray(x, dtype=float)
    near = np.abs(x) < small
    safe = np.where(near, small, x)
    return np.where(near, series(x), exact(safe))


def v_potential(x):
    """V(x) = log(sinh(x/2)/(x/2)), even, V(0) = 0."""

    def exact(t):
        a = np.abs(t)
        return a / 2 + np.log1p(-np.exp(-a)) - np.log(a)

    return _series_switch(
        x, SERIES_CUT, lambda t: t**2 / 24 - t**4 / 2880 + t**6 / 181440 - t**8 / 9676800, exact
    )


def v_prime(x):
    """V'(x) = coth(x/2)/2 - 1/x; removable singularity at 0."""
    return _series_switch(
        x,
        SERIES_CUT,
        lambda t: t / 12 - t**3 / 720 + t**5 / 30240 - t**7 / 1209600 + t**9 / 47900160,
        lambda t: 0.5 / np.tanh(t / 2) - 1.0 / t
    )


def v_second(x):
    return _series_switch(
        x,
        SERIES_CUT,
        lambda t: 1 / 12 - t**2 / 240 + t**4 / 6048 - t**6 / 172800 + t**8 / 5322240,
        lambda t: 1.0 / t**2 - 0.25 / np.sinh(t / 2) ** 2
    )


def w_potential(x, gamma: float, delta: float):
    """Antiderivative of w_prime with value 0 at the origin."""
    x = np.asarray(x, dtype=float)
    return delta * v_potential(2 * x) + gamma * v_potential(x)


def w_prime(x, gamma: float, delta: float):
    """delta (coth x - 1/x) + gamma (coth(x/2)/2 - 1/x).

    gamma multiplies the short-root (coth(x/2)) part, delta the long-root
    (coth x) part, matching k_1/(beta N) and k_2/(beta N).
    """
    x = np.asarray(x, dtype=float)
    return 2 * delta * v_prime(2 * x) + gamma * v_prime(x)


def w_second(x, gamma: float, delta: float):
    x = np.asarray(x, dtype=float)
    return 4 * delta * v_second(2 * x) + gamma * v_second(x)


def modified_extra_drift(s: np.ndarray, gamma: float, delta: float) -> np.ndarray:
    """Drift of the modified process minus the Dyson Bessel drift."""
    n = s.shape[-1]
    iu, ju = np.triu_indices(n, 1)
    # V' is odd, so the (j, i) term of the difference flips sign
    minus = _scatter_pairs(v_prime(s[..., iu] - s[..., ju]), -1, n, iu, ju)
    plus = _scatter_pairs(v_prime(s[..., iu] + s[..., ju]), 1, n, iu, ju)
    return (minus + plus) / (2 * n) + w_prime(s, gamma, delta)


# integrator -------------------------------------------------------------------


def warm_start(spec: RootSystemSpec, scale: float = 1.0, c: float = WARM_START_C) -> np.ndarray:
    """Deterministic near-origin start c i / N^{3/2} in chamber order (centred for type A)."""
    n = spec.rank
    s = c * np.arange(n, 0, -1, dtype=float) / n**1.5
    if spec.family == "A":
        s = s - s.mean()
    return scale * s


def _normals(seed: int, step: int, depth: int, code: int, shape) -> np.ndarray:
    bitgen = np.random.Philox(key=seed, counter=[0, code, depth, step])
    return np.random.Generator(bitgen).standard_normal(shape)


def _integrate(config: SimConfig, init, sigma: float, extra=None, tilt=None, record: bool = True, coords: str = "s"):
    spec, k = config.spec, config.k
    y = np.array(init, dtype=float)
    if y.shape[-1] != spec.rank:
        raise ValueError("initial state length does not match rank")
    if not np.all(in_open_chamber(spec, y)):
        raise ChamberError("initial state must be strictly inside the chamber")
    n = spec.rank
    gamma_tot = total_multiplicity(spec, k)
    # time at which the process started from the origin reaches the same second moment
    t_warm = float(np.mean(np.sum(y**2, axis=-1))) / (sigma**2 * (n + 2 * gamma_tot))
    eps = config.epsilon
    tamed = config.scheme == "tamed_euler"
    log_w = np.zeros(y.shape[:-1]) if tilt is not None else None
    stats = {"steps": 0, "halvings": 0, "max_depth": 0}

    def drift(z, h):
        floor = sigma * math.sqrt(h / max(n, 1)) if tamed else 0.0
        b = sigma**2 * _dunkl_drift(spec, k, z, floor)
        if tamed:
            scale = np.sqrt(np.mean(z**2, axis=-1, keepdims=True)) + sigma * math.sqrt(h)
            b = b / (1.0 + h * np.abs(b) / scale)
        # the smooth part stays untamed so that a tilt by it is an exact likelihood ratio
        if extra is not None:
            b = b + extra(z)
        return b

    def accept(z, z_new, b, h):
        g = chamber_pairings(spec, z)
        g_new = chamber_pairings(spec, z_new)
        db = np.abs(chamber_pairings(spec, b)) if spec.family != "A" or n > 1 else np.zeros_like(g)
        return np.all(g_new > eps * g, axis=-1) & np.all(db * h < g / eps, axis=-1)

    def advance(z, h, dB, step, depth, code):
        b = drift(z, h)
        z_new = z + b * h + sigma * dB
        stats["max_depth"] = max(stats["max_depth"], depth)
        if tamed:
            z_new = fold_to_chamber(spec, z_new)
            ok = np.ones(z.shape[:-1], dtype=bool)
        else:
            ok = accept(z, z_new, b, h)
        if tilt is not None:
            c = tilt(z) / sigma
            inc = np.sum(c * dB, axis=-1) - 0.5 * h * np.sum(c * c, axis=-1)
        if np.all(ok):
            return z_new, (inc if tilt is not None else None)
        if depth >= config.max_halvings:
            bad = np.argwhere(~ok)[:1].tolist()
            raise SimulationError(
                "step rejected after the maximum number of halvings",
                step=step,
                h=h,
                row=bad,
                min_pairing=float(np.min(chamber_pairings(spec, z))),
            )
        stats["halvings"] += 1
        rows = ~ok
        # Brownian bridge midpoint for the rejected rows only
        zeta = _normals(config.seed, step, depth + 1, code, z.shape)[rows]
        mid = 0.5 * dB[rows] + math.sqrt(h / 4) * zeta
        za, ia = advance(z[rows], h / 2, mid, step, depth + 1, 2 * code)
        zb, ib = advance(za, h / 2, dB[rows] - mid, step, depth + 1, 2 * code + 1)
        z_new = z_new.copy()
        z_new[rows] = zb
        if tilt is not None:
            inc = inc.copy()
            inc[rows] = ia + ib
            return z_new, inc
        return z_new, None

    times = [0.0]
    states = [y.copy()] if record else [y.copy()]
    t, step = 0.0, 0
    while t < config.t_end * (1 - 1e-12):
        h = min(config.dt, config.ramp * (t + t_warm), config.t_end - t)
        dB = math.sqrt(h) * _normals(config.seed, step, 0, 0, y.shape)
        if y.ndim == 1:
            z, inc = advance(y[None, :], h, dB[None, :], step, 0, 0)
            y = z[0]
            if tilt is not None:
                log_w = log_w + inc[0]
        else:
            y, inc = advance(y, h, dB, step, 0, 0)
            if tilt is not None:
                log_w = log_w + inc
        if not np.all(in_open_chamber(spec, y)):
            raise SimulationError("state left the open chamber", step=step, t=t)
        t += h
        step += 1
        if record:
            times.append(t)
            states.append(y.copy())
    if not record:
        times.append(t)
        states.append(y.copy())
    stats["steps"] = step
    return ParticlePath(np.array(times), np.array(states), config.seed, config, coords, log_w, stats)


def simulate_radial_dunkl(config: SimConfig, init, record: bool = True) -> ParticlePath:
    """Radial Dunkl process dX = dB + sum k_alpha alpha/<alpha,X> dt (unscaled coordinates)."""
    return _integrate(config, init, 1.0, record=record, coords="X")


def simulate_dyson_bessel(config: SimConfig, init=None, record: bool = True) -> ParticlePath:
    """Dyson Bessel process in s = X / sqrt(beta N); ``init=None`` uses the warm start."""
    init = warm_start(config.spec) if init is None else init
    sigma = 1.0 / math.sqrt(config.beta * config.N)
    return _integrate(config, init, sigma, record=record, coords="s")


def modified_config(config: SimConfig, gamma: float, delta: float) -> SimConfig:
    """Copy of a Dyson Bessel config with k_1 = gamma beta N, k_2 = delta beta N (type BC)."""
    beta, n = config.beta, config.N
    k = MultiplicityParam(k_short=gamma * beta * n, k_medium=beta / 2, k_long=delta * beta * n)
    fam = "BC" if gamma > 0 and delta > 0 else ("B" if gamma > 0 else ("C" if delta > 0 else "D"))
    if fam == "D" and n < 2:
        fam = "B"
    return SimConfig(RootSystemSpec(fam, n), k, config.t_end, config.dt, config.seed, config.scheme,
                     config.eps_min, config.ramp, config.max_halvings)


def simulate_modified_dyson_bessel(config: SimConfig, gamma: float, delta: float, init=None,
                                   record: bool = True) -> ParticlePath:
    """Modified Dyson Bessel process with alpha_N = 2(gamma + delta).

    Only beta, N and the integrator settings are taken from ``config``;
    the boundary multiplicities come from gamma and delta.
    """
    if gamma < 0 or delta < 0:
        raise ValueError("gamma and delta must be non-negative")
    cfg = modified_config(config, gamma, delta)
    init = warm_start(cfg.spec) if init is None else init
    sigma = 1.0 / math.sqrt(cfg.beta * cfg.N)
    return _integrate(cfg, init, sigma, extra=lambda s: modified_extra_drift(s, gamma, delta), record=record)


def simulate_reweighted_dyson_bessel(config: SimConfig, gamma: float, delta: float, init=None,
                                     record: bool = False) -> ParticlePath:
    """Dyson Bessel paths (alpha_N = 2(gamma + delta)) carrying the exponential-martingale log weight.

    ``path.log_weight`` is the discrete likelihood ratio of the modified
    Euler chain to the Dyson Bessel Euler chain along each path, i.e. the
    time-discretised L_1 - <L,L>_1 / 2.
    """
    cfg = modified_config(config, gamma, delta)
    init = warm_start(cfg.spec) if init is None else init
    sigma = 1.0 / math.sqrt(cfg.beta * cfg.N)
    return _integrate(cfg, init, sigma, tilt=lambda s: modified_extra_drift(s, gamma, delta), record=record)


# empirical measures ---------------------------------------------------------


def empirical_path(path: ParticlePath, stride: int = 1, symmetric: bool = True, M: int | None = None):
    """Symmetrized empirical measures at every ``stride``-th stored time (endpoints kept).

    Returns ``(times, measures)``.  With the default ``M = 2N`` the
    quantile grid reproduces the 2N atoms exactly.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    states = path.states
    if states.ndim != 2:
        raise ValueError("empirical_path expects a single trajectory")
    idx = list(range(0, len(states), stride))
    if idx[-1] != len(states) - 1:
        idx.append(len(states) - 1)
    n = states.shape[1]
    grid = M or (2 * n if symmetric else n)
    out = []
    for i in idx:
        mu = AtomicMeasure(states[i])
        if symmetric:
            mu = symmetrize(mu)
        q = quantile(mu, grid)
        out.append(QuantileMeasure(q.values, symmetric=symmetric) if not symmetric else symmetrize(q))
    return path.times[idx], out


# Girsanov functional --------------------------------------------------------


def _atoms(mu) -> np.ndarray:
    return mu.atoms if isinstance(mu, AtomicMeasure) else np.asarray(mu.values)


def _diff_quotient(fp, fpp, x, y):
    """(f'(x) - f'(y))/(x - y) with the diagonal value f''(x)."""
    d = x - y
    near = np.abs(d) < 1e-9 * (1 + np.abs(x))
    safe = np.where(near, 1.0, d)
    return np.where(near, fpp(0.5 * (x + y)), (fp(x) - fp(y)) / safe)


def girsanov_integrands(nu, gamma: float, delta: float, alpha: float, pair_coupling: float = 1.0) -> dict:
    """Per-time pieces of the change-of-measure functional for one symmetric measure.

    ``pair_coupling`` scales the pair potential V (0 switches it off).
    """
    x = _atoms(nu)
    c = pair_coupling
    wp = lambda t: w_prime(t, gamma, delta)
    wpp = lambda t: w_second(t, gamma, delta)
    pair = x[:, None] - x[None, :]
    energy = c * float(np.mean(v_potential(pair))) + 2 * float(np.mean(w_potential(x, gamma, delta)))
    g = c * np.mean(v_prime(pair), axis=1) + wp(x)  # g(x) = int V'(x - z) dnu(z) + W'(x)
    # (g(x) - g(y))/(x - y) averaged over x, y
    vq = np.zeros((x.size, x.size))
    for j, z in enumerate(x):
        vq += _diff_quotient(v_prime, v_second, x[:, None] - z, x[None, :] - z)
    vq *= c / x.size
    wq = _diff_quotient(wp, wpp, x[:, None], x[None, :])
    transport = float(np.mean(vq + wq))
    near0 = np.abs(x) < 1e-12
    gx = np.where(near0, c * np.mean(v_second(-x[None, :]), axis=1) + wpp(x), g / np.where(near0, 1.0, x))
    return {"energy": energy, "transport": transport, "boundary": float(alpha * np.mean(gx)),
            "quadratic": float(np.mean(g * g))}


def girsanov_functional(times, measures, gamma: float, delta: float, alpha: float, beta: float,
                        pair_coupling: float = 1.0) -> float:
    """Large-N limit F of -(1/N^2) log dP/dQ along a path of symmetric measures.

    F = -(beta/2) [ (E(nu_1) - E(nu_0)) - int_0^1 (D(nu_t) + alpha B(nu_t)) dt - int_0^1 Q(nu_t) dt ]

    with E = int int V + 2 int W, D the difference-quotient triple
    integral, B = int g(x)/x and Q = int g^2, g = V' * nu + W'.
    """
    times = np.asarray(times, dtype=float)
    parts = [girsanov_integrands(m, gamma, delta, alpha, pair_coupling) for m in measures]
    energy = np.array([p["energy"] for p in parts])
    running = np.array([p["transport"] + p["boundary"] + p["quadratic"] for p in parts])
    integral = float(np.sum(0.5 * (running[1:] + running[:-1]) * np.diff(times))) if len(times) > 1 else 0.0
    return -0.5 * beta * ((energy[-1] - energy[0]) - integral)

