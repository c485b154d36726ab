"""Fluid-action minimization and the large-N rate functionals built on it.

Paths of measures are stored in Lagrangian form: a field X[t, q] of
quantile trajectories on a (time nodes) x (quantile midpoints) grid.  In
these coordinates mass conservation holds identically, the velocity is
dX/dt, the density is 1/(dX/dq), and the action reads

    int int (dX/dt)^2 + (pi^2/3) (dX/dq)^(-2) + alpha^2 / (4 X^2)  dq dt.

Discretization: kinetic term on time intervals, the two potential terms
at interval midpoints (average of the two rows), q-differences weighted
by dq with the two outermost ones stretched to 1.5 dq so that the
weights integrate to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import minimize
from scipy.sparse.linalg import spsolve

from .bessel import coefficient_C
from .dunkl_sim import v_potential, v_prime
from .measures import Divergent, QuantileMeasure, has_atom, midpoints, sigma_entropy, symmetrize, wasserstein1

PI2_3 = math.pi**2 / 3
EPS_MONO_REL = 1e-8


@dataclass
class LagrangianPath:
    X: np.ndarray  # (K_t + 1, K_q), rows are time nodes
    times: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] != self.times.size:
            raise ValueError("X must have one row per time node")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time nodes must increase")
        if self.symmetric and self.X.shape[1] % 2:
            raise ValueError("symmetric paths need an even number of quantile points")

    @classmethod
    def interpolate(cls, start, end, K_t: int, symmetric: bool = False, times=None) -> "LagrangianPath":
        """Displacement interpolation (1 - t) start + t end."""
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        times = np.linspace(0.0, 1.0, K_t + 1) if times is None else np.asarray(times, dtype=float)
        return cls(np.outer(1 - times, start) + np.outer(times, end), times, symmetric)

    @property
    def K_t(self) -> int:
        return self.times.size - 1

    @property
    def K_q(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> np.ndarray:
        return midpoints(self.K_q)

    def row(self, n: int) -> QuantileMeasure:
        return QuantileMeasure(self.X[n], self.symmetric)

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.X, axis=1) > 0))

    def check(self, tol: float = 1e-12):
        if not self.is_monotone():
            raise ValueError("quantile trajectories must be strictly increasing in q")
        if self.symmetric:
            scale = max(1.0, float(np.max(np.abs(self.X))))
            if np.max(np.abs(self.X + self.X[:, ::-1])) > tol * scale:
                raise ValueError("symmetric path is not odd in q - 1/2")

    def to_rows(self):
        for n, t in enumerate(self.times):
            for q, x in zip(self.q, self.X[n]):
                yield t, q, x


@dataclass
class RateResult:
    value: float
    path: LagrangianPath | None
    residual_norm: float
    iterations: int
    grad_norm: float
    stale: bool = False
    action: float = float("nan")
    terms: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "value": float(self.value),
            "residual_norm": float(self.residual_norm),
            "grid": [self.path.K_t, self.path.K_q] if self.path is not None else None,
            "iterations": int(self.iterations),
            "grad_norm": float(self.grad_norm),
            "stale": bool(self.stale),
            "action": float(self.action),
            "terms": {k: float(v) for k, v in self.terms.items()},
        }


# --------------------------------------------------------------------------
# discrete action


def _q_weights(K_q: int) -> np.ndarray:
    dq = 1.0 / K_q
    w = np.full(K_q - 1, dq)
    w[0] += dq / 2
    w[-1] += dq / 2
    return w


def _action_and_grad(X: np.ndarray, times: np.ndarray, alpha: float, need_grad: bool = True):
    K_q = X.shape[1]
    dq = 1.0 / K_q
    dt = np.diff(times)
    V = np.diff(X, axis=0) / dt[:, None]
    kinetic = dq * float(np.sum(dt[:, None] * V * V))

    Y = 0.5 * (X[1:] + X[:-1])
    D = np.diff(Y, axis=1)
    w = _q_weights(K_q)
    inv = dq / D
    pressure = PI2_3 * float(np.sum(dt[:, None] * w[None, :] * inv * inv))
    singular = 0.0
    if alpha:
        singular = alpha * alpha / 4 * dq * float(np.sum(dt[:, None] / (Y * Y)))
    total = kinetic + pressure + singular
    if not need_grad:
        return total, None, (kinetic, pressure, singular)

    g = np.zeros_like(X)
    g[1:] += 2 * dq * V
    g[:-1] -= 2 * dq * V
    gD = -2 * PI2_3 * dt[:, None] * w[None, :] * dq * dq / D**3
    gY = np.zeros_like(Y)
    gY[:, 1:] += gD
    gY[:, :-1] -= gD
    if alpha:
        gY += -alpha * alpha / 2 * dq * dt[:, None] / Y**3
    g[1:] += 0.5 * gY
    g[:-1] += 0.5 * gY
    return total, g, (kinetic, pressure, singular)


def action(path: LagrangianPath, alpha: float = 0.0) -> float:
    """Discrete fluid action of a monotone path."""
    path.check(1e-9)
    if alpha and np.any(np.abs(0.5 * (path.X[1:] + path.X[:-1])) == 0):
        raise ValueError("the alpha term needs X bounded away from 0")
    with np.errstate(over="raise", divide="raise"):
        try:
            value, _, _ = _action_and_grad(path.X, path.times, alpha, need_grad=False)
        except FloatingPointError as exc:
            raise ValueError("division underflow in the pressure term") from exc
    return value


def action_gradient(path: LagrangianPath, alpha: float = 0.0) -> np.ndarray:
    """Gradient of the discrete action with respect to every entry of X."""
    return _action_and_grad(path.X, path.times, alpha)[1]


def action_terms(path: LagrangianPath, alpha: float = 0.0) -> dict:
    _, _, (kin, pres, sing) = _action_and_grad(path.X, path.times, alpha, need_grad=False)
    return {"kinetic": kin, "pressure": pres, "singular": sing}


# --------------------------------------------------------------------------
# monotone parameterization of the interior rows


class _Packing:
    """Map interior rows to (start, increments) with increments >= eps."""

    def __init__(self, K_t: int, K_q: int, symmetric: bool, eps: float):
        self.rows = K_t - 1
        self.K_q = K_q
        self.symmetric = symmetric
        self.width = K_q // 2 if symmetric else K_q
        lo_start = eps / 2 if symmetric else None
        one = [(lo_start, None)] + [(eps, None)] * (self.width - 1)
        self.bounds = one * self.rows

    def pack(self, X: np.ndarray) -> np.ndarray:
        inner = X[1:-1]
        if self.symmetric:
            inner = inner[:, self.K_q // 2:]
        z = np.empty_like(inner)
        z[:, 0] = inner[:, 0]
        z[:, 1:] = np.diff(inner, axis=1)
        return z.ravel()

    def unpack(self, z: np.ndarray, X: np.ndarray) -> np.ndarray:
        half = np.cumsum(z.reshape(self.rows, self.width), axis=1)
        out = X.copy()
        out[1:-1] = np.concatenate([-half[:, ::-1], half], axis=1) if self.symmetric else half
        return out

    def pull_back(self, g: np.ndarray) -> np.ndarray:
        inner = g[1:-1]
        if self.symmetric:
            h = self.K_q // 2
            inner = inner[:, h:] - inner[:, :h][:, ::-1]
        return np.cumsum(inner[:, ::-1], axis=1)[:, ::-1].ravel()


def _project_monotone(X: np.ndarray, eps: float, symmetric: bool) -> np.ndarray:
    X = np.array(X, dtype=float)
    if symmetric:
        h = X.shape[1] // 2
        upper = X[:, h:]
        upper[:, 0] = np.maximum(upper[:, 0], eps / 2)
        for j in range(1, upper.shape[1]):
            upper[:, j] = np.maximum(upper[:, j], upper[:, j - 1] + eps)
        X = np.concatenate([-upper[:, ::-1], upper], axis=1)
    else:
        for j in range(1, X.shape[1]):
            X[:, j] = np.maximum(X[:, j], X[:, j - 1] + eps)
    return X


def _as_row(nu, K_q: int, symmetric: bool) -> np.ndarray:
    if isinstance(nu, QuantileMeasure):
        mu = symmetrize(nu) if symmetric else nu
        return mu.resample(K_q).values.copy()
    row = np.asarray(nu, dtype=float)
    if row.size != K_q:
        row = QuantileMeasure(row).resample(K_q).values.copy()
    return row


def _parse_grid(grid) -> tuple[int, int]:
    if isinstance(grid, str):
        a, b = grid.lower().split("x")
        return int(a), int(b)
    if isinstance(grid, int):
        return grid, grid
    return int(grid[0]), int(grid[1])


def _action_hessian(X: np.ndarray, times: np.ndarray, alpha: float) -> sparse.csc_matrix:
    """Sparse Hessian of the discrete action restricted to the interior rows."""
    K1, K_q = X.shape
    dq = 1.0 / K_q
    dt = np.diff(times)
    n_in = (K1 - 2) * K_q
    idx = np.full((K1, K_q), -1)
    idx[1:-1] = np.arange(n_in).reshape(K1 - 2, K_q)
    rows, cols, vals = [], [], []

    def add(index_sets, coefs, weight):
        # weight * (sum_a coefs[a] e_{index_sets[a]}) (same)^T, skipping boundary rows
        for a, (ia, ca) in enumerate(zip(index_sets, coefs)):
            for ib, cb in zip(index_sets, coefs):
                keep = (ia >= 0) & (ib >= 0)
                rows.append(ia[keep])
                cols.append(ib[keep])
                vals.append((weight * ca * cb)[keep] if np.ndim(weight) else np.broadcast_to(weight * ca * cb, ia.shape)[keep])

    # kinetic: sum dq/dt (X_{n+1} - X_n)^2
    c = np.broadcast_to((2 * dq / dt)[:, None], (K1 - 1, K_q))
    add([idx[1:], idx[:-1]], [1.0, -1.0], c)

    Y = 0.5 * (X[1:] + X[:-1])
    D = np.diff(Y, axis=1)
    w = _q_weights(K_q)
    a = PI2_3 * dt[:, None] * w[None, :] * dq * dq
    add([idx[1:, 1:], idx[:-1, 1:], idx[1:, :-1], idx[:-1, :-1]], [0.5, 0.5, -0.5, -0.5], 6 * a / D**4)
    if alpha:
        b = alpha * alpha / 4 * dq * dt[:, None]
        add([idx[1:], idx[:-1]], [0.5, 0.5], 6 * b / Y**4)
    H = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_in, n_in))
    return H.tocsc()


def _feasible(X: np.ndarray, alpha: float, signs: np.ndarray | None) -> bool:
    if np.any(np.diff(X, axis=1) <= 0):
        return False
    if alpha and signs is not None:
        Y = 0.5 * (X[1:] + X[:-1])
        if np.any(np.sign(Y) != signs):
            return False
    return True


def _newton(X0: np.ndarray, times: np.ndarray, alpha: float, symmetric: bool, maxiter: int, tol: float):
    """Damped Newton iteration on the interior rows.

    The discrete action is strictly convex on the set of increasing rows,
    and its pressure term blows up on the boundary of that set, so a
    backtracking line search that stays strictly monotone suffices.
    Returns (X, iterations, final gradient norm, converged).
    """
    X = X0.copy()
    signs = np.sign(0.5 * (X[1:] + X[:-1])) if alpha else None
    val, g, _ = _action_and_grad(X, times, alpha)
    it, converged = 0, False
    for it in range(1, maxiter + 1):
        gi = g[1:-1].ravel()
        H = _action_hessian(X, times, alpha)
        step = -spsolve(H, gi)
        decrement = -float(gi @ step)
        if not np.isfinite(decrement) or decrement < 0:
            step, decrement = -gi, float(gi @ gi)
        if decrement <= tol * max(1.0, abs(val)):
            converged = True
            break
        P = step.reshape(X.shape[0] - 2, X.shape[1])
        s = 1.0
        while s > 1e-12:
            trial = X.copy()
            trial[1:-1] += s * P
            if symmetric:
                trial = 0.5 * (trial - trial[:, ::-1])
            if _feasible(trial, alpha, signs):
                v_new = _action_and_grad(trial, times, alpha, need_grad=False)[0]
                if v_new <= val - 0.25 * s * decrement:
                    break
            s *= 0.5
        else:
            break
        X = trial
        val, g, _ = _action_and_grad(X, times, alpha)
    return X, it, float(np.linalg.norm(g[1:-1])), converged


def minimize_action(nu_A, nu_B, alpha: float = 0.0, grid=(64, 64), symmetric: bool = True,
                    init: LagrangianPath | None = None, maxiter: int | None = None, gtol: float = 1e-10,
                    times=None, residual: bool = True, method: str = "newton") -> RateResult:
    """Minimize the discrete action between two endpoint measures.

    ``nu_A``/``nu_B`` are quantile measures (symmetrized first when
    ``symmetric``) or raw quantile rows.  The initial path is the
    displacement interpolation unless ``init`` is given.  ``method`` is
    "newton" (sparse damped Newton, the default) or "lbfgs" (bound
    constrained quasi-Newton on monotone increments).
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if method not in ("newton", "lbfgs"):
        raise ValueError(f"unknown method {method!r}")
    K_t, K_q = _parse_grid(grid)
    if K_t < 2 or K_q < 2:
        raise ValueError("grid needs at least 2 x 2 cells")
    start = _as_row(nu_A, K_q, symmetric)
    end = _as_row(nu_B, K_q, symmetric)
    for row in (start, end):
        if np.any(np.diff(row) <= 0):
            raise ValueError("endpoint measures must have no atoms on the grid")
    if alpha and symmetric and (start[K_q // 2] <= 0 or end[K_q // 2] <= 0):
        raise ValueError("alpha > 0 needs endpoints without mass at 0")

    if init is None:
        path = LagrangianPath.interpolate(start, end, K_t, symmetric, times)
    else:
        path = LagrangianPath(init.X.copy(), init.times.copy(), symmetric)
        path.X[0], path.X[-1] = start, end
    span = float(np.max(path.X) - np.min(path.X))
    eps = EPS_MONO_REL * max(span, 1e-300)
    X0 = _project_monotone(path.X, eps, symmetric)
    X0[0], X0[-1] = start, end
    g_start = float(np.linalg.norm(_action_and_grad(X0, path.times, alpha)[1][1:-1]))

    if method == "newton":
        X, nit, g_end, converged = _newton(X0, path.times, alpha, symmetric, maxiter or 200, gtol)
        if not converged and init is not None:
            # a warm start far from the new endpoints can stall; restart from interpolation
            return minimize_action(start, end, alpha, grid, symmetric, None, maxiter, gtol, path.times,
                                   residual, method)
        stale = not converged and not g_end < g_start
    else:
        maxiter = maxiter or 20_000
        pack = _Packing(path.K_t, K_q, symmetric, eps)
        scale = _action_and_grad(X0, path.times, alpha, need_grad=False)[0]

        def fun(z):
            val, g, _ = _action_and_grad(pack.unpack(z, X0), path.times, alpha)
            return val / scale, pack.pull_back(g) / scale

        res = minimize(fun, pack.pack(X0), jac=True, method="L-BFGS-B", bounds=pack.bounds,
                       options={"maxiter": maxiter, "maxfun": 2 * maxiter, "ftol": 1e-15, "gtol": gtol, "maxcor": 20})
        X, nit = pack.unpack(res.x, X0), int(res.nit)
        g_end = float(np.linalg.norm(_action_and_grad(X, path.times, alpha)[1][1:-1]))
        stale = (not res.success and nit >= maxiter) or not g_end < g_start
    value = _action_and_grad(X, path.times, alpha, need_grad=False)[0]
    out = LagrangianPath(X, path.times, symmetric)
    rnorm = euler_lagrange_residual(out, alpha)[1] if residual and K_q >= 3 else float("nan")
    return RateResult(value, out, rnorm, nit, g_end, stale, action=value, terms=action_terms(out, alpha))


# --------------------------------------------------------------------------
# Euler-Lagrange and continuity residuals


def euler_lagrange_residual(path: LagrangianPath, alpha: float = 0.0) -> tuple[np.ndarray, float]:
    """Pointwise residual of the Euler-Lagrange equation of the action.

    In Lagrangian variables the equation reads
        X_tt - pi^2 rho^2 d_q rho + alpha^2 / (4 X^3) = 0,   rho = 1 / X_q,
    i.e. d_t u + d_x(u^2/2 - pi^2 rho^2/2 - alpha^2/(8 x^2)) = 0 in Eulerian
    form.  Centered differences on interior nodes; the norm is the RMS over
    the interior grid.
    """
    X, t = path.X, path.times
    q = path.q
    if X.shape[0] < 3 or X.shape[1] < 3:
        raise ValueError("need at least 3 x 3 nodes for centered differences")
    h_m = t[1:-1] - t[:-2]
    h_p = t[2:] - t[1:-1]
    X_tt = 2 * (X[2:] / (h_p * (h_m + h_p))[:, None] - X[1:-1] / (h_m * h_p)[:, None]
                + X[:-2] / (h_m * (h_m + h_p))[:, None])
    Xi = X[1:-1]
    dq = q[1] - q[0]
    X_q = (Xi[:, 2:] - Xi[:, :-2]) / (2 * dq)
    rho = np.empty_like(Xi)
    rho[:, 1:-1] = 1.0 / X_q
    rho[:, 0] = dq / (Xi[:, 1] - Xi[:, 0])
    rho[:, -1] = dq / (Xi[:, -1] - Xi[:, -2])
    rho_q = (rho[:, 2:] - rho[:, :-2]) / (2 * dq)
    res = X_tt[:, 1:-1] - math.pi**2 * rho[:, 1:-1] ** 2 * rho_q
    if alpha:
        res = res + alpha * alpha / (4 * Xi[:, 1:-1] ** 3)
    return res, float(np.sqrt(np.mean(res * res)))


def continuity_residual(path: LagrangianPath) -> float:
    """RMS of d_t rho + d_x(rho u) with rho = 1/X_q and u = X_t.

    The Eulerian derivatives are taken at the Lagrangian nodes through
    d_t|_x = d_t|_q - u d_q / X_q and d_x = d_q / X_q, so no interpolation
    onto a fixed x grid is involved.  Interior nodes only.
    """
    X, t, q = path.X, path.times, path.q
    if X.shape[0] < 3 or X.shape[1] < 3:
        raise ValueError("need at least 3 x 3 nodes for centered differences")
    X_q = np.gradient(X, q, axis=1, edge_order=2)
    u = np.gradient(X, t, axis=0, edge_order=2)
    rho = 1.0 / X_q
    rho_t = np.gradient(rho, t, axis=0, edge_order=2)
    rho_q = np.gradient(rho, q, axis=1, edge_order=2)
    flux_q = np.gradient(rho * u, q, axis=1, edge_order=2)
    res = rho_t + (flux_q - u * rho_q) / X_q
    inner = res[1:-1, 1:-1]
    return float(np.sqrt(np.mean(inner * inner)))


# --------------------------------------------------------------------------
# endpoint terms and rate functionals


def _check_endpoint(nu: QuantileMeasure, alpha: float, name: str):
    if has_atom(nu):
        raise ValueError(f"{name} has an atom; its entropy is -inf")
    if alpha and np.any(nu.values == 0):
        raise ValueError(f"{name} charges 0, so int log|x| = -inf")


def log_moment(nu: QuantileMeasure) -> float:
    return float(np.mean(np.log(np.abs(nu.values))))


def endpoint_bracket(nu_A: QuantileMeasure, nu_B: QuantileMeasure, alpha: float) -> float:
    """nu_A(x^2 - alpha log|x|) + nu_B(x^2 - alpha log|x|) - Sigma(nu_A) - Sigma(nu_B)."""
    total = 0.0
    for nu in (nu_A, nu_B):
        total += nu.moment(2) - sigma_entropy(nu)
        if alpha:
            total -= alpha * log_moment(nu)
    return total


def rate_I(nu_A: QuantileMeasure, nu_B: QuantileMeasure, alpha: float = 0.0, beta: float = 2.0,
           grid=(64, 64), **opts) -> RateResult:
    """Limit of (1/N^2) log J for types B/C/D with symmetrized endpoints."""
    a, b = symmetrize(nu_A), symmetrize(nu_B)
    _check_endpoint(a, alpha, "nu_A")
    _check_endpoint(b, alpha, "nu_B")
    res = minimize_action(a, b, alpha, grid, symmetric=True, **opts)
    bracket = endpoint_bracket(a, b, alpha)
    const = coefficient_C(alpha, beta)
    res.terms.update(bracket=bracket, coefficient=const)
    res.value = -beta / 2 * res.action + beta / 2 * bracket - const
    return res


def rate_I_typeA(nu_A: QuantileMeasure, nu_B: QuantileMeasure, beta: float = 2.0, grid=(64, 64), **opts) -> RateResult:
    """Limit of (1/N^2) log J for type A: half of I_{0,beta} on unsymmetrized measures."""
    _check_endpoint(nu_A, 0.0, "nu_A")
    _check_endpoint(nu_B, 0.0, "nu_B")
    a = QuantileMeasure(nu_A.values, False)
    b = QuantileMeasure(nu_B.values, False)
    res = minimize_action(a, b, 0.0, grid, symmetric=False, **opts)
    bracket = endpoint_bracket(a, b, 0.0)
    const = coefficient_C(0.0, beta)
    res.terms.update(bracket=bracket, coefficient=const)
    res.value = 0.5 * (-beta / 2 * res.action + beta / 2 * bracket - const)
    return res


def dynamical_entropy_S(path: LagrangianPath, nu0: QuantileMeasure | None = None, alpha: float = 0.0,
                        beta: float = 2.0, tol: float = 1e-8) -> float:
    """(beta/2)[action - (Sigma + alpha int log|x|) evaluated between t=0 and t=1]."""
    if np.any(np.diff(path.X, axis=1) <= 0):
        return Divergent(1, "path without density")
    if nu0 is not None:
        start = path.row(0)
        ref = nu0.resample(path.K_q) if nu0.M != path.K_q else nu0
        scale = max(1.0, float(np.max(np.abs(start.values))))
        if wasserstein1(ref, start) > tol * scale:
            return Divergent(1, "initial measure does not match")
    value = _action_and_grad(path.X, path.times, alpha, need_grad=False)[0]

    def boundary(row: QuantileMeasure) -> float:
        out = sigma_entropy(row)
        if alpha:
            out += alpha * log_moment(row)
        return out

    return beta / 2 * (value - (boundary(path.row(-1)) - boundary(path.row(0))))


def path_from_particles(times, states, K_q: int = 64, symmetric: bool = True) -> LagrangianPath:
    """Coarse-grained quantile field of particle snapshots.

    Each grid value is the mean of the sorted (and, if asked, mirrored)
    particles falling in its quantile bin, which averages out the
    microscopic spacing fluctuations.
    """
    states = np.asarray(states, dtype=float)
    rows = []
    for s in states:
        v = np.sort(np.concatenate([s, -s])) if symmetric else np.sort(s)
        if v.size % K_q:
            raise ValueError("number of (mirrored) particles must be a multiple of K_q")
        rows.append(v.reshape(K_q, -1).mean(axis=1))
    return LagrangianPath(np.array(rows), np.asarray(times, dtype=float), symmetric)


# --------------------------------------------------------------------------
# character limit and multiplicity functionals


def exp_kernel_energy(mu: QuantileMeasure) -> float:
    """int int log((e^x - e^y)/(x - y)) dmu dmu, diagonal value x.

    Uses (e^x - e^y)/(x - y) = e^{(x+y)/2} sinh(d/2)/(d/2) with d = x - y.
    """
    v = mu.values
    d = v[:, None] - v[None, :]
    return float(np.mean(v) + np.mean(v_potential(d)))


def _exp_kernel_grad(v: np.ndarray) -> np.ndarray:
    M = v.size
    d = v[:, None] - v[None, :]
    return (1.0 / M) + 2 * np.sum(v_prime(d), axis=1) / M**2


def _sigma_grad(v: np.ndarray) -> np.ndarray:
    """Gradient of measures.sigma_entropy with respect to the grid values."""
    M = v.size
    d = v[:, None] - v[None, :]
    np.fill_diagonal(d, 1.0)
    inv = 1.0 / d
    np.fill_diagonal(inv, 0.0)
    g = 2 * inv.sum(axis=1)
    spacing = np.empty(M)
    spacing[1:-1] = 0.5 * (v[2:] - v[:-2])
    spacing[0] = v[1] - v[0]
    spacing[-1] = v[-1] - v[-2]
    gd = np.zeros(M)
    gd[2:] += 0.5 / spacing[1:-1]
    gd[:-2] -= 0.5 / spacing[1:-1]
    gd[1] += 1 / spacing[0]
    gd[0] -= 1 / spacing[0]
    gd[-1] += 1 / spacing[-1]
    gd[-2] -= 1 / spacing[-1]
    return (g + gd) / M**2


def _density_at_most(mu: QuantileMeasure, bound: float, rel_tol: float = 1e-9) -> bool:
    steps = np.diff(mu.values)
    return bool(np.all(steps >= (1 - rel_tol) / (bound * mu.M)))


# Additive constant of the character limit.  It is fixed by two exact
# facts: the trivial character is identically 1, and at y = 0 the character
# is the Weyl dimension, whose growth rate is Sigma(m_hat) + 3/2.
CHAR_CONSTANT = 1.5


def J_limit(mu_Y: QuantileMeasure, m_lam: QuantileMeasure, grid=(32, 64), **opts) -> float:
    """Limit of (1/N^2) log ch_lambda(-iY) for types B/C/D."""
    if not _density_at_most(m_lam, 2.0):
        raise ValueError("m_lambda must have density at most 2")
    Y, m = symmetrize(mu_Y), symmetrize(m_lam)
    if has_atom(Y):
        raise ValueError("mu_Y has an atom; its entropy is -inf")
    I = rate_I(Y, m, 0.0, 2.0, grid, **opts).value
    return I + sigma_entropy(m) - exp_kernel_energy(Y) + CHAR_CONSTANT


def _is_delta_zero(nu: QuantileMeasure) -> bool:
    return bool(np.all(nu.values == 0))


def H_mu_at_zero(m_lam: QuantileMeasure) -> float:
    """H_mu(delta_0) = -Sigma(m_hat) - 3/2 for every mu: minus the growth rate of dim V_lambda."""
    return -sigma_entropy(symmetrize(m_lam)) - CHAR_CONSTANT


def monomial_term(mu: QuantileMeasure, nu: QuantileMeasure) -> float:
    """int (2 T_mu(q) - q) T_nu(q) dq."""
    M = max(mu.M, nu.M)
    a, b = mu.resample(M), nu.resample(M)
    return float(np.mean((2 * a.values - midpoints(M)) * b.values))


def H_mu(mu: QuantileMeasure, nu: QuantileMeasure, m_lam: QuantileMeasure, grid=(32, 64), **opts) -> float:
    if _is_delta_zero(nu):
        return H_mu_at_zero(m_lam)
    return monomial_term(mu, nu) - J_limit(nu, m_lam, grid, **opts)


class _HEvaluator:
    """H_mu(nu) and its gradient in the quantile increments of nu.

    nu has quantile values v = cumsum(z) on a ``K``-point grid.  The inner
    action minimization is warm-started from the previous optimum; the
    derivative of the minimal action with respect to the boundary row is
    the partial derivative at the optimum.
    """

    def __init__(self, mu: QuantileMeasure, m_lam: QuantileMeasure, K: int, K_t: int, grade: float = 2.0):
        self.K = K
        self.K_q = 2 * K
        self.K_t = K_t
        # nodes cluster at t = 0, where nu is the more concentrated endpoint
        self.times = np.linspace(0.0, 1.0, K_t + 1) ** grade
        self.q = midpoints(K)
        self.two_mu = 2 * mu.resample(K).values - self.q
        m_hat = symmetrize(m_lam)
        self.m_row = m_hat.resample(self.K_q).values
        self.const = m_hat.moment(2) - coefficient_C(0.0, 2.0) + CHAR_CONSTANT
        self.path: LagrangianPath | None = None
        self.calls = 0

    def value_and_grad_v(self, v: np.ndarray) -> tuple[float, np.ndarray]:
        self.calls += 1
        row = np.concatenate([-v[::-1], v])
        res = minimize_action(row, self.m_row, 0.0, (self.K_t, self.K_q), symmetric=True,
                              init=self.path, residual=False, times=self.times)
        self.path = res.path
        g_act = action_gradient(res.path)[0]
        nu_hat = QuantileMeasure(row, True)
        # J = -A + nu(x^2) - Sigma(nu) - E(nu) + const
        J = -res.action + nu_hat.moment(2) - sigma_entropy(nu_hat) - exp_kernel_energy(nu_hat) + self.const
        gJ_row = -g_act + 2 * row / self.K_q - _sigma_grad(row) - _exp_kernel_grad(row)
        gJ = gJ_row[self.K:] - gJ_row[:self.K][::-1]
        H = float(np.mean(self.two_mu * v)) - J
        return H, self.two_mu / self.K - gJ

    def __call__(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        H, gv = self.value_and_grad_v(np.cumsum(z))
        return H, np.cumsum(gv[::-1])[::-1]


@dataclass
class ScriptIResult:
    value: float
    certificate_y: float | None
    restart_values: list
    nu_star: QuantileMeasure | None
    margins: np.ndarray
    evaluations: int = 0

    def to_json(self) -> dict:
        return {
            "value": float(self.value),
            "certificate_y": self.certificate_y,
            "restart_values": [float(v) for v in self.restart_values],
            "nu_star": None if self.nu_star is None else [float(v) for v in self.nu_star.values],
            "evaluations": self.evaluations,
        }


def schur_horn_margins(mu: QuantileMeasure, m_lam: QuantileMeasure, M: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(y grid, int_y^1 (T_mu - T_m) dq) at y = k/M, k = 0..M-1."""
    M = M or max(mu.M, m_lam.M)
    diff = (mu.resample(M).values - m_lam.resample(M).values) / M
    tail = np.cumsum(diff[::-1])[::-1]
    return np.arange(M) / M, tail


def schur_horn_limit_check(mu: QuantileMeasure, m_lam: QuantileMeasure, M: int | None = None,
                           tol: float = 1e-12) -> dict:
    y, margins = schur_horn_margins(mu, m_lam, M)
    scale = max(1.0, float(np.max(np.abs(mu.values))), float(np.max(np.abs(m_lam.values))))
    worst = int(np.argmax(margins))
    return {"admissible": bool(margins[worst] <= tol * scale), "y": y, "margins": margins,
            "worst_y": float(y[worst]), "worst_margin": float(margins[worst])}


def strong_check(mu: QuantileMeasure, m_lam: QuantileMeasure, c: float, M: int | None = None) -> bool:
    """Strong admissibility: margin <= -c for y <= 1 - c, <= -c (1 - y) above."""
    y, margins = schur_horn_margins(mu, m_lam, M)
    bound = np.where(y <= 1 - c, -c, -c * (1 - y))
    return bool(np.all(margins <= bound))


def rate_script_I(mu: QuantileMeasure, m_lam: QuantileMeasure, points: int = 64, restarts: int = 8,
                  seed: int = 0, delta: float = 0.05, max_density: float = 20.0, K_t: int = 64,
                  grade: float = 3.0, maxiter: int = 100, tol: float = 1e-12) -> ScriptIResult:
    """sup over nu of H_mu(nu), or +inf certified by a violated Schur-Horn margin.

    nu ranges over ``points``-point quantile vectors on [0, 1/delta] whose
    density is at most ``max_density``; the cap keeps the time grid able to
    resolve the spreading of nu.  Each restart ascends H with L-BFGS-B from
    a random start; delta_0 enters through its closed-form value.
    """
    check = schur_horn_limit_check(mu, m_lam, tol=tol)
    if not check["admissible"]:
        return ScriptIResult(Divergent(1, "limiting Schur-Horn inequality violated"), check["worst_y"],
                             [], None, check["margins"])
    rng = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 3, 0]))
    evaluator = _HEvaluator(mu, m_lam, points, K_t, grade)
    step_min = 1.0 / (max_density * points)
    step_max = 1.0 / (delta * points)
    bounds = [(step_min / 2, step_max)] + [(step_min, step_max)] * (points - 1)
    lo = np.array([b[0] for b in bounds])
    values, best_v = [], None
    best = -math.inf

    def neg(z):
        h, g = evaluator(z)
        return -h, -g

    for _ in range(restarts):
        scale = float(np.exp(rng.uniform(np.log(0.1), np.log(1.0))))
        shape = rng.uniform(0.5, 2.0, size=2)
        v0 = scale * np.sort(rng.beta(shape[0], shape[1], points))
        z0 = np.clip(np.diff(v0, prepend=0.0), lo, step_max)
        evaluator.path = None
        res = minimize(neg, z0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": maxiter, "ftol": 1e-12, "gtol": 1e-9})
        value = -float(res.fun)
        values.append(value)
        if value > best:
            best, best_v = value, np.cumsum(res.x)
    at_zero = H_mu_at_zero(m_lam)
    if at_zero > best:
        best, best_v = at_zero, np.zeros(points)
    return ScriptIResult(best, None, values, QuantileMeasure(best_v), check["margins"], evaluator.calls)
