import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dunkl_ldp import dunkl_sim as ds
from dunkl_ldp.measures import (
    Divergent,
    QuantileMeasure,
    is_divergent,
    midpoints,
    quantile_inner,
    semicircle,
    semicircle_quantile,
    sigma_entropy,
    symmetrize,
    uniform,
)
from dunkl_ldp.rate import (
    CHAR_CONSTANT,
    H_mu,
    H_mu_at_zero,
    J_limit,
    LagrangianPath,
    _action_and_grad,
    _action_hessian,
    action,
    action_gradient,
    continuity_residual,
    dynamical_entropy_S,
    endpoint_bracket,
    euler_lagrange_residual,
    exp_kernel_energy,
    minimize_action,
    monomial_term,
    path_from_particles,
    rate_I,
    rate_I_typeA,
    rate_script_I,
    schur_horn_limit_check,
    strong_check,
)


def static_uniform(K_t=8, K_q=16):
    times = np.linspace(0, 1, K_t + 1)
    return LagrangianPath(np.tile(midpoints(K_q) - 0.5, (K_t + 1, 1)), times, True)


def random_path(seed, K_t=6, K_q=10, alpha=False):
    rng = np.random.default_rng(seed)
    steps = rng.uniform(0.05, 0.3, size=(K_t + 1, K_q))
    X = np.cumsum(steps, axis=1) + (0.2 if alpha else -1.0)
    times = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0.05, 0.95, K_t - 1)]))
    return LagrangianPath(X, times)


# --------------------------------------------------------------------------
# discrete action


def test_static_uniform_action():
    assert action(static_uniform()) == pytest.approx(math.pi**2 / 3, rel=1e-13)


@pytest.mark.parametrize("v", [-1.3, 0.4, 2.0])
def test_translating_path_action(v):
    p = static_uniform()
    p.X = p.X + v * p.times[:, None]
    p.symmetric = False
    assert action(p) == pytest.approx(math.pi**2 / 3 + v * v, rel=1e-13)


def test_time_reversal_invariance():
    p = random_path(3)
    rev = LagrangianPath(p.X[::-1], 1 - p.times[::-1])
    assert action(rev) == pytest.approx(action(p), rel=1e-13)


def test_action_rejects_invalid_paths():
    p = random_path(1)
    p.X[2, 3] = p.X[2, 2] - 0.01
    with pytest.raises(ValueError):
        action(p)
    with pytest.raises(ValueError):
        LagrangianPath(np.zeros((3, 4)), [0.0, 0.5, 0.5])
    with pytest.raises(ValueError):
        LagrangianPath(np.zeros((3, 3)), [0.0, 0.5, 1.0], symmetric=True)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("alpha", [0.0, 0.8])
def test_gradient_matches_central_differences(seed, alpha):
    p = random_path(seed, alpha=alpha > 0)
    g = action_gradient(p, alpha)
    rng = np.random.default_rng(100 + seed)
    f = lambda X: _action_and_grad(X, p.times, alpha, need_grad=False)[0]
    for _ in range(10):
        d = rng.standard_normal(p.X.shape)
        h = 1e-5
        fd = (f(p.X + h * d) - f(p.X - h * d)) / (2 * h)
        an = float(np.sum(g * d))
        assert fd == pytest.approx(an, rel=1e-5, abs=1e-9)


def test_hessian_matches_gradient_differences():
    p = random_path(7, alpha=True)
    alpha = 0.6
    H = _action_hessian(p.X, p.times, alpha).toarray()
    rng = np.random.default_rng(0)
    inner = p.X[1:-1].shape
    for _ in range(5):
        d = np.zeros_like(p.X)
        d[1:-1] = rng.standard_normal(inner)
        h = 1e-6
        gp = _action_and_grad(p.X + h * d, p.times, alpha)[1]
        gm = _action_and_grad(p.X - h * d, p.times, alpha)[1]
        fd = ((gp - gm) / (2 * h))[1:-1].ravel()
        assert np.allclose(H @ d[1:-1].ravel(), fd, rtol=1e-5, atol=1e-6 * np.abs(fd).max())


def test_action_terms_add_up():
    p = random_path(2, alpha=True)
    res = minimize_action(p.X[0], p.X[-1], 0.5, grid=(8, 10), symmetric=False)
    assert sum(res.terms.values()) == pytest.approx(res.action, rel=1e-12)


# --------------------------------------------------------------------------
# minimization


def test_equal_endpoints_minimizer_is_near_static():
    sc = semicircle(512)
    res = minimize_action(sc, sc, grid=(64, 64))
    static = LagrangianPath(np.tile(res.path.X[0], (65, 1)), res.path.times, True)
    # the minimizer spreads and contracts, so it sits slightly below the static path
    assert res.action < action(static)
    assert res.action > 0.97 * action(static)
    assert res.grad_norm < 1e-8 and not res.stale


def test_reversing_endpoints_reverses_the_minimizer():
    a, b = semicircle(256, 1.0), uniform(256, -1.5, 1.5)
    fwd = minimize_action(a, b, grid=(16, 32))
    bwd = minimize_action(b, a, grid=(16, 32))
    assert bwd.action == pytest.approx(fwd.action, rel=1e-9)
    assert np.allclose(bwd.path.X[::-1], fwd.path.X, atol=1e-7)


def test_minimizer_is_symmetric_and_monotone():
    res = minimize_action(semicircle(256, 1.0), uniform(256, -2, 2), grid=(16, 32))
    res.path.check(1e-12)
    assert res.path.is_monotone()


def test_value_decreases_under_refinement():
    a, b = semicircle(512, 1.0), uniform(512, -1.5, 1.5)
    values = [minimize_action(a, b, grid=(K, K)).action for K in (16, 32, 64)]
    assert values[0] > values[1] > values[2]
    assert values[1] - values[2] < values[0] - values[1]


@pytest.mark.parametrize("radii", [(1.0, 1.0), (1.0, 2.5), (2.0, 2.0)])
def test_refinement_converges_monotonically(radii):
    # the sign of the quantile-grid error depends on the endpoints; the increments must contract
    a, b = semicircle(1024, radii[0]), semicircle(1024, radii[1])
    values = np.array([minimize_action(a, b, grid=(K, K)).action for K in (16, 32, 64, 128)])
    steps = np.diff(values)
    assert np.all(np.sign(steps) == np.sign(steps[0]))
    assert np.all(np.abs(steps[1:]) < 0.6 * np.abs(steps[:-1]))


def test_residual_decreases_under_refinement():
    a, b = semicircle(512, 1.0), semicircle(512, 2.5)
    norms = [minimize_action(a, b, grid=(K, K)).residual_norm for K in (16, 32, 64)]
    assert norms[0] > norms[1] > norms[2]


def test_newton_and_lbfgs_agree():
    a, b = semicircle(256, 1.0), uniform(256, -1.5, 1.5)
    n = minimize_action(a, b, grid=(8, 16))
    q = minimize_action(a, b, grid=(8, 16), method="lbfgs")
    assert q.action == pytest.approx(n.action, rel=1e-7)
    assert q.action >= n.action - 1e-12


def test_alpha_minimizer_stays_off_zero():
    pos_a = QuantileMeasure(np.linspace(0.3, 1.2, 16))
    pos_b = QuantileMeasure(np.linspace(0.5, 2.0, 16))
    res = minimize_action(pos_a, pos_b, alpha=0.5, grid=(16, 32))
    assert np.all(res.path.X[:, 16:] > 0)
    assert not res.stale and res.grad_norm < 1e-5


def test_minimize_action_validation():
    with pytest.raises(ValueError):
        minimize_action(semicircle(64), semicircle(64), alpha=-1)
    with pytest.raises(ValueError):
        minimize_action(semicircle(64), semicircle(64), method="cg")
    with pytest.raises(ValueError):
        minimize_action(np.zeros(8), np.linspace(-1, 1, 8), grid=(4, 8), symmetric=False)


# --------------------------------------------------------------------------
# residuals


def test_static_and_translating_paths_are_stationary():
    p = static_uniform(8, 16)
    assert euler_lagrange_residual(p)[1] == pytest.approx(0.0, abs=1e-10)
    p.X = p.X + 0.7 * p.times[:, None]
    assert euler_lagrange_residual(p)[1] == pytest.approx(0.0, abs=1e-10)


def test_continuity_residual_is_second_order():
    def res(K):
        t = np.linspace(0, 1, K + 1)
        q = midpoints(K)
        X = (q - 0.5)[None, :] + 0.1 * np.sin(np.pi * t)[:, None] * np.sin(2 * np.pi * q)[None, :]
        return continuity_residual(LagrangianPath(X, t))

    r = np.array([res(K) for K in (16, 32, 64, 128)])
    assert np.all(r[:-1] / r[1:] > 3.5)


def test_continuity_residual_of_a_minimizer_is_small():
    res = minimize_action(semicircle(512, 1.0), uniform(512, -1.5, 1.5), grid=(32, 32))
    assert continuity_residual(res.path) < 0.05


# --------------------------------------------------------------------------
# rate functionals


def test_rate_is_linear_in_beta():
    a, b = semicircle(256, 1.0), uniform(256, 0.2, 1.0)
    r2 = rate_I(a, b, 0.0, 2.0, grid=(16, 32)).value
    r4 = rate_I(a, b, 0.0, 4.0, grid=(16, 32)).value
    assert r4 == pytest.approx(2 * r2, rel=1e-12)


def test_rate_assembly():
    a, b = semicircle(256, 1.0), uniform(256, 0.2, 1.0)
    res = rate_I(a, b, 0.3, 2.0, grid=(16, 32))
    expected = -res.action + res.terms["bracket"] - res.terms["coefficient"]
    assert res.value == pytest.approx(expected, rel=1e-12)
    assert res.terms["bracket"] == pytest.approx(endpoint_bracket(symmetrize(a), symmetrize(b), 0.3))


def test_type_a_rate_is_half():
    a, b = semicircle(256), semicircle(256, 1.5)
    res = rate_I_typeA(a, b, beta=2.0, grid=(16, 32))
    assert res.value == pytest.approx(0.5 * (-res.action + res.terms["bracket"] - 1.5), rel=1e-12)


def test_rate_rejects_atoms():
    atom = QuantileMeasure(np.r_[np.zeros(8), np.linspace(0.1, 1, 56)])
    with pytest.raises(ValueError):
        rate_I(atom, semicircle(64), grid=(4, 8))


def random_symmetric_measure(rng, M=256):
    q = midpoints(M)
    a, b = rng.uniform(0.3, 2.0, 2)
    p = rng.uniform(0.5, 2.0)
    half = a * np.abs(2 * q - 1) ** p + b * (2 * q - 1) ** 2
    return QuantileMeasure(np.sign(2 * q - 1) * half, True)


def test_sandwich_upper_bound():
    rng = np.random.default_rng(11)
    for _ in range(6):
        nu, mu = random_symmetric_measure(rng), random_symmetric_measure(rng)
        half_rate = 0.5 * rate_I(nu, mu, 0.0, 2.0, grid=(32, 32)).value
        assert half_rate <= quantile_inner(nu, mu)


# --------------------------------------------------------------------------
# dynamical entropy


def test_entropy_of_minimizer_recombines():
    a, b = semicircle(256, 1.0), uniform(256, -1.5, 1.5)
    res = minimize_action(a, b, grid=(16, 32))
    S = dynamical_entropy_S(res.path, beta=2.0)
    expected = res.action - (sigma_entropy(res.path.row(-1)) - sigma_entropy(res.path.row(0)))
    assert S == pytest.approx(expected, rel=1e-12)


def test_entropy_sentinels():
    p = minimize_action(semicircle(64), semicircle(64, 1.5), grid=(4, 8)).path
    assert is_divergent(dynamical_entropy_S(p, nu0=semicircle(64, 3.0)))
    flat = LagrangianPath(np.zeros((3, 4)), [0, 0.5, 1])
    out = dynamical_entropy_S(flat)
    assert isinstance(out, Divergent) and out == math.inf


@pytest.mark.parametrize("K", [32, 64])
def test_free_brownian_path_has_zero_entropy(K):
    # semicircle with variance 1 + t is the hydrodynamic limit at beta = 2
    times = np.linspace(0, 1, K + 1)
    X = np.sqrt(1 + times)[:, None] * semicircle_quantile(midpoints(K), 2.0)[None, :]
    assert abs(dynamical_entropy_S(LagrangianPath(X, times, True))) < 1e-3


def test_simulated_hydrodynamic_path_has_small_entropy():
    N = 256
    s0 = semicircle_quantile(0.5 + (np.arange(N, 0, -1) - 0.5) / (2 * N), 2.0)
    cfg = ds.SimConfig.dyson_bessel(N, 2.0, 0.0, t_end=1.0, dt=1e-3, seed=0, scheme="tamed_euler")
    run = ds.simulate_dyson_bessel(cfg, init=s0)
    path = path_from_particles(run.times[::16], run.states[::16], K_q=64)
    assert abs(dynamical_entropy_S(path)) < 0.05


def test_path_from_particles_bins():
    states = np.array([[1.0, 2.0, 3.0, 4.0]])
    p = path_from_particles([0.0], states, K_q=4)
    assert np.allclose(p.X[0], [-3.5, -1.5, 1.5, 3.5])
    with pytest.raises(ValueError):
        path_from_particles([0.0], states, K_q=3)


# --------------------------------------------------------------------------
# character limit and the multiplicity functional


def test_exp_kernel_diagonal_limit():
    assert exp_kernel_energy(QuantileMeasure(np.full(8, 0.7))) == pytest.approx(0.7)


@given(st.floats(-3, 3, allow_nan=False), st.floats(0.1, 3))
def test_exp_kernel_two_point(a, d):
    mu = QuantileMeasure(np.array([a, a + d]))
    pair = math.log((math.exp(a + d) - math.exp(a)) / d)
    expected = 0.25 * (2 * (a + 0.5 * d) + 2 * pair)
    assert exp_kernel_energy(mu) == pytest.approx(expected, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("b", [0.5, 1.0, 2.0])
def test_trivial_character_limit_vanishes(b):
    # the weight 0 has m = unif(0, 1/2) and its character is identically 1
    assert abs(J_limit(uniform(512, 0, b), uniform(512, 0, 0.5))) < 2e-3


def test_J_limit_rejects_dense_weights():
    with pytest.raises(ValueError):
        J_limit(uniform(64, 0, 1), uniform(64, 0, 0.4))


def test_H_at_delta_zero_is_closed_form():
    m = uniform(256, 0, 1)
    expected = -sigma_entropy(symmetrize(m)) - CHAR_CONSTANT
    assert H_mu_at_zero(m) == pytest.approx(expected)
    assert H_mu(uniform(256, 0, 0.7), QuantileMeasure(np.zeros(64)), m) == H_mu_at_zero(m)


def test_monomial_term():
    mu, nu = uniform(256, 0, 0.5), uniform(256, 0, 1)
    # 2 T_mu(q) - q = 0 for unif(0, 1/2)
    assert monomial_term(mu, nu) == pytest.approx(0.0, abs=1e-15)
    assert monomial_term(uniform(256, 0, 1), nu) == pytest.approx(1 / 3, rel=1e-4)


def test_schur_horn_margins():
    m = uniform(128, 0, 1)
    same = schur_horn_limit_check(m, m)
    assert same["admissible"] and np.allclose(same["margins"], 0)
    assert not strong_check(m, m, 0.1)
    c = 0.2
    shifted = schur_horn_limit_check(QuantileMeasure(m.values - c), m)
    assert shifted["admissible"]
    assert np.allclose(shifted["margins"], -c * (1 - shifted["y"]))
    assert not schur_horn_limit_check(uniform(128, 0, 1.5), m)["admissible"]


def test_strong_check_accepts_a_deep_interior_measure():
    assert strong_check(uniform(128, 0, 0.5), uniform(128, 0, 2), 0.1)


@given(st.lists(st.integers(0, 6), min_size=5, max_size=5), st.lists(st.integers(0, 6), min_size=5, max_size=5))
def test_grid_check_matches_partial_sums(lam, eta):
    lam, eta = sorted(lam, reverse=True), sorted(eta, reverse=True)
    exact = all(sum(eta[:j]) <= sum(lam[:j]) for j in range(1, 6))
    step = lambda v: QuantileMeasure(np.repeat(np.sort(np.array(v, dtype=float)), 8))
    assert schur_horn_limit_check(step(eta), step(lam))["admissible"] == exact


def test_script_I_certifies_divergence():
    res = rate_script_I(uniform(128, 0, 3), uniform(128, 0, 2), points=8, restarts=1)
    assert res.value == math.inf and is_divergent(res.value)
    assert res.certificate_y is not None and 0 <= res.certificate_y < 1
    assert res.to_json()["certificate_y"] == res.certificate_y
