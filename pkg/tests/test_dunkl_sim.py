import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from dunkl_ldp import dunkl_sim
from dunkl_ldp.dunkl_sim import (
    SimConfig,
    SimulationError,
    drift_from_roots,
    drift_radial_dunkl,
    empirical_path,
    fold_to_chamber,
    girsanov_functional,
    in_open_chamber,
    modified_extra_drift,
    simulate_dyson_bessel,
    simulate_modified_dyson_bessel,
    simulate_radial_dunkl,
    SERIES_CUT,
    v_potential,
    v_prime,
    v_second,
    w_potential,
    w_prime,
    warm_start,
)
from dunkl_ldp.measures import AtomicMeasure
from dunkl_ldp.rootsys import ChamberError, MultiplicityParam, RootSystemSpec

mults = st.floats(0, 3)


def _interior(spec, rng):
    x = np.sort(rng.uniform(0.2, 5, spec.rank))[::-1] + np.arange(spec.rank, 0, -1) * 0.1
    if spec.family == "A":
        x -= 2.0
    return x


@given(st.sampled_from(["A", "B", "C", "D", "BC"]), st.integers(1, 6), mults, mults, mults, st.integers(0, 10**6))
def test_closed_form_drift_equals_root_sum(fam, n, a, b, c, seed):
    if fam == "D" and n < 2:
        n = 2
    spec = RootSystemSpec(fam, n)
    k = MultiplicityParam(a, b, c)
    x = _interior(spec, np.random.default_rng(seed))
    assert np.allclose(drift_radial_dunkl(spec, k, x), drift_from_roots(spec, k, x), rtol=1e-10, atol=1e-12)


def test_drift_examples():
    # one term k_1/x
    assert drift_radial_dunkl(RootSystemSpec("B", 1), MultiplicityParam(2, 0, 0), [1.0]) == pytest.approx([2.0])
    assert np.all(drift_radial_dunkl(RootSystemSpec("C", 3), MultiplicityParam(), [3.0, 2.0, 1.0]) == 0)
    # x = (2, 1), k_1 = k_medium = 1: (1/2 + 1 + 1/3, 1 - 1 + 1/3)
    d = drift_radial_dunkl(RootSystemSpec("B", 2), MultiplicityParam(1, 1, 0), [2.0, 1.0])
    assert d == pytest.approx([11 / 6, 1 / 3])


def test_drift_rejects_boundary_points():
    with pytest.raises(ChamberError):
        drift_radial_dunkl(RootSystemSpec("B", 2), MultiplicityParam(1, 1, 0), [1.0, 0.0])
    with pytest.raises(ChamberError):
        drift_radial_dunkl(RootSystemSpec("A", 2), MultiplicityParam(0, 1, 0), [1.0, 1.0])


@given(st.floats(0.1, 10), st.integers(0, 1000))
def test_drift_is_homogeneous_of_degree_minus_one(c, seed):
    spec = RootSystemSpec("BC", 4)
    k = MultiplicityParam(0.7, 1.1, 0.3)
    x = _interior(spec, np.random.default_rng(seed))
    assert np.allclose(drift_radial_dunkl(spec, k, c * x), drift_radial_dunkl(spec, k, x) / c)


@given(st.sampled_from(["A", "B", "D"]), st.lists(st.floats(-5, 5), min_size=3, max_size=6))
def test_fold_lands_in_closed_chamber_and_is_idempotent(fam, coords):
    spec = RootSystemSpec(fam, len(coords))
    x = np.array(coords)
    y = fold_to_chamber(spec, x)
    assert np.array_equal(fold_to_chamber(spec, y), y)
    assert np.all(np.diff(y) <= 0) if fam == "A" else np.all(np.diff(np.abs(y)) <= 0)
    if fam == "B":
        assert np.all(y >= 0)
    if fam == "D":
        assert y[-2] >= abs(y[-1])
        # even sign changes only: the product of the signs is preserved
        if np.all(x != 0):
            assert np.sign(np.prod(y)) == np.sign(np.prod(x))
    assert np.allclose(np.sort(np.abs(y)), np.sort(np.abs(x)))


def test_v_and_w_functions():
    assert v_prime(np.array([0.0]))[0] == 0.0
    assert float(v_prime(np.array([2.0]))[0]) == pytest.approx(0.5 / math.tanh(1) - 0.5, rel=1e-14)
    assert float(v_prime(np.array([2.0]))[0]) == pytest.approx(0.156518, abs=1e-6)
    x = np.linspace(-6, 6, 241)
    h = 1e-5
    assert np.allclose((v_potential(x + h) - v_potential(x - h)) / (2 * h), v_prime(x), atol=1e-8)
    assert np.allclose((v_prime(x + h) - v_prime(x - h)) / (2 * h), v_second(x), atol=1e-7)
    g, d = 0.3, 0.2
    assert np.allclose((w_potential(x + h, g, d) - w_potential(x - h, g, d)) / (2 * h), w_prime(x, g, d), atol=1e-8)
    # W' = delta (coth x - 1/x) + gamma (coth(x/2)/2 - 1/x)
    z = np.array([0.7, 1.9])
    ref = d * (1 / np.tanh(z) - 1 / z) + g * (0.5 / np.tanh(z / 2) - 1 / z)
    assert np.allclose(w_prime(z, g, d), ref, rtol=1e-13)


def test_series_branch_is_continuous():
    eps = SERIES_CUT
    for f in (v_potential, v_prime, v_second):
        a, b = f(np.array([eps * (1 - 1e-12)])), f(np.array([eps * (1 + 1e-12)]))
        assert abs(a[0] - b[0]) < 1e-11 * abs(a[0])


def test_modified_extra_drift_against_loops():
    rng = np.random.default_rng(0)
    s = np.sort(rng.uniform(0, 2, 6))[::-1]
    n = s.size
    ref = np.array([sum(v_prime(s[i] - s[j]) + v_prime(s[i] + s[j]) for j in range(n) if j != i) / (2 * n)
                    + w_prime(s[i], 0.1, 0.05) for i in range(n)])
    assert np.allclose(modified_extra_drift(s, 0.1, 0.05), ref, atol=1e-15)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig.dyson_bessel(10, 2.0, 0.01)  # 0 < alpha_N < 1/(beta N)
    with pytest.raises(ValueError):
        SimConfig(RootSystemSpec("A", 3), MultiplicityParam(k_medium=0.3))
    with pytest.raises(ValueError):
        SimConfig.dyson_bessel(4, 2.0, 0.0, dt=0)
    cfg = SimConfig.dyson_bessel(4, 2.0, 0.5)
    assert cfg.spec.family == "B" and cfg.alpha_N == pytest.approx(0.5) and cfg.beta == 2.0
    assert SimConfig.dyson_bessel(4, 2.0, 0.0).spec.family == "D"


def test_rank_one_drift_reduces_to_bessel_term():
    # ds = dB / sqrt(beta) + alpha / (2 s) dt for N = 1
    cfg = SimConfig.dyson_bessel(1, 2.0, 1.5)
    sigma2 = 1 / cfg.beta
    drift = sigma2 * drift_radial_dunkl(cfg.spec, cfg.k, [0.8])
    assert drift[0] == pytest.approx(1.5 / (2 * 0.8))


def test_reproducible_and_seed_dependent():
    cfg = SimConfig.dyson_bessel(6, 2.0, 0.5, seed=3, dt=1e-2)
    a, b = simulate_dyson_bessel(cfg), simulate_dyson_bessel(cfg)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.times, b.times)
    c = simulate_dyson_bessel(SimConfig.dyson_bessel(6, 2.0, 0.5, seed=4, dt=1e-2))
    assert not np.array_equal(a.final, c.final)


@pytest.mark.parametrize("scheme", ["euler_maruyama", "tamed_euler"])
def test_scaling_covariance_with_shared_noise(scheme):
    N, beta = 5, 2.0
    cfg = SimConfig.dyson_bessel(N, beta, 0.4, seed=11, dt=1e-2, scheme=scheme)
    init = np.array([1.0, 0.8, 0.5, 0.3, 0.1])
    s = simulate_dyson_bessel(cfg, init)
    X = simulate_radial_dunkl(cfg, math.sqrt(beta * N) * init)
    assert np.array_equal(s.times, X.times)
    assert np.allclose(X.states, math.sqrt(beta * N) * s.states, rtol=1e-9, atol=1e-12)


def test_sorted_permutation_gives_identical_path():
    cfg = SimConfig.dyson_bessel(5, 2.0, 0.4, seed=2, dt=1e-2)
    init = np.array([1.0, 0.8, 0.5, 0.3, 0.1])
    perm = np.random.default_rng(0).permutation(init)
    with pytest.raises(ChamberError):
        simulate_dyson_bessel(cfg, perm)
    a = simulate_dyson_bessel(cfg, init)
    b = simulate_dyson_bessel(cfg, np.sort(perm)[::-1])
    assert np.array_equal(a.states, b.states)


def test_zero_noise_run_follows_the_ode(monkeypatch):
    monkeypatch.setattr(dunkl_sim, "_normals", lambda seed, step, depth, code, shape: np.zeros(shape))
    spec, k = RootSystemSpec("B", 3), MultiplicityParam(0.5, 1.0, 0)
    cfg = SimConfig(spec, k, t_end=0.5, dt=1e-4, scheme="euler_maruyama")
    init = np.array([1.0, 0.6, 0.3])
    path = simulate_radial_dunkl(cfg, init)
    sol = solve_ivp(lambda t, x: drift_radial_dunkl(spec, k, x), (0, 0.5), init, rtol=1e-10, atol=1e-12)
    assert np.allclose(path.final, sol.y[:, -1], atol=1e-3)
    assert np.all(in_open_chamber(spec, path.states))


def test_modified_process_without_boundary_terms_tracks_dyson_bessel():
    # gamma = delta = 0: the difference is the smooth pair drift, O(t max|V'|)
    cfg = SimConfig.dyson_bessel(6, 2.0, 0.0, seed=5, dt=1e-3, t_end=0.01, scheme="tamed_euler")
    init = np.array([1.2, 1.0, 0.8, 0.6, 0.4, 0.2])
    a = simulate_dyson_bessel(cfg, init)
    b = simulate_modified_dyson_bessel(cfg, 0.0, 0.0, init)
    bound = 0.01 * float(np.max(np.abs(modified_extra_drift(init, 0, 0)))) * 2
    assert np.max(np.abs(a.final - b.final)) < bound
    assert np.max(np.abs(a.final - b.final)) > 0


def test_guard_scheme_gives_up_with_diagnostics():
    cfg = SimConfig.dyson_bessel(3, 2.0, 0.5, seed=0, dt=0.5, max_halvings=0, scheme="euler_maruyama")
    with pytest.raises(SimulationError) as err:
        simulate_dyson_bessel(cfg, [1e-3, 5e-4, 1e-4])
    assert "step" in err.value.diagnostics


def test_warm_start_shape():
    s = warm_start(RootSystemSpec("B", 10))
    assert np.all(np.diff(s) < 0) and s[-1] > 0 and s[0] < 1e-3
    a = warm_start(RootSystemSpec("A", 10))
    assert abs(a.sum()) < 1e-15


def test_empirical_path_bookkeeping():
    cfg = SimConfig.dyson_bessel(4, 2.0, 0.5, seed=1, dt=0.1)
    path = simulate_dyson_bessel(cfg, [1.0, 0.7, 0.4, 0.1])
    times, measures = empirical_path(path, stride=3)
    assert times[0] == path.times[0] and times[-1] == path.times[-1]
    assert np.array_equal(times[:-1], path.times[::3][: len(times) - 1])
    for m in measures:
        assert m.is_symmetric()
    assert np.allclose(measures[-1].values, np.sort(np.concatenate([path.final, -path.final])))


def test_empirical_path_single_particle():
    cfg = SimConfig.dyson_bessel(1, 2.0, 1.0, seed=1, dt=0.1, t_end=0.2)
    path = simulate_dyson_bessel(cfg, [0.5])
    _, measures = empirical_path(path)
    s = path.final[0]
    assert np.allclose(measures[-1].values, [-s, s])


def test_girsanov_functional_trivial_cases():
    nu = AtomicMeasure(np.array([-1.0, 1.0]))
    times = np.linspace(0, 1, 5)
    assert girsanov_functional(times, [nu] * 5, 0.0, 0.0, 0.0, 2.0, pair_coupling=0.0) == 0.0
    # static path: the boundary energy cancels, only the running terms stay
    parts = dunkl_sim.girsanov_integrands(nu, 0.2, 0.1, 0.5)
    running = parts["transport"] + parts["boundary"] + parts["quadratic"]
    value = girsanov_functional(times, [nu] * 5, 0.2, 0.1, 0.5, 2.0)
    assert value == pytest.approx(running, rel=1e-12)


def test_girsanov_diagonal_uses_second_derivative():
    nu = AtomicMeasure(np.array([0.5, 0.5 + 1e-12]))
    near = dunkl_sim.girsanov_integrands(nu, 0.2, 0.1, 0.0)
    nu2 = AtomicMeasure(np.array([0.5, 0.5 + 1e-5]))
    far = dunkl_sim.girsanov_integrands(nu2, 0.2, 0.1, 0.0)
    assert near["transport"] == pytest.approx(far["transport"], rel=1e-4)


@pytest.mark.slow
@pytest.mark.parametrize("beta", [1.0, 2.0, 4.0])
def test_chamber_preserved_over_many_runs(beta):
    N, runs = 64, 1000
    for alpha in (0.0, 2 / (beta * N), 0.5):
        cfg = SimConfig.dyson_bessel(N, beta, alpha, seed=7, dt=2e-2, scheme="tamed_euler")
        init = np.tile(np.linspace(1.0, 0.05, N), (runs, 1))
        path = simulate_dyson_bessel(cfg, init, record=False)
        assert np.all(in_open_chamber(cfg.spec, path.states))
