import numpy as np
import pytest

from falsibench.errors import GenerationError, ParameterError
from falsibench.synthgen import (GeneratorSpec, VarProcess, build_process, gen_causeme_nonlinear,
                                 gen_lorenz96, gen_regime_switch, gen_var_chain, gen_var_random,
                                 generate, lorenz96_rhs, phi, rk4_step, spectral_radius)


def test_chain_has_exactly_the_chain_edges():
    _, truth = gen_var_chain(5, 500, seed=7)
    expected = np.zeros((5, 5), dtype=bool)
    expected[[1, 2, 3, 4], [0, 1, 2, 3]] = True
    np.testing.assert_array_equal(truth.edges[:, :, 0], expected)


@pytest.mark.parametrize("seed", range(5))
def test_var_random_is_stable_at_target_radius(seed):
    process, _ = build_process(GeneratorSpec("var_random", 10, 100, max_lag=2, seed=seed))
    assert spectral_radius(process.coefs[0]) == pytest.approx(0.9, abs=1e-9)


def test_generators_are_deterministic():
    a, ta = gen_var_random(8, 200, max_lag=2, density=0.2, seed=3)
    b, tb = gen_var_random(8, 200, max_lag=2, density=0.2, seed=3)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(ta.edges, tb.edges)
    c, _ = gen_var_random(8, 200, max_lag=2, density=0.2, seed=4)
    assert not np.array_equal(a.values, c.values)


@pytest.mark.parametrize("family", ["var_random", "var_chain"])
def test_stationarity_guard(family):
    for seed in range(20):
        s, _ = generate(GeneratorSpec(family, 6, 1000, seed=seed))
        v1, v2 = s.values[:500].var(axis=0), s.values[500:].var(axis=0)
        assert np.all(v2 < 3 * v1) and np.all(v1 < 3 * v2)


def test_every_adjacency_is_evaluable():
    for seed in range(30):
        _, truth = gen_var_random(5, 60, density=0.05, seed=seed)
        assert truth.is_evaluable()
    _, truth = gen_lorenz96(6, 20)
    assert truth.is_evaluable()


def test_causeme_alpha_zero_equals_linear_var():
    s_nl, t_nl = gen_causeme_nonlinear(6, 300, alpha=0.0, density=0.2, seed=11)
    process, noise = build_process(GeneratorSpec("causeme_nonlinear", 6, 300, density=0.2, seed=11))
    linear = VarProcess(process.coefs, process.adjacency, alpha=0.0)
    np.testing.assert_array_equal(s_nl.values, linear.simulate(300, noise))


def test_phi_endpoints():
    u = np.linspace(-3, 3, 13)
    np.testing.assert_array_equal(phi(u, 0.0), u)
    np.testing.assert_allclose(phi(u, 1.0), np.tanh(2 * u))


def test_regime_switch_regimes_share_support():
    process, _ = build_process(GeneratorSpec("regime_switch", 3, 100, density=0.5, seed=2))
    a, b = process.coefs[0, 0], process.coefs[1, 0]
    np.testing.assert_array_equal(a != 0, b != 0)
    np.testing.assert_array_equal(np.sign(a), np.sign(b))
    s, truth = gen_regime_switch(3, 400, seed=2)
    assert s.t == 400 and truth.k == 3


def test_relabeling_equivariance():
    """Permuting variables permutes data and truth together (OLS scoring is permutation-equivariant)."""
    from falsibench.baselines import fit_ols
    from falsibench.evalstats import auroc_flat_lag

    s, truth = gen_var_random(6, 400, density=0.2, seed=5)
    perm = [3, 0, 5, 1, 4, 2]
    base = auroc_flat_lag(fit_ols(s).scores, truth)
    permuted = auroc_flat_lag(fit_ols(s.permuted(perm)).scores, truth.permuted(perm))
    assert permuted == pytest.approx(base, abs=1e-12)


def test_lorenz_adjacency_has_three_parents():
    _, truth = gen_lorenz96(10, 10)
    assert truth.n_edges() == 30
    assert np.all(truth.edges[:, :, 0].sum(axis=1) == 3)
    # parents of 0 are 8, 9 and 1
    assert set(np.flatnonzero(truth.edges[0, :, 0])) == {8, 9, 1}


def test_lorenz_rhs_formula():
    x = np.arange(1.0, 6.0)
    f = lorenz96_rhs(x, 8.0)
    i = 2
    assert f[i] == pytest.approx((x[i + 1] - x[i - 2]) * x[i - 1] - x[i] + 8.0)


@pytest.mark.parametrize("thin, n", [(5, 10), (10, 5)])
def test_rk4_step_halving(thin, n):
    """Halving the internal step moves the first 0.5 time units of samples by < 1e-4 (relative)."""
    x0 = 10.0 + np.random.default_rng(0).normal(0, 0.5, 8)
    coarse = gen_lorenz96(8, n, x0=x0, dt=0.01, thin=thin, burn_in=0)[0].values
    fine = gen_lorenz96(8, n, x0=x0, dt=0.005, thin=2 * thin, burn_in=0)[0].values
    rel = np.abs(coarse - fine) / np.abs(fine).max()
    assert rel.max() < 1e-4


def test_rk4_fourth_order_convergence():
    x0 = 10.0 + np.random.default_rng(1).normal(0, 0.5, 6)

    def run(h, n):
        x = x0.copy()
        for _ in range(n):
            x = rk4_step(x, h, 10.0)
        return x

    ref = run(0.00125, 80)
    e1 = np.abs(run(0.01, 10) - ref).max()
    e2 = np.abs(run(0.005, 20) - ref).max()
    assert 12 < e1 / e2 < 20  # ~2^4


def test_parameter_errors():
    with pytest.raises(ParameterError):
        GeneratorSpec("nope", 3, 10).validate()
    with pytest.raises(ParameterError):
        GeneratorSpec("var_random", 3, 10, density=0.0).validate()
    with pytest.raises(ParameterError):
        GeneratorSpec("lorenz96", 3, 10).validate()
    with pytest.raises(ParameterError):
        GeneratorSpec("causeme_nonlinear", 3, 10, nonlinearity=1.5).validate()


def test_overflow_guard_raises():
    coefs = np.array([[[3.0, 0.0], [0.0, 3.0]]])
    process = VarProcess(coefs, None, burn_in=0)
    with pytest.raises(GenerationError):
        process.simulate(200, np.random.default_rng(0))
