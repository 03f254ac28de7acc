import numpy as np
import pytest

from ergolab.functions import catalog, truncated_gaussian, truncated_polynomial, zero
from ergolab.generator import (IdentityError, apply_generator, asymptotic_variance, carre_du_champ,
                               dirichlet_form, dynkin_residual, dynkin_residuals, gamma_integral,
                               gauss_limit_spec, limit_covariance, metric_dG)
from ergolab.models import make_ou_model
from ergolab.paths import PathGrid, simulate_batch


def fd_generator(model, g, x, eps=1e-4):
    # independent oracle: finite-difference Laplacian and gradient
    d = x.shape[1]
    lap = np.zeros(len(x))
    grad = np.zeros_like(x)
    for i in range(d):
        e = np.zeros(d)
        e[i] = eps
        lap += (g(x + e) - 2 * g(x) + g(x - e)) / eps ** 2
        grad[:, i] = (g(x + e) - g(x - e)) / (2 * eps)
    return 0.5 * model.sigma ** 2 * lap + np.sum(model.b(x) * grad, axis=1)


def test_trivial_generator_values(ou1, cat1, ou2, cat2):
    assert apply_generator(ou1, cat1[1], np.zeros((1, 1)))[0] == pytest.approx(1.0)
    x = np.linspace(-2, 2, 9)[:, None]
    np.testing.assert_allclose(apply_generator(ou1, cat1[0], x), -x[:, 0], atol=1e-13)
    y = np.array([[0.5, -1.0], [1.2, 0.3]])
    np.testing.assert_allclose(apply_generator(ou2, cat2[1], y), -2 * y[:, 0] * y[:, 1], atol=1e-13)


@pytest.mark.parametrize("dim", [1, 2])
def test_generator_vs_finite_differences(dim, rng):
    m = make_ou_model(dim, 1.3)
    for g in catalog(dim):
        x = rng.uniform(-4.5, 4.5, size=(20, dim))
        np.testing.assert_allclose(apply_generator(m, g, x), fd_generator(m, g, x), atol=2e-5 * max(1, g.envelope_bound))


def test_carre_du_champ_identity(ou2, cat2, rng):
    g, gt = cat2[2], cat2[3]
    x = rng.uniform(-4, 4, size=(50, 2))
    prod = g * gt
    rhs = apply_generator(ou2, prod, x) - g(x) * apply_generator(ou2, gt, x) - gt(x) * apply_generator(ou2, g, x)
    np.testing.assert_allclose(carre_du_champ(ou2, g, gt, x), rhs, atol=1e-6)
    assert np.all(carre_du_champ(ou2, g, g, x) >= 0)
    np.testing.assert_allclose(carre_du_champ(ou2, g, gt, x), carre_du_champ(ou2, gt, g, x))


def test_asymptotic_variance_closed_forms(ou1, cat1):
    assert asymptotic_variance(ou1, cat1[0]) == pytest.approx(1.0, rel=1e-6)
    assert asymptotic_variance(ou1, zero(1, [(-2, 2)])) == 0.0
    # stationary std is sqrt(2) here, so the cutoff shell needs to sit further out
    m = make_ou_model(1, 2.0)
    assert asymptotic_variance(m, catalog(1, 12.0)[0]) == pytest.approx(4.0, rel=1e-6)
    # g = x^2 - 1/2: Gamma = 4 x^2, int = 4 * 1/2
    assert asymptotic_variance(ou1, cat1[1]) == pytest.approx(2.0, rel=1e-6)


@pytest.mark.parametrize("dim", [1, 2])
def test_identity_across_catalog(dim):
    m = make_ou_model(dim, 1.0)
    for g in catalog(dim):
        gam, dir_ = gamma_integral(m, g), dirichlet_form(m, g)
        assert abs(gam - dir_) <= 1e-4 * abs(gam)


def test_identity_mismatch_detected(ou1):
    g = catalog(1)[0]
    broken = type(g)(1, g, lambda x: 2 * g.grad(x), g.hessian, g.support_box, g.breaks, "broken")
    with pytest.raises(IdentityError):
        asymptotic_variance(ou1, broken)


def test_covariance_properties(ou1, cat1):
    a, b = cat1[0], cat1[1]
    assert limit_covariance(ou1, a, a) == pytest.approx(asymptotic_variance(ou1, a), rel=1e-8)
    assert abs(limit_covariance(ou1, a, b)) < 1e-10
    assert limit_covariance(ou1, cat1[2], cat1[4]) == pytest.approx(limit_covariance(ou1, cat1[4], cat1[2]))


def test_metric(ou1, cat1, rng):
    a = cat1[0]
    assert metric_dG(ou1, a, a) == 0.0
    d = metric_dG(ou1, cat1[3], cat1[4])
    assert d ** 2 == pytest.approx(gamma_integral(ou1, cat1[3] - cat1[4]), rel=1e-6)
    box = [(-4, 4)]
    for _ in range(10):
        fs = [truncated_gaussian([rng.uniform(-1, 1)], rng.uniform(0.3, 1.2), box) for _ in range(3)]
        d01, d12, d02 = metric_dG(ou1, fs[0], fs[1]), metric_dG(ou1, fs[1], fs[2]), metric_dG(ou1, fs[0], fs[2])
        assert d02 <= d01 + d12 + 1e-8


@pytest.mark.parametrize("dim", [1, 2])
def test_gauss_limit_spec(dim):
    m = make_ou_model(dim, 1.0)
    spec = gauss_limit_spec(m, catalog(dim))
    V = spec.variance_matrix
    np.testing.assert_allclose(V, V.T)
    assert np.linalg.eigvalsh(V).min() >= -1e-8
    np.testing.assert_allclose(np.diag(V), spec.gamma_diagonal, rtol=1e-5)
    assert set(spec.to_dict()) == {"functions", "variance_matrix", "gamma_diagonal", "d_G"}


def test_convolution_compatibility(ou1):
    from ergolab.kernels import make_kernel, smoothed
    g = truncated_gaussian([0.2], 0.6, [(-4, 4)])
    K = make_kernel(1, 1)
    base = asymptotic_variance(ou1, g)
    diffs = [abs(gamma_integral(ou1, smoothed(g, K, h)) - base) for h in (0.2, 0.1, 0.05)]
    assert diffs[0] > diffs[1] > diffs[2]


def test_dynkin_constant_path():
    m = make_ou_model(1, 1.0)
    g = truncated_polynomial({(2,): 1.0}, [(2, 6)])  # vanishes near 0, so Ag = 0 there
    path = PathGrid(1, 0.1, 1.0, np.zeros((11, 1)), 0, "fixed")
    assert dynkin_residual(m, g, path) == 0.0


def test_dynkin_martingale_monte_carlo(ou1, cat1):
    g = cat1[0]
    s = simulate_batch(ou1, 0.01, 50.0, 21, 2000)
    M = dynkin_residuals(ou1, g, s, 0.01)
    assert abs(M.mean()) <= 3 * M.std(ddof=1) / np.sqrt(len(M))
    assert M.var(ddof=1) / 50.0 == pytest.approx(gamma_integral(ou1, g), rel=0.1)
