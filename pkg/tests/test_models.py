import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate
from scipy.special import gamma as gamma_fn

from ergolab.generator import apply_generator
from ergolab.models import (ModelError, make_langevin_model, make_ou_model, make_quartic_model,
                            make_reflected_model, modulus_of_continuity)


@pytest.mark.parametrize("dim,sigma", [(1, 1.0), (1, 2.0), (2, 1.0), (3, 0.7)])
def test_ou_density_normalised(dim, sigma):
    m = make_ou_model(dim, sigma)
    n = {1: 200, 2: 64, 3: 24}[dim]
    assert m.mu_integral(lambda x: np.ones(len(x)), m.working_box, n).value == pytest.approx(1, abs=1e-4)


def test_ou_closed_form_values():
    assert make_ou_model(1, 1.0).stationary_variance == 0.5
    assert make_ou_model(1, 2.0).stationary_variance == 2.0
    np.testing.assert_allclose(make_ou_model(2, 1.0).b(np.array([[1.0, 1.0]])), [[-1.0, -1.0]])
    m = make_ou_model(1, 1.0)
    assert m.spectral_gap == 1.0 and m.c_P == 1.0
    # N(0, 1/2) density at 0
    assert m.density(np.zeros((1, 1)))[0] == pytest.approx(1 / math.sqrt(math.pi))


def test_diffusion_matrix_positive_definite(rng):
    m = make_ou_model(3, 0.8)
    a = m.diffusion_matrix(rng.normal(size=(10, 3)))
    assert np.all(np.linalg.eigvalsh(a) >= m.ellipticity_floor - 1e-15)


def test_langevin_quadratic_matches_ou(rng):
    lm = make_langevin_model(lambda x: 0.5 * np.sum(x * x, axis=1), lambda x: x, 1, 1.0, [(-6, 6)])
    om = make_ou_model(1, 1.0)
    x = rng.uniform(-3, 3, size=(20, 1))
    np.testing.assert_allclose(lm.density(x), om.density(x), rtol=1e-8)


def test_quartic_normalisation_closed_form():
    # int exp(-x^4 / 2) dx = 2^(1/4) Gamma(1/4) / 2
    ref = 2 ** 0.25 * gamma_fn(0.25) / 2
    assert make_quartic_model().normalization == pytest.approx(ref, rel=1e-6)
    assert ref == pytest.approx(2.1558005495, rel=1e-9)


def test_langevin_wrong_gradient_rejected():
    with pytest.raises(ModelError):
        make_langevin_model(lambda x: 0.5 * np.sum(x * x, axis=1), lambda x: -x, 1, 1.0, [(-6, 6)])


def test_langevin_non_integrable_rejected():
    with pytest.raises(ModelError):
        make_langevin_model(lambda x: np.zeros(len(x)), lambda x: np.zeros_like(x), 1, 1.0, [(-6, 6)])


def test_langevin_density_scales_with_sigma():
    # the stationary law of dX = -grad V dt + sigma dW is exp(-2V / sigma^2)
    m = make_langevin_model(lambda x: 0.5 * np.sum(x * x, axis=1), lambda x: x, 1, 2.0, [(-12, 12)])
    var = m.mu_integral(lambda x: x[:, 0] ** 2, m.working_box, 200).value
    assert var == pytest.approx(2.0, rel=1e-6)


def test_detailed_balance(ou2, cat2):
    g, h = cat2[1], cat2[3]
    box = g.support_box
    lhs = ou2.mu_integral(lambda x: g(x) * apply_generator(ou2, h, x), box, 48, g.breaks).value
    rhs = ou2.mu_integral(lambda x: h(x) * apply_generator(ou2, g, x), box, 48, g.breaks).value
    assert lhs == pytest.approx(rhs, abs=1e-5)


def test_reflected_uniform():
    m = make_reflected_model(lambda x: np.zeros_like(x), 1.0)
    np.testing.assert_allclose(m.density(np.linspace(0, 1, 11)[:, None]), 1.0, rtol=1e-10)
    assert m.spectral_gap == pytest.approx(math.pi ** 2 / 2)


def test_reflected_density_sign():
    m = make_reflected_model(lambda x: -(x - 0.5), 1.0)
    z = sp_integrate.quad(lambda x: math.exp(-(x - 0.5) ** 2), 0, 1)[0]
    x = np.array([[0.1], [0.5], [0.9]])
    np.testing.assert_allclose(m.density(x), np.exp(-(x[:, 0] - 0.5) ** 2) / z, rtol=1e-6)
    assert m.density(np.array([[1.5]]))[0] == 0.0


def test_reflected_zero_sigma_rejected():
    with pytest.raises(ModelError):
        make_reflected_model(lambda x: np.zeros_like(x), 0.0)


def test_modulus_examples():
    assert modulus_of_continuity(lambda x: x[:, 0], 0.1, [(0, 1)], 0.001) == pytest.approx(0.1, abs=1e-3)
    assert modulus_of_continuity(lambda x: np.full(len(x), 3.0), 0.1, [(0, 1)], 0.01) == 0.0
    got = modulus_of_continuity(lambda x: np.sqrt(x[:, 0]), 0.01, [(0, 1)], 0.0025)
    assert got == pytest.approx(0.1, abs=1e-9)


def test_modulus_monotone_and_hoelder(rng):
    f = lambda x: 2.0 * np.linalg.norm(x, axis=1) ** 0.5  # noqa: E731  H(1/2, 2)
    box = [(-1, 1), (-1, 1)]
    m1 = modulus_of_continuity(f, 0.1, box, 0.02)
    m2 = modulus_of_continuity(f, 0.2, box, 0.02)
    assert m1 <= m2
    assert m1 <= 2.0 * 0.1 ** 0.5 + 1e-12 and m2 <= 2.0 * 0.2 ** 0.5 + 1e-12


def test_modulus_preconditions():
    with pytest.raises(ValueError):
        modulus_of_continuity(lambda x: x[:, 0], 0.1, [(0, 1)], 0.05)
    with pytest.raises(ValueError):
        modulus_of_continuity(lambda x: x[:, 0], 1.5, [(0, 1)], 0.1)
