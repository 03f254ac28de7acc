import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergolab.functions import catalog, cutoff, gaussian, truncated_gaussian, truncated_polynomial, zero


def fd_grad(f, x, eps=1e-6):
    d = x.shape[1]
    out = np.empty_like(x)
    for i in range(d):
        e = np.zeros(d)
        e[i] = eps
        out[:, i] = (f(x + e) - f(x - e)) / (2 * eps)
    return out


def fd_hess(g, x, eps=1e-6):
    d = x.shape[1]
    out = np.empty((x.shape[0], d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = eps
        out[:, :, i] = (g.grad(x + e) - g.grad(x - e)) / (2 * eps)
    return out


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_catalog_derivatives_match_finite_differences(dim, rng):
    for g in catalog(dim):
        lo = np.array([a for a, _ in g.support_box])
        hi = np.array([b for _, b in g.support_box])
        x = rng.uniform(lo, hi, size=(100, dim))
        scale = max(1.0, np.abs(g.grad(x)).max())
        np.testing.assert_allclose(g.grad(x), fd_grad(g, x), atol=1e-5 * scale * 10)
        hscale = max(1.0, np.abs(g.hessian(x)).max())
        np.testing.assert_allclose(g.hessian(x), fd_hess(g, x), atol=1e-5 * hscale * 10)


@pytest.mark.parametrize("dim", [1, 2])
def test_vanishes_outside_support(dim, rng):
    for g in catalog(dim):
        for (a, b) in g.support_box[:1]:
            x = rng.uniform(-4, 4, size=(50, dim))
            x[:, 0] = rng.choice([a - 0.01, b + 0.01, a - 3, b + 3], size=50)
            assert np.all(g(x) == 0) and np.all(g.grad(x) == 0) and np.all(g.hessian(x) == 0)


def test_cutoff_is_one_inside_and_c2_at_shell():
    c = cutoff([(-4, 4)], 1)
    assert np.all(c(np.linspace(-3.2, 3.2, 11)) == 1.0)
    # value and two derivatives continuous across the shell edges
    for p in (-4.0, -3.2, 3.2, 4.0):
        x = np.array([[p - 1e-9], [p + 1e-9]])
        assert abs(np.diff(c(x))[0]) < 1e-6
        assert abs(np.diff(c.grad(x)[:, 0])[0]) < 1e-6
        assert abs(np.diff(c.hessian(x)[:, 0, 0])[0]) < 1e-4


def test_algebra_linear_and_product(rng):
    box = [(-2, 2)]
    p = truncated_polynomial({(1,): 1.0}, box)
    q = truncated_gaussian([0.0], 0.7, box)
    x = rng.uniform(-2, 2, size=(30, 1))
    np.testing.assert_allclose((p + q.scale(2.0))(x), p(x) + 2 * q(x))
    np.testing.assert_allclose((p - q)(x), p(x) - q(x))
    pq = p * q
    np.testing.assert_allclose(pq(x), p(x) * q(x))
    np.testing.assert_allclose(pq.grad(x), fd_grad(pq, x), atol=1e-6)
    np.testing.assert_allclose(pq.hessian(x), fd_hess(pq, x), atol=1e-5)


def test_shift_commutes(rng):
    g = truncated_gaussian([0.2], 0.5, [(-2, 2)])
    s = g.shifted([0.7])
    x = rng.uniform(-1, 2, size=(20, 1))
    np.testing.assert_allclose(s(x), g(x - 0.7))
    np.testing.assert_allclose(s.grad(x), g.grad(x - 0.7))
    assert s.support_box == ((-1.3, 2.7),)


def test_zero_function():
    z = zero(2, [(-1, 1), (-1, 1)])
    assert np.all(z(np.ones((3, 2))) == 0)


def test_envelope_bound_dominates(rng):
    g = truncated_polynomial({(2,): 1.0}, [(-2, 2)])
    x = rng.uniform(-2, 2, size=(500, 1))
    env = g.envelope_bound
    assert np.abs(g(x)).max() <= env and np.abs(g.hessian(x)).max() <= env


def test_invalid_box_rejected():
    with pytest.raises(ValueError):
        cutoff([(1, -1)], 1)
    with pytest.raises(ValueError):
        cutoff([(-1, 1)], 1, shell=1.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(0.2, 1.0))
def test_gaussian_bump_grad_property(c, s):
    g = gaussian([c], s, 1, [(-3, 3)])
    x = np.linspace(-2.5, 2.5, 7)[:, None]
    np.testing.assert_allclose(g.grad(x), fd_grad(g, x), atol=1e-6)
