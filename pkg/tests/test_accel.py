import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ergolab import _accel


def keys(n, seed=0, stream=1):
    return np.array([_accel.derive_key(seed, r, stream) for r in range(n)], dtype=np.uint64)


def test_derive_key_frozen():
    assert _accel.derive_key(0, 0, 1) == 0x2F32A78496C67C60
    assert _accel.derive_key(12345, 7, 2) == 0x51A68FDEB6E46D51


def test_derive_key_distinct_streams():
    ks = {_accel.derive_key(s, r, st_) for s in range(4) for r in range(50) for st_ in range(3)}
    assert len(ks) == 4 * 50 * 3


def test_gaussian_block_frozen():
    z = _accel.gaussian_block(keys(1), 0, 2, 2)
    np.testing.assert_allclose(z[0], [[0.32987914, 0.46168709], [2.09987049, -0.28070743]],
                               atol=1e-8)


@pytest.mark.parametrize("ncomp", [1, 2, 3])
def test_backends_agree_on_normals(ncomp):
    k = keys(5)
    a = _accel.gaussian_block(k, 3, 40, ncomp, backend="numpy")
    b = _accel.gaussian_block(k, 3, 40, ncomp, backend="numba")
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


def test_counter_offset_consistency():
    # a block starting at step 10 equals the tail of a block starting at 0
    k = keys(3)
    full = _accel.gaussian_block(k, 0, 30, 2)
    tail = _accel.gaussian_block(k, 10, 20, 2)
    np.testing.assert_array_equal(full[:, 10:], tail)


def test_normal_moments():
    z = _accel.gaussian_block(keys(200), 0, 2000, 1).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 0.01
    assert abs(np.mean(z ** 4) - 3) < 0.05


@pytest.mark.parametrize("reflect,c1,c3", [(False, 1.0, 0.0), (False, 0.0, 1.0), (True, 0.0, 0.0)])
def test_backends_agree_on_em(reflect, c1, c3):
    k = keys(4)
    x0 = np.full((4, 1), 0.5)
    a = _accel.em_poly(x0, k, 0, 500, 0.01, 1.0, c1, c3, reflect, backend="numpy")
    b = _accel.em_poly(x0, k, 0, 500, 0.01, 1.0, c1, c3, reflect, backend="numba")
    np.testing.assert_allclose(a[0], b[0], rtol=0, atol=1e-12)
    assert a[1] == b[1] and a[2] == b[2]


def test_em_divergence_reported():
    x0 = np.full((2, 1), 50.0)
    for backend in ("numpy", "numba"):
        _, bad_rep, bad_step = _accel.em_poly(x0, keys(2), 0, 100, 0.05, 1.0, 0.0, 1.0, False,
                                              backend=backend)
        assert bad_rep >= 0 and bad_step >= 0


@pytest.mark.parametrize("value,expected", [(1.2, 0.8), (-0.3, 0.3), (0.4, 0.4), (2.3, 0.3), (-1.25, 0.75)])
def test_fold_unit_examples(value, expected):
    assert _accel.fold_unit(np.array([value]))[0] == pytest.approx(expected, abs=1e-12)


@given(st.floats(min_value=-50, max_value=50, allow_nan=False))
def test_fold_unit_lands_in_interval(x):
    y = _accel.fold_unit(np.array([x]))[0]
    assert 0.0 <= y <= 1.0


def test_stamp_backends_agree(rng):
    pts = rng.normal(scale=0.4, size=(5000, 2))
    w = rng.uniform(size=5000)
    offs = _accel.stencil(0.1, 0.05, 2)
    lo = np.array([-1.0, -1.0])
    a = _accel.stamp_occupation(pts, w, lo, 0.05, [41, 41], offs, 0.1, backend="numpy")
    b = _accel.stamp_occupation(pts, w, lo, 0.05, [41, 41], offs, 0.1, backend="numba")
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_stamp_matches_brute_force(rng):
    pts = rng.uniform(-1, 1, size=(400, 2))
    r, step = 0.2, 0.1
    lo = np.array([-1.0, -1.0])
    got = _accel.stamp_occupation(pts, np.ones(400), lo, step, [21, 21],
                                  _accel.stencil(r, step, 2), r)
    ax = lo[0] + step * np.arange(21)
    cx, cy = np.meshgrid(ax, ax, indexing="ij")
    centres = np.stack([cx, cy], -1).reshape(-1, 2)
    want = (np.sum((centres[:, None] - pts[None]) ** 2, axis=2) <= r * r).sum(axis=1)
    np.testing.assert_array_equal(got.reshape(-1), want)


def test_numpy_backend_env_flag():
    code = ("import numpy as np; from ergolab import _accel; from ergolab.models import make_ou_model;"
            "from ergolab.paths import simulate_batch;"
            "print(_accel.BACKEND); print(*simulate_batch(make_ou_model(1,1.0),0.01,2.0,3,2).ravel()[::37].tolist())")
    env = dict(os.environ, ERGOLAB_BACKEND="numpy")
    out_np = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                            check=True).stdout.split()
    env["ERGOLAB_BACKEND"] = "numba"
    out_nb = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                            check=True).stdout.split()
    assert out_np[0] == "numpy" and out_nb[0] == "numba"
    np.testing.assert_allclose(np.array(out_np[1:], float), np.array(out_nb[1:], float),
                               rtol=0, atol=1e-12)
