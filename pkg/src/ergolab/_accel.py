"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import time. Set ``ERGOLAB_BACKEND=numpy`` to
force the fallback (numba is also skipped automatically when it cannot be
imported). Both paths share the same counter-based generator, so they agree
to floating-point rounding of ``log``/``cos``/``sin``.
"""
from __future__ import annotations

import math
import os

import numpy as np

try:  # pragma: no cover - exercised implicitly
    import numba
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

_REQUESTED = os.environ.get("ERGOLAB_BACKEND", "numba").strip().lower()
BACKEND = "numba" if (_HAVE_NUMBA and _REQUESTED != "numpy") else "numpy"

# splitmix64 constants
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_WEYL = 0xD1B54A32D192ED03
_MASK = (1 << 64) - 1
_TWO_PI = 2.0 * math.pi
_INV53 = 2.0 ** -53


def mix64(z: int) -> int:
    """splitmix64 finaliser on a Python int (used for key derivation)."""
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def derive_key(seed: int, replicate: int, stream: int) -> int:
    """64-bit stream key for (seed, replicate, stream)."""
    k = mix64(int(seed) & _MASK)
    k = mix64(k ^ (int(replicate) & _MASK))
    return mix64(k ^ (int(stream) & _MASK))


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

_U_GOLDEN = np.uint64(_GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_U_WEYL = np.uint64(_WEYL)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))


def _mix_np(z):
    z = z + _U_GOLDEN
    z = (z ^ (z >> _S30)) * _U_M1
    z = (z ^ (z >> _S27)) * _U_M2
    return z ^ (z >> _S31)


def _gaussian_block_np(keys, step0, nsteps, ncomp):
    keys = np.asarray(keys, dtype=np.uint64)
    npairs = (ncomp + 1) // 2
    steps = np.arange(step0, step0 + nsteps, dtype=np.uint64)
    pairs = np.arange(npairs, dtype=np.uint64)
    with np.errstate(over="ignore"):
        ctr = steps[:, None] * np.uint64(npairs) + pairs[None, :]
        c1 = (ctr * np.uint64(2))[None, :, :]
        c2 = c1 + np.uint64(1)
        k = keys[:, None, None]
        w1 = _mix_np(k + c1 * _U_WEYL)
        w2 = _mix_np(k + c2 * _U_WEYL)
    u1 = ((w1 >> _S11) + np.uint64(1)).astype(np.float64) * _INV53
    u2 = (w2 >> _S11).astype(np.float64) * _INV53
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = _TWO_PI * u2
    out = np.empty((keys.shape[0], nsteps, 2 * npairs))
    out[:, :, 0::2] = rad * np.cos(ang)
    out[:, :, 1::2] = rad * np.sin(ang)
    return out[:, :, :ncomp]


def _fold_unit_np(x):
    # x -> |x|, x -> 2 - x until x lies in [0, 1]
    x = np.abs(x)
    bad = x > 1.0
    while np.any(bad):
        x = np.where(bad, np.abs(2.0 - x), x)
        bad = x > 1.0
    return x


_BLOCK = 256


def _em_poly_np(x0, keys, step0, nsteps, dt, sigma, c1, c3, reflect, limit):
    # divergence is detected below, so silence overflow noise on the way there
    with np.errstate(over="ignore", invalid="ignore"):
        return _em_poly_np_inner(x0, keys, step0, nsteps, dt, sigma, c1, c3, reflect, limit)


def _em_poly_np_inner(x0, keys, step0, nsteps, dt, sigma, c1, c3, reflect, limit):
    nrep, dim = x0.shape
    out = np.empty((nrep, nsteps + 1, dim))
    out[:, 0] = x0
    x = x0.copy()
    scale = sigma * math.sqrt(dt)
    k = 0
    while k < nsteps:
        m = min(_BLOCK, nsteps - k)
        noise = _gaussian_block_np(keys, step0 + k, m, dim)
        for j in range(m):
            x = x + (-c1 * x - c3 * x * x * x) * dt + scale * noise[:, j]
            if reflect:
                x = _fold_unit_np(x)
            out[:, k + j + 1] = x
        norms = np.sqrt(np.sum(out[:, k + 1 : k + m + 1] ** 2, axis=2))
        hit = np.argwhere(~(norms <= limit))
        if hit.size:
            r, s = hit[np.argmin(hit[:, 1])]
            return out, int(r), int(k + s + 1)
        k += m
    return out, -1, -1


def _stamp_np(points, weights, lo, step, shape, offsets, radius):
    dim = points.shape[1]
    shape = np.asarray(shape, dtype=np.int64)
    counts = np.zeros(int(np.prod(shape)))
    base = np.rint((points - lo) / step).astype(np.int64)
    r2 = radius * radius * (1.0 + 1e-12)
    strides = np.ones(dim, dtype=np.int64)
    for i in range(dim - 2, -1, -1):
        strides[i] = strides[i + 1] * shape[i + 1]
    for off in offsets:
        idx = base + off
        ok = np.all((idx >= 0) & (idx < shape), axis=1)
        centre = lo + idx * step
        d2 = np.sum((points - centre) ** 2, axis=1)
        ok &= d2 <= r2
        flat = idx[ok] @ strides
        counts += np.bincount(flat, weights=weights[ok], minlength=counts.size)
    return counts.reshape(tuple(shape))


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:
    _N_GOLDEN = np.uint64(_GOLDEN)
    _N_M1 = np.uint64(_M1)
    _N_M2 = np.uint64(_M2)
    _N_WEYL = np.uint64(_WEYL)

    @njit(cache=True, inline="always")
    def _mix_nb(z):
        z = z + _N_GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _N_M1
        z = (z ^ (z >> np.uint64(27))) * _N_M2
        return z ^ (z >> np.uint64(31))

    @njit(cache=True, inline="always")
    def _pair_nb(key, ctr):
        c1 = ctr * np.uint64(2)
        w1 = _mix_nb(key + c1 * _N_WEYL)
        w2 = _mix_nb(key + (c1 + np.uint64(1)) * _N_WEYL)
        u1 = np.float64((w1 >> np.uint64(11)) + np.uint64(1)) * _INV53
        u2 = np.float64(w2 >> np.uint64(11)) * _INV53
        rad = math.sqrt(-2.0 * math.log(u1))
        ang = _TWO_PI * u2
        return rad * math.cos(ang), rad * math.sin(ang)

    @njit(cache=True)
    def _gaussian_block_nb(keys, step0, nsteps, ncomp):
        npairs = (ncomp + 1) // 2
        out = np.empty((keys.shape[0], nsteps, ncomp))
        for r in range(keys.shape[0]):
            key = keys[r]
            for s in range(nsteps):
                base = np.uint64(step0 + s) * np.uint64(npairs)
                for p in range(npairs):
                    z0, z1 = _pair_nb(key, base + np.uint64(p))
                    out[r, s, 2 * p] = z0
                    if 2 * p + 1 < ncomp:
                        out[r, s, 2 * p + 1] = z1
        return out

    @njit(cache=True, inline="always")
    def _fold_unit_nb(v):
        v = abs(v)
        while v > 1.0:
            v = abs(2.0 - v)
        return v

    @njit(cache=True)
    def _em_poly_nb(x0, keys, step0, nsteps, dt, sigma, c1, c3, reflect, limit):
        nrep, dim = x0.shape
        npairs = (dim + 1) // 2
        out = np.empty((nrep, nsteps + 1, dim))
        scale = sigma * math.sqrt(dt)
        z = np.empty(2 * npairs)
        bad_r = -1
        bad_s = -1
        for r in range(nrep):
            key = keys[r]
            for i in range(dim):
                out[r, 0, i] = x0[r, i]
            for s in range(nsteps):
                base = np.uint64(step0 + s) * np.uint64(npairs)
                for p in range(npairs):
                    z0, z1 = _pair_nb(key, base + np.uint64(p))
                    z[2 * p] = z0
                    z[2 * p + 1] = z1
                nrm = 0.0
                for i in range(dim):
                    v = out[r, s, i]
                    v = v + (-c1 * v - c3 * v * v * v) * dt + scale * z[i]
                    if reflect:
                        v = _fold_unit_nb(v)
                    out[r, s + 1, i] = v
                    nrm += v * v
                if not (math.sqrt(nrm) <= limit):
                    if bad_s < 0 or s + 1 < bad_s:
                        bad_r = r
                        bad_s = s + 1
                    break
        return out, bad_r, bad_s

    @njit(cache=True)
    def _stamp_nb(points, weights, lo, step, shape, offsets, radius):
        npts, dim = points.shape
        total = 1
        for i in range(dim):
            total *= shape[i]
        counts = np.zeros(total)
        strides = np.ones(dim, dtype=np.int64)
        for i in range(dim - 2, -1, -1):
            strides[i] = strides[i + 1] * shape[i + 1]
        r2 = radius * radius * (1.0 + 1e-12)
        base = np.empty(dim, dtype=np.int64)
        for n in range(npts):
            for i in range(dim):
                base[i] = np.int64(np.rint((points[n, i] - lo[i]) / step))
            for o in range(offsets.shape[0]):
                flat = 0
                d2 = 0.0
                inside = True
                for i in range(dim):
                    idx = base[i] + offsets[o, i]
                    if idx < 0 or idx >= shape[i]:
                        inside = False
                        break
                    c = lo[i] + idx * step
                    d2 += (points[n, i] - c) ** 2
                    flat += idx * strides[i]
                if inside and d2 <= r2:
                    counts[flat] += weights[n]
        return counts


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def gaussian_block(keys, step0: int, nsteps: int, ncomp: int, backend: str | None = None):
    """Standard normals of shape (len(keys), nsteps, ncomp) for counters step0.."""
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    if (backend or BACKEND) == "numba":
        return _gaussian_block_nb(keys, int(step0), int(nsteps), int(ncomp))
    return _gaussian_block_np(keys, int(step0), int(nsteps), int(ncomp))


def em_poly(x0, keys, step0, nsteps, dt, sigma, c1, c3, reflect=False, limit=1e6,
            backend: str | None = None):
    """Euler-Maruyama for the coordinatewise drift -c1*x - c3*x**3.

    Returns ``(states, bad_replicate, bad_step)``; the last two are -1 unless a
    state norm exceeded ``limit``.
    """
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    args = (x0, keys, int(step0), int(nsteps), float(dt), float(sigma),
            float(c1), float(c3), bool(reflect), float(limit))
    if (backend or BACKEND) == "numba":
        out, r, s = _em_poly_nb(*args)
        return out, int(r), int(s)
    return _em_poly_np(*args)


def fold_unit(x):
    """Reflect values into [0, 1] (vectorised)."""
    return _fold_unit_np(np.asarray(x, dtype=np.float64))


def stamp_occupation(points, weights, lo, step, shape, offsets, radius,
                     backend: str | None = None):
    """Sum ``weights`` of points within ``radius`` of each grid centre.

    Grid centres are ``lo + idx * step`` for ``idx`` in ``shape``; ``offsets``
    is the integer stencil around each point's nearest centre.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    lo = np.ascontiguousarray(lo, dtype=np.float64)
    shape = np.ascontiguousarray(shape, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if (backend or BACKEND) == "numba":
        counts = _stamp_nb(points, weights, lo, float(step), shape, offsets, float(radius))
        return counts.reshape(tuple(shape))
    return _stamp_np(points, weights, lo, float(step), shape, offsets, float(radius))


def stencil(radius: float, step: float, dim: int) -> np.ndarray:
    """Integer offsets that can reach a centre within ``radius`` of a point."""
    m = int(math.ceil(radius / step)) + 1
    axes = [np.arange(-m, m + 1)] * dim
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    # nearest centre is within step/2 per axis of the point
    reach = radius + 0.5 * step * math.sqrt(dim)
    keep = np.sqrt(np.sum((grid * step) ** 2, axis=1)) <= reach + 1e-12
    return grid[keep].astype(np.int64)
