"""Empirical functionals of a sampled path.

Time integrals are left-endpoint Riemann sums over the grid points
X_0, ..., X_{n-1} with horizon t = n * dt.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel, quadrature
from .functions import SupportedFunction, TestFunction
from .kernels import ConvolutionRule, RadialKernel, check_clearance
from .models import DiffusionModel
from .paths import PathGrid

KINDS = ("G", "S", "H", "occupation")
_ROWS = 1 << 18


@dataclass(frozen=True)
class FunctionalSample:
    label: str
    value: float
    t: float
    h: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.label not in KINDS:
            raise ValueError(f"unknown functional kind {self.label!r}")
        if not (self.t > 0 and self.h >= 0):
            raise ValueError("need t > 0 and h >= 0")


def _batch(states) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    return states[None] if states.ndim == 2 else states


def _path_sums(fn, states: np.ndarray) -> np.ndarray:
    """sum_{k<n} fn(X_k) per replicate for states (R, n+1, d)."""
    R, n1, d = states.shape
    n = n1 - 1
    flat = states[:, :-1, :].reshape(-1, d)
    vals = np.empty(flat.shape[0])
    for s in range(0, flat.shape[0], _ROWS):
        vals[s : s + _ROWS] = fn(flat[s : s + _ROWS])
    return vals.reshape(R, n).sum(axis=1)


def time_averages(f, states, dt: float) -> np.ndarray:
    """G_t(f) = t^-1/2 sum_k f(X_k) dt for each replicate of a batch."""
    states = _batch(states)
    t = (states.shape[1] - 1) * dt
    return _path_sums(f, states) * dt / math.sqrt(t)


def time_average_G(f, path: PathGrid) -> float:
    return float(time_averages(f, path.states, path.dt)[0])


def kde_density(path: PathGrid, kernel: RadialKernel, h: float, x) -> np.ndarray:
    """pi_hat_{t,h}(x) = (1/t) sum_k K_h(x - X_k) dt."""
    return _kde(path.states[:-1], kernel, h, x)


def _kde(points, kernel, h, x):
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    x = np.asarray(x, dtype=np.float64).reshape(-1, kernel.dim)
    pts = np.asarray(points, dtype=np.float64)
    out = np.zeros(x.shape[0])
    per = max(1, _ROWS // max(1, pts.shape[0]))
    for s in range(0, x.shape[0], per):
        blk = x[s : s + per]
        diff = (blk[:, None, :] - pts[None, :, :]).reshape(-1, kernel.dim) / h
        out[s : s + per] = kernel(diff).reshape(blk.shape[0], -1).sum(axis=1)
    return out / (pts.shape[0] * h ** kernel.dim)


def smoothed_S_batch(f: SupportedFunction, states, dt: float, kernel: RadialKernel, h: float,
                     n_nodes: int = 33, domain_box=None) -> np.ndarray:
    """S_{t,h}(f) = G_t(f * K_h) per replicate (symmetric kernel)."""
    check_clearance(f, h, domain_box)
    rule = ConvolutionRule(kernel, h, n_nodes)
    return time_averages(lambda x: rule.value(f, x), states, dt)


def smoothed_S(f: SupportedFunction, path: PathGrid, kernel: RadialKernel, h: float,
               mode: str = "fast", n_nodes: int = 33, domain_box=None, direct_nodes: int = 400) -> float:
    """S_{t,h}(f) = sqrt(t) int f(x) pi_hat_{t,h}(x) dx.

    ``mode="fast"`` uses the duality with G_t(f * K_h); ``mode="direct"``
    integrates f * pi_hat over the support of f by tensor Simpson.
    """
    if mode == "fast":
        return float(smoothed_S_batch(f, path.states, path.dt, kernel, h, n_nodes, domain_box)[0])
    if mode != "direct":
        raise ValueError(f"unknown mode {mode!r}")
    check_clearance(f, h, domain_box)
    pts = path.states[:-1]
    # pi_hat is only C2 across every |x - X_k| = h, so refine hard and skip Richardson
    axes = quadrature.tensor_rule(f.support_box, direct_nodes, f.breaks)
    val = quadrature.integrate_rule(lambda x: f(x) * _kde(pts, kernel, h, x), axes)
    return math.sqrt(path.horizon) * val


def _H_integrand(model: DiffusionModel, g: TestFunction, rule: ConvolutionRule):
    def fn(x):
        grad = rule.grad(g, x)
        hess = rule.hessian(g, x)
        a = model.diffusion_matrix(x)
        return 0.5 * np.einsum("nij,nji->n", a, hess) + np.sum(model.b(x) * grad, axis=1)
    return fn


def intermediate_H_batch(g: TestFunction, model: DiffusionModel, states, dt: float,
                         kernel: RadialKernel, h: float, n_nodes: int = 33) -> np.ndarray:
    """H_{t,h}(g) = G_t(A(g * K_h)) with derivatives moved onto g."""
    if model.domain_spec != "full-space":
        check_clearance(g, h, model.working_box)
    rule = ConvolutionRule(kernel, h, n_nodes)
    return time_averages(_H_integrand(model, g, rule), states, dt)


def intermediate_H(g: TestFunction, model: DiffusionModel, path: PathGrid, kernel: RadialKernel,
                   h: float, n_nodes: int = 33) -> float:
    return float(intermediate_H_batch(g, model, path.states, path.dt, kernel, h, n_nodes)[0])


# ---------------------------------------------------------------------------
# occupation
# ---------------------------------------------------------------------------


def occupation_fraction(path: PathGrid, x, r: float) -> float:
    """(1/t) int 1{|X_u - x| <= r} du on the grid."""
    if not r > 0:
        raise ValueError("radius must be positive")
    pts = path.states[:-1]
    x = np.asarray(x, dtype=np.float64).reshape(1, path.dim)
    return float(np.mean(np.sum((pts - x) ** 2, axis=1) <= r * r))


def occupation_grid(points, box, r: float, grid_step: float, weights=None, backend=None):
    """Summed weights of points within r of every grid centre in ``box``.

    Returns ``(counts, axes)``; centres are ``lo + k * grid_step``.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    if not 0 < grid_step <= r / 2.0 * (1 + 1e-12):
        raise ValueError("grid_step must satisfy 0 < grid_step <= r / 2")
    points = np.asarray(points, dtype=np.float64)
    dim = points.shape[1]
    box = tuple((float(a), float(b)) for a, b in box)
    axes = []
    for a, b in box:
        m = int(math.floor((b - a) / grid_step + 1e-9))
        if m < 0 or not b >= a:
            raise ValueError("empty grid")
        axes.append(a + grid_step * np.arange(m + 1))
    if weights is None:
        weights = np.ones(points.shape[0])
    weights = np.asarray(weights, dtype=np.float64)
    lo = np.array([a for a, _ in box])
    hi = np.array([b for _, b in box])
    near = np.all((points >= lo - r) & (points <= hi + r), axis=1)
    counts = _accel.stamp_occupation(points[near], weights[near], lo, grid_step,
                                     [len(a) for a in axes], _accel.stencil(r, grid_step, dim),
                                     r, backend=backend)
    return counts, axes


def sup_occupation_grid(path: PathGrid | np.ndarray, box, r: float, grid_step: float,
                        backend=None) -> tuple[float, np.ndarray]:
    """max over grid centres x of r^-d (1/t) int 1{|X_u - x| <= r} du, and its argmax."""
    pts = path.states[:-1] if isinstance(path, PathGrid) else np.asarray(path)[:-1]
    counts, axes = occupation_grid(pts, box, r, grid_step, backend=backend)
    dim = pts.shape[1]
    k = np.unravel_index(int(np.argmax(counts)), counts.shape)
    where = np.array([ax[i] for ax, i in zip(axes, k)])
    return float(counts[k]) / pts.shape[0] / r ** dim, where
