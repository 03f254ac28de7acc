"""Diffusion models, Hoelder metadata and the grid modulus of continuity."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate as sp_integrate

from . import quadrature
from .functions import Box, TestFunction  # noqa: F401  (re-exported)

FULL_SPACE = "full-space"
REFLECTED = "reflected-interval"


class ModelError(ValueError):
    """Raised when a model cannot be constructed consistently."""


@dataclass(frozen=True)
class HoelderMeta:
    beta: float
    L: float
    applies_to: str = "drift"

    def __post_init__(self):
        if not (self.beta > 0 and self.L > 0):
            raise ValueError("Hoelder parameters must be positive")


@dataclass(frozen=True, eq=False)
class DiffusionModel:
    """Constant-diffusion model dX = b(X) dt + sigma dW.

    ``drift``, ``log_density`` and ``density`` are vectorised over ``(N, d)``.
    ``poly_drift = (c1, c3)`` marks coordinatewise drifts ``-c1 x - c3 x^3``
    that the compiled simulator can integrate directly.
    """

    kind: str
    dim: int
    sigma: float
    drift: Callable[[np.ndarray], np.ndarray]
    log_density: Callable[[np.ndarray], np.ndarray]
    normalization: float
    domain_spec: str
    working_box: Box
    spectral_gap: Optional[float] = None
    potential: Optional[Callable[[np.ndarray], np.ndarray]] = None
    poly_drift: Optional[tuple[float, float]] = None
    hoelder: tuple[HoelderMeta, ...] = field(default_factory=tuple)

    @property
    def ellipticity_floor(self) -> float:
        return self.sigma ** 2

    @property
    def c_P(self) -> Optional[float]:
        """Poincare constant, the inverse spectral gap."""
        return None if self.spectral_gap is None else 1.0 / self.spectral_gap

    @property
    def stationary_variance(self) -> Optional[float]:
        return 0.5 * self.sigma ** 2 if self.kind == "ou" else None

    def diffusion_matrix(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.dim)
        return np.broadcast_to(self.sigma ** 2 * np.eye(self.dim), (x.shape[0], self.dim, self.dim))

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.dim)
        out = np.exp(self.log_density(x)) / self.normalization
        if self.domain_spec == REFLECTED:
            out = np.where((x[:, 0] >= 0.0) & (x[:, 0] <= 1.0), out, 0.0)
        return out

    def b(self, x) -> np.ndarray:
        return self.drift(np.asarray(x, dtype=np.float64).reshape(-1, self.dim))

    def mu_integral(self, fn, box, n: int = 64, breaks=None) -> quadrature.Certified:
        """Certified quadrature of ``int fn dmu`` over ``box``."""
        return quadrature.integrate(lambda x: fn(x) * self.density(x), box, n, breaks)

    def contains_interior(self, box) -> bool:
        if self.domain_spec == REFLECTED:
            return all(0.0 < a and b < 1.0 for a, b in box)
        return True


def _as_box(box, dim) -> Box:
    if np.isscalar(box[0]):
        box = [box] * dim
    out = tuple((float(a), float(b)) for a, b in box)
    if len(out) != dim or any(not b > a for a, b in out):
        raise ModelError(f"invalid box {box!r}")
    return out


def make_ou_model(dim: int, sigma: float, half_width: float | None = None) -> DiffusionModel:
    """Langevin model with V(x) = |x|^2 / 2, i.e. b(x) = -x."""
    if int(dim) != dim or dim < 1:
        raise ModelError("dim must be a positive integer")
    if not sigma > 0:
        raise ModelError("sigma must be positive")
    dim = int(dim)
    s2 = float(sigma) ** 2
    hw = half_width if half_width is not None else 8.0 * math.sqrt(s2 / 2.0)
    return DiffusionModel(
        kind="ou",
        dim=dim,
        sigma=float(sigma),
        drift=lambda x: -x,
        log_density=lambda x: -np.sum(x * x, axis=1) / s2,
        normalization=(math.pi * s2) ** (dim / 2.0),
        domain_spec=FULL_SPACE,
        working_box=((-hw, hw),) * dim,
        spectral_gap=1.0,
        potential=lambda x: 0.5 * np.sum(x * x, axis=1),
        poly_drift=(1.0, 0.0),
        hoelder=(HoelderMeta(1.0, 1.0, "drift"),),
    )


def _fd_gradient(V, x, eps=1e-5):
    g = np.empty_like(x)
    for i in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[i] = eps
        g[:, i] = (V(x + e) - V(x - e)) / (2 * eps)
    return g


def make_langevin_model(V, gradV, dim: int, sigma: float, working_box, *, n_quad: int = 96,
                        check_points: int = 100, seed: int = 0,
                        poly_drift: tuple[float, float] | None = None,
                        spectral_gap: float | None = None, kind: str = "langevin") -> DiffusionModel:
    """Langevin model b = -grad V with density proportional to exp(-2V / sigma^2).

    Z is the certified tensor-Simpson integral over ``working_box``; the box
    is rejected when doubling it changes Z by more than 1e-6 relative.
    """
    if not sigma > 0:
        raise ModelError("sigma must be positive")
    dim = int(dim)
    box = _as_box(working_box, dim)
    s2 = float(sigma) ** 2
    rng = np.random.default_rng(seed)
    lo = np.array([a for a, _ in box])
    hi = np.array([b for _, b in box])
    pts = lo + (hi - lo) * rng.random((check_points, dim))
    fd = _fd_gradient(V, pts)
    an = np.asarray(gradV(pts), dtype=np.float64).reshape(pts.shape)
    scale = np.maximum(np.abs(fd), 1.0)
    if np.max(np.abs(fd - an) / scale) > 1e-3:
        raise ModelError("gradV is inconsistent with V (finite-difference mismatch > 1e-3)")

    log_density = lambda x: -2.0 * V(x) / s2  # noqa: E731
    integrand = lambda x: np.exp(log_density(x))  # noqa: E731
    z = quadrature.integrate(integrand, box, n_quad)
    wide = tuple((a - (b - a) / 2, b + (b - a) / 2) for a, b in box)
    z_wide = quadrature.integrate(integrand, wide, n_quad)
    if not (np.isfinite(z.value) and np.isfinite(z_wide.value)) or z.value <= 0:
        raise ModelError("density not integrable on the working box")
    if abs(z_wide.value - z.value) > 1e-6 * z_wide.value:
        raise ModelError("working box misses more than 1e-6 of the mass "
                         "(density not integrable or box too small)")
    return DiffusionModel(
        kind=kind,
        dim=dim,
        sigma=float(sigma),
        drift=lambda x: -np.asarray(gradV(x), dtype=np.float64).reshape(x.shape),
        log_density=log_density,
        normalization=float(z.value),
        domain_spec=FULL_SPACE,
        working_box=box,
        spectral_gap=spectral_gap,
        potential=V,
        poly_drift=poly_drift,
    )


def make_quartic_model(dim: int = 1, sigma: float = 1.0, half_width: float = 4.0) -> DiffusionModel:
    """Langevin model with V(x) = sum x_i^4 / 4."""
    return make_langevin_model(
        lambda x: 0.25 * np.sum(x ** 4, axis=1),
        lambda x: x ** 3,
        dim, sigma, [(-half_width, half_width)] * dim,
        poly_drift=(0.0, 1.0), kind="langevin-quartic",
    )


def make_reflected_model(b: Callable, sigma: float, n_grid: int = 4096,
                         spectral_gap: float | None = None) -> DiffusionModel:
    """Reflected diffusion on [0, 1]; density proportional to exp(int_0^x 2b/sigma^2)."""
    if not sigma > 0:
        raise ModelError("sigma must be positive")
    sigma = float(sigma)
    s2 = sigma * sigma
    probe = np.linspace(0.0, 1.0, 1001)
    vals = np.asarray(b(probe[:, None]), dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) > 1e6:
        raise ModelError("drift is not bounded on [0, 1]")
    grid = np.linspace(0.0, 1.0, n_grid + 1)
    bg = np.asarray(b(grid[:, None]), dtype=np.float64).reshape(-1)
    potential = sp_integrate.cumulative_simpson(2.0 * bg / s2, x=grid, initial=0.0)
    z = float(sp_integrate.simpson(np.exp(potential), x=grid))
    if spectral_gap is None and np.all(vals == 0.0):
        spectral_gap = math.pi ** 2 * s2 / 2.0

    def drift(x):
        return np.asarray(b(x), dtype=np.float64).reshape(x.shape)

    def log_density(x):
        return np.interp(np.clip(x[:, 0], 0.0, 1.0), grid, potential)

    return DiffusionModel(
        kind="reflected",
        dim=1,
        sigma=sigma,
        drift=drift,
        log_density=log_density,
        normalization=z,
        domain_spec=REFLECTED,
        working_box=((0.0, 1.0),),
        spectral_gap=spectral_gap,
    )


# ---------------------------------------------------------------------------
# modulus of continuity
# ---------------------------------------------------------------------------


def _grid(box, step):
    axes = []
    for a, b in box:
        m = int(math.floor((b - a) / step + 1e-9))
        if m < 1:
            raise ValueError(f"box side [{a}, {b}] is smaller than grid_step {step}")
        axes.append(a + step * np.arange(m + 1))
    return axes


def modulus_of_continuity(f, delta: float, box, grid_step: float) -> float:
    """max |f(x) - f(y)| over grid pairs in ``box`` with |x - y| <= delta.

    ``f`` is vectorised over ``(N, d)``; the grid is ``lo + k * grid_step``.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not 0.0 < grid_step <= delta / 4.0 * (1 + 1e-12):
        raise ValueError("grid_step must satisfy 0 < grid_step <= delta / 4")
    box = tuple((float(a), float(b)) for a, b in box)
    dim = len(box)
    axes = _grid(box, grid_step)
    shape = tuple(len(a) for a in axes)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, dim)
    vals = np.asarray(f(pts), dtype=np.float64).reshape(shape)
    m = int(math.floor(delta / grid_step + 1e-9))
    offs = np.stack(np.meshgrid(*([np.arange(-m, m + 1)] * dim), indexing="ij"), -1).reshape(-1, dim)
    # half-space of offsets suffices: |f(x)-f(y)| is symmetric
    offs = offs[[tuple(o) > (0,) * dim for o in offs]]
    best = 0.0
    for o in offs:
        if np.sqrt(np.sum((o * grid_step) ** 2)) > delta * (1 + 1e-12):
            continue
        if any(abs(int(k)) >= s for k, s in zip(o, shape)):
            continue
        a = vals[tuple(slice(max(0, -k), s - max(0, k)) for k, s in zip(o, shape))]
        b = vals[tuple(slice(max(0, k), s - max(0, -k)) for k, s in zip(o, shape))]
        best = max(best, float(np.max(np.abs(a - b))))
    return best
