"""Compactly supported C2 radial kernels, bandwidth schedules, convolution.

A kernel is K(u) = q(|u|^2) with q(s) = (1 - s)^3 p(s) on [0, 1] and zero
beyond, where the polynomial p is fixed by unit mass and vanishing even
moments up to the requested order (odd moments vanish by symmetry).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate as sp_integrate
from scipy.special import beta as beta_fn
from scipy.special import gammaln

from .functions import SupportedFunction, TestFunction
from . import quadrature


class KernelError(ValueError):
    pass


def _sphere_moment(d: int, k: int) -> float:
    """int_{R^d} u_1^{2k} F(|u|) du  /  int_0^1 r^{2k+d-1} F(r) dr."""
    return 2.0 * math.exp((d / 2.0) * math.log(math.pi) + gammaln(k + 0.5)
                          - 0.5 * math.log(math.pi) - gammaln(k + d / 2.0))


def moment_matrix(dim: int, m: int) -> np.ndarray:
    """M[k, i] = int u_1^{2k} (1-|u|^2)^3 |u|^{2i} du over the unit ball."""
    M = np.empty((m + 1, m + 1))
    for k in range(m + 1):
        for i in range(m + 1):
            M[k, i] = _sphere_moment(dim, k) * 0.5 * beta_fn(k + i + dim / 2.0, 4.0)
    return M


@dataclass(frozen=True, eq=False)
class RadialKernel:
    dim: int
    order: int
    coefficients: tuple[float, ...]  # p(s) = sum c_i s^i, s = r^2

    @cached_property
    def _q(self) -> np.ndarray:
        return P.polymul(P.polypow([1.0, -1.0], 3), np.asarray(self.coefficients))

    @cached_property
    def _dq(self) -> np.ndarray:
        return P.polyder(self._q)

    @cached_property
    def _d2q(self) -> np.ndarray:
        return P.polyder(self._q, 2)

    # -- profile in r ----------------------------------------------------
    def profile(self, r) -> np.ndarray:
        """K~(r) = (1 - r^2)^3 p(r^2) for r <= 1, zero beyond."""
        r = np.asarray(r, dtype=np.float64)
        return np.where(r <= 1.0, P.polyval(r * r, self._q), 0.0)

    def profile_derivatives(self, r):
        """(K~, K~', K~'') as functions of r."""
        r = np.asarray(r, dtype=np.float64)
        s = r * r
        inside = r <= 1.0
        v = P.polyval(s, self._q)
        d1 = 2.0 * r * P.polyval(s, self._dq)
        d2 = 2.0 * P.polyval(s, self._dq) + 4.0 * s * P.polyval(s, self._d2q)
        return tuple(np.where(inside, a, 0.0) for a in (v, d1, d2))

    # -- evaluation on R^d ------------------------------------------------
    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64).reshape(-1, self.dim)
        s = np.sum(u * u, axis=1)
        return np.where(s <= 1.0, P.polyval(s, self._q), 0.0)

    def abs(self, u) -> np.ndarray:
        return np.abs(self(u))

    def grad(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64).reshape(-1, self.dim)
        s = np.sum(u * u, axis=1)
        c = np.where(s <= 1.0, 2.0 * P.polyval(s, self._dq), 0.0)
        return c[:, None] * u

    def eval_scaled(self, h: float, x, z) -> np.ndarray:
        """K_{h,x}(z) = h^-d K~(|x - z| / h)."""
        if not h > 0:
            raise KernelError("bandwidth must be positive")
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.dim)
        z = np.asarray(z, dtype=np.float64).reshape(-1, self.dim)
        return self((x - z) / h) / h ** self.dim

    # -- integrals -------------------------------------------------------
    @cached_property
    def l1_norm(self) -> float:
        """||K||_1, the total-variation mass."""
        area = _sphere_moment(self.dim, 0)
        roots = [r.real for r in np.roots(self._q[::-1]) if abs(r.imag) < 1e-12 and 0 < r.real < 1]
        pts = sorted(math.sqrt(s) for s in roots)
        val, _ = sp_integrate.quad(lambda r: abs(P.polyval(r * r, self._q)) * r ** (self.dim - 1),
                                   0.0, 1.0, points=pts or None, epsabs=1e-13, epsrel=1e-12, limit=200)
        return area * val

    def radial_moment(self, k: int) -> float:
        """Closed-form int u_1^{2k} K(u) du."""
        M = moment_matrix(self.dim, max(k, len(self.coefficients) - 1))
        return float(M[k, : len(self.coefficients)] @ np.asarray(self.coefficients))

    @property
    def second_moment(self) -> float:
        return self.radial_moment(1)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "order": self.order,
            "profile": "(1-r^2)^3 * sum_i c_i r^(2i) on [0,1]",
            "coefficients": [float(c) for c in self.coefficients],
        }


def make_kernel(dim: int, order: int) -> RadialKernel:
    """Radial kernel of the given order (unit mass, moments 1..order vanish)."""
    if int(dim) != dim or dim < 1:
        raise KernelError("dim must be a positive integer")
    if int(order) != order or order < 0:
        raise KernelError("order must be a non-negative integer")
    dim, order = int(dim), int(order)
    m = order // 2
    M = moment_matrix(dim, m)
    if np.linalg.cond(M) > 1e12:
        raise KernelError(f"moment system is singular (cond={np.linalg.cond(M):.3g})")
    rhs = np.zeros(m + 1)
    rhs[0] = 1.0
    coef = np.linalg.solve(M, rhs)
    return RadialKernel(dim, order, tuple(float(c) for c in coef))


# ---------------------------------------------------------------------------
# bandwidth schedules
# ---------------------------------------------------------------------------

VARIANTS = ("theorem-main", "corollary-i", "corollary-ii")


@dataclass(frozen=True)
class BandwidthSchedule:
    variant: str
    d: int = 1
    beta: float = 2.0
    eta: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise KernelError(f"unknown schedule variant {self.variant!r}")
        if self.variant == "corollary-i":
            if self.eta is None:
                raise KernelError("corollary-i requires eta")
            floor = max(1.0 / (2.0 * self.beta), 0.5)
            if not self.eta > floor:
                raise KernelError(f"eta={self.eta} must exceed max(1/(2 beta), 1/2) = {floor}")
        if self.variant == "corollary-ii" and not self.beta > 1.0:
            raise KernelError("corollary-ii requires beta > 1")
        if self.d < 1:
            raise KernelError("d must be positive")

    def __call__(self, t: float) -> float:
        return schedule_eval(self, t)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "d": self.d, "beta": self.beta, "eta": self.eta}


def schedule_eval(schedule: BandwidthSchedule, t: float) -> float:
    if not t >= 3:
        raise KernelError("schedules are evaluated for t >= 3")
    if schedule.variant == "theorem-main":
        return t ** (-1.0 / schedule.d) * math.log(math.e * t)
    if schedule.variant == "corollary-i":
        return t ** (-schedule.eta)
    return t ** -0.5 * math.log(math.e * t)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

N_NODES = 33
METHODS = ("ball", "simpson")
_CHUNK = 1 << 20


@dataclass(frozen=True, eq=False)
class ConvolutionRule:
    """Quadrature nodes on the radius-h ball with kernel weights folded in.

    ``method="ball"`` (default) is the polar/spherical product Gauss rule with
    ``n_nodes // 2`` radial nodes; the kernel is polynomial inside the ball, so
    the rule is near exact for smooth integrands. ``method="simpson"`` is tensor
    Simpson with ``n_nodes`` points per axis on [-h, h]^d.
    """

    kernel: RadialKernel
    h: float
    n_nodes: int = N_NODES
    method: str = "ball"
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    grad_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.h > 0:
            raise KernelError("bandwidth must be positive")
        if self.method not in METHODS:
            raise KernelError(f"unknown quadrature method {self.method!r}")
        d = self.kernel.dim
        if self.method == "ball":
            nodes, ww = quadrature.ball_rule(d, max(2, self.n_nodes // 2), self.h)
        else:
            x, w = quadrature.simpson_axis(-self.h, self.h, self.n_nodes - 1)
            nodes = np.stack(np.meshgrid(*([x] * d), indexing="ij"), -1).reshape(-1, d)
            ww = w
            for _ in range(d - 1):
                ww = np.multiply.outer(ww, w)
            ww = ww.reshape(-1)
        kv = self.kernel(nodes / self.h) / self.h ** d
        keep = kv != 0.0
        kg = self.kernel.grad(nodes / self.h) / self.h ** (d + 1)
        keep |= np.any(kg != 0.0, axis=1)
        object.__setattr__(self, "nodes", nodes[keep])
        object.__setattr__(self, "weights", (ww * kv)[keep])
        object.__setattr__(self, "grad_weights", (ww[:, None] * kg)[keep])

    def _apply(self, fn, x, weights):
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.kernel.dim)
        d = self.kernel.dim
        m = self.nodes.shape[0]
        per = max(1, _CHUNK // m)
        parts = []
        for s in range(0, x.shape[0], per):
            blk = x[s : s + per]
            pts = (blk[:, None, :] - self.nodes[None, :, :]).reshape(-1, d)
            vals = fn(pts)
            vals = vals.reshape((blk.shape[0], m) + vals.shape[1:])
            parts.append(np.tensordot(vals, weights, axes=([1], [0])) if weights.ndim == 1
                         else np.einsum("nm...,mk->n...k", vals, weights))
        return np.concatenate(parts, axis=0)

    def value(self, f, x) -> np.ndarray:
        """(f * K_h)(x)."""
        return self._apply(f, x, self.weights)

    def grad(self, g: TestFunction, x) -> np.ndarray:
        """(grad g) * K_h at x, shape (N, d)."""
        return self._apply(g.grad, x, self.weights)

    def hessian(self, g: TestFunction, x) -> np.ndarray:
        return self._apply(g.hessian, x, self.weights)

    def grad_via_kernel(self, f, x) -> np.ndarray:
        """g * (grad K_h) at x, an independent route to grad (g * K_h)."""
        return self._apply(f, x, self.grad_weights)


def check_clearance(f: SupportedFunction, h: float, domain_box=None) -> None:
    """Raise when the h-neighbourhood of f's support leaves the domain interior."""
    if domain_box is None:
        return
    for (a, b), (lo, hi) in zip(f.support_box, domain_box):
        if not (a - h > lo and b + h < hi):
            raise KernelError(f"bandwidth h={h} exceeds clearance of support [{a}, {b}] "
                              f"inside domain [{lo}, {hi}]")


def convolve(g: SupportedFunction, kernel: RadialKernel, h: float, x, n_nodes: int = N_NODES,
             domain_box=None) -> np.ndarray:
    """(g * K_h)(x) = int g(x - y) K_h(y) dy by quadrature over the radius-h ball."""
    check_clearance(g, h, domain_box)
    return ConvolutionRule(kernel, h, n_nodes).value(g, x)


def convolve_grad(g: TestFunction, kernel: RadialKernel, h: float, x, n_nodes: int = N_NODES,
                  domain_box=None) -> np.ndarray:
    """(grad g) * K_h, which equals grad (g * K_h)."""
    check_clearance(g, h, domain_box)
    return ConvolutionRule(kernel, h, n_nodes).grad(g, x)


def smoothed(g: TestFunction, kernel: RadialKernel, h: float, n_nodes: int = N_NODES) -> TestFunction:
    """g * K_h as a TestFunction with convolved derivatives."""
    rule = ConvolutionRule(kernel, h, n_nodes)
    box = tuple((a - h, b + h) for a, b in g.support_box)
    brk = tuple(tuple(sorted(set(b) | {p - h for p in b} | {p + h for p in b})) for b in g.breaks)
    return TestFunction(g.dim, lambda x: rule.value(g, x), lambda x: rule.grad(g, x),
                        lambda x: rule.hessian(g, x), box, brk, f"{g.label}*K_{h:g}")
