"""Tensor-product composite Simpson quadrature with panel breakpoints."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Box = Sequence[tuple[float, float]]

_CHUNK = 1 << 20


def simpson_axis(a: float, b: float, n: int, breaks: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of composite Simpson on [a, b].

    Every panel between consecutive breakpoints gets ``n`` subintervals
    (rounded up to even), so kinks placed at breakpoints do not spoil the
    fourth-order rate.
    """
    if not b > a:
        raise ValueError(f"empty interval [{a}, {b}]")
    n = max(2, n + (n % 2))
    edges = sorted({a, b, *(float(x) for x in breaks if a < x < b)})
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x = np.linspace(lo, hi, n + 1)
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= (hi - lo) / (3.0 * n)
        if nodes:
            weights[-1][-1] += w[0]
            x, w = x[1:], w[1:]
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def tensor_rule(box: Box, n: int, breaks: Sequence[Sequence[float]] | None = None):
    axes = []
    for i, (a, b) in enumerate(box):
        axes.append(simpson_axis(a, b, n, breaks[i] if breaks else ()))
    return axes


def integrate_rule(fn: Callable[[np.ndarray], np.ndarray], axes) -> float:
    """Apply a tensor rule to a vectorised ``fn: (N, d) -> (N,)``."""
    dim = len(axes)
    xs = [ax[0] for ax in axes]
    ws = [ax[1] for ax in axes]
    if dim == 1:
        return float(np.dot(ws[0], fn(xs[0][:, None])))
    # iterate over the first axis to bound memory
    inner = np.stack(np.meshgrid(*xs[1:], indexing="ij"), axis=-1).reshape(-1, dim - 1)
    w_inner = ws[1]
    for w in ws[2:]:
        w_inner = np.multiply.outer(w_inner, w)
    w_inner = w_inner.reshape(-1)
    per = max(1, _CHUNK // inner.shape[0])
    total = 0.0
    x0 = xs[0]
    for s in range(0, x0.size, per):
        block = x0[s : s + per]
        pts = np.empty((block.size, inner.shape[0], dim))
        pts[:, :, 0] = block[:, None]
        pts[:, :, 1:] = inner[None, :, :]
        vals = fn(pts.reshape(-1, dim)).reshape(block.size, -1)
        total += float(ws[0][s : s + per] @ (vals @ w_inner))
    return total


@dataclass(frozen=True)
class Certified:
    value: float
    error: float
    coarse: float
    fine: float


def integrate(fn, box: Box, n: int = 64, breaks=None) -> Certified:
    """Richardson-extrapolated Simpson on ``box`` with a refinement error estimate."""
    coarse = integrate_rule(fn, tensor_rule(box, n, breaks))
    fine = integrate_rule(fn, tensor_rule(box, 2 * n, breaks))
    value = (16.0 * fine - coarse) / 15.0
    return Certified(value, abs(fine - coarse) / 15.0, coarse, fine)


def box_volume(box: Box) -> float:
    return float(np.prod([b - a for a, b in box]))


def ball_rule(dim: int, n: int, radius: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Product Gauss rule on the d-ball in polar/spherical coordinates.

    Gauss-Legendre in the radius (and in cos(theta) for d = 3), trapezoid in
    the periodic angle. Exact for polynomials of moderate degree in u.
    """
    gx, gw = np.polynomial.legendre.leggauss(n)
    r = 0.5 * radius * (gx + 1.0)
    wr = 0.5 * radius * gw
    if dim == 1:
        pts = np.concatenate([-r[::-1], r])[:, None]
        return pts, np.concatenate([wr[::-1], wr])
    phi = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
    wphi = np.full(phi.size, 2.0 * np.pi / phi.size)
    if dim == 2:
        R, F = np.meshgrid(r, phi, indexing="ij")
        pts = np.stack([R * np.cos(F), R * np.sin(F)], -1).reshape(-1, 2)
        w = (wr * r)[:, None] * wphi[None, :]
        return pts, w.reshape(-1)
    if dim == 3:
        c, wc = gx, gw  # cos(theta) on [-1, 1]
        R, C, F = np.meshgrid(r, c, phi, indexing="ij")
        S = np.sqrt(1.0 - C * C)
        pts = np.stack([R * S * np.cos(F), R * S * np.sin(F), R * C], -1).reshape(-1, 3)
        w = (wr * r * r)[:, None, None] * wc[None, :, None] * wphi[None, None, :]
        return pts, w.reshape(-1)
    raise ValueError("ball_rule supports d <= 3")


def integrate_ball(fn, dim: int, n: int = 24, radius: float = 1.0) -> Certified:
    """Integral over the ball with a refinement (n vs 2n) error estimate."""
    p1, w1 = ball_rule(dim, n, radius)
    p2, w2 = ball_rule(dim, 2 * n, radius)
    coarse = float(w1 @ fn(p1))
    fine = float(w2 @ fn(p2))
    return Certified(fine, abs(fine - coarse), coarse, fine)
