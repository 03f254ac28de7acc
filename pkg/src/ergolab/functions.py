"""Compactly supported test functions with analytic derivatives.

All evaluators are vectorised: points have shape ``(N, d)``; values come back
as ``(N,)``, gradients as ``(N, d)`` and Hessians as ``(N, d, d)``.
"""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

Box = tuple[tuple[float, float], ...]


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1 and dim == 1 and x.shape[0] != 1:
        return x[:, None]
    return x.reshape(-1, dim)


def _merge_breaks(a, b):
    return tuple(tuple(sorted(set(p) | set(q))) for p, q in zip(a, b))


def _hull(a: Box, b: Box) -> Box:
    return tuple((min(p[0], q[0]), max(p[1], q[1])) for p, q in zip(a, b))


def _overlap(a: Box, b: Box) -> Box:
    return tuple((max(p[0], q[0]), min(p[1], q[1])) for p, q in zip(a, b))


class SupportedFunction:
    """A function R^d -> R vanishing outside an axis-aligned box."""

    def __init__(self, dim: int, fn: Callable[[np.ndarray], np.ndarray], support_box,
                 breaks=None, label: str = ""):
        self.dim = int(dim)
        self._fn = fn
        self.support_box: Box = tuple((float(a), float(b)) for a, b in support_box)
        if len(self.support_box) != self.dim:
            raise ValueError("support box dimension mismatch")
        self.breaks = tuple(tuple(b) for b in breaks) if breaks else tuple(() for _ in range(dim))
        self.label = label

    def __call__(self, x) -> np.ndarray:
        return self._fn(_as_points(x, self.dim))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.label or '?'}, dim={self.dim})"


class TestFunction(SupportedFunction):
    """Smooth compactly supported ``g`` together with its gradient and Hessian."""

    __test__ = False  # keep pytest from collecting this class

    def __init__(self, dim, value, grad, hessian, support_box, breaks=None, label="",
                 envelope_bound: float | None = None):
        super().__init__(dim, value, support_box, breaks, label)
        self._grad = grad
        self._hess = hessian
        self._envelope = envelope_bound

    def grad(self, x) -> np.ndarray:
        return self._grad(_as_points(x, self.dim))

    def hessian(self, x) -> np.ndarray:
        return self._hess(_as_points(x, self.dim))

    @property
    def envelope_bound(self) -> float:
        """Grid estimate of max(|g|, |dg|, |d2g|) over the support box, padded 5%."""
        if self._envelope is None:
            m = {1: 801, 2: 121, 3: 41}.get(self.dim, 15)
            axes = [np.linspace(a, b, m) for a, b in self.support_box]
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, self.dim)
            env = max(np.abs(self(pts)).max(), np.abs(self.grad(pts)).max(),
                      np.abs(self.hessian(pts)).max())
            self._envelope = 1.05 * float(env)
        return self._envelope

    # -- algebra ---------------------------------------------------------
    def _check(self, other: "TestFunction"):
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")

    def __add__(self, other):
        if not isinstance(other, TestFunction):
            return NotImplemented
        self._check(other)
        return TestFunction(
            self.dim,
            lambda x: self._fn(x) + other._fn(x),
            lambda x: self._grad(x) + other._grad(x),
            lambda x: self._hess(x) + other._hess(x),
            _hull(self.support_box, other.support_box),
            _merge_breaks(self.breaks, other.breaks),
            f"({self.label}+{other.label})",
        )

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        if not isinstance(other, TestFunction):
            return NotImplemented
        return self + other.scale(-1.0)

    def scale(self, c: float) -> "TestFunction":
        c = float(c)
        return TestFunction(self.dim, lambda x: c * self._fn(x), lambda x: c * self._grad(x),
                            lambda x: c * self._hess(x), self.support_box, self.breaks,
                            f"{c:g}*{self.label}")

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return self.scale(other)
        if not isinstance(other, TestFunction):
            return NotImplemented
        self._check(other)
        f, g = self, other

        def hess(x):
            gf, gg = f._grad(x), g._grad(x)
            return (f._hess(x) * g._fn(x)[:, None, None] + g._hess(x) * f._fn(x)[:, None, None]
                    + gf[:, :, None] * gg[:, None, :] + gg[:, :, None] * gf[:, None, :])

        return TestFunction(
            self.dim,
            lambda x: f._fn(x) * g._fn(x),
            lambda x: f._grad(x) * g._fn(x)[:, None] + g._grad(x) * f._fn(x)[:, None],
            hess,
            _overlap(f.support_box, g.support_box),
            _merge_breaks(f.breaks, g.breaks),
            f"{f.label}*{g.label}",
        )

    __rmul__ = __mul__

    def shifted(self, shift) -> "TestFunction":
        """x -> g(x - shift)."""
        s = np.asarray(shift, dtype=np.float64).reshape(self.dim)
        box = tuple((a + si, b + si) for (a, b), si in zip(self.support_box, s))
        brk = tuple(tuple(p + si for p in b) for b, si in zip(self.breaks, s))
        return TestFunction(self.dim, lambda x: self._fn(x - s), lambda x: self._grad(x - s),
                            lambda x: self._hess(x - s), box, brk, f"{self.label}(.-s)")


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def _smoothstep(u):
    # C2 transition: s(0)=0, s(1)=1, s', s'' vanish at both ends
    u = np.clip(u, 0.0, 1.0)
    s = u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)
    ds = 30.0 * u * u * (1.0 - u) ** 2
    d2s = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
    return s, ds, d2s


def _cutoff_1d(x, lo, hi, w):
    """Value and two derivatives of the 1-D C2 cutoff on [lo, hi] with shell w."""
    v = np.zeros_like(x)
    d1 = np.zeros_like(x)
    d2 = np.zeros_like(x)
    inner = (x >= lo + w) & (x <= hi - w)
    v[inner] = 1.0
    up = (x > hi - w) & (x < hi)
    s, ds, d2s = _smoothstep((hi - x[up]) / w)
    v[up], d1[up], d2[up] = s, -ds / w, d2s / (w * w)
    dn = (x > lo) & (x < lo + w)
    s, ds, d2s = _smoothstep((x[dn] - lo) / w)
    v[dn], d1[dn], d2[dn] = s, ds / w, d2s / (w * w)
    return v, d1, d2


def _norm_box(box, dim):
    if np.isscalar(box[0]):
        box = [box] * dim
    box = tuple((float(a), float(b)) for a, b in box)
    if len(box) != dim or any(not b > a for a, b in box):
        raise ValueError(f"invalid support box {box!r} for dim {dim}")
    return box


def cutoff(box, dim: int | None = None, shell: float = 0.2) -> TestFunction:
    """C2 plateau function: 1 on the inner box, 0 outside ``box``.

    ``shell`` is the transition width as a fraction of each half-width.
    """
    if dim is None:
        dim = len(box)
    box = _norm_box(box, dim)
    if not 0.0 < shell < 1.0:
        raise ValueError("shell must lie in (0, 1)")
    widths = [shell * 0.5 * (b - a) for a, b in box]
    breaks = tuple((a + w, b - w) for (a, b), w in zip(box, widths))

    def parts(x):
        return [_cutoff_1d(x[:, i], a, b, w) for i, ((a, b), w) in enumerate(zip(box, widths))]

    def value(x):
        out = np.ones(x.shape[0])
        for v, _, _ in parts(x):
            out *= v
        return out

    def grad(x):
        p = parts(x)
        out = np.empty_like(x)
        for i in range(dim):
            col = p[i][1].copy()
            for j in range(dim):
                if j != i:
                    col *= p[j][0]
            out[:, i] = col
        return out

    def hessian(x):
        p = parts(x)
        out = np.empty((x.shape[0], dim, dim))
        for i in range(dim):
            for j in range(dim):
                col = np.ones(x.shape[0])
                for k in range(dim):
                    if i == j == k:
                        col = col * p[k][2]
                    elif k == i or k == j:
                        col = col * p[k][1]
                    else:
                        col = col * p[k][0]
                out[:, i, j] = col
        return out

    return TestFunction(dim, value, grad, hessian, box, breaks, "cutoff")


def polynomial(terms: Mapping[tuple[int, ...], float], dim: int, box) -> TestFunction:
    """Polynomial sum c * prod x_i**e_i (only meaningful once truncated)."""
    terms = {tuple(int(e) for e in k): float(c) for k, c in terms.items()}
    if any(len(k) != dim for k in terms):
        raise ValueError("exponent tuple length must equal dim")
    box = _norm_box(box, dim)

    def mono(x, exps):
        out = np.ones(x.shape[0])
        for i, e in enumerate(exps):
            if e:
                out = out * x[:, i] ** e
        return out

    def value(x):
        return sum((c * mono(x, e) for e, c in terms.items()), np.zeros(x.shape[0]))

    def grad(x):
        out = np.zeros_like(x)
        for e, c in terms.items():
            for i in range(dim):
                if e[i]:
                    de = list(e)
                    de[i] -= 1
                    out[:, i] += c * e[i] * mono(x, de)
        return out

    def hessian(x):
        out = np.zeros((x.shape[0], dim, dim))
        for e, c in terms.items():
            for i in range(dim):
                for j in range(dim):
                    de = list(e)
                    coef = c * de[i]
                    de[i] -= 1
                    coef *= de[j]
                    de[j] -= 1
                    if coef:
                        out[:, i, j] += coef * mono(x, de)
        return out

    return TestFunction(dim, value, grad, hessian, box, None, "poly")


def gaussian(center, scale: float, dim: int, box) -> TestFunction:
    c = np.asarray(center, dtype=np.float64).reshape(dim)
    s2 = float(scale) ** 2
    box = _norm_box(box, dim)

    def value(x):
        return np.exp(-np.sum((x - c) ** 2, axis=1) / (2.0 * s2))

    def grad(x):
        return -(x - c) / s2 * value(x)[:, None]

    def hessian(x):
        y = (x - c) / s2
        v = value(x)[:, None, None]
        return (y[:, :, None] * y[:, None, :] - np.eye(dim)[None] / s2) * v

    return TestFunction(dim, value, grad, hessian, box, None, "gauss")


def truncated_polynomial(terms, box, dim: int | None = None, shell: float = 0.2,
                         label: str | None = None) -> TestFunction:
    """Polynomial times the C2 cutoff of ``box``."""
    if dim is None:
        dim = len(next(iter(terms)))
    chi = cutoff(box, dim, shell)
    g = polynomial(terms, dim, chi.support_box) * chi
    g.label = label or "tpoly" + str(dict(terms))
    return g


def truncated_gaussian(center, scale, box, dim: int | None = None, shell: float = 0.2,
                       label: str | None = None) -> TestFunction:
    if dim is None:
        dim = len(np.atleast_1d(center))
    chi = cutoff(box, dim, shell)
    g = gaussian(center, scale, dim, chi.support_box) * chi
    g.label = label or f"tgauss(c={np.atleast_1d(center).tolist()},s={scale:g})"
    return g


def zero(dim: int, box) -> TestFunction:
    box = _norm_box(box, dim)
    return TestFunction(dim, lambda x: np.zeros(x.shape[0]), lambda x: np.zeros_like(x),
                        lambda x: np.zeros((x.shape[0], dim, dim)), box, None, "zero")


def catalog(dim: int, half_width: float = 5.0) -> list[TestFunction]:
    """Default catalog on the box [-half_width, half_width]^d."""
    box = [(-half_width, half_width)] * dim
    e = lambda *idx: tuple(idx)  # noqa: E731
    if dim == 1:
        return [
            truncated_polynomial({e(1): 1.0}, box, label="x"),
            truncated_polynomial({e(2): 1.0, e(0): -0.5}, box, label="x^2-1/2"),
            truncated_polynomial({e(3): 1.0}, box, label="x^3"),
            truncated_gaussian([0.3], 0.5, box, label="gauss(0.3,0.5)"),
            truncated_polynomial({e(1): 1.0, e(2): 0.5}, box, label="x+x^2/2"),
        ]
    if dim == 2:
        return [
            truncated_polynomial({e(1, 0): 1.0}, box, label="x1"),
            truncated_polynomial({e(1, 1): 1.0}, box, label="x1*x2"),
            truncated_polynomial({e(2, 0): 1.0, e(0, 2): -1.0}, box, label="x1^2-x2^2"),
            truncated_gaussian([0.2, -0.1], 0.6, box, label="gauss2"),
            truncated_polynomial({e(1, 0): 1.0, e(0, 1): 0.5, e(2, 1): 0.3}, box, label="mix2"),
        ]
    return [
        truncated_polynomial({tuple(1 if i == k else 0 for i in range(dim)): 1.0}, box,
                             label=f"x{k + 1}")
        for k in range(dim)
    ] + [truncated_gaussian(np.zeros(dim), 0.7, box, label="gauss")]
