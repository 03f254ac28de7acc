"""Generator, carre du champ, limit covariances and the intrinsic metric."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .functions import SupportedFunction, TestFunction
from .models import DiffusionModel
from .paths import PathGrid

_QUAD_NODES = {1: 200, 2: 48, 3: 12}


class IdentityError(ArithmeticError):
    """Two routes to the same variance disagree beyond tolerance."""


def apply_generator(model: DiffusionModel, g: TestFunction, x) -> np.ndarray:
    """Ag(x) = 1/2 tr(a(x) D^2 g(x)) + b(x) . grad g(x)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, model.dim)
    H = g.hessian(x)
    a = model.diffusion_matrix(x)
    return 0.5 * np.einsum("nij,nji->n", a, H) + np.sum(model.b(x) * g.grad(x), axis=1)


def generator_image(model: DiffusionModel, g: TestFunction) -> SupportedFunction:
    """f = Ag as a compactly supported function."""
    return SupportedFunction(model.dim, lambda x: apply_generator(model, g, x), g.support_box,
                             g.breaks, f"A[{g.label}]")


def carre_du_champ(model: DiffusionModel, g: TestFunction, gtilde: TestFunction, x) -> np.ndarray:
    """Gamma(g, g~)(x) = grad g(x)^T a(x) grad g~(x)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, model.dim)
    return np.einsum("ni,nij,nj->n", g.grad(x), model.diffusion_matrix(x), gtilde.grad(x))


def _joint(*gs: TestFunction):
    box = tuple((min(g.support_box[i][0] for g in gs), max(g.support_box[i][1] for g in gs))
                for i in range(gs[0].dim))
    breaks = tuple(tuple(sorted(set().union(*(g.breaks[i] for g in gs)))) for i in range(gs[0].dim))
    return box, breaks


def mu_quad(model: DiffusionModel, fn, *gs: TestFunction, n: int | None = None) -> float:
    """int fn dmu over the joint support of ``gs``."""
    box, breaks = _joint(*gs)
    n = n or _QUAD_NODES.get(model.dim, 8)
    return model.mu_integral(fn, box, n, breaks).value


def _check_interior(model, *gs):
    for g in gs:
        if not model.contains_interior(g.support_box):
            raise ValueError(f"support of {g.label} is not inside the domain interior")


def gamma_integral(model: DiffusionModel, g: TestFunction, n: int | None = None) -> float:
    return mu_quad(model, lambda x: carre_du_champ(model, g, g, x), g, n=n)


def dirichlet_form(model: DiffusionModel, g: TestFunction, n: int | None = None) -> float:
    """-2 int g Ag dmu."""
    return -2.0 * mu_quad(model, lambda x: g(x) * apply_generator(model, g, x), g, n=n)


def asymptotic_variance(model: DiffusionModel, g: TestFunction, rtol: float = 1e-4,
                        n: int | None = None) -> float:
    """sigma^2(Ag) = int Gamma(g) dmu, cross-checked against -2 int g Ag dmu."""
    _check_interior(model, g)
    gam = gamma_integral(model, g, n)
    dir_ = dirichlet_form(model, g, n)
    if abs(gam - dir_) > rtol * max(abs(gam), abs(dir_)) + 1e-12:
        raise IdentityError(f"int Gamma(g) dmu = {gam!r} but -2 int g Ag dmu = {dir_!r}")
    return gam


def limit_covariance(model: DiffusionModel, g1: TestFunction, g2: TestFunction,
                     n: int | None = None) -> float:
    """cov(G(Ag1), G(Ag2)) = -int (g1 Ag2 + g2 Ag1) dmu."""
    _check_interior(model, g1, g2)

    def fn(x):
        return g1(x) * apply_generator(model, g2, x) + g2(x) * apply_generator(model, g1, x)

    return -mu_quad(model, fn, g1, g2, n=n)


def metric_dG(model: DiffusionModel, g1: TestFunction, g2: TestFunction,
              n: int | None = None) -> float:
    """d_G(g1, g2) = sqrt(-2 int (g1-g2) A(g1-g2) dmu)."""
    diff = g1 - g2
    _check_interior(model, diff)
    sq = dirichlet_form(model, diff, n)
    if sq < -1e-10:
        raise IdentityError(f"negative squared distance {sq!r}")
    return math.sqrt(max(sq, 0.0))


@dataclass(frozen=True, eq=False)
class GaussLimitSpec:
    functions: tuple[TestFunction, ...]
    variance_matrix: np.ndarray
    gamma_diagonal: np.ndarray
    metric_values: np.ndarray

    def to_dict(self) -> dict:
        return {
            "functions": [g.label for g in self.functions],
            "variance_matrix": self.variance_matrix.tolist(),
            "gamma_diagonal": self.gamma_diagonal.tolist(),
            "d_G": self.metric_values.tolist(),
        }


def gauss_limit_spec(model: DiffusionModel, functions, n: int | None = None) -> GaussLimitSpec:
    gs = tuple(functions)
    m = len(gs)
    cov = np.empty((m, m))
    dist = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            cov[i, j] = cov[j, i] = limit_covariance(model, gs[i], gs[j], n)
            if j > i:
                dist[i, j] = dist[j, i] = metric_dG(model, gs[i], gs[j], n)
    diag = np.array([gamma_integral(model, g, n) for g in gs])
    return GaussLimitSpec(gs, cov, diag, dist)


# ---------------------------------------------------------------------------
# Dynkin martingale
# ---------------------------------------------------------------------------


def dynkin_residuals(model: DiffusionModel, g: TestFunction, states: np.ndarray, dt: float) -> np.ndarray:
    """M_t^g = g(X_t) - g(X_0) - sum_k Ag(X_k) dt for a batch (R, n+1, d)."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim == 2:
        states = states[None]
    R, n1, d = states.shape
    out = np.empty(R)
    for r in range(R):
        x = states[r]
        integral = dt * float(np.sum(apply_generator(model, g, x[:-1])))
        out[r] = float(g(x[-1:])[0] - g(x[:1])[0]) - integral
    return out


def dynkin_residual(model: DiffusionModel, g: TestFunction, path: PathGrid) -> float:
    return float(dynkin_residuals(model, g, path.states, path.dt)[0])
