"""Sample-path simulation on a fixed time grid.

Every Gaussian increment comes from the counter-based generator keyed by
(seed, replicate, stream) and indexed by the step number, so a replicate can
be regenerated alone, in a batch, or in any order with identical output.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import _accel
from .models import REFLECTED, DiffusionModel

STREAM_INIT = 0
STREAM_STEP = 1
STREAM_BURN = 2

BURN_IN = 10.0
DIVERGENCE_LIMIT = 1e6
MAX_DT = 0.05

InitMode = Union[str, Sequence[float], np.ndarray]


class SimulationError(RuntimeError):
    pass


def n_steps(dt: float, t_max: float) -> int:
    return int(math.floor(t_max / dt + 1e-9))


@dataclass(frozen=True, eq=False)
class PathGrid:
    dim: int
    dt: float
    t_max: float
    states: np.ndarray
    seed: int
    init_mode: str
    replicate: int = 0

    def __post_init__(self):
        if self.states.shape != (n_steps(self.dt, self.t_max) + 1, self.dim):
            raise ValueError("states shape does not match (floor(t_max/dt)+1, dim)")
        self.states.flags.writeable = False

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def horizon(self) -> float:
        """Grid horizon n_steps * dt used by all Riemann sums."""
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.states.shape[0])


@dataclass(frozen=True, eq=False)
class TimeChangeRecord:
    base_path: PathGrid
    clock_values: np.ndarray
    mapped_states: np.ndarray
    f_label: str = "exp"

    def level_set_measure(self, kappa: float) -> float:
        """Lebesgue measure, in the clock variable, of {u : |f'|^-2 >= kappa}."""
        dF = np.diff(self.clock_values)
        inv = np.exp(-2.0 * self.base_path.states[:-1, 0])  # |exp'(z)|^-2
        return float(np.sum(dF[inv >= kappa]))


def _validate_grid(dt, t_max, max_dt=MAX_DT):
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError("dt must be positive")
    if dt > max_dt:
        raise ValueError(f"dt must not exceed {max_dt}")
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    if n_steps(dt, t_max) < 1:
        raise ValueError("t_max must cover at least one step")


def _keys(seed, replicates, stream):
    return np.array([_accel.derive_key(seed, r, stream) for r in replicates], dtype=np.uint64)


def _raise_divergence(bad_r, bad_s, reps):
    if bad_s >= 0:
        raise SimulationError(
            f"path diverged (|X| > {DIVERGENCE_LIMIT:g}) at step {bad_s} of replicate {reps[bad_r]}")


def _integrate(model: DiffusionModel, x0, keys, step0, nsteps, dt, reps, backend=None):
    reflect = model.domain_spec == REFLECTED
    if model.poly_drift is not None:
        c1, c3 = model.poly_drift
        out, r, s = _accel.em_poly(x0, keys, step0, nsteps, dt, model.sigma, c1, c3,
                                   reflect, DIVERGENCE_LIMIT, backend=backend)
        _raise_divergence(r, s, reps)
        return out
    nrep, dim = x0.shape
    out = np.empty((nrep, nsteps + 1, dim))
    out[:, 0] = x0
    x = x0.copy()
    scale = model.sigma * math.sqrt(dt)
    k = 0
    while k < nsteps:
        m = min(256, nsteps - k)
        noise = _accel.gaussian_block(keys, step0 + k, m, dim, backend=backend)
        for j in range(m):
            x = x + model.drift(x) * dt + scale * noise[:, j]
            if reflect:
                x = _accel.fold_unit(x)
            out[:, k + j + 1] = x
        norms = np.sqrt(np.sum(out[:, k + 1 : k + m + 1] ** 2, axis=2))
        hit = np.argwhere(~(norms <= DIVERGENCE_LIMIT))
        if hit.size:
            r, s = hit[np.argmin(hit[:, 1])]
            _raise_divergence(int(r), int(k + s + 1), reps)
        k += m
    return out


def _initial_states(model, dt, seed, reps, init, backend=None):
    dim = model.dim
    if isinstance(init, str):
        if init != "stationary":
            raise ValueError(f"unknown init mode {init!r}")
        if model.kind == "ou":
            z = _accel.gaussian_block(_keys(seed, reps, STREAM_INIT), 0, 1, dim, backend=backend)[:, 0]
            return math.sqrt(model.stationary_variance) * z, "stationary-draw"
        start = np.full((len(reps), dim), 0.5 if model.domain_spec == REFLECTED else 0.0)
        burn = _integrate(model, start, _keys(seed, reps, STREAM_BURN), 0, n_steps(dt, BURN_IN),
                          dt, reps, backend)
        return burn[:, -1].copy(), "stationary-draw"
    x0 = np.asarray(init, dtype=np.float64).reshape(dim)
    if model.domain_spec == REFLECTED and not 0.0 <= x0[0] <= 1.0:
        raise ValueError("initial point must lie in [0, 1]")
    return np.tile(x0, (len(reps), 1)), "fixed-point(" + ",".join(f"{v:g}" for v in x0) + ")"


def simulate_batch(model: DiffusionModel, dt: float, t_max: float, seed: int,
                   replicates: int | Sequence[int], init: InitMode = "stationary",
                   backend: str | None = None) -> np.ndarray:
    """States of shape (R, n+1, d); row r equals the single-path replicate r."""
    _validate_grid(dt, t_max)
    reps = list(range(replicates)) if isinstance(replicates, (int, np.integer)) else list(replicates)
    x0, _ = _initial_states(model, dt, seed, reps, init, backend)
    return _integrate(model, x0, _keys(seed, reps, STREAM_STEP), 0, n_steps(dt, t_max), dt,
                      reps, backend)


def _simulate(model, dt, t_max, seed, init, replicate, backend):
    _validate_grid(dt, t_max)
    x0, mode = _initial_states(model, dt, seed, [replicate], init, backend)
    out = _integrate(model, x0, _keys(seed, [replicate], STREAM_STEP), 0, n_steps(dt, t_max),
                     dt, [replicate], backend)
    return PathGrid(model.dim, float(dt), float(t_max), out[0], int(seed), mode, int(replicate))


def simulate_langevin(model: DiffusionModel, dt: float, t_max: float, seed: int = 0,
                      init: InitMode = "stationary", replicate: int = 0,
                      backend: str | None = None) -> PathGrid:
    """Euler-Maruyama path X_{k+1} = X_k + b(X_k) dt + sigma sqrt(dt) xi_k."""
    if model.domain_spec == REFLECTED:
        raise ValueError("use simulate_reflected for reflected models")
    return _simulate(model, dt, t_max, seed, init, replicate, backend)


def simulate_reflected(model: DiffusionModel, dt: float, t_max: float, seed: int = 0,
                       init: InitMode = "stationary", replicate: int = 0,
                       backend: str | None = None) -> PathGrid:
    """Euler-Maruyama proposal folded back into [0, 1]."""
    if model.domain_spec != REFLECTED:
        raise ValueError("model is not a reflected-interval model")
    return _simulate(model, dt, t_max, seed, init, replicate, backend)


def simulate_planar_bm_batch(dt: float, t_max: float, seed: int, replicates, x0=(0.0, 0.0),
                             backend: str | None = None, max_dt: float = 1.0) -> np.ndarray:
    _validate_grid(dt, t_max, max_dt)
    reps = list(range(replicates)) if isinstance(replicates, (int, np.integer)) else list(replicates)
    start = np.tile(np.asarray(x0, dtype=np.float64).reshape(2), (len(reps), 1))
    out, r, s = _accel.em_poly(start, _keys(seed, reps, STREAM_STEP), 0, n_steps(dt, t_max), dt,
                               1.0, 0.0, 0.0, False, math.inf, backend=backend)
    return out


def simulate_planar_bm(dt: float, t_max: float, seed: int = 0, x0=(0.0, 0.0), replicate: int = 0,
                       backend: str | None = None) -> PathGrid:
    """W_{k+1} = W_k + sqrt(dt) xi_k in R^2."""
    out = simulate_planar_bm_batch(dt, t_max, seed, [replicate], x0, backend)
    mode = "fixed-point(" + ",".join(f"{v:g}" for v in np.asarray(x0, float)) + ")"
    return PathGrid(2, float(dt), float(t_max), out[0], int(seed), mode, int(replicate))


def time_change_isotropic(f_label: str, base: PathGrid) -> TimeChangeRecord:
    """Map planar BM through the complex exponential and build its clock.

    The clock is the left-endpoint sum F(u_k) = sum_{j<k} |f'(B_j)|^2 dt.
    """
    if f_label != "exp":
        raise ValueError("only f = exp is implemented")
    if base.dim != 2:
        raise ValueError("base path must be planar")
    re, im = base.states[:, 0], base.states[:, 1]
    if np.max(np.abs(re)) > 300.0:
        raise OverflowError("exp overflow: |Re B| exceeds 300")
    mod = np.exp(re)
    mapped = np.stack([mod * np.cos(im), mod * np.sin(im)], axis=1)
    speed = mod[:-1] ** 2 * base.dt  # |exp'(B)|^2 dt
    clock = np.concatenate([[0.0], np.cumsum(speed)])
    return TimeChangeRecord(base, clock, mapped, f_label)


# ---------------------------------------------------------------------------
# binary dump
# ---------------------------------------------------------------------------

_MAGIC = b"ERGPATH1"
_HEADER = struct.Struct("<8sqddQqq")  # magic, dim, dt, t_max, seed, replicate, n_states


def dump_path(path: PathGrid, fh) -> None:
    """Write ``path`` as little-endian float64 with a fixed header.

    Layout: 8-byte magic ``ERGPATH1``; int64 dim; float64 dt; float64 t_max;
    uint64 seed; int64 replicate; int64 n_states; then n_states * dim
    float64 values in row-major (time, coordinate) order.
    """
    fh.write(_HEADER.pack(_MAGIC, path.dim, path.dt, path.t_max, path.seed & ((1 << 64) - 1),
                          path.replicate, path.states.shape[0]))
    fh.write(np.ascontiguousarray(path.states, dtype="<f8").tobytes())


def load_path(fh, init_mode: str = "unknown") -> PathGrid:
    head = fh.read(_HEADER.size)
    magic, dim, dt, t_max, seed, rep, n = _HEADER.unpack(head)
    if magic != _MAGIC:
        raise ValueError("not an ergolab path dump")
    data = np.frombuffer(fh.read(8 * n * dim), dtype="<f8").astype(np.float64).reshape(n, dim)
    return PathGrid(dim, dt, t_max, data, seed, init_mode, rep)
