"""Seeded Euler-Maruyama integration of overdamped Langevin and Ito dynamics.

All Gaussian increments are drawn up front from ``numpy.random.PCG64``
seeded with ``SimConfig.seed``; the stepping loops are compiled with numba.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numba
import numpy as np

from .basis import Dictionary, Expansion, builtin, parse_dictionary
from .trajectory import Trajectory

GENERATOR = "numpy.PCG64"

DOUBLE_WELL = 0
LEMON_SLICE = 1
DICTIONARY_MODEL = 2


class SimulationError(RuntimeError):
    """Integration aborted: non-finite state or invalid diffusion value."""

    def __init__(self, message: str, step: int | None = None, state=None):
        self.step = step
        self.state = state
        super().__init__(message)


@dataclass(frozen=True)
class Potential:
    """Potential energy driving overdamped dynamics.

    ``double_well``: U(x) = x^4/2 - 4x^3 + 9x^2 - 3x.
    ``lemon_slice``: U(r, phi) = cos(7 phi) + 10 (r - 1)^2 + 1/r in Cartesian input.
    ``dictionary_model``: U = sum_k c_k f_k for a one-dimensional dictionary.
    """

    kind: str
    model: Expansion | None = None

    def __post_init__(self):
        if self.kind not in ("double_well", "lemon_slice", "dictionary_model"):
            raise ValueError(f"unknown potential {self.kind!r}")
        if self.kind == "dictionary_model" and self.model is None:
            raise ValueError("dictionary_model potential needs an Expansion")

    @property
    def dim(self) -> int:
        return 2 if self.kind == "lemon_slice" else 1

    def energy(self, points) -> np.ndarray:
        x = np.asarray(points, dtype=float)
        if self.kind == "double_well":
            x = x.reshape(-1)
            return 0.5 * x**4 - 4 * x**3 + 9 * x**2 - 3 * x
        if self.kind == "lemon_slice":
            x = x.reshape(-1, 2)
            r = np.hypot(x[:, 0], x[:, 1])
            phi = np.arctan2(x[:, 1], x[:, 0])
            return np.cos(7 * phi) + 10 * (r - 1) ** 2 + 1 / r
        return self.model(x.reshape(-1))

    def gradient(self, points) -> np.ndarray:
        """Gradient with shape ``(N, d)``."""
        x = np.asarray(points, dtype=float)
        if self.kind == "double_well":
            x = x.reshape(-1)
            return (2 * x**3 - 12 * x**2 + 18 * x - 3)[:, None]
        if self.kind == "lemon_slice":
            x = x.reshape(-1, 2)
            out = np.empty_like(x)
            for i in range(x.shape[0]):
                out[i, 0], out[i, 1] = _lemon_grad(x[i, 0], x[i, 1])
            return out
        return self.model.gradient(x.reshape(-1)).T

    def default_initial_state(self) -> np.ndarray:
        if self.kind == "lemon_slice":
            return np.array([1.0, 0.0])
        return np.array([1.0])


def double_well() -> Potential:
    return Potential("double_well")


def lemon_slice() -> Potential:
    return Potential("lemon_slice")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 5e-3
    n_steps: int = 1_000_000
    beta: float = 1.0
    gamma: float = 1.0
    seed: int = 0
    initial_state: tuple[float, ...] | None = None
    burn_in: int = 10_000

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be non-negative, got {self.n_steps}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be non-negative, got {self.burn_in}")


# --- compiled kernels -------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _factor_value(code, a, b, x):
    if code == 0:
        return 1.0
    if code == 1:
        return x ** int(a)
    if code == 2:
        return math.sin(a * x)
    if code == 3:
        return math.cos(a * x)
    if code == 4:
        return math.tanh(a * x - b)
    if code == 5:
        t = math.tanh(a * x - b)
        return -a * t * t + a
    if code == 6:
        return math.exp(-a * (x - b) ** 2)
    t = math.tanh(x - a)
    return t * t + 1.0


@numba.njit(cache=True, nogil=True)
def _factor_deriv(code, a, b, x):
    if code == 0:
        return 0.0
    if code == 1:
        n = int(a)
        if n == 0:
            return 0.0
        return n * x ** (n - 1)
    if code == 2:
        return a * math.cos(a * x)
    if code == 3:
        return -a * math.sin(a * x)
    if code == 4:
        t = math.tanh(a * x - b)
        return a * (1.0 - t * t)
    if code == 5:
        t = math.tanh(a * x - b)
        return -2.0 * a * a * t * (1.0 - t * t)
    if code == 6:
        return -2.0 * a * (x - b) * math.exp(-a * (x - b) ** 2)
    t = math.tanh(x - a)
    return 2.0 * t * (1.0 - t * t)


@numba.njit(cache=True, nogil=True)
def _expansion(ptr, kinds, params, coefs, x, deriv):
    total = 0.0
    for k in range(ptr.shape[0] - 1):
        c = coefs[k]
        if c == 0.0:
            continue
        if not deriv:
            v = 1.0
            for j in range(ptr[k], ptr[k + 1]):
                v *= _factor_value(kinds[j], params[j, 0], params[j, 1], x)
        else:
            # product rule over the factors of one term
            v = 0.0
            for j in range(ptr[k], ptr[k + 1]):
                part = _factor_deriv(kinds[j], params[j, 0], params[j, 1], x)
                for jj in range(ptr[k], ptr[k + 1]):
                    if jj != j:
                        part *= _factor_value(kinds[jj], params[jj, 0], params[jj, 1], x)
                v += part
        total += c * v
    return total


@numba.njit(cache=True, nogil=True)
def _lemon_grad(x, y):
    r2 = x * x + y * y
    r = math.sqrt(r2)
    phi = math.atan2(y, x)
    du_dr = 20.0 * (r - 1.0) - 1.0 / r2
    du_dphi = -7.0 * math.sin(7.0 * phi)
    gx = du_dr * x / r - du_dphi * y / r2
    gy = du_dr * y / r + du_dphi * x / r2
    return gx, gy


@numba.njit(cache=True, nogil=True)
def _run_overdamped(code, x0, noise, dt, inv_gamma, scale, ptr, kinds, params, coefs, out, skip):
    d = x0.shape[0]
    x = x0.copy()
    g = np.empty(d)
    n_total = noise.shape[0]
    if skip == 0:
        out[0, :] = x
    for step in range(n_total):
        if code == 0:
            z = x[0]
            g[0] = 2.0 * z**3 - 12.0 * z**2 + 18.0 * z - 3.0
        elif code == 1:
            g[0], g[1] = _lemon_grad(x[0], x[1])
        else:
            g[0] = _expansion(ptr, kinds, params, coefs, x[0], True)
        for i in range(d):
            x[i] = x[i] - g[i] * inv_gamma * dt + scale * noise[step, i]
            if not math.isfinite(x[i]):
                return step
        row = step + 1 - skip
        if row >= 0:
            out[row, :] = x
    return -1


@numba.njit(cache=True, nogil=True)
def _run_ito(x0, noise, dt, beta, bptr, bkinds, bparams, bcoefs, aptr, akinds, aparams, acoefs,
             wrap, lo, hi, out, skip, fail_state):
    x = x0
    n_total = noise.shape[0]
    if skip == 0:
        out[0] = x
    for step in range(n_total):
        b = _expansion(bptr, bkinds, bparams, bcoefs, x, False)
        a = _expansion(aptr, akinds, aparams, acoefs, x, False)
        if a < 0.0:
            fail_state[0] = x
            return -(step + 2)
        x = x + b * dt + math.sqrt(2.0 * dt * a / beta) * noise[step]
        if not math.isfinite(x):
            return step
        if wrap:
            x = lo + (x - lo) % (hi - lo)
        row = step + 1 - skip
        if row >= 0:
            out[row] = x
    return -1


# --- public API ---------------------------------------------------------------

_EMPTY_TABLES = (np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64),
                 np.zeros((0, 2)), np.zeros(0))


def _noise(cfg: SimConfig, d: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    return rng.standard_normal((cfg.burn_in + cfg.n_steps, d))


def _initial(pot_dim: int, cfg: SimConfig, default) -> np.ndarray:
    x0 = np.asarray(default if cfg.initial_state is None else cfg.initial_state, dtype=float)
    x0 = x0.reshape(-1)
    if x0.shape != (pot_dim,):
        raise ValueError(f"initial state must have {pot_dim} components, got {x0.shape}")
    return x0


def simulate_overdamped(pot: Potential, cfg: SimConfig) -> Trajectory:
    """Integrate ``dX = -grad U / gamma dt + sqrt(2 / (beta gamma)) dW``.

    The first ``cfg.burn_in`` steps are discarded; the returned trajectory
    holds ``cfg.n_steps + 1`` states.
    """
    x0 = _initial(pot.dim, cfg, pot.default_initial_state())
    if pot.kind == "lemon_slice" and np.hypot(*x0) == 0.0:
        raise ValueError("lemon slice initial state must have r > 0")
    code = {"double_well": DOUBLE_WELL, "lemon_slice": LEMON_SLICE}.get(pot.kind, DICTIONARY_MODEL)
    tables = pot.model.tables() if code == DICTIONARY_MODEL else _EMPTY_TABLES
    noise = _noise(cfg, pot.dim)
    out = np.empty((cfg.n_steps + 1, pot.dim))
    scale = math.sqrt(2.0 * cfg.dt / (cfg.beta * cfg.gamma))
    failed = _run_overdamped(code, x0, noise, cfg.dt, 1.0 / cfg.gamma, scale, *tables, out, cfg.burn_in)
    if failed >= 0:
        raise SimulationError(f"non-finite state at step {failed}", step=int(failed))
    return Trajectory(out, cfg.dt, cfg.beta, cfg.gamma, cfg.seed, GENERATOR)


def simulate_ito(drift: Expansion, diffusion: Expansion, cfg: SimConfig,
                 period: tuple[float, float] | None = None) -> Trajectory:
    """Integrate the 1D Ito SDE ``dX = b dt + sqrt(2 a / beta) dW``.

    ``drift`` and ``diffusion`` are expansions over one-dimensional
    dictionaries. With ``period=(lo, hi)`` the state is wrapped into
    [lo, hi) after each step and the trajectory is marked periodic.
    """
    x0 = float(_initial(1, cfg, [0.0])[0])
    noise = _noise(cfg, 1)[:, 0]
    out = np.empty(cfg.n_steps + 1)
    lo, hi = period if period is not None else (0.0, 1.0)
    if period is not None:
        if not hi > lo:
            raise ValueError(f"invalid period {period}")
        x0 = lo + (x0 - lo) % (hi - lo)
    fail_state = np.zeros(1)
    status = _run_ito(x0, noise, cfg.dt, cfg.beta, *drift.tables(), *diffusion.tables(),
                      period is not None, lo, hi, out, cfg.burn_in, fail_state)
    if status >= 0:
        raise SimulationError(f"non-finite state at step {status}", step=int(status))
    if status < -1:
        step = -status - 2
        raise SimulationError(
            f"negative diffusion at step {step}, state {fail_state[0]!r}",
            step=step, state=float(fail_state[0]))
    return Trajectory(out, cfg.dt, cfg.beta, cfg.gamma, cfg.seed, GENERATOR,
                      periodic=period is not None)


def worker_count() -> int:
    env = os.environ.get("STOKID_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def simulate_replicas(pot: Potential, cfg: SimConfig, reps: int) -> list[Trajectory]:
    """Independent trajectories with seeds ``cfg.seed + i``."""
    cfgs = [replace(cfg, seed=cfg.seed + i) for i in range(reps)]
    with ThreadPoolExecutor(max_workers=min(reps, worker_count())) as pool:
        return list(pool.map(lambda c: simulate_overdamped(pot, c), cfgs))


def constant(value: float) -> Expansion:
    return Expansion(parse_dictionary("const", "const"), np.array([float(value)]))


def potential_by_name(name: str) -> Potential:
    key = name.replace("-", "_")
    if key == "double_well":
        return double_well()
    if key == "lemon_slice":
        return lemon_slice()
    raise ValueError(f"unknown potential {name!r}")


def double_well_expansion() -> Expansion:
    """U of the double well written over the first five monomials."""
    d: Dictionary = builtin("theta").subset(range(5), "poly4")
    return Expansion(d, np.array([0.0, -3.0, 9.0, -4.0, 0.5]))

