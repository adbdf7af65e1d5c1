"""Integrate ``dx = v(t, x, z) dt`` from t=0 to t=1.

Fixed-step Euler, midpoint and RK4 run on a uniform grid. ``dopri5`` is the
Dormand-Prince 5(4) pair with first-same-as-last reuse and the classical
step-size controller.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import NumericError

FIXED_STAGES = {"euler": 1, "midpoint": 2, "rk4": 4}
METHODS = tuple(FIXED_STAGES) + ("dopri5",)

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class StepSizeUnderflow(NumericError):
    def __init__(self, t: float, h: float, err: float):
        super().__init__(f"adaptive step underflow at t={t:.6g}: h={h:.3g}, error estimate={err:.3g}")
        self.t = t
        self.h = h
        self.err = err


@dataclass
class SolverConfig:
    method: str = "euler"
    steps: int = 10
    rtol: float = 1e-5
    atol: float = 1e-5
    h_init: float = 0.05
    h_min: float = 1e-10
    safety: float = 0.9
    max_steps: int = 100_000
    record_times: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.method in FIXED_STAGES and int(self.steps) < 1:
            raise ValueError("fixed-step solvers need steps >= 1")
        if self.method == "dopri5" and not (self.rtol > 0 and self.atol > 0):
            raise ValueError("dopri5 needs rtol, atol > 0")
        self.steps = int(self.steps)
        times = tuple(float(t) for t in self.record_times)
        if any(t < 0.0 or t > 1.0 for t in times):
            raise ValueError(f"record times must lie in [0, 1], got {times}")
        self.record_times = times

    @property
    def adaptive(self) -> bool:
        return self.method == "dopri5"


@dataclass
class SolverRun:
    final: np.ndarray
    snapshots: list = field(default_factory=list)  # (t, state) sorted by t
    nfe: int = 0
    step_sizes: list = field(default_factory=list)
    rejected: int = 0

    def snapshot(self, t: float) -> np.ndarray:
        for ts, x in self.snapshots:
            if abs(ts - t) < 1e-12:
                return x
        raise KeyError(f"no snapshot at t={t}")


def nfe_of(cfg: SolverConfig) -> int:
    """Field evaluations a fixed-step run will use."""
    if cfg.adaptive:
        raise ValueError("NFE of an adaptive solver is only known after the run")
    return FIXED_STAGES[cfg.method] * cfg.steps


class _Counted:
    def __init__(self, field, z):
        self.field = field
        self.z = z
        self.n = 0

    def __call__(self, t, x):
        self.n += 1
        v = self.field(t, x, self.z)
        if not np.all(np.isfinite(v)):
            raise NumericError(f"non-finite vector field at t={t:.6g}")
        return v


def _times(cfg):
    return sorted(set(cfg.record_times) | {0.0, 1.0})


def _interp(t0, x0, t1, x1, t):
    if t1 == t0:
        return x1.copy()
    w = (t - t0) / (t1 - t0)
    return ((1 - w) * x0 + w * x1).astype(x1.dtype)


def _fixed(f, x, cfg, times):
    n = cfg.steps
    h = 1.0 / n
    snaps = []
    pending = list(times)
    t_prev, x_prev = 0.0, x
    while pending and pending[0] <= 0.0:
        snaps.append((pending.pop(0), x.copy()))
    for k in range(n):
        t = k * h
        if cfg.method == "euler":
            x = x + h * f(t, x)
        elif cfg.method == "midpoint":
            k1 = f(t, x)
            x = x + h * f(t + 0.5 * h, x + (0.5 * h) * k1)
        else:
            k1 = f(t, x)
            k2 = f(t + 0.5 * h, x + (0.5 * h) * k1)
            k3 = f(t + 0.5 * h, x + (0.5 * h) * k2)
            k4 = f(t + h, x + h * k3)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t_new = (k + 1) / n
        while pending and pending[0] <= t_new + 1e-12:
            tr = pending.pop(0)
            on_grid = abs(tr - t_new) < 1e-12
            snaps.append((tr, x.copy() if on_grid else _interp(t_prev, x_prev, t_new, x, tr)))
        t_prev, x_prev = t_new, x
    return x, snaps, []


def _rms(a):
    return float(np.sqrt(np.mean(np.square(a, dtype=np.float64))))


def _dopri5(f, x, cfg, times):
    t = 0.0
    h = min(cfg.h_init, 1.0)
    pending = list(times)
    snaps = []
    while pending and pending[0] <= 0.0:
        snaps.append((pending.pop(0), x.copy()))
    hist = []
    rejected = 0
    k1 = f(t, x)
    n_steps = 0
    while t < 1.0:
        n_steps += 1
        if n_steps > cfg.max_steps:
            raise NumericError(f"dopri5 exceeded {cfg.max_steps} steps")
        h = min(h, 1.0 - t)
        ks = [k1]
        for i in range(1, 7):
            dx = sum(_A[i][j] * ks[j] for j in range(i) if _A[i][j] != 0.0)
            ks.append(f(t + _C[i] * h, x + h * dx))
        x_new = x + h * sum(_B5[j] * ks[j] for j in range(7) if _B5[j] != 0.0)
        err_vec = h * sum(_E[j] * ks[j] for j in range(7))
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(x), np.abs(x_new))
        err = _rms(err_vec / scale)
        if not np.isfinite(err):
            raise NumericError(f"non-finite error estimate at t={t:.6g}")
        if err <= 1.0:
            t_new = 1.0 if 1.0 - (t + h) < 1e-14 else t + h
            while pending and pending[0] <= t_new + 1e-12:
                tr = pending.pop(0)
                on_step = abs(tr - t_new) < 1e-12
                snaps.append((tr, x_new.copy() if on_step else _interp(t, x, t_new, x_new, tr)))
            hist.append(h)
            t, x = t_new, x_new
            k1 = ks[6]  # FSAL
        else:
            rejected += 1
        fac = cfg.safety * (err ** -0.2) if err > 0 else 5.0
        h = h * min(5.0, max(0.2, fac))
        if t < 1.0 and h < cfg.h_min:
            raise StepSizeUnderflow(t, h, err)
    return x, snaps, hist, rejected


def _aligned(xs, zs):
    if len(zs) != len(xs):
        return False
    if len(xs) >= 3:  # (..., C, H, W): batch and spatial dims must agree
        return zs[:-3] == xs[:-3] and zs[-2:] == xs[-2:]
    return zs[:-1] == xs[:-1]


def integrate(field, x0, z=None, cfg: SolverConfig | None = None) -> SolverRun:
    """Solve from t=0 to t=1 with ``field(t, x, z)``; returns final state, snapshots and NFE."""
    cfg = cfg or SolverConfig()
    x0 = np.asarray(x0)
    if z is not None and not _aligned(x0.shape, np.shape(z)):
        raise ValueError(f"x0 {x0.shape} and z {np.shape(z)} are not aligned")
    f = _Counted(field, z)
    times = _times(cfg)
    if cfg.adaptive:
        final, snaps, hist, rej = _dopri5(f, x0, cfg, times)
    else:
        (final, snaps, hist), rej = _fixed(f, x0, cfg, times), 0
    if not np.all(np.isfinite(final)):
        raise NumericError("non-finite ODE state")
    return SolverRun(final=final, snapshots=snaps, nfe=f.n, step_sizes=hist, rejected=rej)
