"""Adaptive Dormand-Prince 5(4) integration with optional entropy relaxation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import InadmissibleState, InvalidArgument, StepSizeUnderflow

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RkTableau:
    A: np.ndarray
    b: np.ndarray
    b_hat: np.ndarray
    c: np.ndarray
    order: int

    @property
    def stages(self) -> int:
        return len(self.b)


def dormand_prince() -> RkTableau:
    A = np.zeros((7, 7))
    A[1, 0] = 1 / 5
    A[2, :2] = [3 / 40, 9 / 40]
    A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
    A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
    A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
    A[6, :6] = [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
    b = A[6].copy()
    b_hat = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
    c = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
    for arr in (A, b, b_hat, c):
        arr.flags.writeable = False
    return RkTableau(A, b, b_hat, c, 5)


DP54 = dormand_prince()


@dataclass(frozen=True)
class StepController:
    """PI step-size controller on a weighted RMS error norm."""

    rtol: float = 1e-8
    atol: float = 1e-10
    safety: float = 0.9
    k_integral: float = 0.7 / 5
    k_proportional: float = 0.4 / 5
    min_ratio: float = 0.2
    max_ratio: float = 5.0

    def norm(self, err: np.ndarray, q0: np.ndarray, q1: np.ndarray) -> float:
        scale = self.atol + self.rtol * np.maximum(np.abs(q0), np.abs(q1))
        return float(np.sqrt(np.mean((err / scale) ** 2)))


def adapt(controller: StepController, error: float, dt: float, previous_error: float = 1.0) -> float:
    """Next step size from the current and previous normalized errors."""
    if error < 0.0:
        raise InvalidArgument("error estimate must be non-negative")
    if error == 0.0:
        return controller.max_ratio * dt
    factor = controller.safety * error ** (-controller.k_integral) * max(previous_error, 1e-10) ** controller.k_proportional
    return dt * min(controller.max_ratio, max(controller.min_ratio, factor))


@dataclass
class StepResult:
    q: np.ndarray
    error: np.ndarray
    stages: list
    last_rhs: np.ndarray
    stage_states: list


def step(rhs: Callable, q: np.ndarray, t: float, dt: float, k1: np.ndarray | None = None,
         tableau: RkTableau = DP54) -> StepResult:
    """One explicit embedded step; ``error`` is the unnormalized difference of the two solutions."""
    if not dt > 0.0:
        raise InvalidArgument("dt must be positive")
    ks, ys = [], []
    for i in range(tableau.stages):
        if i == 0:
            y, k = q, (k1 if k1 is not None else rhs(q, t))
        else:
            y = q + dt * sum(tableau.A[i, j] * ks[j] for j in range(i) if tableau.A[i, j] != 0.0)
            k = rhs(y, t + tableau.c[i] * dt)
        ys.append(y)
        ks.append(k)
    incr = sum(bi * k for bi, k in zip(tableau.b, ks) if bi != 0.0)
    err = dt * sum((bi - bh) * k for bi, bh, k in zip(tableau.b, tableau.b_hat, ks) if bi != bh)
    return StepResult(q + dt * incr, err, ks, ks[-1], ys)


@dataclass(frozen=True)
class EntropyFunctional:
    """Global entropy ``S(q)`` and its weighted rate ``<w(y), M J k>``."""

    value: Callable[[np.ndarray], float]
    rate: Callable[[np.ndarray, np.ndarray], float]


def relaxation_gamma(entropy: EntropyFunctional, q: np.ndarray, direction: np.ndarray, estimate: float,
                     brackets=((0.9, 1.1), (0.75, 1.25), (0.5, 1.5)), xtol: float = 1e-14) -> tuple[float, bool]:
    """Root of ``S(q + g d) - S(q) - g * estimate`` near one; returns (gamma, found)."""
    s0 = entropy.value(q)

    def r(g):
        return entropy.value(q + g * direction) - s0 - g * estimate

    for lo, hi in brackets:
        rlo, rhi = r(lo), r(hi)
        if rlo == 0.0:
            return lo, True
        if rhi == 0.0:
            return hi, True
        if np.sign(rlo) != np.sign(rhi):
            return brentq(r, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps), True
    return 1.0, False


def relaxed_step(rhs: Callable, entropy: EntropyFunctional, q: np.ndarray, t: float, dt: float,
                 k1: np.ndarray | None = None, tableau: RkTableau = DP54):
    """Relaxed step: returns (StepResult, gamma, found); the state advances to ``t + gamma dt``."""
    res = step(rhs, q, t, dt, k1, tableau)
    direction = res.q - q
    if not np.any(direction):
        return res, 1.0, True
    estimate = dt * sum(bi * entropy.rate(y, k) for bi, y, k in zip(tableau.b, res.stage_states, res.stages) if bi)
    gamma, found = relaxation_gamma(entropy, q, direction, estimate)
    if not found:
        log.warning("relaxation root not bracketed at t=%.6g; using gamma = 1", t)
    res.q = q + gamma * direction
    return res, gamma, found


@dataclass(frozen=True)
class TimeConfig:
    t_final: float = 1.0
    tol: float = 1e-8
    relaxation: bool = False
    dt_initial: float | None = None
    max_steps: int = 1_000_000

    def controller(self) -> StepController:
        return StepController(rtol=self.tol, atol=1e-2 * self.tol)


@dataclass
class IntegrationStats:
    accepted: int = 0
    rejected: int = 0
    rhs_evals: int = 0
    relaxation_failures: int = 0
    gammas: list = field(default_factory=list)


def initial_step(rhs: Callable, q: np.ndarray, t: float, f0: np.ndarray, ctrl: StepController, order: int = 5) -> float:
    scale = ctrl.atol + ctrl.rtol * np.abs(q)
    d0 = np.sqrt(np.mean((q / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = rhs(q + h0 * f0, t + h0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** (1.0 / order)
    return min(100 * h0, h1)


def integrate(rhs: Callable, q0: np.ndarray, t0: float, config: TimeConfig,
              entropy: EntropyFunctional | None = None,
              callback: Callable | None = None) -> tuple[np.ndarray, float, IntegrationStats]:
    """Integrate to ``config.t_final``.  ``callback(t, q, dqdt, gamma)`` sees every accepted state."""
    if config.relaxation and entropy is None:
        raise InvalidArgument("relaxation requires an entropy functional")
    ctrl = config.controller()
    stats = IntegrationStats()
    counted = _Counted(rhs, stats)
    T = config.t_final
    q, t = q0.copy(), float(t0)
    k1 = counted(q, t)
    if callback is not None:
        callback(t, q, k1, 1.0)
    dt = config.dt_initial or initial_step(counted, q, t, k1, ctrl)
    prev_err = 1.0
    span = max(abs(T - t0), 1e-300)
    while t < T - 1e-14 * span:
        if stats.accepted + stats.rejected >= config.max_steps:
            raise StepSizeUnderflow(f"step budget of {config.max_steps} exhausted at t={t}")
        dt = min(dt, T - t)
        if dt < 1e-14 * span:
            raise StepSizeUnderflow(f"dt={dt:.3e} underflow at t={t:.6g}")
        try:
            if config.relaxation:
                res, gamma, found = relaxed_step(counted, entropy, q, t, dt, k1)
            else:
                res, gamma, found = step(counted, q, t, dt, k1), 1.0, True
            err = ctrl.norm(res.error, q, res.q)
            if not np.isfinite(err):
                raise InadmissibleState("non-finite error estimate")
        except InadmissibleState:
            stats.rejected += 1
            dt *= 0.5
            continue
        if err > 1.0:
            stats.rejected += 1
            dt = dt * max(ctrl.min_ratio, ctrl.safety * err ** (-1.0 / 5))
            continue
        stats.accepted += 1
        if not found:
            stats.relaxation_failures += 1
        stats.gammas.append(gamma)
        t = float(t + gamma * dt)
        q = res.q
        k1 = counted(q, t) if config.relaxation else res.last_rhs
        if callback is not None:
            callback(t, q, k1, gamma)
        new_dt = adapt(ctrl, err, dt, prev_err)
        prev_err = max(err, 1e-10)
        dt = new_dt
    return q, t, stats


class _Counted:
    def __init__(self, fn, stats):
        self.fn, self.stats = fn, stats

    def __call__(self, q, t):
        self.stats.rhs_evals += 1
        return self.fn(q, t)
