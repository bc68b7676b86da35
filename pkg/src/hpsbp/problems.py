"""Exact and initial solutions for the test problems.

Every problem exposes a gas model consistent with its nondimensionalization
and a function returning conserved states at points ``x`` of shape (..., 3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .physics import GasModel, conserved_from_primitives


@dataclass(frozen=True)
class VortexParams:
    """Isentropic vortex advected diagonally in the (x1, x2) plane.

    Temperature and velocity are scaled with free-stream values, so the gas
    constant is ``1 / (gamma M^2)`` and the free-stream speed is one.
    """

    mach: float = 0.5
    strength: float = 5.0
    angle_deg: float = 45.0
    center: tuple = (0.0, 0.0, 0.0)
    gamma: float = 1.4

    def __post_init__(self):
        if not self.mach > 0.0:
            raise InvalidArgument("vortex Mach number must be positive")

    @property
    def gas(self) -> GasModel:
        return GasModel(gamma=self.gamma, R=1.0 / (self.gamma * self.mach**2))

    @property
    def speed(self) -> float:
        return self.mach * math.sqrt(self.gamma * self.gas.R)


def vortex_exact(params: VortexParams, x: np.ndarray, t: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    a = math.radians(params.angle_deg)
    U = params.speed
    dx = x[..., 0] - params.center[0] - U * math.cos(a) * t
    dy = x[..., 1] - params.center[1] - U * math.sin(a) * t
    G = 1.0 - (dx**2 + dy**2)
    e = params.strength
    g = params.gamma
    swirl = e / (2.0 * math.pi) * np.exp(0.5 * G)
    u = np.stack([U * math.cos(a) - swirl * dy, U * math.sin(a) + swirl * dx, np.zeros_like(dx)], axis=-1)
    T = 1.0 - e**2 * params.mach**2 * (g - 1.0) / (8.0 * math.pi**2) * np.exp(G)
    rho = T ** (1.0 / (g - 1.0))
    return conserved_from_primitives(rho, u, T, params.gas)


@dataclass(frozen=True)
class ShockParams:
    """Planar viscous shock along x1 with upstream state rho = 1, T = 1, sound speed 1."""

    mach: float = 2.5
    reynolds: float = 10.0
    Pr: float = 0.75
    gamma: float = 1.4
    position: float = 0.0

    def __post_init__(self):
        if not self.mach > 1.0 or not self.reynolds > 0.0:
            raise InvalidArgument("shock needs Mach > 1 and Re > 0")

    @property
    def u_left(self) -> float:
        return self.mach

    @property
    def v_f(self) -> float:
        """Downstream/upstream velocity ratio."""
        g = self.gamma
        return (g - 1.0 + 2.0 / self.mach**2) / (g + 1.0)

    @property
    def u_right(self) -> float:
        return self.u_left * self.v_f

    @property
    def mass_flow(self) -> float:
        return self.u_left

    @property
    def mu(self) -> float:
        return self.u_left / self.reynolds

    @property
    def alpha(self) -> float:
        g = self.gamma
        return 2.0 * g / (g + 1.0) * self.mu / (self.Pr * self.mass_flow)

    @property
    def shock_speed(self) -> float:
        """Lab-frame shock speed; the post-shock gas is at rest."""
        return -self.u_right

    @property
    def gas(self) -> GasModel:
        return GasModel(gamma=self.gamma, R=1.0 / self.gamma, Pr=self.Pr, mu=self.mu)


def shock_relation(params: ShockParams, xi: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Residual of the implicit profile relation between position and V."""
    vf = params.v_f
    return xi - 0.5 * params.alpha * (
        np.log(np.abs((V - 1.0) * (V - vf))) + (1.0 + vf) / (1.0 - vf) * np.log(np.abs((V - 1.0) / (V - vf))))


def shock_profile(params: ShockParams, xi: np.ndarray) -> np.ndarray:
    """Normalized velocity ``V = u / u_left`` at shock-frame positions, by bisection."""
    xi = np.asarray(xi, dtype=float)
    lo = np.full(xi.shape, params.v_f)
    hi = np.ones(xi.shape)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        f = shock_relation(params, xi, mid)
        # the relation decreases in V: positive residual means V lies below mid
        upper = f > 0.0
        hi = np.where(upper, mid, hi)
        lo = np.where(upper, lo, mid)
    return 0.5 * (lo + hi)


def shock_exact(params: ShockParams, x: np.ndarray, t: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    gas = params.gas
    xi = x[..., 0] - params.position - params.shock_speed * t
    V = shock_profile(params, xi)
    u_frame = params.u_left * V
    H = gas.cp * 1.0 + 0.5 * params.u_left**2
    T = (H - 0.5 * u_frame**2) / gas.cp
    rho = params.mass_flow / u_frame
    u = np.zeros(x.shape[:-1] + (3,))
    u[..., 0] = u_frame + params.shock_speed
    return conserved_from_primitives(rho, u, T, gas)


@dataclass(frozen=True)
class TgvParams:
    V0: float = 1.0
    P0: float = 1.0
    T0: float = 1.0
    L: float = 1.0
    mach: float = 0.05
    reynolds: float = 1600.0
    Pr: float = 0.71
    gamma: float = 1.4

    def __post_init__(self):
        if min(self.V0, self.P0, self.T0, self.L, self.mach, self.reynolds, self.Pr) <= 0.0:
            raise InvalidArgument("Taylor-Green parameters must be positive")

    @property
    def rho0(self) -> float:
        return self.gamma * self.mach**2

    @property
    def gas(self) -> GasModel:
        return GasModel(gamma=self.gamma, R=self.P0 / (self.rho0 * self.T0), Pr=self.Pr,
                        mu=self.rho0 * self.V0 * self.L / self.reynolds)

    @property
    def bounds(self):
        h = math.pi * self.L
        return ((-h, h),) * 3


def tgv_initial(params: TgvParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float) / params.L
    s, c = np.sin(x), np.cos(x)
    V0 = params.V0
    u = np.stack([V0 * s[..., 0] * c[..., 1] * c[..., 2],
                  -V0 * c[..., 0] * s[..., 1] * c[..., 2],
                  np.zeros(x.shape[:-1])], axis=-1)
    P = params.P0 + params.rho0 * V0**2 / 16.0 * (np.cos(2 * x[..., 0]) + np.cos(2 * x[..., 1])) * (
        np.cos(2 * x[..., 2]) + 2.0)
    rho = P * params.rho0 / params.P0
    T = P / (rho * params.gas.R)
    return conserved_from_primitives(rho, u, T, params.gas)


@dataclass(frozen=True)
class BurgersParams:
    mean: float = 1.0
    amplitude: float = 0.5
    wavenumbers: tuple = (1, 1, 1)


def burgers_initial(params: BurgersParams, x: np.ndarray, bounds) -> np.ndarray:
    """Smooth periodic scalar data ``mean + amplitude * prod_m sin(2 pi k_m s_m)``."""
    x = np.asarray(x, dtype=float)
    val = np.full(x.shape[:-1], params.amplitude)
    for m in range(3):
        lo, hi = bounds[m]
        val = val * np.sin(2.0 * math.pi * params.wavenumbers[m] * (x[..., m] - lo) / (hi - lo) + 0.3 * m)
    return (params.mean + val)[..., None]
