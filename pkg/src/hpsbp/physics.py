"""Gas-dynamics state algebra, two-point fluxes and the Burgers model.

States are arrays whose last axis holds the components: five conserved
variables ``(rho, rho u1, rho u2, rho u3, rho E)`` for the gas, one for
Burgers.  Directional quantities take a (possibly unnormalized) direction
vector ``n`` with last axis 3; fluxes are linear in ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InadmissibleState, InvalidArgument


@dataclass(frozen=True)
class GasModel:
    """Calorically perfect gas with constant viscosity."""

    gamma: float = 1.4
    R: float = 1.0 / 1.4
    Pr: float = 0.72
    mu: float = 0.0
    Tref: float = 1.0
    rhoref: float = 1.0

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise InvalidArgument(f"gamma must exceed 1, got {self.gamma}")
        if self.mu < 0.0 or not self.Pr > 0.0 or not self.R > 0.0:
            raise InvalidArgument("need mu >= 0, Pr > 0 and R > 0")

    @property
    def cv(self) -> float:
        return self.R / (self.gamma - 1.0)

    @property
    def cp(self) -> float:
        return self.gamma * self.R / (self.gamma - 1.0)

    @property
    def kappa(self) -> float:
        return self.cp * self.mu / self.Pr


def _components(n, k):
    return n[..., k]


def primitives(q: np.ndarray, gas: GasModel, check: bool = True):
    """Density, velocity (..., 3), temperature and pressure."""
    rho = q[..., 0]
    u = q[..., 1:4] / rho[..., None]
    p = (gas.gamma - 1.0) * (q[..., 4] - 0.5 * rho * np.sum(u * u, axis=-1))
    T = p / (rho * gas.R)
    if check:
        bad = ~((rho > 0.0) & (T > 0.0))
        if np.any(bad):
            idx = np.argwhere(bad)[0]
            raise InadmissibleState(f"inadmissible state at index {tuple(int(i) for i in idx)}")
    return rho, u, T, p


def conserved_from_primitives(rho, u, T, gas: GasModel) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    T = np.asarray(T, dtype=float)
    q = np.empty(rho.shape + (5,))
    q[..., 0] = rho
    q[..., 1:4] = rho[..., None] * u
    q[..., 4] = rho * (gas.cv * T + 0.5 * np.sum(u * u, axis=-1))
    return q


def specific_entropy(q: np.ndarray, gas: GasModel) -> np.ndarray:
    rho, _, T, _ = primitives(q, gas)
    return gas.cv * np.log(T / gas.Tref) - gas.R * np.log(rho / gas.rhoref)


def entropy(q: np.ndarray, gas: GasModel) -> np.ndarray:
    """Entropy function ``S = -rho s``."""
    return -q[..., 0] * specific_entropy(q, gas)


def entropy_vars(q: np.ndarray, gas: GasModel) -> np.ndarray:
    """Entropy variables ``w = dS/dq`` for ``S = -rho s``."""
    rho, u, T, _ = primitives(q, gas)
    s = gas.cv * np.log(T / gas.Tref) - gas.R * np.log(rho / gas.rhoref)
    w = np.empty_like(q, dtype=float)
    w[..., 0] = gas.cp - s - 0.5 * np.sum(u * u, axis=-1) / T
    w[..., 1:4] = u / T[..., None]
    w[..., 4] = -1.0 / T
    return w


def conserved_from_entropy(w: np.ndarray, gas: GasModel) -> np.ndarray:
    """Inverse of :func:`entropy_vars`."""
    w = np.asarray(w, dtype=float)
    if np.any(w[..., 4] >= 0.0):
        raise InadmissibleState("entropy variables imply non-positive temperature")
    T = -1.0 / w[..., 4]
    u = w[..., 1:4] * T[..., None]
    s = gas.cp - w[..., 0] - 0.5 * np.sum(u * u, axis=-1) / T
    rho = gas.rhoref * np.exp((gas.cv * np.log(T / gas.Tref) - s) / gas.R)
    return conserved_from_primitives(rho, u, T, gas)


def euler_flux(q: np.ndarray, m: int, gas: GasModel) -> np.ndarray:
    """Inviscid flux in Cartesian direction ``m`` (0-based)."""
    n = np.zeros(3)
    n[m] = 1.0
    return euler_flux_normal(q, n, gas)


def euler_flux_normal(q: np.ndarray, n: np.ndarray, gas: GasModel) -> np.ndarray:
    rho, u, T, p = primitives(q, gas)
    un = np.sum(u * n, axis=-1)
    f = np.empty(np.broadcast_shapes(q.shape, np.shape(n)[:-1] + (5,)))
    f[..., 0] = rho * un
    f[..., 1:4] = (rho * un)[..., None] * u + p[..., None] * n
    f[..., 4] = un * (q[..., 4] + p)
    return f


def entropy_potential(q: np.ndarray, m: int, gas: GasModel) -> np.ndarray:
    """Entropy flux potential ``psi_m = R rho u_m``."""
    return gas.R * q[..., 1 + m]


def entropy_flux(q: np.ndarray, m: int, gas: GasModel) -> np.ndarray:
    rho, u, _, _ = primitives(q, gas)
    return entropy(q, gas) * u[..., m]


def log_mean(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Logarithmic mean ``(x - y) / log(x / y)`` with a series safeguard near ``x = y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    f2 = ((x - y) / (x + y)) ** 2
    series = (x + y) / (2.0 + f2 * (2.0 / 3.0 + f2 * (2.0 / 5.0 + f2 * (2.0 / 7.0))))
    hi, lo = np.maximum(x, y), np.minimum(x, y)  # argument order fixed for exact symmetry
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (hi - lo) / np.log(hi / lo)
    return np.where(f2 < 1e-4, series, direct)


# node auxiliaries: rho, u1, u2, u3, p, beta = rho / (2 p), |u|^2
NAUX = 7


def gas_aux(q: np.ndarray, gas: GasModel, check: bool = True) -> np.ndarray:
    rho, u, _, p = primitives(q, gas, check)
    aux = np.empty(q.shape[:-1] + (NAUX,))
    aux[..., 0] = rho
    aux[..., 1:4] = u
    aux[..., 4] = p
    aux[..., 5] = 0.5 * rho / p
    aux[..., 6] = np.sum(u * u, axis=-1)
    return aux


def ec_flux_aux(ai: np.ndarray, aj: np.ndarray, n: np.ndarray, gamma: float) -> np.ndarray:
    """Entropy-conservative two-point flux from node auxiliaries, dotted with ``n``."""
    rho_ln = log_mean(ai[..., 0], aj[..., 0])
    beta_ln = log_mean(ai[..., 5], aj[..., 5])
    u = 0.5 * (ai[..., 1:4] + aj[..., 1:4])
    p_hat = 0.5 * (ai[..., 0] + aj[..., 0]) / (ai[..., 5] + aj[..., 5])
    u2 = 0.5 * (ai[..., 6] + aj[..., 6])
    un = np.sum(u * n, axis=-1)
    f = np.empty(np.broadcast_shapes(u.shape[:-1], n.shape[:-1]) + (5,))
    f[..., 0] = rho_ln * un
    f[..., 1:4] = f[..., 0:1] * u + p_hat[..., None] * n
    f[..., 4] = f[..., 0] * (0.5 / ((gamma - 1.0) * beta_ln) - 0.5 * u2) + np.sum(u * f[..., 1:4], axis=-1)
    return f


def ec_two_point_flux(qi: np.ndarray, qj: np.ndarray, m, gas: GasModel) -> np.ndarray:
    """Symmetric, consistent two-point flux satisfying the shuffle condition.

    ``m`` is a Cartesian direction index (0-based) or a direction vector.
    """
    n = np.zeros(3)
    if np.ndim(m) == 0:
        n[int(m)] = 1.0
    else:
        n = np.asarray(m, dtype=float)
    return ec_flux_aux(gas_aux(qi, gas), gas_aux(qj, gas), n, gas.gamma)


def viscous_flux(q: np.ndarray, grad_w: np.ndarray, gas: GasModel) -> np.ndarray:
    """Viscous fluxes ``F^V_m`` (..., 3, 5) from Cartesian entropy-variable gradients (..., 3, 5).

    The energy component carries ``+kappa dT/dx_m`` (heat flux entering
    with the physical sign), which makes the coefficient matrix
    positive semidefinite.
    """
    rho, u, T, _ = primitives(q, gas, check=False)
    gu = T[..., None, None] * (grad_w[..., :, 1:4] + u[..., None, :] * grad_w[..., :, 4:5])  # [j, i] = du_i/dx_j
    gT = (T * T)[..., None] * grad_w[..., :, 4]
    div = gu[..., 0, 0] + gu[..., 1, 1] + gu[..., 2, 2]
    tau = gas.mu * (gu + np.swapaxes(gu, -1, -2))
    for k in range(3):
        tau[..., k, k] -= gas.mu * 2.0 / 3.0 * div
    F = np.zeros(grad_w.shape)
    F[..., :, 1:4] = tau  # symmetric, [m, i] = tau_{i m}
    F[..., :, 4] = (tau @ u[..., None])[..., 0] + gas.kappa * gT
    return F


def viscous_coeff(w: np.ndarray, gas: GasModel) -> np.ndarray:
    """Blocks ``C[m, j]`` (..., 3, 3, 5, 5) with ``F^V_m = sum_j C_mj dw/dx_j``."""
    w = np.asarray(w, dtype=float)
    q = conserved_from_entropy(w, gas)
    shape = w.shape[:-1]
    C = np.zeros(shape + (3, 3, 5, 5))
    for j in range(3):
        for c in range(5):
            g = np.zeros(shape + (3, 5))
            g[..., j, c] = 1.0
            C[..., :, j, :, c] = viscous_flux(q, g, gas)
    return C


def _unit_basis(n: np.ndarray):
    norm = np.linalg.norm(n, axis=-1)
    if np.any(norm <= 0.0):
        raise InvalidArgument("zero-length direction")
    nh = n / norm[..., None]
    k = np.argmin(np.abs(nh), axis=-1)
    e = np.zeros(nh.shape)
    np.put_along_axis(e, k[..., None], 1.0, axis=-1)
    t1 = np.cross(nh, e)
    t1 /= np.linalg.norm(t1, axis=-1)[..., None]
    t2 = np.cross(nh, t1)
    return norm, nh, t1, t2


def roe_average(qL: np.ndarray, qR: np.ndarray, gas: GasModel):
    rL, uL, _, pL = primitives(qL, gas)
    rR, uR, _, pR = primitives(qR, gas)
    sL, sR = np.sqrt(rL), np.sqrt(rR)
    HL = (qL[..., 4] + pL) / rL
    HR = (qR[..., 4] + pR) / rR
    rho = sL * sR
    u = (sL[..., None] * uL + sR[..., None] * uR) / (sL + sR)[..., None]
    H = (sL * HL + sR * HR) / (sL + sR)
    c2 = (gas.gamma - 1.0) * (H - 0.5 * np.sum(u * u, axis=-1))
    if np.any(c2 <= 0.0):
        raise InadmissibleState("Roe average has non-positive sound speed")
    return rho, u, H, np.sqrt(c2)


def entropy_scaled_eigensystem(rho, u, H, c, n, gas: GasModel):
    """Eigenvalues (..., 5) of the normal flux Jacobian and scaled eigenvectors ``Y`` with ``Y Y^T = dq/dw``."""
    norm, nh, t1, t2 = _unit_basis(np.broadcast_to(n, u.shape))
    un = np.sum(u * nh, axis=-1)
    p = rho * c * c / gas.gamma
    Rm = np.zeros(u.shape[:-1] + (5, 5))
    Rm[..., 0, [0, 1, 4]] = 1.0
    Rm[..., 1:4, 0] = u - c[..., None] * nh
    Rm[..., 1:4, 1] = u
    Rm[..., 1:4, 2] = t1
    Rm[..., 1:4, 3] = t2
    Rm[..., 1:4, 4] = u + c[..., None] * nh
    Rm[..., 4, 0] = H - un * c
    Rm[..., 4, 1] = 0.5 * np.sum(u * u, axis=-1)
    Rm[..., 4, 2] = np.sum(u * t1, axis=-1)
    Rm[..., 4, 3] = np.sum(u * t2, axis=-1)
    Rm[..., 4, 4] = H + un * c
    scale = np.stack([rho / (2 * gas.gamma), (gas.gamma - 1.0) * rho / gas.gamma, p, p, rho / (2 * gas.gamma)], axis=-1)
    Y = Rm * np.sqrt(scale / gas.R)[..., None, :]
    lam = np.stack([un - c, un, un, un, un + c], axis=-1) * norm[..., None]
    return lam, Y


def roe_dissipation(qL: np.ndarray, qR: np.ndarray, n: np.ndarray, gas: GasModel) -> np.ndarray:
    """Symmetric positive semidefinite matrix ``Y |Lambda| Y^T`` (..., 5, 5) at the Roe average."""
    lam, Y = entropy_scaled_eigensystem(*roe_average(qL, qR, gas), n, gas)
    return np.einsum("...ik,...k,...jk->...ij", Y, np.abs(lam), Y)


def burgers_two_point(ui, uj):
    """Entropy-conservative Burgers flux ``(ui^2 + ui uj + uj^2) / 6``."""
    return (ui * ui + ui * uj + uj * uj) / 6.0


# ---------------------------------------------------------------- models used by the semi-discretization


class EulerModel:
    """Compressible gas; viscous terms are active when ``gas.mu > 0`` and ``viscous`` is set."""

    nvar = 5
    naux = NAUX

    def __init__(self, gas: GasModel, viscous: bool = False):
        self.gas = gas
        self.viscous = bool(viscous) and gas.mu > 0.0

    def aux(self, q, check=True):
        return gas_aux(q, self.gas, check)

    def pair_flux(self, ai, aj, n):
        return ec_flux_aux(ai, aj, n, self.gas.gamma)

    def flux(self, q, n):
        return euler_flux_normal(q, n, self.gas)

    def entropy_vars(self, q):
        return entropy_vars(q, self.gas)

    def entropy(self, q):
        return entropy(q, self.gas)

    def dissipation(self, qL, qR, jump, n):
        """``|dF/dW|`` at the Roe average applied to an entropy-variable jump."""
        lam, Y = entropy_scaled_eigensystem(*roe_average(qL, qR, self.gas), n, self.gas)
        return (Y @ (np.abs(lam) * (jump[..., None, :] @ Y)[..., 0, :])[..., None])[..., 0]

    def viscous_flux(self, q, grad_w):
        return viscous_flux(q, grad_w, self.gas)


class BurgersModel:
    """Inviscid Burgers equation ``u_t + sum_m (u^2 / 2)_{x_m} = 0`` with energy entropy."""

    nvar = 1
    naux = 1
    viscous = False

    def aux(self, q, check=True):
        return q

    def pair_flux(self, ai, aj, n):
        return burgers_two_point(ai, aj) * np.sum(n, axis=-1)[..., None]

    def flux(self, q, n):
        return 0.5 * q * q * np.sum(n, axis=-1)[..., None]

    def entropy_vars(self, q):
        return q

    def entropy(self, q):
        return 0.5 * q[..., 0] ** 2

    def dissipation(self, qL, qR, jump, n):
        speed = np.maximum(np.abs(qL[..., 0]), np.abs(qR[..., 0])) * np.abs(np.sum(n, axis=-1))
        return speed[..., None] * jump
