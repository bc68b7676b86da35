"""Compiled loops for the gas model: two-point flux, viscous flux and Roe dissipation.

The two-point flux routines evaluate the same flux as ``physics.ec_flux_aux``
on the node auxiliaries ``(rho, u1, u2, u3, p, beta, |u|^2)`` without
forming the large pair arrays of the vectorized path.  The pointwise
viscous and dissipation routines mirror ``physics.viscous_flux`` and
``EulerModel.dissipation``.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _log_mean(x, y):
    f2 = ((x - y) / (x + y)) ** 2
    if f2 < 1e-4:
        return (x + y) / (2.0 + f2 * (2.0 / 3.0 + f2 * (2.0 / 5.0 + f2 * (2.0 / 7.0))))
    hi, lo = max(x, y), min(x, y)  # argument order fixed for exact symmetry
    return (hi - lo) / np.log(hi / lo)


@njit(cache=True, inline="always")
def _flux(ai, aj, n0, n1, n2, gamma, f):
    rho_ln = _log_mean(ai[0], aj[0])
    beta_ln = _log_mean(ai[5], aj[5])
    u0 = 0.5 * (ai[1] + aj[1])
    u1 = 0.5 * (ai[2] + aj[2])
    u2 = 0.5 * (ai[3] + aj[3])
    p_hat = 0.5 * (ai[0] + aj[0]) / (ai[5] + aj[5])
    usq = 0.5 * (ai[6] + aj[6])
    mass = rho_ln * (u0 * n0 + u1 * n1 + u2 * n2)
    f[0] = mass
    f[1] = mass * u0 + p_hat * n0
    f[2] = mass * u1 + p_hat * n1
    f[3] = mass * u2 + p_hat * n2
    f[4] = mass * (0.5 / ((gamma - 1.0) * beta_ln) - 0.5 * usq) + u0 * f[1] + u1 * f[2] + u2 * f[3]


@njit(cache=True)
def volume_ec(aux, metric, scale, S, pi, pj, gamma, out):
    """Accumulate ``sum_l scale_l sum_pairs S[:, pair] F_pair`` into ``out`` (K, n, n, n, 5)."""
    K, n = aux.shape[0], aux.shape[1]
    npairs = pi.shape[0]
    f = np.empty(5)
    for k in range(K):
        for l in range(3):
            s = scale[k, l]
            for a in range(n):
                for b in range(n):
                    for p in range(npairs):
                        i, j = pi[p], pj[p]
                        if l == 0:
                            ia, ja = (k, i, a, b), (k, j, a, b)
                        elif l == 1:
                            ia, ja = (k, a, i, b), (k, a, j, b)
                        else:
                            ia, ja = (k, a, b, i), (k, a, b, j)
                        mi = metric[ia][l]
                        mj = metric[ja][l]
                        _flux(aux[ia], aux[ja], 0.5 * (mi[0] + mj[0]), 0.5 * (mi[1] + mj[1]),
                              0.5 * (mi[2] + mj[2]), gamma, f)
                        wi = s * S[i, p]
                        wj = s * S[j, p]
                        oi = out[ia]
                        oj = out[ja]
                        for v in range(5):
                            oi[v] += wi * f[v]
                            oj[v] += wj * f[v]


@njit(cache=True)
def face_ec_dense(auxL, auxR, normal, G, gamma, outL, outR):
    """``outL_i = sum_j G_ij f(L_i, R_j; n_j)`` and ``outR_j = sum_i G_ij f(L_i, R_j; n_j)``."""
    B, nl, nr = G.shape
    f = np.empty(5)
    for b in range(B):
        for i in range(nl):
            for j in range(nr):
                g = G[b, i, j]
                nv = normal[b, j]
                _flux(auxL[b, i], auxR[b, j], nv[0], nv[1], nv[2], gamma, f)
                for v in range(5):
                    outL[b, i, v] += g * f[v]
                    outR[b, j, v] += g * f[v]


@njit(cache=True)
def face_ec_pointwise(auxL, auxR, normal, gamma, out):
    B, m = normal.shape[0], normal.shape[1]
    f = np.empty(5)
    for b in range(B):
        for i in range(m):
            nv = normal[b, i]
            _flux(auxL[b, i], auxR[b, i], nv[0], nv[1], nv[2], gamma, f)
            for v in range(5):
                out[b, i, v] = f[v]


@njit(cache=True, inline="always")
def _viscous(q, g, mu, kappa, R, gamma, F):
    """``F[m, :]`` from Cartesian entropy-variable gradients ``g[m, :]``."""
    rho = q[0]
    u0, u1, u2 = q[1] / rho, q[2] / rho, q[3] / rho
    T = (gamma - 1.0) * (q[4] - 0.5 * rho * (u0 * u0 + u1 * u1 + u2 * u2)) / (rho * R)
    gu = np.empty((3, 3))
    for j in range(3):
        gu[j, 0] = T * (g[j, 1] + u0 * g[j, 4])
        gu[j, 1] = T * (g[j, 2] + u1 * g[j, 4])
        gu[j, 2] = T * (g[j, 3] + u2 * g[j, 4])
    div = gu[0, 0] + gu[1, 1] + gu[2, 2]
    for m in range(3):
        F[m, 0] = 0.0
        for i in range(3):
            tau = mu * (gu[m, i] + gu[i, m])
            if i == m:
                tau -= mu * 2.0 / 3.0 * div
            F[m, i + 1] = tau
        F[m, 4] = F[m, 1] * u0 + F[m, 2] * u1 + F[m, 3] * u2 + kappa * T * T * g[m, 4]


@njit(cache=True)
def viscous_node_flux(q, theta, metric, jac, mu, kappa, R, gamma, out):
    """Contravariant viscous flux ``out[:, l] = sum_m a_lm F_m`` with ``grad_m = sum_l a_lm theta_l / J``."""
    g = np.empty((3, 5))
    F = np.empty((3, 5))
    for k in range(q.shape[0]):
        a = metric[k]
        for m in range(3):
            for v in range(5):
                g[m, v] = (a[0, m] * theta[k, 0, v] + a[1, m] * theta[k, 1, v] + a[2, m] * theta[k, 2, v]) / jac[k]
        _viscous(q[k], g, mu, kappa, R, gamma, F)
        for l in range(3):
            for v in range(5):
                out[k, l, v] = a[l, 0] * F[0, v] + a[l, 1] * F[1, v] + a[l, 2] * F[2, v]


@njit(cache=True)
def ip_apply(q1, q2, jac, normal, jump, mu, kappa, R, gamma, out):
    """``out = (n^T F(q1, n jump / J) + n^T F(q2, n jump / J)) / 2`` at every face node."""
    g = np.empty((3, 5))
    F1 = np.empty((3, 5))
    F2 = np.empty((3, 5))
    B, m = jac.shape[0], jac.shape[1]
    for b in range(B):
        for i in range(m):
            n = normal[b, i]
            for d in range(3):
                for v in range(5):
                    g[d, v] = n[d] * jump[b, i, v] / jac[b, i]
            _viscous(q1[b, i], g, mu, kappa, R, gamma, F1)
            _viscous(q2[b, i], g, mu, kappa, R, gamma, F2)
            for v in range(5):
                out[b, i, v] = 0.5 * (n[0] * (F1[0, v] + F2[0, v]) + n[1] * (F1[1, v] + F2[1, v])
                                      + n[2] * (F1[2, v] + F2[2, v]))


@njit(cache=True)
def roe_apply(qL, qR, jump, normal, R, gamma, out):
    """``Y |Lambda| Y^T jump`` at the Roe average of each node pair, as in ``EulerModel.dissipation``.

    Returns False when an average has non-positive sound speed.
    """
    Rm = np.empty((5, 5))
    lam = np.empty(5)
    scale = np.empty(5)
    t1 = np.empty(3)
    t2 = np.empty(3)
    nh = np.empty(3)
    c_ = np.empty(5)
    B, m = jump.shape[0], jump.shape[1]
    for b in range(B):
        for i in range(m):
            a, z = qL[b, i], qR[b, i]
            rL, rR = a[0], z[0]
            uL0, uL1, uL2 = a[1] / rL, a[2] / rL, a[3] / rL
            uR0, uR1, uR2 = z[1] / rR, z[2] / rR, z[3] / rR
            pL = (gamma - 1.0) * (a[4] - 0.5 * rL * (uL0 * uL0 + uL1 * uL1 + uL2 * uL2))
            pR = (gamma - 1.0) * (z[4] - 0.5 * rR * (uR0 * uR0 + uR1 * uR1 + uR2 * uR2))
            sL, sR = np.sqrt(rL), np.sqrt(rR)
            HL, HR = (a[4] + pL) / rL, (z[4] + pR) / rR
            rho = sL * sR
            u0 = (sL * uL0 + sR * uR0) / (sL + sR)
            u1 = (sL * uL1 + sR * uR1) / (sL + sR)
            u2 = (sL * uL2 + sR * uR2) / (sL + sR)
            H = (sL * HL + sR * HR) / (sL + sR)
            usq = u0 * u0 + u1 * u1 + u2 * u2
            c2 = (gamma - 1.0) * (H - 0.5 * usq)
            if not c2 > 0.0:
                return False
            c = np.sqrt(c2)
            n = normal[b, i]
            norm = np.sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2])
            for d in range(3):
                nh[d] = n[d] / norm
            # tangent basis from the least aligned coordinate axis
            k = 0
            if abs(nh[1]) < abs(nh[k]):
                k = 1
            if abs(nh[2]) < abs(nh[k]):
                k = 2
            e0, e1, e2 = 0.0, 0.0, 0.0
            if k == 0:
                e0 = 1.0
            elif k == 1:
                e1 = 1.0
            else:
                e2 = 1.0
            t1[0] = nh[1] * e2 - nh[2] * e1
            t1[1] = nh[2] * e0 - nh[0] * e2
            t1[2] = nh[0] * e1 - nh[1] * e0
            tn = np.sqrt(t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2])
            for d in range(3):
                t1[d] /= tn
            t2[0] = nh[1] * t1[2] - nh[2] * t1[1]
            t2[1] = nh[2] * t1[0] - nh[0] * t1[2]
            t2[2] = nh[0] * t1[1] - nh[1] * t1[0]
            un = u0 * nh[0] + u1 * nh[1] + u2 * nh[2]
            p = rho * c2 / gamma
            Rm[0, 0], Rm[0, 1], Rm[0, 2], Rm[0, 3], Rm[0, 4] = 1.0, 1.0, 0.0, 0.0, 1.0
            uu = (u0, u1, u2)
            for d in range(3):
                Rm[d + 1, 0] = uu[d] - c * nh[d]
                Rm[d + 1, 1] = uu[d]
                Rm[d + 1, 2] = t1[d]
                Rm[d + 1, 3] = t2[d]
                Rm[d + 1, 4] = uu[d] + c * nh[d]
            Rm[4, 0] = H - un * c
            Rm[4, 1] = 0.5 * usq
            Rm[4, 2] = u0 * t1[0] + u1 * t1[1] + u2 * t1[2]
            Rm[4, 3] = u0 * t2[0] + u1 * t2[1] + u2 * t2[2]
            Rm[4, 4] = H + un * c
            scale[0] = rho / (2 * gamma)
            scale[1] = (gamma - 1.0) * rho / gamma
            scale[2] = p
            scale[3] = p
            scale[4] = rho / (2 * gamma)
            lam[0] = abs((un - c) * norm)
            lam[1] = abs(un * norm)
            lam[2] = lam[1]
            lam[3] = lam[1]
            lam[4] = abs((un + c) * norm)
            for col in range(5):
                s = np.sqrt(scale[col] / R)
                acc = 0.0
                for r in range(5):
                    Rm[r, col] *= s
                    acc += jump[b, i, r] * Rm[r, col]
                c_[col] = lam[col] * acc
            for r in range(5):
                out[b, i, r] = (Rm[r, 0] * c_[0] + Rm[r, 1] * c_[1] + Rm[r, 2] * c_[2] + Rm[r, 3] * c_[3]
                                + Rm[r, 4] * c_[4])
    return True
