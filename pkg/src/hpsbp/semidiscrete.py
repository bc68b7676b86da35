"""Spatial right-hand side of the entropy-conservative/-stable h/p scheme.

The state is a flat array of shape ``(nodes, nvar)``: elements are grouped
by degree, each element's nodes are stored contiguously in (i, j, k) C
order.  The assembly accumulates the weak residual ``R = M J dq/dt``:

* volume: flux differencing with the skew part of ``2 Q_l`` and the metric
  average ``(a_i + a_j) / 2`` of the element's (optimized) volume metrics;
* interfaces: for every left/right coupling the left node ``i`` and right
  node ``j`` exchange the two-point flux ``f(q_i, q_j; n_j)`` with weight
  ``G_ij = I_LtoR[j, i] W_R[j]``, which is the Hadamard form of the coarse
  side coupling block built from ``P_L I_RtoL``; the right side mirrors it
  with ``-G^T``;
* optional Roe dissipation, BR1-type viscous coupling with an interior
  penalty, and penalty boundary conditions against supplied data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InadmissibleState
from .metrics import MetricSet, face_slice, volume_weights
from .mesh import Mesh
from .physics import EulerModel
from .sbp_core import build_sbp
from . import _kernels


@dataclass(frozen=True)
class SchemeFlags:
    dissipation: bool = False
    viscous: bool = False
    ip_scale: float = 1.0


@dataclass(eq=False)
class _Group:
    p: int
    n: int
    elements: np.ndarray
    start: int
    stop: int
    scale: np.ndarray  # (K, 3) factors 2 / delta_l
    metric: np.ndarray  # (K, n, n, n, 3, 3)
    pairs_i: np.ndarray
    pairs_j: np.ndarray
    scatter: np.ndarray  # (n, npairs)
    D: np.ndarray

    @property
    def K(self) -> int:
        return len(self.elements)


@dataclass(eq=False)
class _Batch:
    """Couplings sharing degrees and sub-face segment (hence one projection matrix)."""

    left: np.ndarray  # (B, nL^2) global node ids
    right: np.ndarray  # (B, nR^2)
    sign_left: np.ndarray  # (B,) +1 high face, -1 low face
    sign_right: np.ndarray
    direction: np.ndarray  # (B,)
    weights: np.ndarray  # (B, nR^2)
    normal: np.ndarray  # (B, nR^2, 3) outward from left
    interp: np.ndarray | None  # (nR^2, nL^2)
    G: np.ndarray | None  # (B, nL^2, nR^2)
    G_rows: np.ndarray | None  # (B, nL^2, 1) row sums of G
    scale_right: np.ndarray  # (B,) 2 / delta of the right element normal to the face


@dataclass(eq=False)
class _BoundaryBatch:
    nodes: np.ndarray  # (B, n^2)
    sign: np.ndarray
    direction: np.ndarray
    weights: np.ndarray
    normal: np.ndarray
    coords: np.ndarray
    scale: np.ndarray


def _skew_pairs(op):
    n = op.n
    I, J = np.triu_indices(n, k=1)
    S = np.zeros((n, len(I)))
    # row i of (Q - Q^T) / P_i is 2 D_ij off the diagonal
    S[I, np.arange(len(I))] = 2.0 * op.D[I, J]
    S[J, np.arange(len(I))] = 2.0 * op.D[J, I]
    return I, J, S


def _apply_axis(M: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(M, arr, axes=(1, axis)), 0, axis)


class Discretization:
    """Precomputed operators and connectivity for ``rhs`` evaluations."""

    def __init__(self, mesh: Mesh, metrics: MetricSet, model, flags: SchemeFlags = SchemeFlags(),
                 boundary_data: Callable[[np.ndarray, float], np.ndarray] | None = None,
                 compiled: bool = True):
        self.mesh = mesh
        self.metrics = metrics
        self.model = model
        self.flags = flags
        self.boundary_data = boundary_data
        self.nvar = model.nvar
        self.viscous = bool(flags.viscous and getattr(model, "viscous", False))
        # compiled loops exist for the five-component gas flux only
        self.compiled = bool(compiled and isinstance(model, EulerModel))
        if mesh.boundary_faces and boundary_data is None:
            raise ValueError("mesh has boundary faces but no boundary data was supplied")
        self._build_groups()
        self._build_batches()

    # ------------------------------------------------------------ layout

    def _build_groups(self):
        mesh, metrics = self.mesh, self.metrics
        degrees = mesh.degrees()
        self.groups: list[_Group] = []
        self.elem_group = np.zeros(len(mesh.elements), dtype=int)
        self.elem_offset = np.zeros(len(mesh.elements), dtype=int)
        start = 0
        mw, jac, met, scale = [], [], [], []
        for p in sorted(set(degrees.tolist())):
            ids = np.flatnonzero(degrees == p)
            op = build_sbp(int(p))
            n = op.n
            I, J, S = _skew_pairs(op)
            stop = start + len(ids) * n**3
            g = _Group(int(p), n, ids, start, stop,
                       np.array([2.0 / mesh.elements[e].delta for e in ids]),
                       np.stack([metrics.metrics[e] for e in ids]), I, J, S, op.D)
            for k, e in enumerate(ids):
                self.elem_group[e] = len(self.groups)
                self.elem_offset[e] = start + k * n**3
                mw.append(volume_weights(int(p), mesh.elements[e].delta).ravel())
                jac.append(metrics.jac[e].ravel())
                met.append(metrics.metrics[e].reshape(-1, 3, 3))
                scale.append(np.repeat(2.0 / mesh.elements[e].delta[None, :], n**3, axis=0))
            self.groups.append(g)
            start = stop
        self.nnodes = start
        self.mass = np.concatenate(mw)
        self.jac = np.concatenate(jac)
        self.mass_jac = self.mass * self.jac
        self.node_metric = np.concatenate(met)
        self.node_scale = np.concatenate(scale)

    def face_node_ids(self, element: int, face: int) -> np.ndarray:
        n = self.mesh.elements[element].degree + 1
        local = np.arange(n**3).reshape(n, n, n)[face_slice(face, n)]
        return self.elem_offset[element] + local.ravel()

    def _build_batches(self):
        buckets: dict = {}
        for c in self.metrics.couplings:
            seg_key = (c.pair_a.right_segment, c.pair_b.right_segment)
            key = (c.p_left, c.p_right, c.identity, seg_key)
            buckets.setdefault(key, []).append(c)
        self.batches: list[_Batch] = []
        for key in sorted(buckets, key=str):
            cs = buckets[key]
            interp = None if cs[0].identity else cs[0].interp
            W = np.stack([c.weights for c in cs])
            G = None if interp is None else interp.T[None, :, :] * W[:, None, :]
            self.batches.append(_Batch(
                left=np.stack([self.face_node_ids(c.left.element, c.left.face) for c in cs]),
                right=np.stack([self.face_node_ids(c.right.element, c.right.face) for c in cs]),
                sign_left=np.array([1.0 if c.left.side else -1.0 for c in cs]),
                sign_right=np.array([1.0 if c.right.side else -1.0 for c in cs]),
                direction=np.array([c.left.direction for c in cs]),
                weights=W,
                normal=np.stack([c.normal for c in cs]),
                interp=interp,
                G=G,
                G_rows=None if G is None else G.sum(axis=2)[..., None],
                scale_right=np.array([2.0 / self.mesh.elements[c.right.element].delta[c.right.direction] for c in cs]),
            ))
        bb: dict = {}
        for b in self.metrics.boundary:
            bb.setdefault(self.mesh.elements[b.face.element].degree, []).append(b)
        self.boundary_batches: list[_BoundaryBatch] = []
        for p in sorted(bb):
            bs = bb[p]
            self.boundary_batches.append(_BoundaryBatch(
                nodes=np.stack([self.face_node_ids(b.face.element, b.face.face) for b in bs]),
                sign=np.array([1.0 if b.face.side else -1.0 for b in bs]),
                direction=np.array([b.face.direction for b in bs]),
                weights=np.stack([b.weights for b in bs]),
                normal=np.stack([b.normal for b in bs]),
                coords=np.stack([b.coords for b in bs]),
                scale=np.array([2.0 / self.mesh.elements[b.face.element].delta[b.face.direction] for b in bs]),
            ))

    # ------------------------------------------------------------ helpers

    def zeros(self) -> np.ndarray:
        return np.zeros((self.nnodes, self.nvar))

    def group_view(self, arr: np.ndarray, g: _Group) -> np.ndarray:
        return arr[g.start:g.stop].reshape((g.K, g.n, g.n, g.n) + arr.shape[1:])

    def element_view(self, arr: np.ndarray, element: int) -> np.ndarray:
        n = self.mesh.elements[element].degree + 1
        o = self.elem_offset[element]
        return arr[o:o + n**3].reshape((n, n, n) + arr.shape[1:])

    def node_coordinates(self) -> np.ndarray:
        from .mesh import volume_coordinates

        x = np.zeros((self.nnodes, 3))
        for e in self.mesh.elements:
            self.element_view(x, e.id)[...] = volume_coordinates(self.mesh, e)
        return x

    # ------------------------------------------------------------ volume terms

    def volume_inviscid(self, q: np.ndarray, aux: np.ndarray | None = None,
                        include_boundary: bool = False) -> np.ndarray:
        """Strong-form flux-differencing volume term ``sum_l (2/delta_l) (2 D_l o F) 1`` per node.

        By default only the skew part ``Q_l - Q_l^T`` of ``2 Q_l`` is applied;
        the boundary part is then carried by the interface terms.  With
        ``include_boundary`` the diagonal part ``E_l / P`` acting on the
        nodal flux is added back.
        """
        if aux is None:
            aux = self.model.aux(q)
        out = np.zeros((self.nnodes, self.nvar))
        for g in self.groups:
            a = self.group_view(aux, g)
            res = self.group_view(out, g)
            if self.compiled:
                _kernels.volume_ec(a, g.metric, g.scale, g.scatter, g.pairs_i, g.pairs_j,
                                   self.model.gas.gamma, res)
            else:
                for l in range(3):
                    A = np.moveaxis(a, l + 1, 1)
                    Ml = np.moveaxis(g.metric[..., l, :], l + 1, 1)
                    nbar = 0.5 * (Ml[:, g.pairs_i] + Ml[:, g.pairs_j])
                    F = self.model.pair_flux(A[:, g.pairs_i], A[:, g.pairs_j], nbar)
                    contrib = np.tensordot(F, g.scatter, axes=(1, 1))  # pair axis -> last
                    res += g.scale[:, l, None, None, None, None] * np.moveaxis(contrib, -1, l + 1)
            if include_boundary:
                op = build_sbp(g.p)
                qg = self.group_view(q, g)
                for l in range(3):
                    for end, sign in ((0, -1.0), (g.n - 1, 1.0)):
                        idx = [slice(None)] * 4
                        idx[l + 1] = end
                        idx = tuple(idx)
                        flux = self.model.flux(qg[idx], g.metric[idx][..., l, :])
                        res[idx] += (g.scale[:, l, None, None, None] * sign / op.P[end]) * flux
        return out

    def reference_gradient(self, w: np.ndarray) -> np.ndarray:
        """``(2/delta_a) D_a w`` for a = 1..3, shape (nodes, 3, nvar)."""
        out = np.zeros((self.nnodes, 3, self.nvar))
        for g in self.groups:
            wg = self.group_view(w, g)
            og = self.group_view(out, g)
            for a in range(3):
                og[..., a, :] = g.scale[:, a, None, None, None, None] * _apply_axis(g.D, wg, a + 1)
        return out

    def divergence(self, flux: np.ndarray) -> np.ndarray:
        """``sum_l (2/delta_l) D_l flux_l`` for contravariant fluxes (nodes, 3, nvar)."""
        out = np.zeros((self.nnodes, self.nvar))
        for g in self.groups:
            fg = self.group_view(flux, g)
            og = self.group_view(out, g)
            for l in range(3):
                og += g.scale[:, l, None, None, None, None] * _apply_axis(g.D, fg[..., l, :], l + 1)
        return out

    # ------------------------------------------------------------ full residual

    def residual(self, q: np.ndarray, t: float = 0.0) -> np.ndarray:
        """Weak residual ``M J dq/dt`` (nodes, nvar)."""
        model = self.model
        aux = model.aux(q)
        res = -self.mass[:, None] * self.volume_inviscid(q, aux)
        idx_parts, val_parts = [], []
        need_w = self.flags.dissipation or self.viscous
        w = model.entropy_vars(q) if need_w else None

        for b in self.batches:
            aL, aR = aux[b.left], aux[b.right]
            if b.interp is None:
                F = model.pair_flux(aL, aR, b.normal)
                WF = b.weights[..., None] * F
                idx_parts += [b.left, b.right]
                val_parts += [-WF, WF]
            elif self.compiled:
                outL = np.zeros(b.left.shape + (5,))
                outR = np.zeros(b.right.shape + (5,))
                _kernels.face_ec_dense(aL, aR, b.normal, b.G, model.gas.gamma, outL, outR)
                idx_parts += [b.left, b.right]
                val_parts += [-outL, outR]
            else:
                F = model.pair_flux(aL[:, :, None, :], aR[:, None, :, :], b.normal[:, None, :, :])
                GF = b.G[..., None] * F
                idx_parts += [b.left, b.right]
                val_parts += [-GF.sum(axis=2), GF.sum(axis=1)]
            if self.flags.dissipation:
                qL, qR = q[b.left], q[b.right]
                wL, wR = w[b.left], w[b.right]
                if b.interp is not None:
                    qL = b.interp @ qL
                    wL = b.interp @ wL
                Dv = b.weights[..., None] * self._dissipation(qL, qR, wL - wR, b.normal)
                left = Dv if b.interp is None else b.interp.T @ Dv
                idx_parts += [b.left, b.right]
                val_parts += [-left, Dv]

        if self.boundary_batches:
            for b in self.boundary_batches:
                qi = q[b.nodes]
                qb = self.boundary_data(b.coords, t)
                F = model.pair_flux(aux[b.nodes], model.aux(qb), b.normal)
                val = -b.weights[..., None] * F
                if self.flags.dissipation:
                    jump = w[b.nodes] - model.entropy_vars(qb)
                    val = val - b.weights[..., None] * self._dissipation(qi, qb, jump, b.normal)
                idx_parts.append(b.nodes)
                val_parts.append(val)

        if self.viscous:
            vi, vv = self._viscous(q, w, t)
            res += vv
            idx_parts += vi[0]
            val_parts += vi[1]

        self._scatter(res, idx_parts, val_parts)
        return res

    def _scatter(self, res, idx_parts, val_parts):
        if not idx_parts:
            return
        idx = np.concatenate([i.ravel() for i in idx_parts])
        val = np.concatenate([v.reshape(-1, self.nvar) for v in val_parts])
        for k in range(self.nvar):
            res[:, k] += np.bincount(idx, weights=val[:, k], minlength=self.nnodes)

    def _dissipation(self, qL, qR, jump, normal):
        if not self.compiled:
            return self.model.dissipation(qL, qR, jump, normal)
        gas = self.model.gas
        out = np.empty(jump.shape)
        if not _kernels.roe_apply(qL, qR, jump, normal, gas.R, gas.gamma, out):
            raise InadmissibleState("Roe average has non-positive sound speed")
        return out

    def _ip_matrix_apply(self, q1, q2, jac, normal, scale, jump):
        """Interior-penalty action ``s (2/delta) (n^T C n)_avg / J jump``."""
        if self.compiled:
            gas = self.model.gas
            avg = np.empty(jump.shape)
            _kernels.ip_apply(q1, q2, jac, normal, jump, gas.mu, gas.kappa, gas.R, gas.gamma, avg)
        else:
            g = normal[..., :, None] * (jump / jac[..., None])[..., None, :]
            f1 = (normal[..., None, :] @ self.model.viscous_flux(q1, g))[..., 0, :]
            f2 = (normal[..., None, :] @ self.model.viscous_flux(q2, g))[..., 0, :]
            avg = 0.5 * (f1 + f2)
        return self.flags.ip_scale * scale[:, None, None] * avg

    def _viscous(self, q, w, t):
        theta = self.reference_gradient(w)
        lift_idx, lift_val, lift_dir = [], [], []
        for b in self.batches:
            wL, wR = w[b.left], w[b.right]
            if b.interp is None:
                lL = 0.5 * b.sign_left[:, None, None] * b.weights[..., None] * (wR - wL)
                lR = 0.5 * b.sign_right[:, None, None] * b.weights[..., None] * (wL - wR)
            else:
                lL = 0.5 * b.sign_left[:, None, None] * (
                    b.G @ wR - b.G_rows * wL)
                lR = 0.5 * b.sign_right[:, None, None] * b.weights[..., None] * (
                    b.interp @ wL - wR)
            for nodes, val in ((b.left, lL), (b.right, lR)):
                lift_idx.append(nodes)
                lift_val.append(val)
                lift_dir.append(np.broadcast_to(b.direction[:, None], nodes.shape))
        if self.boundary_batches:
            for b in self.boundary_batches:
                wb = self.model.entropy_vars(self.boundary_data(b.coords, t))
                lift_idx.append(b.nodes)
                lift_val.append(b.sign[:, None, None] * b.weights[..., None] * (wb - w[b.nodes]))
                lift_dir.append(np.broadcast_to(b.direction[:, None], b.nodes.shape))
        idx = np.concatenate([i.ravel() for i in lift_idx])
        dirs = np.concatenate([d.ravel() for d in lift_dir])
        val = np.concatenate([v.reshape(-1, self.nvar) for v in lift_val])
        flat = idx * 3 + dirs
        th = theta.reshape(-1, self.nvar)
        inv_mass = np.repeat(1.0 / self.mass, 3)
        for k in range(self.nvar):
            th[:, k] += np.bincount(flat, weights=val[:, k], minlength=3 * self.nnodes) * inv_mass

        # Cartesian gradient and contravariant viscous flux
        if self.compiled:
            gas = self.model.gas
            flux = np.empty_like(theta)
            _kernels.viscous_node_flux(q, theta, self.node_metric, self.jac, gas.mu, gas.kappa, gas.R, gas.gamma,
                                       flux)
        else:
            grad = self.node_metric.transpose(0, 2, 1) @ theta / self.jac[:, None, None]
            flux = self.node_metric @ self.model.viscous_flux(q, grad)
        vol = self.mass[:, None] * self.divergence(flux)

        idx_parts, val_parts = [], []
        for b in self.batches:
            gL = b.sign_left[:, None, None] * flux[b.left, b.direction[:, None]]
            gR = b.sign_right[:, None, None] * flux[b.right, b.direction[:, None]]
            wL, wR = w[b.left], w[b.right]
            jR = self.jac[b.right]
            if b.interp is None:
                avg = -0.5 * b.weights[..., None] * (gL + gR)
                idx_parts += [b.left, b.right]
                val_parts += [avg, avg]
                qL, wLi, jL = q[b.left], wL, self.jac[b.left]
            else:
                valL = -0.5 * (b.G_rows * gL + b.G @ gR)
                valR = -0.5 * b.weights[..., None] * (gR + b.interp @ gL)
                idx_parts += [b.left, b.right]
                val_parts += [valL, valR]
                qL = b.interp @ q[b.left]
                wLi = b.interp @ wL
                jL = self.jac[b.left] @ b.interp.T
            pen = b.weights[..., None] * self._ip_matrix_apply(qL, q[b.right], 0.5 * (jL + jR), b.normal,
                                                                b.scale_right, wLi - wR)
            left = pen if b.interp is None else b.interp.T @ pen
            idx_parts += [b.left, b.right]
            val_parts += [-left, pen]
        if self.boundary_batches:
            for b in self.boundary_batches:
                qb = self.boundary_data(b.coords, t)
                jump = w[b.nodes] - self.model.entropy_vars(qb)
                pen = b.weights[..., None] * self._ip_matrix_apply(q[b.nodes], qb, self.jac[b.nodes], b.normal,
                                                                    b.scale, jump)
                idx_parts.append(b.nodes)
                val_parts.append(-pen)
        return (idx_parts, val_parts), vol

    def rhs(self, q: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.residual(q, t) / self.mass_jac[:, None]

    # ------------------------------------------------------------ functionals

    def entropy_rate(self, q: np.ndarray, dqdt: np.ndarray) -> float:
        """Discrete ``int dS/dt``: ``sum w^T M J dq/dt``."""
        w = self.model.entropy_vars(q)
        return float(np.sum(w * (self.mass_jac[:, None] * dqdt)))

    def total_entropy(self, q: np.ndarray) -> float:
        return float(np.sum(self.mass_jac * self.model.entropy(q)))

    def integrals(self, q: np.ndarray) -> np.ndarray:
        return np.sum(self.mass_jac[:, None] * q, axis=0)

    def volume(self) -> float:
        return float(np.sum(self.mass_jac))


def rhs(disc: Discretization, q: np.ndarray, t: float = 0.0) -> np.ndarray:
    return disc.rhs(q, t)


def entropy_rate(disc: Discretization, q: np.ndarray, dqdt: np.ndarray) -> float:
    return disc.entropy_rate(q, dqdt)
