"""Analytic and GCL-optimized metric terms.

All metric quantities are expressed in root reference coordinates:
``jac`` is the root Jacobian and ``a[..., l, m]`` is root-Jacobian times
``d xi_hat_l / d x_m``.  Element operators carry the child-extent factors
``2 / delta_l``; the diagonal mass matrix is ``delta1 delta2 delta3 / 8``
times the tensor LGL weights.

Face coupling convention: for every coupling the "left" side is the coarse
(or lower-degree) element, the "right" side owns the face metric, which is
the analytic root face metric evaluated at its own face nodes, signed
outward from the left element.  The left element receives these metrics
through the transposed projection weighted by the right face quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import GclUnsolvable, GeometryInvalid
from .interpolation import InterpPair, build_pair
from .mesh import Element, FaceRef, Mesh, element_tensor_points, face_geometry, tensor_map
from .sbp_core import build_sbp

GCL_RHS_TOL = 1e-11
PINV_CUTOFF = 1e-12


def face_slice(face: int, n: int) -> tuple:
    d, s = divmod(face, 2)
    idx = [slice(None)] * 3
    idx[d] = n - 1 if s else 0
    return tuple(idx)


def face_weights(p: int, delta: np.ndarray, direction: int) -> np.ndarray:
    """Face quadrature weights ``prod_{k != d} delta_k / 4 * P x P``, shape (n, n)."""
    P = build_sbp(p).P
    t = [k for k in range(3) if k != direction]
    return delta[t[0]] * delta[t[1]] / 4.0 * np.outer(P, P)


def volume_weights(p: int, delta: np.ndarray) -> np.ndarray:
    P = build_sbp(p).P
    return np.prod(delta) / 8.0 * np.einsum("i,j,k->ijk", P, P, P)


def analytic_metrics(mesh: Mesh, element: Element) -> tuple[np.ndarray, np.ndarray]:
    """Root Jacobian and cofactor metrics at the element's volume nodes.

    Returns ``jac`` (n, n, n) and ``a`` (n, n, n, 3, 3) with
    ``a[..., l, m] = jac * d xi_hat_l / d x_m``.
    """
    pts = element_tensor_points(element, build_sbp(element.degree).nodes)
    _, A = tensor_map(mesh.root_nodes[element.root], *pts)
    jac = np.linalg.det(A)
    if np.min(jac) <= 0.0:
        raise GeometryInvalid(f"element {element.id} has non-positive Jacobian {np.min(jac):.3e}")
    a = np.stack(
        [np.cross(A[..., :, 1], A[..., :, 2]), np.cross(A[..., :, 2], A[..., :, 0]), np.cross(A[..., :, 0], A[..., :, 1])],
        axis=-2,
    )
    return jac, a


@dataclass(eq=False)
class Coupling:
    """One left-face / right-face pairing of an interface.

    ``interp`` is the dense ``(nR^2, nL^2)`` left-to-right face projection
    (``None`` for same-degree conforming faces, where it is the identity),
    ``weights`` the right face quadrature (nR^2,) and ``normal`` the right
    face metric (nR^2, 3) signed outward from the left element.
    """

    interface: int
    left: FaceRef
    right: FaceRef
    p_left: int
    p_right: int
    pair_a: InterpPair
    pair_b: InterpPair
    interp: np.ndarray | None
    weights: np.ndarray
    normal: np.ndarray
    coords: np.ndarray
    conforming: bool

    @property
    def identity(self) -> bool:
        return self.interp is None


@dataclass(eq=False)
class BoundaryFace:
    face: FaceRef
    weights: np.ndarray
    normal: np.ndarray
    coords: np.ndarray


@dataclass(eq=False)
class GclSystem:
    """Per-(degree, extent) constraint matrix ``[Q1^T Q2^T Q3^T]`` and its pseudoinverse."""

    matrix: np.ndarray
    pinv: np.ndarray
    singular_values: np.ndarray
    null_vector: np.ndarray


@dataclass(eq=False)
class MetricSet:
    jac: list[np.ndarray]
    metrics: list[np.ndarray]
    target: list[np.ndarray]
    rhs: list[np.ndarray]
    couplings: list[Coupling]
    boundary: list[BoundaryFace]
    residual: np.ndarray
    target_residual: np.ndarray
    rhs_sum: np.ndarray
    optimized: bool
    systems: dict = field(default_factory=dict)


def _kron3(A, B, C):
    return np.kron(np.kron(A, B), C)


@lru_cache(maxsize=None)
def gcl_system(p: int, delta: tuple[float, float, float]) -> GclSystem:
    op = build_sbp(p)
    n = op.n
    I = np.eye(n)
    M = np.diag(volume_weights(p, np.asarray(delta)).ravel())
    Ds = [_kron3(op.D, I, I), _kron3(I, op.D, I), _kron3(I, I, op.D)]
    Qs = [(2.0 / delta[l]) * (M @ Ds[l]) for l in range(3)]
    mat = np.hstack([Q.T for Q in Qs])
    U, s, Vt = np.linalg.svd(mat, full_matrices=False)
    keep = s > PINV_CUTOFF * s[0]
    pinv = (Vt[keep].T / s[keep]) @ U[:, keep].T
    null = U[:, np.argmin(s)]
    for arr in (mat, pinv, s):
        arr.setflags(write=False)
    return GclSystem(mat, pinv, s, null)



def build_couplings(mesh: Mesh) -> list[Coupling]:
    """Expand interfaces into left/right face couplings with their operators and face metrics."""
    out = []
    for k, itf in enumerate(mesh.interfaces):
        L = mesh.elements[itf.left.element]
        for child, seg in zip(itf.children, itf.segments):
            R = mesh.elements[child.element]
            left, right = itf.left, child
            if itf.kind == "conforming" and L.degree > R.degree:
                left, right, L_, R_ = child, itf.left, R, L
            else:
                L_, R_ = L, R
            pL, pR = L_.degree, R_.degree
            pair_a = build_pair((-1.0, 1.0), pL, seg[0], pR)
            pair_b = build_pair((-1.0, 1.0), pL, seg[1], pR)
            same = itf.kind == "conforming" and pL == pR
            interp = None if same else np.kron(pair_a.left_to_right, pair_b.left_to_right)
            d = itf.direction
            W = face_weights(pR, R_.delta, d).ravel()
            coords, normal_r = face_geometry(mesh, R_, right.face)
            # outward from the left element is inward for the right element
            out.append(
                Coupling(k, left, right, pL, pR, pair_a, pair_b, interp, W, -normal_r.reshape(-1, 3),
                         coords.reshape(-1, 3), itf.kind == "conforming")
            )
    return out


def build_boundary(mesh: Mesh) -> list[BoundaryFace]:
    out = []
    for f in mesh.boundary_faces:
        el = mesh.elements[f.element]
        coords, normal = face_geometry(mesh, el, f.face)
        W = face_weights(el.degree, el.delta, f.direction).ravel()
        out.append(BoundaryFace(f, W, normal.reshape(-1, 3), coords.reshape(-1, 3)))
    return out


def gcl_rhs(mesh: Mesh, couplings: list[Coupling], boundary: list[BoundaryFace]) -> list[np.ndarray]:
    """Surface right-hand sides ``c_m`` per element, shape (n, n, n, 3)."""
    rhs = [np.zeros((e.degree + 1,) * 3 + (3,)) for e in mesh.elements]
    for c in couplings:
        nL, nR = c.p_left + 1, c.p_right + 1
        wn = c.weights[:, None] * c.normal
        left_part = wn if c.identity else c.interp.T @ wn
        rhs[c.left.element][face_slice(c.left.face, nL)] += left_part.reshape(nL, nL, 3)
        rhs[c.right.element][face_slice(c.right.face, nR)] -= wn.reshape(nR, nR, 3)
    for b in boundary:
        n = mesh.elements[b.face.element].degree + 1
        rhs[b.face.element][face_slice(b.face.face, n)] += (b.weights[:, None] * b.normal).reshape(n, n, 3)
    return rhs


def _stack_metrics(a: np.ndarray) -> np.ndarray:
    """(n,n,n,3,3)[l,m] -> (3N, 3) with rows grouped by l, columns m."""
    n = a.shape[0]
    return np.concatenate([a[..., l, :].reshape(n**3, 3) for l in range(3)], axis=0)


def _unstack_metrics(v: np.ndarray, n: int) -> np.ndarray:
    N = n**3
    return np.stack([v[l * N:(l + 1) * N].reshape(n, n, n, 3) for l in range(3)], axis=-2)


def gcl_residual(system: GclSystem, a: np.ndarray, c: np.ndarray) -> float:
    n = a.shape[0]
    return float(np.max(np.abs(system.matrix @ _stack_metrics(a) - c.reshape(n**3, 3))))


def optimize_metrics(system: GclSystem, target: np.ndarray, c: np.ndarray, element: int = -1) -> np.ndarray:
    """Closest metrics (2-norm) to ``target`` satisfying ``sum_l Q_l^T a^l_m = c_m``."""
    n = target.shape[0]
    cm = c.reshape(n**3, 3)
    total = np.abs(cm.sum(axis=0))
    if np.max(total) > GCL_RHS_TOL:
        raise GclUnsolvable(
            f"element {element}: surface right-hand side sums to {total.max():.3e} > {GCL_RHS_TOL:.0e}"
        )
    at = _stack_metrics(target)
    a = at - system.pinv @ (system.matrix @ at - cm)
    return _unstack_metrics(a, n)


def compute_metrics(mesh: Mesh, optimize: bool = True) -> MetricSet:
    """Analytic Jacobians, face metrics, surface right-hand sides and volume metrics."""
    couplings = build_couplings(mesh)
    boundary = build_boundary(mesh)
    rhs = gcl_rhs(mesh, couplings, boundary)
    jacs, metrics, targets = [], [], []
    residual = np.zeros(len(mesh.elements))
    target_residual = np.zeros(len(mesh.elements))
    rhs_sum = np.zeros(len(mesh.elements))
    systems = {}
    for e in mesh.elements:
        jac, target = analytic_metrics(mesh, e)
        key = (e.degree, tuple(float(v) for v in e.delta))
        system = systems.setdefault(key, gcl_system(*key))
        c = rhs[e.id]
        rhs_sum[e.id] = float(np.max(np.abs(c.reshape(-1, 3).sum(axis=0))))
        target_residual[e.id] = gcl_residual(system, target, c)
        a = optimize_metrics(system, target, c, e.id) if optimize else target
        residual[e.id] = gcl_residual(system, a, c)
        jacs.append(jac)
        targets.append(target)
        metrics.append(a)
    return MetricSet(jacs, metrics, targets, rhs, couplings, boundary, residual, target_residual, rhs_sum,
                     optimize, systems)
