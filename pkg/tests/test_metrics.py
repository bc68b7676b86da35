import numpy as np
import pytest

from hpsbp.errors import GclUnsolvable
from hpsbp.mesh import (assign_random_degrees, build_box_mesh, evaluate_map, face_geometry, perturb_interfaces,
                        refine_random)
from hpsbp.metrics import (_stack_metrics, analytic_metrics, compute_metrics, face_weights, gcl_residual, gcl_system,
                           optimize_metrics, volume_weights)
from hpsbp.sbp_core import build_sbp

CUBE = [[-5.0, 5.0]] * 3


@pytest.fixture(scope="module")
def curved():
    m = build_box_mesh(CUBE, (3, 3, 3))
    m = refine_random(m, 5, 2, 0.3)
    m = assign_random_degrees(m, 5, [2, 3, 4, 5])
    return perturb_interfaces(m, 2)


@pytest.fixture(scope="module")
def curved_metrics(curved):
    return compute_metrics(curved, optimize=True)


def test_identity_root_element():
    m = build_box_mesh([[-1.0, 1.0]] * 3, (1, 1, 1), degree=3)
    jac, a = analytic_metrics(m, m.elements[0])
    assert np.max(np.abs(jac - 1.0)) < 1e-14
    assert np.max(np.abs(a - np.eye(3))) < 1e-14


def test_affine_scaling():
    m = build_box_mesh([[0.0, 2.0], [0.0, 6.0], [0.0, 1.0]], (2, 3, 1), degree=2)
    jac, a = analytic_metrics(m, m.elements[4])
    # each root cell has size (1, 2, 1): half-widths 0.5, 1, 0.5
    assert np.max(np.abs(jac - 0.25)) < 1e-14
    assert np.max(np.abs(a - np.diag([0.5, 0.25, 0.5]))) < 1e-14


def _fd_cofactors(nodes_values, X, h=1e-5):
    # columns of the mapping Jacobian by central differences in root coordinates
    A = np.empty(X.shape[:-1] + (3, 3))
    for l in range(3):
        e = np.zeros(3)
        e[l] = h
        A[..., :, l] = (evaluate_map(nodes_values, X + e) - evaluate_map(nodes_values, X - e)) / (2 * h)
    cof = np.stack([np.cross(A[..., :, 1], A[..., :, 2]), np.cross(A[..., :, 2], A[..., :, 0]),
                    np.cross(A[..., :, 0], A[..., :, 1])], axis=-2)
    return np.linalg.det(A), cof


def test_cofactors_match_finite_differences(curved):
    for e in curved.elements[::7]:
        t = build_sbp(e.degree).nodes
        X = e.to_root(np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1))
        jac, a = analytic_metrics(curved, e)
        jfd, afd = _fd_cofactors(curved.root_nodes[e.root], X)
        assert np.max(np.abs(jac - jfd)) < 1e-8
        assert np.max(np.abs(a - afd)) < 1e-8


def test_cartesian_face_normals():
    m = build_box_mesh([[0.0, 4.0], [0.0, 2.0], [0.0, 2.0]], (2, 1, 1), (False,) * 3, degree=2)
    e = m.elements[0]
    for face in range(6):
        _, n = face_geometry(m, e, face)
        d, s = divmod(face, 2)
        unit = np.zeros(3)
        unit[d] = 1.0 if s else -1.0
        mag = np.linalg.norm(n, axis=-1)
        assert np.max(np.abs(n / mag[..., None] - unit)) < 1e-14
        # root face area / 4 (reference face area)
        assert np.max(np.abs(mag - 2.0 * 2.0 / 4.0)) < 1e-14


def test_face_metric_matches_tangent_cross_product(curved):
    e = next(el for el in curved.elements if el.level > 0)
    t = build_sbp(e.degree).nodes
    h = 1e-5
    for face in range(6):
        d, s = divmod(face, 2)
        _, n = face_geometry(curved, e, face)
        t1, t2 = (d + 1) % 3, (d + 2) % 3
        grid = np.zeros((t.size, t.size, 3))
        ta, tb = [k for k in range(3) if k != d]
        A, B = np.meshgrid(t, t, indexing="ij")
        grid[..., ta], grid[..., tb] = A, B
        grid[..., d] = 1.0 if s else -1.0
        X = e.to_root(grid)
        f = curved.root_nodes[e.root]

        def tangent(k):
            dv = np.zeros(3)
            dv[k] = h
            return (evaluate_map(f, X + dv) - evaluate_map(f, X - dv)) / (2 * h)

        ref = np.cross(tangent(t1), tangent(t2)) * (1.0 if s else -1.0)
        assert np.max(np.abs(n - ref)) < 1e-8


def test_shared_faces_opposite_normals(curved_metrics, curved):
    for c in curved_metrics.couplings:
        if not c.identity:
            continue
        eL = curved.elements[c.left.element]
        _, nL = face_geometry(curved, eL, c.left.face)
        assert np.max(np.abs(nL.reshape(-1, 3) - c.normal)) < 1e-13


def test_gcl_system_structure():
    for p in range(1, 7):
        for delta in [(2.0, 2.0, 2.0), (1.0, 1.0, 1.0), (0.5, 0.5, 0.5)]:
            sysm = gcl_system(p, delta)
            s = sysm.singular_values
            assert s[-1] <= 1e-12 * s[0]
            assert s[-2] >= 1e-8 * s[0]
            null = sysm.null_vector
            assert np.max(np.abs(null - null.mean())) < 1e-12
            assert abs(abs(null.mean()) * np.sqrt(null.size) - 1.0) < 1e-12


def test_cartesian_target_is_feasible():
    m = assign_random_degrees(build_box_mesh(CUBE, (2, 2, 2)), 3, [2, 3, 4])
    ms = compute_metrics(m, optimize=True)
    assert np.max(ms.target_residual) <= 1e-13
    for a, t in zip(ms.metrics, ms.target):
        assert np.max(np.abs(a - t)) < 1e-13


def test_rhs_sums_vanish(curved_metrics):
    assert np.max(curved_metrics.rhs_sum) <= 1e-12


def test_optimized_residual_and_raw_residual(curved_metrics):
    assert np.max(curved_metrics.residual) <= 1e-12
    assert np.max(curved_metrics.target_residual) > 1e-6


def test_correction_lies_in_row_space(curved_metrics, curved):
    for e in curved.elements[::5]:
        key = (e.degree, tuple(float(v) for v in e.delta))
        sysm = curved_metrics.systems[key]
        corr = _stack_metrics(curved_metrics.metrics[e.id] - curved_metrics.target[e.id])
        # removing the row-space projection leaves nothing
        proj = sysm.pinv @ (sysm.matrix @ corr)
        assert np.max(np.abs(corr - proj)) < 1e-12


def test_minimal_norm_against_other_feasible_points(curved_metrics, curved):
    rng = np.random.default_rng(0)
    e = curved.elements[3]
    key = (e.degree, tuple(float(v) for v in e.delta))
    sysm = curved_metrics.systems[key]
    a = _stack_metrics(curved_metrics.metrics[e.id])
    t = _stack_metrics(curved_metrics.target[e.id])
    for _ in range(5):
        z = rng.standard_normal(a.shape) * 1e-3
        other = a + z - sysm.pinv @ (sysm.matrix @ z)  # still feasible
        assert np.linalg.norm(other - t) >= np.linalg.norm(a - t) - 1e-13


def test_unsolvable_rhs_rejected():
    m = build_box_mesh(CUBE, (1, 1, 1), degree=2)
    ms = compute_metrics(m, optimize=False)
    sysm = gcl_system(2, (2.0, 2.0, 2.0))
    c = ms.rhs[0].copy()
    c[0, 0, 0, 1] += 1e-6
    with pytest.raises(GclUnsolvable, match="element 7"):
        optimize_metrics(sysm, ms.target[0], c, element=7)


def test_residual_helper_matches_direct_assembly():
    m = build_box_mesh(CUBE, (1, 1, 1), (False,) * 3, degree=3)
    ms = compute_metrics(m, optimize=False)
    op = build_sbp(3)
    a, c = ms.target[0], ms.rhs[0]
    M = volume_weights(3, np.array([2.0] * 3))
    # sum_l Q_l^T a^l_m with Q_l = M D_l, applied along axis l
    total = np.zeros_like(c)
    for l in range(3):
        for m_ in range(3):
            f = a[..., l, m_]
            total[..., m_] += np.moveaxis(np.tensordot(op.D.T, np.moveaxis(M * f, l, 0), axes=(1, 0)), 0, l)
    assert np.max(np.abs(total - c)) < 1e-12
    assert gcl_residual(gcl_system(3, (2.0, 2.0, 2.0)), a, c) < 1e-12


def test_face_weights_shape():
    W = face_weights(3, np.array([1.0, 0.5, 2.0]), 1)
    assert W.shape == (4, 4)
    assert W.sum() == pytest.approx(1.0 * 2.0 / 4.0 * 4.0)
