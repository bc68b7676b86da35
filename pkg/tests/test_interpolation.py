import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hpsbp.errors import InvalidArgument
from hpsbp.interpolation import (IDENTITY, FaceInterp, Orientation, build_l2_projection, build_pair, child_segments,
                                 face_apply)
from hpsbp.sbp_core import build_sbp

SEGMENTS = [(-1.0, 0.0), (0.0, 1.0), (-1.0, 1.0)]


def _on_segment(p, seg):
    x = build_sbp(p).nodes
    return seg[0] + 0.5 * (x + 1.0) * (seg[1] - seg[0])


def test_equal_segments_equal_degree_is_identity():
    for p in range(1, 14):
        assert np.max(np.abs(build_l2_projection((-1.0, 1.0), p, (-1.0, 1.0), p) - np.eye(p + 1))) < 1e-12


@pytest.mark.parametrize("p_src,p_dst", [(p, q) for p in range(1, 9) for q in range(1, 9)])
@pytest.mark.parametrize("dst", SEGMENTS)
def test_projection_exact_to_min_degree(p_src, p_dst, dst):
    I = build_l2_projection((-1.0, 1.0), p_src, dst, p_dst)
    xs = _on_segment(p_src, (-1.0, 1.0))
    xd = _on_segment(p_dst, dst)
    for k in range(min(p_src, p_dst) + 1):
        assert np.max(np.abs(I @ xs**k - xd**k)) < 1e-13
    assert np.max(np.abs(I.sum(axis=1) - 1.0)) < 1e-13


def test_three_to_two_half_segment_monomials():
    I = build_l2_projection((-1.0, 1.0), 3, (0.0, 1.0), 2)
    xs = build_sbp(3).nodes
    xd = np.array([0.0, 0.5, 1.0])
    for k in range(3):
        assert np.max(np.abs(I @ xs**k - xd**k)) < 1e-13


def test_projection_is_not_exact_beyond_min_degree():
    I = build_l2_projection((-1.0, 1.0), 4, (0.0, 1.0), 2)
    xs, xd = build_sbp(4).nodes, _on_segment(2, (0.0, 1.0))
    assert np.max(np.abs(I @ xs**3 - xd**3)) > 1e-6


@pytest.mark.parametrize("bad", [((-1.0, 1.0), (0.5, 1.5)), ((0.0, 1.0), (-1.0, 0.0)), ((-1.0, 1.0), (0.3, 0.3))])
def test_projection_rejects_segment_outside_source(bad):
    with pytest.raises(InvalidArgument):
        build_l2_projection(bad[0], 2, bad[1], 2)


def test_projection_rejects_degree_out_of_range():
    with pytest.raises(InvalidArgument):
        build_l2_projection((-1.0, 1.0), 0, (-1.0, 1.0), 2)
    with pytest.raises(InvalidArgument):
        build_l2_projection((-1.0, 1.0), 2, (-1.0, 1.0), 14)


@pytest.mark.parametrize("pL,pR", [(p, q) for p in range(1, 10) for q in range(1, 10)])
def test_adjoint_identity(pL, pR):
    for seg in SEGMENTS:
        pair = build_pair((-1.0, 1.0), pL, seg, pR)
        PL, PR = build_sbp(pL).P, build_sbp(pR).P
        ratio = (seg[1] - seg[0]) / 2.0
        expected = ratio * np.diag(1.0 / PL) @ pair.left_to_right.T @ np.diag(PR)
        assert np.max(np.abs(pair.right_to_left - expected)) <= 1e-14
        assert pair.extent_ratio == pytest.approx(ratio)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 1), st.integers(0, 2**31 - 1))
def test_adjoint_identity_on_random_data(pL, pR, child, seed):
    # (I_RtoL v)^T (dL P_L) u == (I_LtoR u)^T (dR P_R) v for any traces u, v
    rng = np.random.default_rng(seed)
    seg = child_segments()[child]
    pair = build_pair((-1.0, 1.0), pL, seg, pR)
    u, v = rng.standard_normal(pL + 1), rng.standard_normal(pR + 1)
    lhs = (pair.right_to_left @ v) @ (2.0 * build_sbp(pL).P * u)
    rhs = (pair.left_to_right @ u) @ ((seg[1] - seg[0]) * build_sbp(pR).P * v)
    assert abs(lhs - rhs) <= 1e-14 * max(1.0, np.abs(u).sum() * np.abs(v).sum())


@pytest.mark.parametrize("pL", range(2, 9))
@pytest.mark.parametrize("pR", range(2, 9))
def test_combined_reconstruction_from_children(pL, pR):
    # LGL norms are one degree short of optimal, so the guarantee is degree min(p) - 1
    xl = build_sbp(pL).nodes
    for k in range(min(pL, pR)):
        total = np.zeros(pL + 1)
        for seg in child_segments():
            pair = build_pair((-1.0, 1.0), pL, seg, pR)
            total += pair.right_to_left @ _on_segment(pR, seg) ** k
        assert np.max(np.abs(total - xl**k)) < 1e-13


@pytest.mark.parametrize("pL,pR", [(2, 2), (3, 3), (2, 3), (4, 4)])
def test_combined_reconstruction_stops_at_min_degree_minus_one(pL, pR):
    k = min(pL, pR)
    xl = build_sbp(pL).nodes
    total = sum(build_pair((-1.0, 1.0), pL, seg, pR).right_to_left @ _on_segment(pR, seg) ** k
                for seg in child_segments())
    assert np.max(np.abs(total - xl**k)) > 0.1


def test_single_child_reverse_is_not_exact():
    pair = build_pair((-1.0, 1.0), 4, (0.0, 1.0), 4)
    xr = _on_segment(4, (0.0, 1.0))
    assert np.max(np.abs(pair.right_to_left @ np.ones(5) - 1.0)) > 0.1
    assert np.all(np.isfinite(pair.right_to_left @ xr))


def _face(pL, pR, segs=((-1.0, 0.0), (0.0, 1.0)), orientation=IDENTITY):
    return FaceInterp(build_pair((-1.0, 1.0), pL, segs[0], pR), build_pair((-1.0, 1.0), pL, segs[1], pR), orientation)


def test_face_apply_constant_vector_trace():
    fi = _face(3, 5)
    trace = np.broadcast_to(np.array([1.0, 2.0, -3.0, 0.5, 7.0]), (4, 4, 5))
    out = face_apply(fi, trace, "LtoR")
    assert out.shape == (6, 6, 5)
    assert np.max(np.abs(out - np.array([1.0, 2.0, -3.0, 0.5, 7.0]))) < 1e-13


def test_face_apply_separable_trace():
    fi = _face(4, 3, ((0.0, 1.0), (-1.0, 0.0)))
    rng = np.random.default_rng(3)
    u, v = rng.standard_normal(5), rng.standard_normal(5)
    out = face_apply(fi, np.outer(u, v), "LtoR")
    assert np.max(np.abs(out - np.outer(fi.pair_a.left_to_right @ u, fi.pair_b.left_to_right @ v))) < 1e-13
    back = face_apply(fi, np.outer(u[:4], v[:4]), "RtoL")
    assert np.max(np.abs(back - np.outer(fi.pair_a.right_to_left @ u[:4], fi.pair_b.right_to_left @ v[:4]))) < 1e-13


def test_face_apply_matches_dense_kronecker():
    fi = _face(2, 4)
    trace = np.random.default_rng(0).standard_normal((3, 3))
    dense = fi.left_to_right_matrix() @ trace.ravel()
    assert np.max(np.abs(face_apply(fi, trace).ravel() - dense)) < 1e-13


@pytest.mark.parametrize("flip_a", [False, True])
@pytest.mark.parametrize("flip_b", [False, True])
@pytest.mark.parametrize("transpose", [False, True])
def test_face_apply_orientation_matches_reindex_oracle(flip_a, flip_b, transpose):
    o = Orientation(flip_a, flip_b, transpose)
    plain, oriented = _face(3, 4), _face(3, 4, orientation=o)
    rng = np.random.default_rng(7)
    trace = rng.standard_normal((4, 4, 2))
    ref = face_apply(plain, trace)
    # brute force: right index (i, j) takes the left-ordered value at the mapped index
    n = ref.shape[0]
    oracle = np.empty_like(ref)
    for i in range(n):
        for j in range(n):
            a, b = (j, i) if transpose else (i, j)
            a = n - 1 - a if flip_a else a
            b = n - 1 - b if flip_b else b
            oracle[i, j] = ref[a, b]
    assert np.max(np.abs(face_apply(oriented, trace) - oracle)) < 1e-14
    right = rng.standard_normal((5, 5))
    assert np.max(np.abs(o.to_left(o.to_right(right)) - right)) == 0.0
    # adjoint direction undoes the orientation before projecting
    assert np.max(np.abs(face_apply(oriented, o.to_right(right), "RtoL") - face_apply(plain, right, "RtoL"))) < 1e-14


def test_face_apply_rejects_bad_shape_and_direction():
    fi = _face(2, 3)
    with pytest.raises(InvalidArgument):
        face_apply(fi, np.zeros((4, 4)), "LtoR")
    with pytest.raises(InvalidArgument):
        face_apply(fi, np.zeros((3, 3)), "RtoL")
    with pytest.raises(InvalidArgument):
        face_apply(fi, np.zeros((3, 3)), "sideways")
    with pytest.raises(InvalidArgument):
        _face(2, 3, orientation=Orientation(transpose=True)).left_to_right_matrix()
