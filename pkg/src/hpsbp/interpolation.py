"""L2-projection interpolation between face traces and its SBP-preserving adjoint.

Segments are intervals of a common parameter coordinate (the parent-extent
coordinate along one tangential direction of a face).  A coarse ("left")
trace lives on the full segment, a fine ("right") trace on a sub-segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidArgument
from .sbp_core import build_sbp, lagrange_basis

Segment = tuple[float, float]


def _check_segment(seg: Segment) -> tuple[float, float]:
    a, b = float(seg[0]), float(seg[1])
    if not b > a:
        raise InvalidArgument(f"segment {seg} is degenerate")
    return a, b


def _to_reference(x: np.ndarray, seg: tuple[float, float]) -> np.ndarray:
    a, b = seg
    return (2.0 * x - (a + b)) / (b - a)


@lru_cache(maxsize=None)
def _projection_cached(src: Segment, p_src: int, dst: Segment, p_dst: int) -> np.ndarray:
    op_s, op_d = build_sbp(p_src), build_sbp(p_dst)
    # exact Gauss rule for products of degree p_src + p_dst
    gx, gw = np.polynomial.legendre.leggauss(max(p_src, p_dst) + 1)
    a, b = dst
    x = a + 0.5 * (gx + 1.0) * (b - a)
    w = 0.5 * (b - a) * gw
    ld = lagrange_basis(op_d.nodes, gx)
    ls = lagrange_basis(op_s.nodes, _to_reference(x, src))
    mass = ld.T @ (w[:, None] * ld)
    cross = ld.T @ (w[:, None] * ls)
    out = np.linalg.solve(mass, cross)
    out.setflags(write=False)
    return out


def build_l2_projection(src: Segment, p_src: int, dst: Segment, p_dst: int) -> np.ndarray:
    """Projection matrix ``M_dst^{-1} M_cross`` from a degree-``p_src`` trace on ``src``
    to a degree-``p_dst`` trace on ``dst``.

    ``dst`` must lie inside ``src``.  The result has shape
    ``(p_dst + 1, p_src + 1)`` and reproduces polynomials of degree
    ``min(p_src, p_dst)``.
    """
    s = _check_segment(src)
    d = _check_segment(dst)
    for p in (p_src, p_dst):
        if p < 1 or p > 13:
            raise InvalidArgument(f"degree {p} outside [1, 13]")
    tol = 1e-13 * (s[1] - s[0])
    if d[0] < s[0] - tol or d[1] > s[1] + tol:
        raise InvalidArgument(f"destination segment {dst} is not inside source segment {src}")
    return _projection_cached(s, int(p_src), d, int(p_dst))


@dataclass(frozen=True, eq=False)
class InterpPair:
    """One-dimensional coarse-to-fine projection and its SBP-preserving adjoint."""

    left_to_right: np.ndarray
    right_to_left: np.ndarray
    left_segment: Segment
    right_segment: Segment
    p_left: int
    p_right: int

    @property
    def extent_ratio(self) -> float:
        return (self.right_segment[1] - self.right_segment[0]) / (self.left_segment[1] - self.left_segment[0])


@lru_cache(maxsize=None)
def build_pair(left_segment: Segment, p_left: int, right_segment: Segment, p_right: int) -> InterpPair:
    """Build ``I_LtoR`` by L2 projection and ``I_RtoL = (dR/dL) P_L^{-1} I_LtoR^T P_R``."""
    l2r = build_l2_projection(left_segment, p_left, right_segment, p_right)
    PL = build_sbp(p_left).P
    PR = build_sbp(p_right).P
    ratio = (right_segment[1] - right_segment[0]) / (left_segment[1] - left_segment[0])
    r2l = ratio * (l2r.T * PR[None, :]) / PL[:, None]
    r2l.setflags(write=False)
    return InterpPair(l2r, r2l, tuple(left_segment), tuple(right_segment), int(p_left), int(p_right))


@dataclass(frozen=True)
class Orientation:
    """Index map from the left face's tangential ordering to the right face's.

    The right trace is obtained from a left-ordered array by optional
    reversal of each tangential axis followed by an optional transpose.
    """

    flip_a: bool = False
    flip_b: bool = False
    transpose: bool = False

    def to_right(self, arr: np.ndarray) -> np.ndarray:
        if self.flip_a:
            arr = arr[::-1]
        if self.flip_b:
            arr = arr[:, ::-1]
        if self.transpose:
            arr = np.swapaxes(arr, 0, 1)
        return arr

    def to_left(self, arr: np.ndarray) -> np.ndarray:
        if self.transpose:
            arr = np.swapaxes(arr, 0, 1)
        if self.flip_b:
            arr = arr[:, ::-1]
        if self.flip_a:
            arr = arr[::-1]
        return arr


IDENTITY = Orientation()


@dataclass(frozen=True, eq=False)
class FaceInterp:
    """Tensor-product face interpolation for one coarse/fine face pair."""

    pair_a: InterpPair
    pair_b: InterpPair
    orientation: Orientation = field(default=IDENTITY)

    def left_to_right_matrix(self) -> np.ndarray:
        """Dense ``(nR^2, nL^2)`` matrix in right-face ordering (identity orientation only)."""
        if self.orientation != IDENTITY:
            raise InvalidArgument("dense face matrix only available for identity orientation")
        return np.kron(self.pair_a.left_to_right, self.pair_b.left_to_right)


def face_apply(fi: FaceInterp, trace: np.ndarray, direction: str = "LtoR") -> np.ndarray:
    """Apply a face interpolation to a blocked trace of shape ``(na, nb)`` or ``(na, nb, b)``.

    ``direction`` is ``"LtoR"`` (coarse to fine) or ``"RtoL"`` (fine to coarse,
    the SBP-preserving adjoint).
    """
    trace = np.asarray(trace, dtype=float)
    if direction == "LtoR":
        A, B = fi.pair_a.left_to_right, fi.pair_b.left_to_right
        if trace.shape[:2] != (A.shape[1], B.shape[1]):
            raise InvalidArgument(f"trace shape {trace.shape} does not match left face")
        out = np.tensordot(A, trace, axes=(1, 0))
        out = np.moveaxis(np.tensordot(B, out, axes=(1, 1)), 0, 1)
        return fi.orientation.to_right(out)
    if direction == "RtoL":
        A, B = fi.pair_a.right_to_left, fi.pair_b.right_to_left
        trace = fi.orientation.to_left(trace)
        if trace.shape[:2] != (A.shape[1], B.shape[1]):
            raise InvalidArgument(f"trace shape {trace.shape} does not match right face")
        out = np.tensordot(A, trace, axes=(1, 0))
        return np.moveaxis(np.tensordot(B, out, axes=(1, 1)), 0, 1)
    raise InvalidArgument(f"unknown direction {direction!r}")


def child_segments(segment: Segment = (-1.0, 1.0)) -> tuple[Segment, Segment]:
    a, b = segment
    mid = 0.5 * (a + b)
    return (a, mid), (mid, b)
