"""Octree-refined box meshes of curved hexahedra.

Each element is a sub-box of a root cell of a Cartesian grid.  Its position
inside the root is given by the parent-extent box ``[lo_l, hi_l]`` in root
reference coordinates (each in [-1, 1]); ``delta_l = hi_l - lo_l``.  The
geometry of every root cell is a tensor-product polynomial of degree
``geometry_degree`` stored by its values on LGL nodes.

Faces are numbered ``2 * direction + side`` with ``direction`` in 0..2 and
``side`` 0 for the low face, 1 for the high face.  Face traces are ordered
by the two remaining axes in increasing axis order.  Root cells of a box
mesh share axis orientation, so neighbouring faces always use the identity
orientation.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GeometryInvalid, InvalidArgument
from .interpolation import IDENTITY, Orientation
from .sbp_core import build_sbp, lagrange_basis

# stream ids of the mesh RNG: one child sequence per random decision kind
REFINE_STREAM = 0
DEGREE_STREAM = 1


def mesh_rng(seed: int, stream: int) -> np.random.Generator:
    """PCG64 generator for ``stream`` spawned from ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(stream,))))


@dataclass(frozen=True)
class Element:
    id: int
    root: tuple[int, int, int]
    level: int
    index: tuple[int, int, int]
    degree: int = 2

    @property
    def delta(self) -> np.ndarray:
        return np.full(3, 2.0 / 2**self.level)

    @property
    def lower(self) -> np.ndarray:
        return -1.0 + np.asarray(self.index, dtype=float) * self.delta

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.delta

    def global_index(self) -> tuple[int, int, int]:
        s = 2**self.level
        return tuple(r * s + i for r, i in zip(self.root, self.index))

    def to_root(self, xi: np.ndarray) -> np.ndarray:
        """Map child reference coordinates (..., 3) to root reference coordinates."""
        return self.lower + 0.5 * (np.asarray(xi) + 1.0) * self.delta


@dataclass(frozen=True)
class FaceRef:
    element: int
    face: int

    @property
    def direction(self) -> int:
        return self.face // 2

    @property
    def side(self) -> int:
        return self.face % 2


@dataclass(frozen=True)
class Interface:
    """A conforming pair or a 4:1 nonconforming face.

    ``left`` is the coarse side (the low-coordinate side for conforming
    faces).  ``segments[f]`` gives, for child ``f``, its extent along the two
    tangential axes in the left face's reference coordinates.
    """

    kind: str
    direction: int
    left: FaceRef
    children: tuple[FaceRef, ...]
    segments: tuple[tuple[tuple[float, float], tuple[float, float]], ...]
    orientations: tuple[Orientation, ...]


@dataclass(frozen=True)
class Mesh:
    bounds: np.ndarray
    cells: tuple[int, int, int]
    periodic: tuple[bool, bool, bool]
    elements: tuple[Element, ...]
    interfaces: tuple[Interface, ...]
    boundary_faces: tuple[FaceRef, ...]
    geometry_degree: int
    root_nodes: np.ndarray
    seed: int | None = None
    splits: int = 0
    perturbed: bool = False

    @property
    def lengths(self) -> np.ndarray:
        return self.bounds[:, 1] - self.bounds[:, 0]

    def degrees(self) -> np.ndarray:
        return np.array([e.degree for e in self.elements])

    def summary_rows(self) -> list[dict]:
        counts = Counter((e.level, e.degree) for e in self.elements)
        return [{"level": lv, "degree": p, "elements": c} for (lv, p), c in sorted(counts.items())]

    def summary_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["level", "degree", "elements"])
        writer.writeheader()
        writer.writerows(self.summary_rows())
        return buf.getvalue()


# ---------------------------------------------------------------- geometry


def _affine_root_nodes(bounds: np.ndarray, cells: tuple[int, int, int], degree: int) -> np.ndarray:
    nodes = build_sbp(degree).nodes if degree >= 1 else np.array([-1.0, 1.0])
    h = (bounds[:, 1] - bounds[:, 0]) / np.asarray(cells)
    out = np.empty(tuple(cells) + (degree + 1,) * 3 + (3,))
    for d in range(3):
        starts = bounds[d, 0] + h[d] * np.arange(cells[d])
        coord = starts[:, None] + 0.5 * (nodes[None, :] + 1.0) * h[d]
        shape = [1] * 6
        shape[d] = cells[d]
        shape[3 + d] = degree + 1
        out[..., d] = coord.reshape(shape)
    return out


def evaluate_map(nodes_values: np.ndarray, xi_hat: np.ndarray) -> np.ndarray:
    """Evaluate a root map given by nodal values (g+1, g+1, g+1, 3) at points (..., 3)."""
    g = nodes_values.shape[0] - 1
    gn = build_sbp(g).nodes
    pts = np.asarray(xi_hat, dtype=float)
    flat = pts.reshape(-1, 3)
    B = [lagrange_basis(gn, flat[:, d]) for d in range(3)]
    out = np.einsum("pa,pb,pc,abcm->pm", B[0], B[1], B[2], nodes_values)
    return out.reshape(pts.shape)


def tensor_map(nodes_values: np.ndarray, x1: np.ndarray, x2: np.ndarray, x3: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map values and derivatives on the tensor grid ``x1 x x2 x x3`` of root coordinates.

    Returns ``x`` with shape (n1, n2, n3, 3) and ``A`` with shape
    (n1, n2, n3, 3, 3), ``A[..., m, l] = d x_m / d xi_hat_l``.
    """
    g = nodes_values.shape[0] - 1
    op = build_sbp(g)
    B = [lagrange_basis(op.nodes, np.atleast_1d(x)) for x in (x1, x2, x3)]
    dB = [b @ op.D for b in B]
    x = np.einsum("ia,jb,kc,abcm->ijkm", B[0], B[1], B[2], nodes_values)
    A = np.stack(
        [
            np.einsum("ia,jb,kc,abcm->ijkm", dB[0], B[1], B[2], nodes_values),
            np.einsum("ia,jb,kc,abcm->ijkm", B[0], dB[1], B[2], nodes_values),
            np.einsum("ia,jb,kc,abcm->ijkm", B[0], B[1], dB[2], nodes_values),
        ],
        axis=-1,
    )
    return x, A


def element_tensor_points(element: Element, xi: np.ndarray) -> list[np.ndarray]:
    """Root coordinates of the 1D child points ``xi`` along each direction."""
    return [element.lower[d] + 0.5 * (xi + 1.0) * element.delta[d] for d in range(3)]


def physical_coordinates(mesh: Mesh, element: Element, xi: np.ndarray) -> np.ndarray:
    """Physical coordinates of child reference points ``xi`` (..., 3)."""
    return evaluate_map(mesh.root_nodes[element.root], element.to_root(xi))


def volume_coordinates(mesh: Mesh, element: Element, degree: int | None = None) -> np.ndarray:
    """Physical coordinates of the element's LGL volume nodes, shape (n, n, n, 3)."""
    p = element.degree if degree is None else degree
    pts = element_tensor_points(element, build_sbp(p).nodes)
    x, _ = tensor_map(mesh.root_nodes[element.root], *pts)
    return x


def face_points(element: Element, face: int, xi: np.ndarray) -> list[np.ndarray]:
    d, s = divmod(face, 2)
    pts = element_tensor_points(element, xi)
    pts[d] = np.array([element.upper[d] if s else element.lower[d]])
    return pts


def face_nodes(mesh: Mesh, element: Element, face: int) -> np.ndarray:
    """Physical coordinates of the LGL nodes on one face, shape (n, n, 3)."""
    xi = build_sbp(element.degree).nodes
    x, _ = tensor_map(mesh.root_nodes[element.root], *face_points(element, face, xi))
    return np.squeeze(x, axis=face // 2)


def face_geometry(mesh: Mesh, element: Element, face: int, xi: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates and root-scaled outward face metric at face nodes.

    The metric is the cross product of the root tangent vectors, i.e. the
    row ``direction`` of the cofactor matrix, signed outward.  Both arrays
    have shape (n, n, 3).
    """
    if xi is None:
        xi = build_sbp(element.degree).nodes
    d, s = divmod(face, 2)
    x, A = tensor_map(mesh.root_nodes[element.root], *face_points(element, face, xi))
    x = np.squeeze(x, axis=d)
    A = np.squeeze(A, axis=d)
    t1, t2 = [(d + 1) % 3, (d + 2) % 3]
    normal = np.cross(A[..., :, t1], A[..., :, t2])
    sign = 1.0 if s else -1.0
    return x, sign * normal


# ---------------------------------------------------------------- topology


def _leaf_keys(elements) -> dict[tuple[int, int, int, int], int]:
    return {(e.level,) + e.global_index(): i for i, e in enumerate(elements)}


def _neighbor_global(g: tuple[int, int, int], level: int, d: int, s: int, cells, periodic):
    out = list(g)
    out[d] += 1 if s else -1
    extent = cells[d] * 2**level
    if out[d] < 0 or out[d] >= extent:
        if not periodic[d]:
            return None
        out[d] %= extent
    return tuple(out)


def _split_global(g: tuple[int, int, int], level: int) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
    s = 2**level
    return tuple(v // s for v in g), tuple(v % s for v in g)


def _build_topology(elements, cells, periodic):
    keys = _leaf_keys(elements)
    interfaces: list[Interface] = []
    boundary: list[FaceRef] = []
    for i, e in enumerate(elements):
        g = e.global_index()
        for d in range(3):
            for s in (0, 1):
                nb = _neighbor_global(g, e.level, d, s, cells, periodic)
                if nb is None:
                    boundary.append(FaceRef(i, 2 * d + s))
                    continue
                same = keys.get((e.level,) + nb)
                if same is not None:
                    if s == 1:
                        interfaces.append(
                            Interface("conforming", d, FaceRef(i, 2 * d + 1), (FaceRef(same, 2 * d),),
                                      (((-1.0, 1.0), (-1.0, 1.0)),), (IDENTITY,))
                        )
                    continue
                if e.level > 0 and keys.get((e.level - 1,) + tuple(v // 2 for v in nb)) is not None:
                    continue  # fine side, recorded from the coarse element
                t1, t2 = [a for a in range(3) if a != d]
                children, segs = [], []
                for o1 in (0, 1):
                    for o2 in (0, 1):
                        c = [2 * v for v in nb]
                        c[d] += 0 if s else 1
                        c[t1] += o1
                        c[t2] += o2
                        child = keys.get((e.level + 1,) + tuple(c))
                        if child is None:
                            raise GeometryInvalid(f"element {i} face {2 * d + s} violates 2:1 balance")
                        children.append(FaceRef(child, 2 * d + (1 - s)))
                        segs.append(((-1.0 + o1, o1 + 0.0), (-1.0 + o2, o2 + 0.0)))
                interfaces.append(
                    Interface("nonconforming", d, FaceRef(i, 2 * d + s), tuple(children), tuple(segs), (IDENTITY,) * 4)
                )
    return tuple(interfaces), tuple(boundary)


def build_box_mesh(bounds, cells, periodic=(True, True, True), degree: int = 2) -> Mesh:
    """Uniform box mesh of ``cells[0] x cells[1] x cells[2]`` affine hexahedra."""
    bounds = np.asarray(bounds, dtype=float).reshape(3, 2)
    cells = tuple(int(c) for c in cells)
    if any(c < 1 for c in cells):
        raise InvalidArgument(f"cell counts must be >= 1, got {cells}")
    if np.any(bounds[:, 1] <= bounds[:, 0]):
        raise InvalidArgument(f"degenerate bounds {bounds.tolist()}")
    periodic = tuple(bool(p) for p in periodic)
    elements = []
    for a in range(cells[0]):
        for b in range(cells[1]):
            for c in range(cells[2]):
                elements.append(Element(len(elements), (a, b, c), 0, (0, 0, 0), degree))
    interfaces, boundary = _build_topology(elements, cells, periodic)
    return Mesh(bounds, cells, periodic, tuple(elements), interfaces, boundary, 1, _affine_root_nodes(bounds, cells, 1))


def _children(e: Element) -> list[Element]:
    out = []
    for o in np.ndindex(2, 2, 2):
        idx = tuple(2 * i + oi for i, oi in zip(e.index, o))
        out.append(Element(-1, e.root, e.level + 1, idx, e.degree))
    return out


def _refine_marked(elements, marked: set[int]):
    out = []
    for i, e in enumerate(elements):
        out.extend(_children(e) if i in marked else [e])
    return [replace(e, id=k) for k, e in enumerate(out)]


def _balance_marks(elements, cells, periodic) -> set[int]:
    keys = _leaf_keys(elements)
    marks = set()
    for e in elements:
        g = e.global_index()
        for d in range(3):
            for s in (0, 1):
                nb = _neighbor_global(g, e.level, d, s, cells, periodic)
                if nb is None:
                    continue
                for k in range(e.level - 2, -1, -1):
                    shift = 2 ** (e.level - k)
                    j = keys.get((k,) + tuple(v // shift for v in nb))
                    if j is not None:
                        marks.add(j)
                        break
    return marks


def _with_elements(mesh: Mesh, elements, **changes) -> Mesh:
    interfaces, boundary = _build_topology(elements, mesh.cells, mesh.periodic)
    return replace(mesh, elements=tuple(elements), interfaces=interfaces, boundary_faces=boundary, **changes)


def refine_random(mesh: Mesh, seed: int, max_levels: int = 1, fraction: float = 0.3) -> Mesh:
    """Split randomly chosen elements, then enforce 2:1 face balance.

    Pass ``k`` (1-based) considers the elements of level ``k - 1`` and splits
    each with probability ``fraction``.  Balance splits are counted in
    ``Mesh.splits`` together with the random ones.
    """
    if not 0.0 <= fraction <= 1.0:
        raise InvalidArgument(f"fraction must be in [0, 1], got {fraction}")
    if max_levels not in (0, 1, 2, 3):
        raise InvalidArgument(f"max_levels must be 0..3, got {max_levels}")
    rng = mesh_rng(seed, REFINE_STREAM)
    elements = list(mesh.elements)
    splits = mesh.splits
    for level in range(max_levels):
        candidates = [i for i, e in enumerate(elements) if e.level == level]
        draws = rng.random(len(candidates))
        marked = {i for i, u in zip(candidates, draws) if u < fraction}
        splits += len(marked)
        elements = _refine_marked(elements, marked)
        while True:
            marks = _balance_marks(elements, mesh.cells, mesh.periodic)
            if not marks:
                break
            splits += len(marks)
            elements = _refine_marked(elements, marks)
    return _with_elements(mesh, elements, seed=seed, splits=splits)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every element once (nested refinement keeping the h/p pattern)."""
    elements = _refine_marked(list(mesh.elements), set(range(len(mesh.elements))))
    return _with_elements(mesh, elements, splits=mesh.splits + len(mesh.elements))


def assign_random_degrees(mesh: Mesh, seed: int, degree_set) -> Mesh:
    """Draw each element's degree uniformly from ``degree_set``."""
    choices = sorted({int(p) for p in degree_set})
    if not choices or any(p < 1 or p > 13 for p in choices):
        raise InvalidArgument(f"degree set must be non-empty within 1..13, got {degree_set}")
    rng = mesh_rng(seed, DEGREE_STREAM)
    draws = rng.integers(0, len(choices), size=len(mesh.elements))
    elements = tuple(replace(e, degree=choices[k]) for e, k in zip(mesh.elements, draws))
    return replace(mesh, elements=elements)


def set_degree(mesh: Mesh, degree: int) -> Mesh:
    return replace(mesh, elements=tuple(replace(e, degree=int(degree)) for e in mesh.elements))


# ---------------------------------------------------------------- perturbation


def interface_displacement(x: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Trigonometric interface displacement evaluated at unperturbed points (..., 3)."""
    L = bounds[:, 1] - bounds[:, 0]
    mid = 0.5 * (bounds[:, 1] + bounds[:, 0])
    a = np.pi / L[0] * (x[..., 0] - mid[0])
    b = np.pi / L[1] * (x[..., 1] - mid[1])
    c = np.pi / L[2] * (x[..., 2] - mid[2])
    out = np.empty_like(x)
    out[..., 0] = L[0] / 15.0 * np.cos(a) * np.cos(3 * b) * np.sin(4 * c)
    out[..., 1] = L[1] / 15.0 * np.sin(4 * a) * np.cos(b) * np.cos(3 * c)
    out[..., 2] = L[2] / 15.0 * np.cos(3 * a) * np.sin(4 * b) * np.cos(c)
    return out


def transfinite_fill(values: np.ndarray) -> np.ndarray:
    """Replace interior nodal values of a (g+1)^3 grid by transfinite blending of its boundary."""
    g = values.shape[0] - 1
    t = build_sbp(g).nodes
    lo, hi = 0.5 * (1.0 - t), 0.5 * (1.0 + t)

    def blend(arr, axis):
        a0 = np.take(arr, [0], axis=axis)
        a1 = np.take(arr, [-1], axis=axis)
        shape = [1] * arr.ndim
        shape[axis] = g + 1
        return a0 * lo.reshape(shape) + a1 * hi.reshape(shape)

    P1, P2, P3 = (blend(values, a) for a in range(3))
    P12, P13, P23 = blend(P2, 0), blend(P3, 0), blend(P3, 1)
    P123 = blend(P23, 0)
    filled = P1 + P2 + P3 - P12 - P13 - P23 + P123
    out = filled.copy()
    boundary = np.zeros((g + 1,) * 3, dtype=bool)
    boundary[[0, -1], :, :] = True
    boundary[:, [0, -1], :] = True
    boundary[:, :, [0, -1]] = True
    out[boundary] = values[boundary]
    return out


def perturb_interfaces(mesh: Mesh, p_i: int = 2) -> Mesh:
    """Curve the root-cell faces with degree-``p_i`` polynomials of the displaced nodes.

    Face nodes of every root cell are moved by :func:`interface_displacement`
    evaluated at their unperturbed positions, so shared faces are displaced
    identically from both sides; interior nodes are blended transfinitely.
    """
    if mesh.perturbed:
        raise InvalidArgument("mesh is already perturbed")
    if p_i < 1 or p_i > 13:
        raise InvalidArgument(f"interface degree must be in 1..13, got {p_i}")
    base = _affine_root_nodes(mesh.bounds, mesh.cells, p_i)
    disp = interface_displacement(base, mesh.bounds)
    nodes = base + disp
    for idx in np.ndindex(*mesh.cells):
        nodes[idx] = transfinite_fill(nodes[idx])
    out = replace(mesh, root_nodes=nodes, geometry_degree=p_i, perturbed=True)
    validate_jacobians(out)
    return out


def validate_jacobians(mesh: Mesh) -> None:
    for e in mesh.elements:
        pts = element_tensor_points(e, build_sbp(e.degree).nodes)
        _, A = tensor_map(mesh.root_nodes[e.root], *pts)
        J = np.linalg.det(A)
        if np.min(J) <= 0.0:
            raise GeometryInvalid(f"element {e.id} has non-positive Jacobian {np.min(J):.3e}")


def with_geometry(mesh: Mesh, geometry_degree: int, perturb: bool) -> Mesh:
    """Return the mesh with affine geometry or perturbed curved geometry of the given degree."""
    if perturb:
        return perturb_interfaces(mesh, geometry_degree)
    return mesh
