"""One-dimensional diagonal-norm SBP operators on Legendre-Gauss-Lobatto nodes.

Tensor-product fields are stored as arrays of shape ``(n, n, n)`` or
``(n, n, n, b)``: axis 0 is the first computational direction, axis 2 the
third (so the third index varies fastest in C order), and an optional
trailing axis holds the ``b`` block components of each node.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgument

MAX_DEGREE = 13


def lgl_nodes_weights(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Legendre-Gauss-Lobatto nodes and weights on [-1, 1].

    Parameters
    ----------
    n : int
        Number of nodes, ``2 <= n <= 14``.

    Returns
    -------
    nodes, weights : ndarray
        Nodes sorted ascending and the matching quadrature weights, which
        integrate polynomials up to degree ``2n - 3`` exactly.
    """
    if not isinstance(n, (int, np.integer)) or n < 2 or n > MAX_DEGREE + 1:
        raise InvalidArgument(f"number of LGL nodes must be in [2, {MAX_DEGREE + 1}], got {n}")
    N = n - 1
    # Chebyshev-Gauss-Lobatto initial guess, Newton on (1 - x^2) P_N'(x)
    x = np.cos(np.pi * np.arange(n) / N)
    legendre = np.zeros((n, n))
    for _ in range(100):
        legendre[:, 0] = 1.0
        legendre[:, 1] = x
        for k in range(2, n):
            legendre[:, k] = ((2 * k - 1) * x * legendre[:, k - 1] - (k - 1) * legendre[:, k - 2]) / k
        step = (x * legendre[:, N] - legendre[:, N - 1]) / (n * legendre[:, N])
        x = x - step
        if np.max(np.abs(step)) <= 1e-15:
            break
    legendre[:, 0] = 1.0
    legendre[:, 1] = x
    for k in range(2, n):
        legendre[:, k] = ((2 * k - 1) * x * legendre[:, k - 1] - (k - 1) * legendre[:, k - 2]) / k
    weights = 2.0 / (N * n * legendre[:, N] ** 2)
    order = np.argsort(x)
    x = x[order]
    weights = weights[order]
    # endpoints are exact by construction, symmetrize the rest
    x = 0.5 * (x - x[::-1])
    x[0], x[-1] = -1.0, 1.0
    weights = 0.5 * (weights + weights[::-1])
    return x, weights


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_basis(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Values of the Lagrange basis on ``nodes`` at points ``x``; shape (len(x), len(nodes))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lam = barycentric_weights(nodes)
    diff = x[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, rtol=0.0, atol=1e-15)
    diff = np.where(exact, 1.0, diff)
    terms = lam[None, :] / diff
    out = terms / np.sum(terms, axis=1, keepdims=True)
    rows = np.any(exact, axis=1)
    out[rows] = exact[rows].astype(float)
    return out


def differentiation_matrix(nodes: np.ndarray) -> np.ndarray:
    """Collocation differentiation matrix by barycentric Lagrange differentiation."""
    lam = barycentric_weights(nodes)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (lam[None, :] / lam[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -np.sum(D, axis=1))
    return D


@dataclass(frozen=True, eq=False)
class OneDSbp:
    """Diagonal-norm SBP first-derivative operator on ``p + 1`` LGL nodes.

    Attributes
    ----------
    p : int
        Polynomial degree of exactness.
    nodes : ndarray
        LGL nodes on [-1, 1].
    P : ndarray
        Diagonal of the norm matrix (the LGL weights).
    D : ndarray
        Differentiation matrix ``P^{-1} Q``.
    Q : ndarray
        ``Q = P D`` with ``Q + Q^T = E`` holding exactly.
    E : ndarray
        ``diag(-1, 0, ..., 0, 1)``.
    """

    p: int
    nodes: np.ndarray
    P: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    E: np.ndarray

    @property
    def n(self) -> int:
        return self.p + 1

    @property
    def S(self) -> np.ndarray:
        return self.Q - 0.5 * self.E


@lru_cache(maxsize=None)
def build_sbp(p: int) -> OneDSbp:
    """Build the LGL SBP operator of degree ``p`` (``1 <= p <= 13``)."""
    if not isinstance(p, (int, np.integer)) or p < 1 or p > MAX_DEGREE:
        raise InvalidArgument(f"SBP degree must be in [1, {MAX_DEGREE}], got {p}")
    p = int(p)
    nodes, weights = lgl_nodes_weights(p + 1)
    D0 = differentiation_matrix(nodes)
    Q0 = weights[:, None] * D0
    E = np.zeros((p + 1, p + 1))
    E[0, 0], E[-1, -1] = -1.0, 1.0
    # enforce Q + Q^T = E exactly: keep the skew part, add half of E
    Q = 0.5 * (Q0 - Q0.T) + 0.5 * E
    D = Q / weights[:, None]
    for arr in (nodes, weights, D, Q, E):
        arr.setflags(write=False)
    return OneDSbp(p=p, nodes=nodes, P=weights, D=D, Q=Q, E=E)


def apply_along(matrix: np.ndarray, field: np.ndarray, axis: int) -> np.ndarray:
    """Apply ``matrix`` along one axis of ``field`` (``out[..i..] = sum_j M[i, j] f[..j..]``)."""
    moved = np.moveaxis(field, axis, -1)
    out = moved @ matrix.T
    return np.moveaxis(out, -1, axis)


def apply_deriv(op: OneDSbp, direction: int, field: np.ndarray) -> np.ndarray:
    """Differentiate a tensor-product field along ``direction`` (1, 2 or 3).

    ``field`` has shape ``(n, n, n)`` or ``(n, n, n, b)``; block components
    are differentiated independently.
    """
    if direction not in (1, 2, 3):
        raise InvalidArgument(f"direction must be 1, 2 or 3, got {direction}")
    field = np.asarray(field, dtype=float)
    n = op.n
    if field.ndim not in (3, 4) or field.shape[:3] != (n, n, n):
        raise InvalidArgument(f"field shape {field.shape} does not match {n}^3 nodes")
    return apply_along(op.D, field, direction - 1)


def tensor_nodes(op: OneDSbp) -> np.ndarray:
    """Reference coordinates of the volume nodes, shape ``(n, n, n, 3)``."""
    x = op.nodes
    return np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)


def operator_residuals(op: OneDSbp) -> dict[str, float]:
    """Accuracy, SBP and positivity diagnostics for one operator."""
    x = op.nodes
    mono = 0.0
    for j in range(op.p + 1):
        exact = j * x ** (j - 1) if j > 0 else np.zeros_like(x)
        mono = max(mono, float(np.max(np.abs(op.D @ x**j - exact))))
    sbp = float(np.max(np.abs(op.Q + op.Q.T - op.E)))
    return {
        "degree": op.p,
        "monomial_residual": mono,
        "sbp_residual": sbp,
        "min_weight": float(np.min(op.P)),
        "weight_sum_error": float(abs(np.sum(op.P) - 2.0)),
    }
