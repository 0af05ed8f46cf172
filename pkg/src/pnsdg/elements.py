"""
Reference-triangle quadrature and nodal Lagrange bases.

The reference triangle is conv{(0, 0), (1, 0), (0, 1)} with area 1/2.
Quadrature points are given in barycentric coordinates ``(l0, l1, l2)``;
the reference coordinates are ``(l1, l2)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np

__all__ = ["QuadRule", "ReferenceBasis", "triangle_rule", "map_to_physical", "reference_basis"]


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,), sum 1/2
    degree: int

    @property
    def ref_points(self) -> np.ndarray:
        return self.points[:, 1:]

    def __len__(self) -> int:
        return self.weights.size


def _orbit3(a):
    c = 1.0 - 2.0 * a
    return [(c, a, a), (a, c, a), (a, a, c)]


def _orbit6(a, b):
    return sorted(set(permutations((a, b, 1.0 - a - b))))


# symmetric rules with interior points and positive weights; weights are
# fractions of the triangle area
_S15 = np.sqrt(15.0)
_SYMMETRIC = {
    1: [((1 / 3, 1 / 3, 1 / 3), 1.0)],
    2: [(p, 1 / 3) for p in _orbit3(1 / 6)],
    4: [(p, 0.22338158967801133) for p in _orbit3(0.4459484909159648)]
    + [(p, 0.109951743655322) for p in _orbit3(0.09157621350977078)],
    5: [((1 / 3, 1 / 3, 1 / 3), 0.225)]
    + [(p, (155.0 - _S15) / 1200.0) for p in _orbit3((6.0 - _S15) / 21.0)]
    + [(p, (155.0 + _S15) / 1200.0) for p in _orbit3((6.0 + _S15) / 21.0)],
    6: [(p, 0.11678627572642529) for p in _orbit3(0.24928674517088378)]
    + [(p, 0.05084490637021478) for p in _orbit3(0.06308901449150801)]
    + [(p, 0.08285107561834663) for p in _orbit6(0.31035245103380454, 0.053145049844797475)],
}
# requested degree -> symmetric rule used
_SYMMETRIC_FOR = {1: 1, 2: 2, 3: 4, 4: 4, 5: 5, 6: 6}


def _collapsed_rule(degree: int):
    """Conical product Gauss-Jacobi rule; positive weights, interior points."""
    from scipy.special import roots_jacobi

    n = degree // 2 + 1
    xg, wg = np.polynomial.legendre.leggauss(n)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    # s in [0,1] with weight (1-s) from Jacobi(1,0); r in [0,1] uniform
    s, ws = 0.5 * (xj + 1.0), wj / 4.0
    r, wr = 0.5 * (xg + 1.0), 0.5 * wg
    S, R = np.meshgrid(s, r, indexing="ij")
    x = S.ravel()
    y = ((1.0 - S) * R).ravel()
    w = np.outer(ws, wr).ravel()
    bary = np.stack([1.0 - x - y, x, y], axis=1)
    return bary, w


@lru_cache(maxsize=None)
def triangle_rule(exactness_degree: int) -> QuadRule:
    """Quadrature on the reference triangle exact for the given degree (1..10)."""
    if not 1 <= exactness_degree <= 10:
        raise ValueError(f"exactness degree must lie in [1, 10], got {exactness_degree}")
    if exactness_degree in _SYMMETRIC_FOR:
        rule = _SYMMETRIC[_SYMMETRIC_FOR[exactness_degree]]
        pts = np.array([p for p, _ in rule], dtype=float)
        w = 0.5 * np.array([w for _, w in rule], dtype=float)
    else:
        pts, w = _collapsed_rule(exactness_degree)
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(points=pts, weights=w, degree=exactness_degree)


def map_to_physical(tri_geometry, rule: QuadRule):
    """Push a reference rule forward to the triangle with the given 3 vertices.

    Returns physical points (nq, 2) and weights scaled by |det J|.
    """
    p = np.asarray(tri_geometry, dtype=float)
    B = np.stack([p[1] - p[0], p[2] - p[0]], axis=1)
    det = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
    if abs(det) <= 1e-14 * max(1.0, np.abs(B).max() ** 2):
        raise ValueError("degenerate triangle")
    pts = p[0][None, :] + rule.ref_points @ B.T
    return pts, rule.weights * abs(det)


def _lattice(degree: int) -> np.ndarray:
    return np.array(
        [(i / degree, j / degree) for j in range(degree + 1) for i in range(degree + 1 - j)]
    )


def _exponents(degree: int):
    return [(a, b) for s in range(degree + 1) for b in range(s + 1) for a in [s - b]]


class ReferenceBasis:
    """Nodal Lagrange basis of degree ``degree`` on the reference triangle.

    For degree 1 the nodes are the vertices in reference order, so the basis
    functions are the barycentric coordinates.
    """

    def __init__(self, degree: int):
        if degree < 1:
            raise ValueError("degree must be >= 1")
        self.degree = degree
        self.nodes = _lattice(degree)
        self.n_funcs = (degree + 1) * (degree + 2) // 2
        self._exp = _exponents(degree)
        V = self._monomials(self.nodes)
        self._coef = np.linalg.inv(V)  # column i: monomial coefficients of phi_i

    def _monomials(self, xi):
        xi = np.atleast_2d(xi)
        return np.stack([xi[:, 0] ** a * xi[:, 1] ** b for a, b in self._exp], axis=1)

    def _monomial_grads(self, xi):
        xi = np.atleast_2d(xi)
        x, y = xi[:, 0], xi[:, 1]
        dx = [a * x ** max(a - 1, 0) * y**b if a else np.zeros_like(x) for a, b in self._exp]
        dy = [b * x**a * y ** max(b - 1, 0) if b else np.zeros_like(x) for a, b in self._exp]
        return np.stack(dx, axis=1), np.stack(dy, axis=1)

    def values(self, xi) -> np.ndarray:
        """(n_points, n_funcs) basis values at reference points."""
        return self._monomials(xi) @ self._coef

    def gradients(self, xi) -> np.ndarray:
        """(n_points, n_funcs, 2) reference gradients."""
        dx, dy = self._monomial_grads(xi)
        return np.stack([dx @ self._coef, dy @ self._coef], axis=-1)

    def mass(self) -> np.ndarray:
        """Exact reference mass matrix."""
        rule = triangle_rule(min(2 * self.degree, 10))
        phi = self.values(rule.ref_points)
        return (phi * rule.weights[:, None]).T @ phi


@lru_cache(maxsize=None)
def reference_basis(degree: int) -> ReferenceBasis:
    return ReferenceBasis(degree)
