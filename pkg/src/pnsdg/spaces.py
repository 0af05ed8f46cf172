"""
Broken polynomial spaces on a mesh.

A :class:`DGSpace` caches the element and face geometry for one mesh and
polynomial degree: quadrature points and weights, basis values and
gradients, and face traces from both sides. Fields live in
:class:`BrokenField` objects whose coefficients are ordered element-major,
then component, then local basis function::

    index(e, c, i) = (e * components + c) * n_funcs + i

Tensor fields use 4 components in row-major order (00, 01, 10, 11).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .elements import reference_basis, triangle_rule
from .mesh import Mesh, gauss_legendre_01

__all__ = [
    "DGSpace",
    "BrokenField",
    "ContinuousPressure",
    "l2_project",
    "eval_trace",
    "apply_zero_mean",
]


class DGSpace:
    """Geometry and basis tables for the broken P_ell spaces on ``mesh``."""

    def __init__(self, mesh: Mesh, degree: int = 1, volume_degree: int = 6, face_degree: int = 5):
        self.mesh = mesh
        self.degree = degree
        self.basis = reference_basis(degree)
        self.nb = self.basis.n_funcs
        self.volume_rule = triangle_rule(volume_degree)
        self.face_degree = face_degree

        p = mesh.vertices[mesh.triangles]
        self.origin = p[:, 0]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
        self.jac = B
        self.det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        if np.any(self.det <= 0):
            raise ValueError("mesh has non-positively oriented triangles")
        self.jac_inv = np.linalg.inv(B)
        self.area = 0.5 * self.det
        self.h = mesh.h_max

        ref = self.volume_rule.ref_points
        self.phi = self.basis.values(ref)  # (nq, nb)
        self.qpts = self.origin[:, None, :] + np.einsum("eij,qj->eqi", B, ref)
        self.qw = self.volume_rule.weights[None, :] * self.det[:, None]
        gref = self.basis.gradients(ref)  # (nq, nb, 2)
        # physical gradient: J^{-T} grad_ref
        self.dphi = np.einsum("qid,edk->eqik", gref, self.jac_inv)
        gnode = self.basis.gradients(self.basis.nodes)  # (nodes, nb, 2)
        self.dphi_nodes = np.einsum("nid,edk->enik", gnode, self.jac_inv)

        self.ref_mass = self.basis.mass()
        self.ref_mass_inv = np.linalg.inv(self.ref_mass)

        s, w = gauss_legendre_01(face_degree)
        fv = mesh.vertices[mesh.face_vertices]
        a, b = fv[:, 0], fv[:, 1]
        self.face_s = s
        self.fpts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        self.fw = w[None, :] * mesh.face_lengths[:, None]
        self.fnormal = mesh.face_normals
        fe = mesh.face_elements
        self.trace_left = self._trace_values(fe[:, 0], self.fpts)
        right = np.where(fe[:, 1] < 0, 0, fe[:, 1])
        tr = self._trace_values(right, self.fpts)
        tr[fe[:, 1] < 0] = 0.0
        self.trace_right = tr

    @property
    def n_elements(self) -> int:
        return self.mesh.n_triangles

    @property
    def nq(self) -> int:
        return self.phi.shape[0]

    @property
    def nqf(self) -> int:
        return self.face_s.size

    def ndofs(self, components: int) -> int:
        return self.n_elements * components * self.nb

    def to_reference(self, elems, x):
        """Reference coordinates of physical points ``x[..., 2]`` in ``elems``."""
        return np.einsum("...ij,...j->...i", self.jac_inv[elems], x - self.origin[elems])

    def _trace_values(self, elems, pts):
        xi = self.to_reference(elems[:, None], pts)
        flat = xi.reshape(-1, 2)
        return self.basis.values(flat).reshape(pts.shape[0], pts.shape[1], self.nb)

    def mass_inverse(self) -> np.ndarray:
        """(ne, nb, nb) inverse local mass matrices."""
        return self.ref_mass_inv[None, :, :] / self.det[:, None, None]

    def mass_local(self) -> np.ndarray:
        return self.ref_mass[None, :, :] * self.det[:, None, None]

    @cached_property
    def element_faces(self) -> np.ndarray:
        return self.mesh.element_faces

    @cached_property
    def stencil(self) -> np.ndarray:
        """(ne, 4): the element followed by its neighbours across local faces 0..2 (-1 if none)."""
        ne = self.n_elements
        return np.concatenate([np.arange(ne)[:, None], self.mesh.element_neighbors], axis=1)

    @cached_property
    def element_is_left(self) -> np.ndarray:
        """(ne, 3) True where the element is the left (owner) side of its local face."""
        fe = self.mesh.face_elements[self.element_faces]
        return fe[..., 0] == np.arange(self.n_elements)[:, None]

    def zeros(self, components: int) -> "BrokenField":
        return BrokenField(self, components, np.zeros(self.ndofs(components)))

    def __repr__(self) -> str:
        return f"DGSpace(degree={self.degree}, elements={self.n_elements}, nq={self.nq}, nqf={self.nqf})"


@dataclass
class BrokenField:
    """Coefficients of a broken polynomial field with ``components`` scalar components."""

    space: DGSpace
    components: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        expected = self.space.ndofs(self.components)
        if self.coeffs.shape != (expected,):
            raise ValueError(f"expected {expected} coefficients, got {self.coeffs.shape}")

    @property
    def local(self) -> np.ndarray:
        """(ne, components, nb) view of the coefficients."""
        return self.coeffs.reshape(self.space.n_elements, self.components, self.space.nb)

    def at_quadrature(self) -> np.ndarray:
        """(ne, nq, components) values at the volume quadrature points."""
        return np.einsum("qi,eci->eqc", self.space.phi, self.local)

    def traces(self):
        """Left and right traces at face quadrature points, each (nf, nqf, components).

        The right trace is zero on boundary faces.
        """
        sp = self.space
        fe = sp.mesh.face_elements
        left = np.einsum("fqi,fci->fqc", sp.trace_left, self.local[fe[:, 0]])
        right = np.einsum("fqi,fci->fqc", sp.trace_right, self.local[np.maximum(fe[:, 1], 0)])
        return left, right

    def evaluate(self, elem: int, x) -> np.ndarray:
        """Values of the polynomial on element ``elem`` at points ``x`` (n, 2)."""
        xi = self.space.to_reference(np.full(len(x), elem), np.asarray(x, float))
        return self.space.basis.values(xi) @ self.local[elem].T

    def norm_l2(self) -> float:
        v = self.at_quadrature()
        return float(np.sqrt(np.einsum("eq,eqc,eqc->", self.space.qw, v, v)))

    def copy(self) -> "BrokenField":
        return BrokenField(self.space, self.components, self.coeffs.copy())

    def __add__(self, other):
        return BrokenField(self.space, self.components, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return BrokenField(self.space, self.components, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return BrokenField(self.space, self.components, self.coeffs * scalar)

    __rmul__ = __mul__


def l2_project(target, space: DGSpace, components: int | None = None) -> BrokenField:
    """Local L2 projection onto the broken space.

    ``target`` is a callable mapping points ``(..., 2)`` to values
    ``(..., components)`` (scalars may drop the last axis), a
    :class:`BrokenField`, or an array of values at the volume quadrature
    points with shape ``(ne, nq, components)``.
    """
    if isinstance(target, BrokenField):
        values = target.at_quadrature()
    elif callable(target):
        values = np.asarray(target(space.qpts), dtype=float)
    else:
        values = np.asarray(target, dtype=float)
    if values.ndim == 2:
        values = values[..., None]
    if values.shape[:2] != (space.n_elements, space.nq):
        raise ValueError("target values do not match the volume quadrature layout")
    if components is not None and values.shape[2] != components:
        raise ValueError(f"target has {values.shape[2]} components, expected {components}")
    rhs = np.einsum("eq,qi,eqc->eci", space.qw, space.phi, values)
    minv = space.mass_inverse()
    if not np.all(np.isfinite(minv)):
        raise np.linalg.LinAlgError("singular local mass matrix")
    coeffs = np.einsum("eij,ecj->eci", minv, rhs)
    return BrokenField(space, values.shape[2], coeffs.ravel())


def eval_trace(f: BrokenField, face: int, side: str, points) -> np.ndarray:
    """Trace of ``f`` on ``face`` from the ``"left"`` or ``"right"`` element."""
    mesh = f.space.mesh
    if not 0 <= face < mesh.n_faces:
        raise IndexError(f"face index {face} out of range")
    left, right = mesh.face_elements[face]
    if side == "left":
        elem = left
    elif side == "right":
        if right < 0:
            raise ValueError(f"face {face} is a boundary face and has no right side")
        elem = right
    else:
        raise ValueError("side must be 'left' or 'right'")
    return f.evaluate(int(elem), np.atleast_2d(points))


@dataclass
class ContinuousPressure:
    """Continuous piecewise-linear scalar field given by vertex values."""

    mesh: Mesh
    values: np.ndarray
    mean_offset: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError("one value per mesh vertex expected")

    @classmethod
    def interpolate(cls, mesh: Mesh, func) -> "ContinuousPressure":
        return cls(mesh, np.asarray(func(mesh.vertices), dtype=float))

    def at_points(self, space: DGSpace) -> np.ndarray:
        """(ne, nq) values at the volume quadrature points of ``space``."""
        bary = space.volume_rule.points
        return np.einsum("qk,ek->eq", bary, self.values[self.mesh.triangles])

    def mean(self) -> float:
        """Exact mean value over the domain."""
        area = self.mesh.signed_areas
        total = np.sum(area * self.values[self.mesh.triangles].sum(axis=1) / 3.0)
        return float(total / area.sum())

    def gradient(self) -> np.ndarray:
        """(ne, 2) elementwise constant gradient."""
        m = self.mesh
        p = m.vertices[m.triangles]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        vals = self.values[m.triangles]
        dref = np.stack([vals[:, 1] - vals[:, 0], vals[:, 2] - vals[:, 0]], axis=1)
        return np.einsum("eji,ej->ei", np.linalg.inv(B), dref)


def pressure_mass_vector(mesh: Mesh) -> np.ndarray:
    """Integrals of the vertex hat functions."""
    w = np.zeros(mesh.n_vertices)
    np.add.at(w, mesh.triangles.ravel(), np.repeat(mesh.signed_areas / 3.0, 3))
    return w


def apply_zero_mean(q: ContinuousPressure) -> ContinuousPressure:
    """Subtract the domain mean; the removed mean is added to ``mean_offset``."""
    m = q.mean()
    return ContinuousPressure(q.mesh, q.values - m, q.mean_offset + m)
