"""
Conforming triangulations of the square (-1, 1)^2.

The level-0 grid is a 4x4 array of squares of side 0.5, each cut along a
diagonal whose direction alternates in a checkerboard pattern. Finer grids
come from red refinement, which keeps every triangle similar to its parent.

Faces are stored in one array with the interior faces first. Every face has
an owner ("left") triangle and, for interior faces, a neighbour ("right")
triangle with a larger index. The stored unit normal points out of the left
triangle.

Examples
--------
>>> m = build_initial_grid()
>>> m.n_triangles, m.n_vertices
(32, 25)
>>> refine_red(m).n_triangles
128
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Mesh",
    "build_initial_grid",
    "refine_red",
    "face_quadrature_geometry",
    "gauss_legendre_01",
    "dump_mesh",
]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangular mesh with face connectivity.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise vertex triples
    face_vertices : (nf, 2) int array
    face_elements : (nf, 2) int array, right entry is -1 on boundary faces
    face_normals : (nf, 2) float array, outward for the left triangle
    n_interior_faces : int
        Faces ``[0, n_interior_faces)`` are interior, the rest lie on the boundary.
    level : int
    """

    vertices: np.ndarray
    triangles: np.ndarray
    face_vertices: np.ndarray
    face_elements: np.ndarray
    face_normals: np.ndarray
    n_interior_faces: int
    level: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_faces(self) -> int:
        return self.face_vertices.shape[0]

    @property
    def n_boundary_faces(self) -> int:
        return self.n_faces - self.n_interior_faces

    @cached_property
    def is_boundary_face(self) -> np.ndarray:
        return self.face_elements[:, 1] < 0

    @cached_property
    def face_lengths(self) -> np.ndarray:
        a, b = self.vertices[self.face_vertices[:, 0]], self.vertices[self.face_vertices[:, 1]]
        return np.linalg.norm(b - a, axis=1)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        edges = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.linalg.norm(edges, axis=2).max(axis=1)

    @cached_property
    def inradii(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        perim = (
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
            + np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
            + np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
        )
        return 2.0 * self.signed_areas / perim

    @property
    def chunkiness(self) -> np.ndarray:
        """Ratio h_K / rho_K with rho_K the diameter of the inscribed circle."""
        return self.diameters / (2.0 * self.inradii)

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @property
    def interior_faces(self):
        """List of ``((va, vb), left, right, normal)`` records."""
        sl = slice(0, self.n_interior_faces)
        return [
            (tuple(fv), int(fe[0]), int(fe[1]), n)
            for fv, fe, n in zip(self.face_vertices[sl], self.face_elements[sl], self.face_normals[sl])
        ]

    @property
    def boundary_faces(self):
        """List of ``((va, vb), owner, outward normal)`` records."""
        sl = slice(self.n_interior_faces, None)
        return [
            (tuple(fv), int(fe[0]), n)
            for fv, fe, n in zip(self.face_vertices[sl], self.face_elements[sl], self.face_normals[sl])
        ]

    @cached_property
    def element_faces(self) -> np.ndarray:
        """(nt, 3) face index opposite to each local vertex."""
        out = np.full((self.n_triangles, 3), -1, dtype=np.int64)
        tri = self.triangles
        lookup = {}
        for f, (a, b) in enumerate(self.face_vertices):
            lookup[(min(a, b), max(a, b))] = f
        for k in range(3):
            a, b = tri[:, (k + 1) % 3], tri[:, (k + 2) % 3]
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            out[:, k] = [lookup[(x, y)] for x, y in zip(lo.tolist(), hi.tolist())]
        return out

    @cached_property
    def element_neighbors(self) -> np.ndarray:
        """(nt, 3) neighbour across each local face, -1 on the boundary."""
        fe = self.face_elements[self.element_faces]
        own = np.arange(self.n_triangles)[:, None]
        return np.where(fe[..., 0] == own, fe[..., 1], fe[..., 0])

    def __repr__(self) -> str:
        return (
            f"Mesh(level={self.level}, triangles={self.n_triangles}, "
            f"vertices={self.n_vertices}, h_max={self.h_max:.6g})"
        )


def _connectivity(vertices: np.ndarray, triangles: np.ndarray, level: int) -> Mesh:
    nt = triangles.shape[0]
    # local edge k is opposite local vertex k and runs CCW from vertex k+1 to k+2
    a = triangles[:, [1, 2, 0]].ravel()
    b = triangles[:, [2, 0, 1]].ravel()
    owner = np.repeat(np.arange(nt), 3)
    key = np.minimum(a, b) * (vertices.shape[0] + 1) + np.maximum(a, b)
    order = np.lexsort((owner, key))
    key_s, own_s, a_s, b_s = key[order], owner[order], a[order], b[order]

    starts = np.flatnonzero(np.r_[True, key_s[1:] != key_s[:-1]])
    counts = np.diff(np.r_[starts, key_s.size])
    if np.any(counts > 2):
        raise ValueError("non-manifold edge in triangulation")

    interior = starts[counts == 2]
    boundary = starts[counts == 1]

    def normals(idx):
        t = vertices[b_s[idx]] - vertices[a_s[idx]]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    fv = np.concatenate(
        [np.stack([a_s[interior], b_s[interior]], 1), np.stack([a_s[boundary], b_s[boundary]], 1)]
    )
    fe = np.concatenate(
        [
            np.stack([own_s[interior], own_s[interior + 1]], 1),
            np.stack([own_s[boundary], np.full(boundary.size, -1)], 1),
        ]
    )
    fn = np.concatenate([normals(interior), normals(boundary)])
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        face_vertices=fv.astype(np.int64),
        face_elements=fe.astype(np.int64),
        face_normals=fn,
        n_interior_faces=int(interior.size),
        level=level,
    )


def build_initial_grid(n: int = 4) -> Mesh:
    """Level-0 mesh: n x n squares with checkerboard-alternating diagonals.

    The default n = 4 gives squares of side 0.5 and h_max = 1/sqrt(2).
    """
    xs = np.linspace(-1.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris += [(v00, v10, v11), (v00, v11, v01)]
            else:
                tris += [(v00, v10, v01), (v10, v11, v01)]
    return _connectivity(vertices, np.array(tris, dtype=np.int64), level=0)


def refine_red(m: Mesh) -> Mesh:
    """Split each triangle into four congruent children via edge midpoints."""
    tri = m.triangles
    nv = m.n_vertices
    # midpoint of face f gets vertex index nv + f
    ef = m.element_faces
    mid = m.vertices[m.face_vertices].mean(axis=1)
    vertices = np.concatenate([m.vertices, mid])
    # local face k is opposite vertex k
    m0, m1, m2 = nv + ef[:, 0], nv + ef[:, 1], nv + ef[:, 2]
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    children = np.stack(
        [
            np.stack([v0, m2, m1], 1),
            np.stack([m2, v1, m0], 1),
            np.stack([m1, m0, v2], 1),
            np.stack([m0, m1, m2], 1),
        ],
        axis=1,
    ).reshape(-1, 3)
    return _connectivity(vertices, children, level=m.level + 1)


def build_level(level: int) -> Mesh:
    """Initial grid refined ``level`` times."""
    m = build_initial_grid()
    for _ in range(level):
        m = refine_red(m)
    return m


def gauss_legendre_01(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1] exact for the given degree."""
    npts = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def face_quadrature_geometry(m: Mesh, face: int, degree: int = 5):
    """Physical Gauss points and weights on one face.

    Returns
    -------
    points : (nq, 2) array
    weights : (nq,) array, summing to the face length
    normal : (2,) array
    length : float
    """
    if not 0 <= face < m.n_faces:
        raise IndexError(f"face index {face} out of range [0, {m.n_faces})")
    s, w = gauss_legendre_01(degree)
    a, b = m.vertices[m.face_vertices[face]]
    length = float(np.linalg.norm(b - a))
    pts = a[None, :] + s[:, None] * (b - a)[None, :]
    return pts, w * length, m.face_normals[face].copy(), length


def dump_mesh(m: Mesh, path) -> None:
    """Write a plain-text dump: vertices, triangles, faces, one record per line."""
    with open(path, "w") as fh:
        fh.write(f"# level {m.level}\n")
        fh.write(f"vertices {m.n_vertices}\n")
        for x, y in m.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        fh.write(f"triangles {m.n_triangles}\n")
        for t in m.triangles:
            fh.write(f"{t[0]} {t[1]} {t[2]}\n")
        fh.write(f"faces {m.n_faces} interior {m.n_interior_faces}\n")
        for fv, fe, n in zip(m.face_vertices, m.face_elements, m.face_normals):
            fh.write(f"{fv[0]} {fv[1]} {fe[0]} {fe[1]} {n[0]:.17g} {n[1]:.17g}\n")
