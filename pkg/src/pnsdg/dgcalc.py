"""
DG differential calculus: jumps, averages, liftings and DG gradients.

The lifting R_h w of a broken vector field is the broken tensor field with

    (R_h w, X_h) = <[[w (x) n]], {X_h}>_{Gamma_h}   for all X_h in X_h^ell,

and the DG gradient is G_h w = grad_h w - R_h w. Both are linear in w and
only couple an element to its face neighbours, so they are stored as dense
per-element "stencil" operators acting on the velocity coefficients of the
element and its (up to) three neighbours. Slot 0 of a stencil is the element
itself; slot k + 1 is the neighbour across local face k.

On boundary faces the jump is ``(w - w_D) (x) n`` where ``w_D`` is optional
boundary data, passed as values at the boundary face quadrature points.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sps

from .spaces import BrokenField, DGSpace

__all__ = [
    "DGOperators",
    "operators",
    "jump_tensor",
    "average_tensor",
    "lift",
    "dg_gradient",
    "sym_dg_gradient",
    "dg_divergence",
    "dg_norm",
    "jumps_at_faces",
    "local_gradient",
    "symmetrize_flat",
]

# flat tensor index ab = 2 * a + b
_TRANSPOSE = np.array([0, 2, 1, 3])


def symmetrize_flat(X: np.ndarray, axis: int = -1) -> np.ndarray:
    """Symmetric part of tensors stored with 4 flat components along ``axis``."""
    return 0.5 * (X + np.take(X, _TRANSPOSE, axis=axis))


class DGOperators:
    """Cached stencil operators for one :class:`DGSpace`."""

    def __init__(self, space: DGSpace):
        self.space = space
        sp = space
        ne, nb = sp.n_elements, sp.nb
        self.ns = 4 * 2 * nb
        ef = sp.element_faces
        is_left = sp.element_is_left
        nrm = sp.fnormal[ef] * np.where(is_left, 1.0, -1.0)[..., None]  # outward of e
        self.element_normals = nrm
        boundary = sp.mesh.is_boundary_face[ef]
        weight = np.where(boundary, 1.0, 0.5)

        own = np.where(is_left[..., None, None], sp.trace_left[ef], sp.trace_right[ef])  # (ne,3,nqf,nb)
        other = np.where(is_left[..., None, None], sp.trace_right[ef], sp.trace_left[ef])
        fw = sp.fw[ef] * weight[..., None]  # (ne,3,nqf)
        self.own_trace = own
        self.other_trace = other
        minv = sp.mass_inverse()
        t_own = np.einsum("ekq,ekqi,ekqj->ekij", fw, own, own)
        t_nb = np.einsum("ekq,ekqi,ekqj->ekij", fw, own, other)
        mt_own = np.einsum("eil,eklj->ekij", minv, t_own)
        mt_nb = np.einsum("eil,eklj->ekij", minv, t_nb)

        # L[e, a, b, i, slot, c, j]
        L = np.zeros((ne, 2, 2, nb, 4, 2, nb))
        G = np.zeros_like(L)
        for a in range(2):
            L[:, a, :, :, 0, a, :] = np.einsum("ekb,ekij->ebij", nrm, mt_own)
            for k in range(3):
                L[:, a, :, :, k + 1, a, :] = -np.einsum("eb,eij->ebij", nrm[:, k], mt_nb[:, k])
            G[:, a, :, :, 0, a, :] = np.einsum("eijb->ebij", sp.dphi_nodes)
        G -= L
        self.lift_coef = L.reshape(ne, 4, nb, self.ns)
        self.grad_coef = G.reshape(ne, 4, nb, self.ns)  # DG gradient, homogeneous part
        self._minv = minv
        self._fw_weighted = fw

        st = sp.stencil
        valid = st >= 0
        self.stencil_valid = valid
        c = np.arange(2)[None, None, :, None]
        j = np.arange(nb)[None, None, None, :]
        dofs = (np.maximum(st, 0)[:, :, None, None] * 2 + c) * nb + j
        self.stencil_dofs = np.where(valid[:, :, None, None], dofs, 0).reshape(ne, self.ns)
        self.stencil_mask = np.broadcast_to(valid[:, :, None, None], (ne, 4, 2, nb)).reshape(ne, self.ns)

    # ------------------------------------------------------------------ volume
    @cached_property
    def grad_q(self) -> np.ndarray:
        """(ne, nq, 4, ns) DG gradient values at volume quadrature points."""
        return np.einsum("qi,exis->eqxs", self.space.phi, self.grad_coef)

    @cached_property
    def lift_q(self) -> np.ndarray:
        """(ne, nq, 4, ns) lifting values at volume quadrature points."""
        return np.einsum("qi,exis->eqxs", self.space.phi, self.lift_coef)

    @cached_property
    def symgrad_q(self) -> np.ndarray:
        return symmetrize_flat(self.grad_q, axis=2)

    @cached_property
    def symlift_q(self) -> np.ndarray:
        return symmetrize_flat(self.lift_q, axis=2)

    @cached_property
    def local_grad_q(self) -> np.ndarray:
        """(ne, nq, 4, 2*nb) local gradient of own dofs at quadrature points."""
        sp = self.space
        nb = sp.nb
        out = np.zeros((sp.n_elements, sp.nq, 2, 2, 2, nb))
        for a in range(2):
            out[:, :, a, :, a, :] = np.einsum("eqib->eqbi", sp.dphi)
        return out.reshape(sp.n_elements, sp.nq, 4, 2 * nb)

    def gather(self, v: np.ndarray) -> np.ndarray:
        """(ne, ns) stencil coefficient vectors, zero in missing slots."""
        return np.where(self.stencil_mask, v[self.stencil_dofs], 0.0)

    # ------------------------------------------------------------ boundary data
    def lift_data_coef(self, wD: np.ndarray | None) -> np.ndarray | None:
        """Lifting coefficients (ne, 4, nb) of the boundary jump ``-w_D (x) n``.

        ``wD`` holds values at the boundary face quadrature points with shape
        (n_boundary_faces, nqf, 2).
        """
        if wD is None:
            return None
        sp = self.space
        nI = sp.mesh.n_interior_faces
        fb = np.arange(nI, sp.mesh.n_faces)
        owner = sp.mesh.face_elements[fb, 0]
        n = sp.fnormal[fb]
        mom = -np.einsum("fq,fqi,fqa,fb->fabi", sp.fw[fb], sp.trace_left[fb], wD, n)
        out = np.zeros((sp.n_elements, 2, 2, sp.nb))
        np.add.at(out, owner, mom)
        out = np.einsum("eij,eabj->eabi", self._minv, out)
        return out.reshape(sp.n_elements, 4, sp.nb)

    # ------------------------------------------------------------------- faces
    @cached_property
    def face_dofs(self) -> np.ndarray:
        """(nf, 2*2*nb) velocity dofs of the left then right element (right padded with 0)."""
        sp = self.space
        nb = sp.nb
        fe = sp.mesh.face_elements
        c = np.arange(2)[None, None, :, None]
        j = np.arange(nb)[None, None, None, :]
        d = (np.maximum(fe, 0)[:, :, None, None] * 2 + c) * nb + j
        return d.reshape(len(fe), 4 * nb)

    @cached_property
    def face_mask(self) -> np.ndarray:
        sp = self.space
        fe = sp.mesh.face_elements
        m = np.broadcast_to((fe >= 0)[:, :, None, None], (len(fe), 2, 2, sp.nb))
        return m.reshape(len(fe), 4 * sp.nb)

    @cached_property
    def jump_q(self) -> np.ndarray:
        """(nf, nqf, 4, 2*2*nb) map from face dofs to [[w (x) n]] at face points."""
        sp = self.space
        nf, nqf, nb = sp.mesh.n_faces, sp.nqf, sp.nb
        out = np.zeros((nf, nqf, 2, 2, 2, 2, nb))
        n = sp.fnormal
        for a in range(2):
            out[:, :, a, :, 0, a, :] = np.einsum("fqj,fb->fqbj", sp.trace_left, n)
            out[:, :, a, :, 1, a, :] = -np.einsum("fqj,fb->fqbj", sp.trace_right, n)
        return out.reshape(nf, nqf, 4, 4 * nb)

    def gather_face(self, v: np.ndarray) -> np.ndarray:
        return np.where(self.face_mask, v[self.face_dofs], 0.0)

    def jump_data(self, wD: np.ndarray | None) -> np.ndarray | None:
        """(nf, nqf, 4) jump offset ``-w_D (x) n`` on boundary faces, zero elsewhere."""
        if wD is None:
            return None
        sp = self.space
        nI = sp.mesh.n_interior_faces
        out = np.zeros((sp.mesh.n_faces, sp.nqf, 2, 2))
        out[nI:] = -np.einsum("fqa,fb->fqab", wD, sp.fnormal[nI:])
        return out.reshape(sp.mesh.n_faces, sp.nqf, 4)

    # ------------------------------------------------------------ global forms
    def _global(self, coef: np.ndarray, ncomp_out: int) -> sps.csr_matrix:
        sp = self.space
        ne, nb = sp.n_elements, sp.nb
        rows = (np.arange(ne)[:, None, None] * ncomp_out + np.arange(ncomp_out)[None, :, None]) * nb
        rows = rows + np.arange(nb)[None, None, :]
        rows = np.broadcast_to(rows[..., None], coef.shape)
        cols = np.broadcast_to(self.stencil_dofs[:, None, None, :], coef.shape)
        mask = np.broadcast_to(self.stencil_mask[:, None, None, :], coef.shape) & (coef != 0)
        return sps.csr_matrix(
            (coef[mask], (rows[mask], cols[mask])), shape=(ne * ncomp_out * nb, sp.ndofs(2))
        )

    @cached_property
    def lifting_matrix(self) -> sps.csr_matrix:
        return self._global(self.lift_coef, 4)

    @cached_property
    def gradient_matrix(self) -> sps.csr_matrix:
        return self._global(self.grad_coef, 4)

    @cached_property
    def divergence_matrix(self) -> sps.csr_matrix:
        return self._global((self.grad_coef[:, 0] + self.grad_coef[:, 3])[:, None], 1)


def operators(space: DGSpace) -> DGOperators:
    """Cached :class:`DGOperators` of ``space``."""
    ops = space.__dict__.get("_dg_operators")
    if ops is None:
        ops = DGOperators(space)
        space.__dict__["_dg_operators"] = ops
    return ops


# ---------------------------------------------------------------- pointwise
def _face_traces(field: BrokenField, face: int, points):
    sp = field.space
    left, right = sp.mesh.face_elements[face]
    pts = np.atleast_2d(points)
    tl = field.evaluate(int(left), pts)
    tr = field.evaluate(int(right), pts) if right >= 0 else None
    return tl, tr


def jump_tensor(w: BrokenField, face: int, points, boundary_data=None) -> np.ndarray:
    """[[w (x) n]] at points on ``face``, shape (n, 2, 2).

    Interior faces: tr_left(w) (x) n - tr_right(w) (x) n with n the stored
    normal. Boundary faces: (w - w_D) (x) n.
    """
    n = w.space.fnormal[face]
    tl, tr = _face_traces(w, face, points)
    if tr is None:
        if boundary_data is not None:
            tl = tl - np.asarray(boundary_data, float)
        return np.einsum("qa,b->qab", tl, n)
    return np.einsum("qa,b->qab", tl - tr, n)


def average_tensor(X: BrokenField, face: int, points) -> np.ndarray:
    """{X} at points on ``face``; the single trace on boundary faces."""
    tl, tr = _face_traces(X, face, points)
    avg = tl if tr is None else 0.5 * (tl + tr)
    return avg.reshape(avg.shape[0], *([2, 2] if X.components == 4 else [X.components]))


# ---------------------------------------------------------------- operators
def lift(w: BrokenField, symmetric: bool = False, boundary_data=None) -> BrokenField:
    """Lifting R_h w (or its symmetric part) as a broken tensor field."""
    ops = operators(w.space)
    coef = np.einsum("exis,es->exi", ops.lift_coef, ops.gather(w.coeffs))
    data = ops.lift_data_coef(boundary_data)
    if data is not None:
        coef = coef + data
    if symmetric:
        coef = symmetrize_flat(coef, axis=1)
    return BrokenField(w.space, 4, coef.ravel())


def local_gradient(w: BrokenField) -> BrokenField:
    """Elementwise gradient grad_h w, interpolated exactly into X_h^ell."""
    sp = w.space
    g = np.einsum("enib,eai->eabn", sp.dphi_nodes, w.local)
    return BrokenField(sp, 4, g.reshape(sp.n_elements, 4, sp.nb).ravel())


def dg_gradient(w: BrokenField, boundary_data=None) -> BrokenField:
    """G_h w = grad_h w - R_h w."""
    return local_gradient(w) - lift(w, boundary_data=boundary_data)


def sym_dg_gradient(w: BrokenField, boundary_data=None) -> BrokenField:
    """D_h w - R_h^sym w, the symmetric part of the DG gradient."""
    G = dg_gradient(w, boundary_data=boundary_data)
    loc = symmetrize_flat(G.local, axis=1)
    return BrokenField(w.space, 4, loc.ravel())


def dg_divergence(w: BrokenField, boundary_data=None) -> BrokenField:
    """Div_h w = tr(G_h w)."""
    G = dg_gradient(w, boundary_data=boundary_data).local
    return BrokenField(w.space, 1, (G[:, 0] + G[:, 3]).ravel())


def jumps_at_faces(w: BrokenField, boundary_data=None) -> np.ndarray:
    """(nf, nqf, 4) values of [[w (x) n]] at all face quadrature points."""
    ops = operators(w.space)
    J = np.einsum("fqxt,ft->fqx", ops.jump_q, ops.gather_face(w.coeffs))
    data = ops.jump_data(boundary_data)
    return J if data is None else J + data


def dg_norm(w: BrokenField, p: float, variant: str = "full", boundary_data=None) -> float:
    """||grad_h w||_p + h^(1/p) ||h^-1 [[w (x) n]]||_{p, Gamma_h}.

    ``variant="symmetric"`` uses the local symmetric gradient D_h w.
    """
    if not p > 1.0:
        raise ValueError("p must exceed 1")
    sp = w.space
    ops = operators(sp)
    g = np.einsum("eqxs,es->eqx", ops.local_grad_q, w.local.reshape(sp.n_elements, -1))
    if variant == "symmetric":
        g = symmetrize_flat(g)
    elif variant != "full":
        raise ValueError("variant must be 'full' or 'symmetric'")
    vol = np.einsum("eq,eq->", sp.qw, np.linalg.norm(g, axis=-1) ** p) ** (1.0 / p)
    J = jumps_at_faces(w, boundary_data)
    h = sp.h
    jump = h ** (1.0 / p) * np.einsum("fq,fq->", sp.fw, (np.linalg.norm(J, axis=-1) / h) ** p) ** (1.0 / p)
    return float(vol + jump)
