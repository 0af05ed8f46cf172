"""
Residual and Jacobian assembly for the discrete saddle-point system.

The unknown of one implicit Euler step is the flat vector

    U = [v (velocity coefficients), q (pressure vertex values), lam]

where ``lam`` is the Lagrange multiplier of the zero-mean pressure
constraint. For test functions (z, z_q, mu) the residual reads

    (v - v_prev, z) / tau + <S v, z> + <B v, z> - (q, Div_h z)
        - (g, z) - (G, G_h z)
    (Div_h v, z_q) + lam (1, z_q)
    mu (q, 1)

with ``S`` one of the LDG or SIP stress operators and ``B`` one of the two
convective operators. The forcing tensor ``G`` enters with a plus sign on
the right-hand side, i.e. the momentum equation is
``dv/dt - div S(Dv) + [grad v] v + grad q = g - div G``.

Boundary jumps of the unknown velocity may carry Dirichlet data ``w_D``
(``(v - w_D) (x) n``); jumps of test functions never do.

Element terms are collected in dense (n_elements, ns, ns) blocks over the
stencil dofs of :class:`~pnsdg.dgcalc.DGOperators`; face terms in
(n_faces, 12, 12) blocks over the dofs of both adjacent elements. A
precomputed pattern map scatters them into one CSR matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .constitutive import ModelParams, stress_sym3, sym_coords
from .dgcalc import DGOperators, operators, symmetrize_flat
from .spaces import DGSpace, pressure_mass_vector

__all__ = [
    "SystemLayout",
    "Contribution",
    "SparseSystem",
    "StepData",
    "FormAssembler",
    "assemble_mass",
    "assemble_stress_ldg",
    "assemble_stress_sip",
    "assemble_convective_I",
    "assemble_convective_II",
    "assemble_pressure",
    "assemble_rhs",
]


@dataclass(frozen=True)
class SystemLayout:
    """Index ranges of the velocity, pressure and multiplier blocks."""

    n_velocity: int
    n_pressure: int

    @property
    def size(self) -> int:
        return self.n_velocity + self.n_pressure + 1

    @property
    def velocity(self) -> slice:
        return slice(0, self.n_velocity)

    @property
    def pressure(self) -> slice:
        return slice(self.n_velocity, self.n_velocity + self.n_pressure)

    @property
    def multiplier(self) -> int:
        return self.n_velocity + self.n_pressure

    def split(self, U):
        return U[self.velocity], U[self.pressure], U[self.multiplier]

    def join(self, v, q, lam=0.0):
        return np.concatenate([v, q, [lam]])


@dataclass
class Contribution:
    """Residual vector and (optional) sparse Jacobian of one term."""

    residual: np.ndarray
    jacobian: sps.csr_matrix | None = None

    def __add__(self, other: "Contribution") -> "Contribution":
        jac = None
        if self.jacobian is not None and other.jacobian is not None:
            jac = (self.jacobian + other.jacobian).tocsr()
        return Contribution(self.residual + other.residual, jac)


@dataclass
class SparseSystem:
    """Assembled residual and Jacobian over the full saddle-point index space."""

    residual: np.ndarray
    jacobian: sps.csr_matrix | None
    layout: SystemLayout


@dataclass
class StepData:
    """Data of one implicit Euler step.

    Attributes
    ----------
    v_prev : velocity coefficients at the previous time level
    tau : step size
    g : (ne, nq, 2) body force at volume quadrature points, or None
    G : (ne, nq, 4) forcing tensor at volume quadrature points, or None
    wD : (n_boundary_faces, nqf, 2) Dirichlet data at boundary face points, or None
    """

    v_prev: np.ndarray
    tau: float
    g: np.ndarray | None = None
    G: np.ndarray | None = None
    wD: np.ndarray | None = None
    t: float = 0.0


@dataclass
class _Local:
    """Dense local blocks of a sum of terms."""

    er: np.ndarray  # (ne, ns)
    fr: np.ndarray  # (nf, 12)
    ej: np.ndarray | None = None  # (ne, ns, ns)
    fj: np.ndarray | None = None  # (nf, 12, 12)
    extra: list = field(default_factory=list)  # extra sparse velocity Jacobians


class FormAssembler:
    """Assembles the step residual and Jacobian for one space and parameter set.

    Parameters
    ----------
    space : DGSpace
    params : ModelParams
    frozen_shift : bool
        Treat the LDG face shift as constant when differentiating.
    """

    def __init__(self, space: DGSpace, params: ModelParams, frozen_shift: bool = True):
        self.space = space
        self.params = params
        self.frozen_shift = frozen_shift
        self.ops: DGOperators = operators(space)
        ops = self.ops
        sp = space
        self.layout = SystemLayout(sp.ndofs(2), sp.mesh.n_vertices)
        self.ns = ops.ns
        self.nown = 2 * sp.nb
        # symmetric coordinates of the operator tables
        self.D3 = np.ascontiguousarray(np.moveaxis(sym_coords(np.moveaxis(ops.grad_q, 2, -1)), -1, 2))
        self.J3 = np.ascontiguousarray(np.moveaxis(sym_coords(np.moveaxis(ops.jump_q, 2, -1)), -1, 2))
        self._R3 = None
        # P1 pressure hat values at volume quadrature points
        self.hat = sp.volume_rule.points  # (nq, 3) barycentric
        self.mass_vec = pressure_mass_vector(sp.mesh)
        self._bp = None
        self._pattern = None

    # ------------------------------------------------------------- utilities
    def _zeros(self, jac: bool) -> _Local:
        sp = self.space
        ne, nf = sp.n_elements, sp.mesh.n_faces
        loc = _Local(np.zeros((ne, self.ns)), np.zeros((nf, 4 * sp.nb)))
        if jac:
            loc.ej = np.zeros((ne, self.ns, self.ns))
            loc.fj = np.zeros((nf, 4 * sp.nb, 4 * sp.nb))
        return loc

    def _gather(self, v):
        return self.ops.gather(v)

    def own_values(self, v):
        """(ne, nq, 2) velocity values at volume quadrature points."""
        sp = self.space
        return np.einsum("qi,eci->eqc", sp.phi, v.reshape(sp.n_elements, 2, sp.nb))

    def grad_offset(self, wD) -> np.ndarray | None:
        """(ne, nq, 4) contribution of boundary data to G_h v."""
        coef = self.ops.lift_data_coef(wD)
        if coef is None:
            return None
        return -np.einsum("qi,exi->eqx", self.space.phi, coef)

    def dg_grad_values(self, v, wD=None):
        """(ne, nq, 4) values of G_h v (with boundary data) at quadrature points."""
        G = np.einsum("eqxs,es->eqx", self.ops.grad_q, self._gather(v))
        off = self.grad_offset(wD)
        return G if off is None else G + off

    def sym_grad_coords(self, v, wD=None):
        """(ne, nq, 3) symmetric coordinates of D_h v."""
        s = np.einsum("eqis,es->eqi", self.D3, self._gather(v))
        off = self.grad_offset(wD)
        return s if off is None else s + sym_coords(off)

    def jump_coords(self, v, wD=None):
        """(nf, nqf, 3) symmetric coordinates of [[v (x) n]]."""
        s = np.einsum("fqit,ft->fqi", self.J3, self.ops.gather_face(v))
        off = self.ops.jump_data(wD)
        return s if off is None else s + sym_coords(off)

    def element_shift(self, v, wD=None):
        """Elementwise mean of |D_h v|."""
        sp = self.space
        s = self.sym_grad_coords(v, wD)
        return np.einsum("eq,eq->e", sp.qw, np.linalg.norm(s, axis=-1)) / sp.area

    def face_shift(self, v, wD=None):
        """LDG face shift: mean of the adjacent elementwise means of |D_h v|."""
        abar = self.element_shift(v, wD)
        fe = self.space.mesh.face_elements
        right = np.where(fe[:, 1] >= 0, abar[np.maximum(fe[:, 1], 0)], abar[fe[:, 0]])
        return 0.5 * (abar[fe[:, 0]] + right)

    # ----------------------------------------------------------------- terms
    def _add_volume_stress(self, loc: _Local, table, s, a=0.0, sign=1.0):
        """sign * (S_a(s), T z) with ``table`` the (ne, nq, 3, ns) map T."""
        sp, p = self.space, self.params
        S, J, _ = stress_sym3(s, a, p=p.p, delta=p.delta, jacobian=loc.ej is not None)
        W = sp.qw
        loc.er += sign * np.einsum("eq,eqi,eqis->es", W, S, table)
        if loc.ej is not None:
            ne, nq = W.shape
            Y = np.einsum("eqij,eqjs->eqis", J * W[..., None, None], table).reshape(ne, nq * 3, -1)
            T = table.reshape(ne, nq * 3, -1)
            loc.ej += sign * np.matmul(T.transpose(0, 2, 1), Y)

    def _add_face_stress(self, loc: _Local, v, wD, a, shift_depends=True):
        sp, p = self.space, self.params
        h = sp.h
        alpha = p.alpha
        s = self.jump_coords(v, wD) / h
        want_da = loc.ej is not None and shift_depends and not self.frozen_shift
        S, J, dS = stress_sym3(
            s, a[:, None], p=p.p, delta=p.delta, jacobian=loc.ej is not None, shift_derivative=want_da
        )
        fw = sp.fw
        loc.fr += alpha * np.einsum("fq,fqi,fqit->ft", fw, S, self.J3)
        if loc.fj is not None:
            Y = np.einsum("fqij,fqju->fqiu", J * (fw / h)[..., None, None], self.J3)
            nf, nqf = fw.shape
            loc.fj += alpha * np.matmul(
                self.J3.reshape(nf, nqf * 3, -1).transpose(0, 2, 1), Y.reshape(nf, nqf * 3, -1)
            )
        if want_da:
            loc.extra.append(self._shift_jacobian(v, wD, alpha * np.einsum("fq,fqi,fqit->ft", fw, dS, self.J3)))

    def _shift_jacobian(self, v, wD, u):
        """Sparse u_f (x) d a_f / dv for the face shift derivative."""
        sp, ops = self.space, self.ops
        s = self.sym_grad_coords(v, wD)
        t = np.linalg.norm(s, axis=-1)
        unit = np.where(t[..., None] > 0, s / np.where(t > 0, t, 1.0)[..., None], 0.0)
        dabar = np.einsum("eq,eqi,eqis->es", sp.qw, unit, self.D3) / sp.area[:, None]  # (ne, ns)
        fe = sp.mesh.face_elements
        rows, cols, vals = [], [], []
        fd, fm = ops.face_dofs, ops.face_mask
        interior = fe[:, 1] >= 0
        for side in (0, 1):
            exists = interior if side else np.ones_like(interior)
            weight = np.where(interior, 0.5, 1.0 - side)
            e = np.maximum(fe[:, side], 0)
            blk = (u * weight[:, None])[:, :, None] * dabar[e][:, None, :]
            r = np.broadcast_to(fd[:, :, None], blk.shape)
            c = np.broadcast_to(ops.stencil_dofs[e][:, None, :], blk.shape)
            m = fm[:, :, None] & ops.stencil_mask[e][:, None, :] & exists[:, None, None]
            rows.append(r[m])
            cols.append(c[m])
            vals.append(blk[m])
        n = self.layout.n_velocity
        return sps.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )

    def add_mass(self, loc: _Local, v, v_prev, tau: float):
        """(v - v_prev, z) / tau."""
        sp = self.space
        M = sp.mass_local()  # (ne, nb, nb)
        d = (v - v_prev).reshape(sp.n_elements, 2, sp.nb)
        loc.er[:, : self.nown] += (np.einsum("eij,ecj->eci", M, d) / tau).reshape(sp.n_elements, -1)
        if loc.ej is not None:
            for c in range(2):
                sl = slice(c * sp.nb, (c + 1) * sp.nb)
                loc.ej[:, sl, sl] += M / tau

    def add_stress_ldg(self, loc: _Local, v, wD=None):
        s = self.sym_grad_coords(v, wD)
        self._add_volume_stress(loc, self.D3, s)
        self._add_face_stress(loc, v, wD, self.face_shift(v, wD))

    @property
    def R3(self):
        if self._R3 is None:
            self._R3 = np.ascontiguousarray(
                np.moveaxis(sym_coords(np.moveaxis(self.ops.lift_q, 2, -1)), -1, 2)
            )
        return self._R3

    def add_stress_sip(self, loc: _Local, v, wD=None):
        s = self.sym_grad_coords(v, wD)
        self._add_volume_stress(loc, self.D3, s)
        self._add_face_stress(loc, v, wD, np.zeros(self.space.mesh.n_faces), shift_depends=False)
        r = np.einsum("eqis,es->eqi", self.R3, self._gather(v))
        coef = self.ops.lift_data_coef(wD)
        if coef is not None:
            r = r + sym_coords(np.einsum("qi,exi->eqx", self.space.phi, coef))
        self._add_volume_stress(loc, self.R3, r, sign=-1.0)

    def add_convective_II(self, loc: _Local, v, wD=None):
        """1/2 (z (x) v, G_h v) - 1/2 (v (x) v, G_h z)."""
        sp, ops = self.space, self.ops
        ne, nb = sp.n_elements, sp.nb
        W = sp.qw
        w = self.own_values(v)  # (ne, nq, 2)
        Gv = self.dg_grad_values(v, wD).reshape(ne, sp.nq, 2, 2)
        Gw = np.einsum("eqab,eqb->eqa", Gv, w)
        r1 = 0.5 * np.einsum("eq,qi,eqa->eai", W, sp.phi, Gw).reshape(ne, -1)
        ww = np.einsum("eqa,eqb->eqab", w, w).reshape(ne, sp.nq, 4)
        loc.er[:, : self.nown] += r1
        loc.er -= 0.5 * np.einsum("eq,eqx,eqxs->es", W, ww, ops.grad_q)
        if loc.ej is None:
            return
        Gq = ops.grad_q.reshape(ne, sp.nq, 2, 2, self.ns)
        # term 1, derivative through G_h v
        t1 = 0.5 * np.einsum("eq,qi,eqb,eqabs->eais", W, sp.phi, w, Gq).reshape(ne, self.nown, self.ns)
        loc.ej[:, : self.nown, :] += t1
        # term 1, derivative through the factor v
        t1b = 0.5 * np.einsum("eq,qi,qj,eqac->eaicj", W, sp.phi, sp.phi, Gv).reshape(ne, self.nown, self.nown)
        loc.ej[:, : self.nown, : self.nown] += t1b
        # term 2: -1/2 d(v_a v_b)/dv_(c,j) Gq[ab] = -(phi_j v_b Dsym[cb])
        Dq = symmetrize_flat(ops.grad_q, axis=2).reshape(ne, sp.nq, 2, 2, self.ns)
        t2 = -np.einsum("eq,qj,eqb,eqcbs->escj", W, sp.phi, w, Dq).reshape(ne, self.ns, self.nown)
        loc.ej[:, :, : self.nown] += t2

    def add_convective_I(self, loc: _Local, v, wD=None):
        """Skew-symmetrised elementwise convection with interior and boundary face terms."""
        sp, ops = self.space, self.ops
        ne, nb, nq = sp.n_elements, sp.nb, sp.nq
        W = sp.qw
        V = v.reshape(ne, 2, nb)
        w = self.own_values(v)
        gw = np.einsum("eqjb,eaj->eqab", sp.dphi, V)  # local gradient
        div = gw[..., 0, 0] + gw[..., 1, 1]
        vol = np.einsum("eqab,eqb->eqa", gw, w) + 0.5 * div[..., None] * w
        loc.er[:, : self.nown] += np.einsum("eq,qi,eqa->eai", W, sp.phi, vol).reshape(ne, -1)
        if loc.ej is not None:
            eye = np.eye(2)
            dv = (
                np.einsum("ac,eqjb,eqb->eqajc", eye, sp.dphi, w)
                + np.einsum("eqac,qj->eqajc", gw, sp.phi)
                + 0.5 * np.einsum("eqjc,eqa->eqajc", sp.dphi, w)
                + 0.5 * np.einsum("eq,ac,qj->eqajc", div, eye, sp.phi)
            )
            loc.ej[:, : self.nown, : self.nown] += np.einsum("eq,qi,eqajc->eaicj", W, sp.phi, dv).reshape(
                ne, self.nown, self.nown
            )
        # faces
        nI = sp.mesh.n_interior_faces
        tl, tr = sp.trace_left, sp.trace_right
        fe = sp.mesh.face_elements
        wl = np.einsum("fqj,fcj->fqc", tl, v.reshape(ne, 2, nb)[fe[:, 0]])
        wr = np.einsum("fqj,fcj->fqc", tr, v.reshape(ne, 2, nb)[np.maximum(fe[:, 1], 0)])
        n = sp.fnormal
        fw = sp.fw
        d = wl - wr
        if wD is not None:
            d[nI:] = wl[nI:] - wD
        dn = np.einsum("fqa,fa->fq", d, n)
        R = np.zeros((sp.mesh.n_faces, sp.nqf, 2, 2))  # (side, comp) pointwise residual
        dm = 0.5 * (np.einsum("fqa,fqa->fq", wl, wl) - np.einsum("fqa,fqa->fq", wr, wr))
        Ii = slice(0, nI)
        Bb = slice(nI, None)
        R[Ii, :, 0] = -0.5 * dm[Ii, :, None] * n[Ii, None, :] - 0.25 * dn[Ii, :, None] * wl[Ii]
        R[Ii, :, 1] = -0.5 * dm[Ii, :, None] * n[Ii, None, :] - 0.25 * dn[Ii, :, None] * wr[Ii]
        R[Bb, :, 0] = -0.5 * dn[Bb, :, None] * wl[Bb]
        traces = np.stack([tl, tr], axis=2)  # (nf, nqf, 2, nb)
        loc.fr += np.einsum("fq,fqsa,fqsi->fsai", fw, R, traces).reshape(sp.mesh.n_faces, -1)
        if loc.fj is None:
            return
        eye = np.eye(2)
        DR = np.zeros((sp.mesh.n_faces, sp.nqf, 2, 2, 2, 2))  # d R[s,a] / d w[s',c]
        for s_ in (0, 1):
            DR[Ii, :, s_, :, 0, :] += -0.5 * np.einsum("fa,fqc->fqac", n[Ii], wl[Ii])
            DR[Ii, :, s_, :, 1, :] += 0.5 * np.einsum("fa,fqc->fqac", n[Ii], wr[Ii])
        DR[Ii, :, 0, :, 0, :] += -0.25 * (np.einsum("fc,fqa->fqac", n[Ii], wl[Ii]) + dn[Ii, :, None, None] * eye)
        DR[Ii, :, 0, :, 1, :] += 0.25 * np.einsum("fc,fqa->fqac", n[Ii], wl[Ii])
        DR[Ii, :, 1, :, 0, :] += -0.25 * np.einsum("fc,fqa->fqac", n[Ii], wr[Ii])
        DR[Ii, :, 1, :, 1, :] += 0.25 * np.einsum("fc,fqa->fqac", n[Ii], wr[Ii]) - 0.25 * dn[Ii, :, None, None] * eye
        DR[Bb, :, 0, :, 0, :] = -0.5 * (np.einsum("fc,fqa->fqac", n[Bb], wl[Bb]) + dn[Bb, :, None, None] * eye)
        blk = np.einsum("fq,fqsatc,fqsi,fqtj->fsaitcj", fw, DR, traces, traces)
        loc.fj += blk.reshape(sp.mesh.n_faces, 4 * nb, 4 * nb)

    def add_rhs(self, loc: _Local, g=None, G=None):
        """-(g, z) - (G, G_h z)."""
        sp = self.space
        ne = sp.n_elements
        if g is not None:
            loc.er[:, : self.nown] -= np.einsum("eq,qi,eqa->eai", sp.qw, sp.phi, g).reshape(ne, -1)
        if G is not None:
            loc.er -= np.einsum("eq,eqx,eqxs->es", sp.qw, G, self.ops.grad_q)

    # -------------------------------------------------------------- pressure
    def pressure_matrix(self) -> sps.csr_matrix:
        """Bp[k, j] = (psi_k, Div_h phi_j) for vertex hats psi_k."""
        if self._bp is None:
            sp, ops = self.space, self.ops
            tr = ops.grad_q[:, :, 0] + ops.grad_q[:, :, 3]  # (ne, nq, ns)
            loc = np.einsum("eq,qk,eqs->eks", sp.qw, self.hat, tr)
            tri = sp.mesh.triangles
            rows = np.broadcast_to(tri[:, :, None], loc.shape)
            cols = np.broadcast_to(ops.stencil_dofs[:, None, :], loc.shape)
            mask = np.broadcast_to(ops.stencil_mask[:, None, :], loc.shape)
            self._bp = sps.csr_matrix(
                (loc[mask], (rows[mask], cols[mask])), shape=(sp.mesh.n_vertices, self.layout.n_velocity)
            )
        return self._bp

    def pressure_data(self, wD) -> np.ndarray:
        """(psi_k, tr G_D) where G_D is the boundary-data part of G_h v."""
        off = self.grad_offset(wD)
        out = np.zeros(self.space.mesh.n_vertices)
        if off is None:
            return out
        sp = self.space
        loc = np.einsum("eq,qk,eq->ek", sp.qw, self.hat, off[..., 0] + off[..., 3])
        np.add.at(out, sp.mesh.triangles.ravel(), loc.ravel())
        return out

    # ------------------------------------------------------------- scatter
    def _build_pattern(self):
        ops, lay = self.ops, self.layout
        ne, ns = ops.stencil_dofs.shape
        nf, nt = ops.face_dofs.shape
        er = np.broadcast_to(ops.stencil_dofs[:, :, None], (ne, ns, ns)).ravel()
        ec = np.broadcast_to(ops.stencil_dofs[:, None, :], (ne, ns, ns)).ravel()
        em = (ops.stencil_mask[:, :, None] & ops.stencil_mask[:, None, :]).ravel()
        fr = np.broadcast_to(ops.face_dofs[:, :, None], (nf, nt, nt)).ravel()
        fc = np.broadcast_to(ops.face_dofs[:, None, :], (nf, nt, nt)).ravel()
        fm = (ops.face_mask[:, :, None] & ops.face_mask[:, None, :]).ravel()
        C = self._constant_part().tocoo()
        rows = np.concatenate([er, fr, C.row])
        cols = np.concatenate([ec, fc, C.col])
        valid = np.concatenate([em, fm, np.ones(C.nnz, bool)])
        n = lay.size
        key = rows.astype(np.int64) * n + cols
        uniq, inv = np.unique(key[valid], return_inverse=True)
        nnz = uniq.size
        index = np.full(key.size, nnz, dtype=np.int64)
        index[valid] = inv
        r = uniq // n
        indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=n))])
        ncomb = er.size + fr.size
        const = np.bincount(index[ncomb:], weights=C.data, minlength=nnz + 1)[:nnz]
        self._pattern = dict(
            index=index[:ncomb], nnz=nnz, indices=(uniq % n).astype(np.int32), indptr=indptr, const=const
        )

    def _constant_part(self) -> sps.csr_matrix:
        """Pressure coupling and mean constraint blocks of the Jacobian."""
        lay = self.layout
        Bp = self.pressure_matrix()
        m = sps.csr_matrix(self.mass_vec[:, None])
        nv = lay.n_velocity
        return sps.bmat(
            [
                [sps.csr_matrix((nv, nv)), -Bp.T, None],
                [Bp, None, m],
                [None, m.T, sps.csr_matrix((1, 1))],
            ],
            format="csr",
        )

    def _scatter_residual(self, loc: _Local) -> np.ndarray:
        ops = self.ops
        r = np.zeros(self.layout.n_velocity)
        np.add.at(r, ops.stencil_dofs[ops.stencil_mask], loc.er[ops.stencil_mask])
        np.add.at(r, ops.face_dofs[ops.face_mask], loc.fr[ops.face_mask])
        return r

    def _scatter_velocity_jacobian(self, loc: _Local) -> sps.csr_matrix:
        """Velocity-block Jacobian via plain COO assembly (used by the term wrappers)."""
        ops = self.ops
        n = self.layout.n_velocity
        ne, ns = ops.stencil_dofs.shape
        nf, nt = ops.face_dofs.shape
        em = ops.stencil_mask[:, :, None] & ops.stencil_mask[:, None, :]
        fm = ops.face_mask[:, :, None] & ops.face_mask[:, None, :]
        rows = np.concatenate(
            [np.broadcast_to(ops.stencil_dofs[:, :, None], em.shape)[em], np.broadcast_to(ops.face_dofs[:, :, None], fm.shape)[fm]]
        )
        cols = np.concatenate(
            [np.broadcast_to(ops.stencil_dofs[:, None, :], em.shape)[em], np.broadcast_to(ops.face_dofs[:, None, :], fm.shape)[fm]]
        )
        vals = np.concatenate([loc.ej[em], loc.fj[fm]])
        J = sps.csr_matrix((vals, (rows, cols)), shape=(n, n))
        for extra in loc.extra:
            J = J + extra
        return J.tocsr()

    def contribution(self, loc: _Local) -> Contribution:
        jac = self._scatter_velocity_jacobian(loc) if loc.ej is not None else None
        return Contribution(self._scatter_residual(loc), jac)

    # -------------------------------------------------------------- system
    def momentum_terms(self, loc: _Local, v, wD=None):
        """Stress plus convective terms for the configured variants."""
        if self.params.stress_variant == "ldg":
            self.add_stress_ldg(loc, v, wD)
        else:
            self.add_stress_sip(loc, v, wD)
        if self.params.convective_variant == "II":
            self.add_convective_II(loc, v, wD)
        else:
            self.add_convective_I(loc, v, wD)

    def assemble(self, U: np.ndarray, step: StepData, jacobian: bool = True) -> SparseSystem:
        """Residual and Jacobian of the step system at the state ``U``."""
        lay = self.layout
        v, q, lam = lay.split(U)
        loc = self._zeros(jacobian)
        self.add_mass(loc, v, step.v_prev, step.tau)
        self.momentum_terms(loc, v, step.wD)
        self.add_rhs(loc, step.g, step.G)

        Bp = self.pressure_matrix()
        res = np.empty(lay.size)
        res[lay.velocity] = self._scatter_residual(loc) - Bp.T @ q
        res[lay.pressure] = Bp @ v + self.pressure_data(step.wD) + lam * self.mass_vec
        res[lay.multiplier] = self.mass_vec @ q
        if not jacobian:
            return SparseSystem(res, None, lay)
        if self._pattern is None:
            self._build_pattern()
        pat = self._pattern
        vals = np.concatenate([loc.ej.ravel(), loc.fj.ravel()])
        data = np.bincount(pat["index"], weights=vals, minlength=pat["nnz"] + 1)[: pat["nnz"]] + pat["const"]
        J = sps.csr_matrix((data, pat["indices"], pat["indptr"]), shape=(lay.size, lay.size))
        for extra in loc.extra:
            pad = sps.block_diag([extra, sps.csr_matrix((lay.size - lay.n_velocity,) * 2)], format="csr")
            J = (J + pad).tocsr()
        return SparseSystem(res, J, lay)

    def residual(self, U: np.ndarray, step: StepData) -> np.ndarray:
        return self.assemble(U, step, jacobian=False).residual


# --------------------------------------------------------------------------
# term-level wrappers operating on the velocity block only


def _assembler(space: DGSpace, params: ModelParams | None, frozen_shift: bool = True) -> FormAssembler:
    params = params or ModelParams()
    cache = space.__dict__.setdefault("_form_cache", {})
    key = (params, frozen_shift)
    if key not in cache:
        cache[key] = FormAssembler(space, params, frozen_shift)
    return cache[key]


def assemble_mass(v, w_prev, tau: float, jacobian: bool = True) -> Contribution:
    """(v - w_prev, z) / tau with the block-diagonal mass matrix / tau."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    fa = _assembler(v.space, None)
    loc = fa._zeros(jacobian)
    fa.add_mass(loc, v.coeffs, w_prev.coeffs, tau)
    return fa.contribution(loc)


def assemble_stress_ldg(v, params: ModelParams, boundary_data=None, frozen_shift=True, jacobian=True) -> Contribution:
    """LDG stress operator: volume term plus shifted face penalty."""
    fa = _assembler(v.space, params, frozen_shift)
    loc = fa._zeros(jacobian)
    fa.add_stress_ldg(loc, v.coeffs, boundary_data)
    return fa.contribution(loc)


def assemble_stress_sip(v, params: ModelParams, boundary_data=None, jacobian=True) -> Contribution:
    """SIP stress operator: volume term, plain penalty, minus the lifted term."""
    fa = _assembler(v.space, params)
    loc = fa._zeros(jacobian)
    fa.add_stress_sip(loc, v.coeffs, boundary_data)
    return fa.contribution(loc)


def assemble_convective_I(v, params: ModelParams | None = None, boundary_data=None, jacobian=True) -> Contribution:
    fa = _assembler(v.space, params)
    loc = fa._zeros(jacobian)
    fa.add_convective_I(loc, v.coeffs, boundary_data)
    return fa.contribution(loc)


def assemble_convective_II(v, params: ModelParams | None = None, boundary_data=None, jacobian=True) -> Contribution:
    fa = _assembler(v.space, params)
    loc = fa._zeros(jacobian)
    fa.add_convective_II(loc, v.coeffs, boundary_data)
    return fa.contribution(loc)


def assemble_pressure(v, q, boundary_data=None) -> Contribution:
    """Pressure coupling over the full index space.

    Residual: ``-(q, Div_h z)`` in the momentum rows, ``(Div_h v, z_q)`` in
    the continuity rows (multiplier term excluded) and ``(q, 1)`` in the
    constraint row. The Jacobian holds both coupling blocks and the
    multiplier row and column.
    """
    fa = _assembler(v.space, None)
    lay = fa.layout
    Bp = fa.pressure_matrix()
    qv = q.values if hasattr(q, "values") else np.asarray(q, float)
    res = np.zeros(lay.size)
    res[lay.velocity] = -Bp.T @ qv
    res[lay.pressure] = Bp @ v.coeffs + fa.pressure_data(boundary_data)
    res[lay.multiplier] = fa.mass_vec @ qv
    return Contribution(res, fa._constant_part())


def assemble_rhs(space: DGSpace, g=None, G=None) -> Contribution:
    """-(g, z) - (G, G_h z) as a velocity residual (no Jacobian).

    ``g`` and ``G`` are values at the volume quadrature points, shapes
    (ne, nq, 2) and (ne, nq, 4).
    """
    fa = _assembler(space, None)
    loc = fa._zeros(False)
    fa.add_rhs(loc, g, G)
    return Contribution(fa._scatter_residual(loc), None)
