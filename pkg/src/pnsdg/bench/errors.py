"""
Parabolic error quantities and experimental orders of convergence.

All time sums run over k = 0..K with weight tau. For a trajectory
``(v^k, q^k)`` and the exact solution ``(v, q)``:

* ``e_F``: sum tau ||F(Dv(t_k)) - F(D_h v^k)||_2^2, square-rooted
* ``e_jump``: sum tau h int_Gamma phi_a(h^-1 |[[(v(t_k) - v^k) (x) n]]|) ds,
  square-rooted, with ``a`` the LDG face shift of ``v^k``
* ``e_Fstar``: as ``e_F`` with F*(S(Dv)) against F*(Pi S(D_h v^k))
* ``e_L2``: max_k ||v(t_k) - v^k||_2
* ``e_q``: (sum tau ||q(t_k) - q^k||_{p'}^{p'})^(1/p')
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..constitutive import f_map, f_star_map, phi, stress
from ..forms import FormAssembler
from ..spaces import l2_project
from .manufactured import ManufacturedCase

__all__ = ["LevelErrors", "ErrorReport", "error_quantities", "eoc", "ERROR_NAMES"]

ERROR_NAMES = ("eF", "eJump", "eFstar", "eL2", "eQ")


@dataclass
class LevelErrors:
    level: int
    h: float
    tau: float
    eF: float
    eJump: float
    eFstar: float
    eL2: float
    eQ: float
    newton_iters_total: int = 0
    wall_seconds: float = 0.0
    energy: object = None  # EnergyReport of the solved trajectory, if computed

    @property
    def scale(self) -> float:
        return self.h + self.tau

    def errors(self) -> dict:
        return {k: getattr(self, k) for k in ERROR_NAMES}


@dataclass
class ErrorReport:
    case: ManufacturedCase
    levels: list = field(default_factory=list)

    def eocs(self) -> list[dict]:
        """EOC per quantity for each level; None for the first level."""
        out = []
        for i, rec in enumerate(self.levels):
            if i == 0:
                out.append({k: None for k in ERROR_NAMES})
                continue
            prev = self.levels[i - 1]
            out.append({k: eoc(getattr(prev, k), getattr(rec, k), prev.scale, rec.scale) for k in ERROR_NAMES})
        return out


def eoc(e_prev: float, e_next: float, s_prev: float, s_next: float) -> float | None:
    """log(e_next / e_prev) / log(s_next / s_prev); None if undefined."""
    if not (e_prev > 0 and e_next > 0 and s_prev > 0 and s_next > 0) or s_prev == s_next:
        return None
    return math.log(e_next / e_prev) / math.log(s_next / s_prev)


def _flat(A):
    return A.reshape(*A.shape[:-2], 4)


def error_quantities(traj, case: ManufacturedCase, assembler: FormAssembler, level: int, boundary_data=None):
    """Error record of a trajectory against the manufactured solution.

    ``boundary_data(t)`` returns the Dirichlet data used by the solver at
    time t (None for homogeneous data), so that D_h v^k matches the scheme.
    """
    sp = assembler.space
    fa = assembler
    p = case.p
    pc = case.p_conj
    tau = traj.tau
    h = sp.h
    qpts = sp.qpts
    W = sp.qw
    nI = sp.mesh.n_interior_faces
    eF = eJ = eS = eQ = 0.0
    eL2 = 0.0
    for k, (v, q) in enumerate(zip(traj.velocities, traj.pressures)):
        t = k * tau
        wD = boundary_data(t) if boundary_data is not None else None
        s = fa.sym_grad_coords(v, wD)
        # rebuild full symmetric tensors from symmetric coordinates
        r2 = np.sqrt(0.5)
        Dh = np.stack([s[..., 0], r2 * s[..., 2], r2 * s[..., 2], s[..., 1]], axis=-1).reshape(*s.shape[:-1], 2, 2)
        Dv = case.sym_gradient(t, qpts)
        diff = f_map(Dv, p=p, delta=case.delta) - f_map(Dh, p=p, delta=case.delta)
        eF += tau * np.einsum("eq,eqij,eqij->", W, diff, diff)

        Sh = l2_project(_flat(stress(Dh, p=p, delta=case.delta)), sp).at_quadrature().reshape(Dh.shape)
        Se = stress(Dv, p=p, delta=case.delta)
        diff = f_star_map(Se, p=p, delta=case.delta) - f_star_map(Sh, p=p, delta=case.delta)
        eS += tau * np.einsum("eq,eqij,eqij->", W, diff, diff)

        vh = np.einsum("qi,eci->eqc", sp.phi, v.reshape(sp.n_elements, 2, sp.nb))
        dv = case.velocity(t, qpts) - vh
        eL2 = max(eL2, float(np.sqrt(np.einsum("eq,eqc,eqc->", W, dv, dv))))

        qh = np.einsum("qk,ek->eq", sp.volume_rule.points, q[sp.mesh.triangles])
        eQ += tau * np.einsum("eq,eq->", W, np.abs(case.pressure(t, qpts) - qh) ** pc)

        # jump of the error v(t_k) - v^k: interior faces see only v^k
        jv = fa.jump_coords(v)  # homogeneous jumps of v^k
        wex = case.velocity(t, sp.fpts[nI:])
        jv[nI:] -= np.einsum("fqa,fb->fqab", wex, sp.fnormal[nI:]).reshape(-1, sp.nqf, 4) @ _SYM3.T
        a = fa.face_shift(v, wD)
        mod = phi(np.linalg.norm(jv, axis=-1) / h, np.broadcast_to(a[:, None], jv.shape[:2]), p=p, delta=case.delta)
        eJ += tau * h * np.einsum("fq,fq->", sp.fw, mod)
    return LevelErrors(
        level=level,
        h=h,
        tau=tau,
        eF=math.sqrt(eF),
        eJump=math.sqrt(eJ),
        eFstar=math.sqrt(eS),
        eL2=eL2,
        eQ=eQ ** (1.0 / pc),
        newton_iters_total=int(sum(traj.newton_iterations)),
    )


# flat (00, 01, 10, 11) -> symmetric coordinates, as a matrix
_SYM3 = np.array([[1.0, 0, 0, 0], [0, 0, 0, 1.0], [0, np.sqrt(0.5), np.sqrt(0.5), 0]])
