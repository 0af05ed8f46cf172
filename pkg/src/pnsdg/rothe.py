"""
Implicit Euler (Rothe) time loop and temporal interpolation tools.

For ``tau = T / K`` the iterates ``v^k`` live at ``t_k = k tau``. The
piecewise constant interpolant takes the value ``v^k`` on
``I_k = ((k-1) tau, k tau]``; the piecewise affine interpolant is
``(t/tau - (k-1)) v^k + (k - t/tau) v^(k-1)`` on ``I_k``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dgcalc import dg_norm
from .forms import FormAssembler, StepData
from .solver import LinearSolver, NewtonConfig, NewtonNonConvergence, newton_solve
from .spaces import BrokenField

__all__ = [
    "Trajectory",
    "run_rothe",
    "pc_interpolant",
    "pa_interpolant",
    "clement_mean",
    "discrete_ibp_check",
    "EnergyReport",
    "energy_balance",
    "dump_trajectory",
]

log = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """Iterates ``(v^k, q^k)`` for k = 0..K.

    ``velocities[k]`` are DG coefficients and ``pressures[k]`` vertex values.
    """

    T: float
    K: int
    velocities: list = field(default_factory=list)
    pressures: list = field(default_factory=list)
    newton_iterations: list = field(default_factory=list)
    converged: list = field(default_factory=list)

    @property
    def tau(self) -> float:
        return self.T / self.K

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(len(self.velocities))

    def __len__(self) -> int:
        return len(self.velocities)


# step data: (k, t_k) -> (g, G, wD) at quadrature points
StepSource = Callable[[int, float], tuple]


def run_rothe(
    initial: np.ndarray,
    K: int,
    assembler: FormAssembler,
    source: StepSource | None = None,
    T: float = 0.1,
    config: NewtonConfig = NewtonConfig(),
    initial_pressure: np.ndarray | None = None,
) -> Trajectory:
    """Solve the implicit Euler steps k = 1..K.

    Parameters
    ----------
    initial : velocity coefficients of v^0
    K : number of steps, tau = T / K
    assembler : FormAssembler for the space and model
    source : callable ``(k, t_k) -> (g, G, wD)``; any entry may be None
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    lay = assembler.layout
    traj = Trajectory(T=T, K=K)
    v = np.asarray(initial, dtype=float).copy()
    q = np.zeros(lay.n_pressure) if initial_pressure is None else np.asarray(initial_pressure, float)
    traj.velocities.append(v.copy())
    traj.pressures.append(q.copy())
    traj.newton_iterations.append(0)
    traj.converged.append(True)
    tau = T / K
    U = lay.join(v, q)
    solver = LinearSolver(config.linear_solver)
    for k in range(1, K + 1):
        t = k * tau
        g, G, wD = source(k, t) if source is not None else (None, None, None)
        step = StepData(v_prev=v, tau=tau, g=g, G=G, wD=wD, t=t)

        def assemble(X, jac, _step=step):
            sysm = assembler.assemble(X, _step, jacobian=jac)
            return sysm.residual, sysm.jacobian

        try:
            U, report = newton_solve(U, assemble, config, step=k, solver=solver)
        except NewtonNonConvergence as exc:
            exc.step = k
            raise
        v, q, _ = lay.split(U)
        v = v.copy()
        traj.velocities.append(v)
        traj.pressures.append(q.copy())
        traj.newton_iterations.append(report.iterations)
        traj.converged.append(report.converged)
        log.info("step=%d t=%.6g newton_iters=%d residual=%.3e", k, t, report.iterations, report.residuals[-1])
    return traj


def _locate(traj: Trajectory, t: float) -> int:
    if not 0.0 < t <= traj.T * (1 + 1e-14):
        raise ValueError(f"t = {t} outside (0, {traj.T}]")
    k = int(np.ceil(t / traj.tau - 1e-12))
    return min(max(k, 1), traj.K)


def pc_interpolant(traj: Trajectory, t: float) -> np.ndarray:
    """Piecewise constant interpolant: v^k for t in ((k-1) tau, k tau]."""
    return traj.velocities[_locate(traj, t)]


def pa_interpolant(traj: Trajectory, t: float) -> np.ndarray:
    """Piecewise affine interpolant of the velocity iterates."""
    k = _locate(traj, t)
    s = t / traj.tau - (k - 1)
    return s * traj.velocities[k] + (1.0 - s) * traj.velocities[k - 1]


_GAUSS5 = np.polynomial.legendre.leggauss(5)


def clement_mean(f: Callable[[float], np.ndarray], k: int, tau: float):
    """Temporal mean (1/tau) int_{I_k} f(s) ds by 5-point Gauss quadrature."""
    if k < 1:
        raise ValueError("k must be >= 1")
    x, w = _GAUSS5
    s = (k - 1) * tau + 0.5 * tau * (x + 1.0)
    vals = [np.asarray(f(si), dtype=float) for si in s]
    return 0.5 * sum(wi * vi for wi, vi in zip(w, vals))


@dataclass
class IBPReport:
    holds: bool
    min_slack: float
    max_identity_error: float


def discrete_ibp_check(traj: Trajectory, inner: Callable[[np.ndarray, np.ndarray], float]) -> IBPReport:
    """Check sum_{k=j+1}^l tau <d_tau v^k, v^k> >= |v^l|^2/2 - |v^j|^2/2 for all j <= l.

    ``inner`` is the L2 inner product of two coefficient vectors. The slack
    equals (tau/2) sum ||d_tau v^k||^2 and is reported together with the
    largest deviation from that identity.
    """
    tau = traj.tau
    V = traj.velocities
    n = len(V)
    sq = np.array([inner(v, v) for v in V])
    lhs_terms = np.zeros(n)
    slack_terms = np.zeros(n)
    for k in range(1, n):
        d = (V[k] - V[k - 1]) / tau
        lhs_terms[k] = tau * inner(d, V[k])
        slack_terms[k] = 0.5 * tau * tau * inner(d, d)
    cl = np.concatenate([[0.0], np.cumsum(lhs_terms[1:])])
    cs = np.concatenate([[0.0], np.cumsum(slack_terms[1:])])
    min_slack = np.inf
    ident = 0.0
    scale = max(1.0, sq.max())
    for j in range(n):
        for l in range(j, n):
            lhs = cl[l] - cl[j]
            rhs = 0.5 * (sq[l] - sq[j])
            min_slack = min(min_slack, lhs - rhs)
            ident = max(ident, abs(lhs - rhs - (cs[l] - cs[j])) / scale)
    return IBPReport(holds=bool(min_slack >= -1e-12 * scale), min_slack=float(min_slack), max_identity_error=ident)


@dataclass
class EnergyReport:
    """Discrete energy balance of a solved trajectory.

    ``holds`` states 1/2 ||v^l||^2 <= 1/2 ||v^0||^2 - sum_{k<=l} tau a_k for
    every l, where ``a_k`` is the velocity residual without its time
    derivative part, contracted with v^k (stress, convection, pressure and
    forcing). Violations and the identity defect are relative to the
    largest energy term.
    """

    holds: bool
    max_violation: float
    identity_error: float
    max_l2: float
    dissipation: float


def energy_balance(
    traj: Trajectory,
    assembler: FormAssembler,
    source: StepSource | None = None,
    p: float | None = None,
    rtol: float = 1e-8,
) -> EnergyReport:
    """Energy inequality from residual contractions along ``traj``.

    ``dissipation`` is sum_k tau ||v^k||_{grad,p,h}^p over k = 1..K with the
    model exponent unless ``p`` is given; boundary jumps are taken against
    the step's Dirichlet data, as in the residual.
    """
    sp = assembler.space
    lay = assembler.layout
    p = assembler.params.p if p is None else p
    M = sp.mass_local()

    def inner(a, b):
        A = a.reshape(sp.n_elements, 2, sp.nb)
        B = b.reshape(sp.n_elements, 2, sp.nb)
        return float(np.einsum("eij,eci,ecj->", M, A, B))

    tau = traj.tau
    V, Q = traj.velocities, traj.pressures
    half = np.array([0.5 * inner(v, v) for v in V])
    work = np.zeros(len(V))
    slack = np.zeros(len(V))
    defect = np.zeros(len(V))
    diss = 0.0
    for k in range(1, len(V)):
        t = k * tau
        g, G, wD = source(k, t) if source is not None else (None, None, None)
        step = StepData(v_prev=V[k - 1], tau=tau, g=g, G=G, wD=wD, t=t)
        rv = assembler.residual(lay.join(V[k], Q[k]), step)[lay.velocity]
        d = V[k] - V[k - 1]
        total = tau * float(np.dot(rv, V[k]))
        work[k] = total - inner(d, V[k])
        slack[k] = 0.5 * inner(d, d)
        defect[k] = total
        diss += tau * dg_norm(BrokenField(sp, 2, V[k]), p, boundary_data=wD) ** p
    cw = np.cumsum(work)
    bound = half[0] - cw
    scale = max(half.max(), np.abs(work).sum(), 1e-300)
    violation = float(np.max(half - bound)) / scale
    ident = float(np.max(np.abs(half - half[0] + np.cumsum(slack) + cw - np.cumsum(defect)))) / scale
    return EnergyReport(
        holds=bool(violation <= rtol),
        max_violation=violation,
        identity_error=ident,
        max_l2=float(np.sqrt(2 * half.max())),
        dissipation=float(diss),
    )


def dump_trajectory(traj: Trajectory, path) -> Path:
    """Write all iterates to a compressed ``.npz`` checkpoint."""
    path = Path(path)
    np.savez_compressed(
        path,
        T=traj.T,
        K=traj.K,
        velocities=np.array(traj.velocities),
        pressures=np.array(traj.pressures),
        newton_iterations=np.array(traj.newton_iterations),
    )
    return path
