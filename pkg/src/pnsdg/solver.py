"""
Newton's method with a sparse direct linear solve.

Convergence is declared when the residual 2-norm drops below ``abs_tol`` or
below ``rel_tol`` times the residual norm at the start of the solve (the
first residual of the current time step when called from the time loop).
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

__all__ = [
    "NewtonConfig",
    "NewtonReport",
    "NewtonNonConvergence",
    "LinearSolveError",
    "newton_solve",
    "linear_solve",
    "LinearSolver",
]

log = logging.getLogger(__name__)


class NewtonNonConvergence(RuntimeError):
    """Raised after ``max_iters`` iterations; carries the residual history."""

    def __init__(self, message: str, history: list[float], step: int | None = None):
        super().__init__(message)
        self.history = history
        self.step = step


class LinearSolveError(RuntimeError):
    """The Jacobian could not be factorised or the solve produced non-finite values."""


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-10
    max_iters: int = 50
    line_search: str = "none"  # "none" or "backtracking"
    max_halvings: int = 10
    linear_solver: str = "auto"  # "auto", "superlu" or "pardiso"

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.line_search not in ("none", "backtracking"):
            raise ValueError(f"unknown line search {self.line_search!r}")


@dataclass
class NewtonReport:
    iterations: int = 0
    residuals: list[float] = field(default_factory=list)
    converged: bool = False


def _find_mkl_rt() -> str | None:
    """Locate the MKL runtime shipped with the ``mkl`` wheel, if any."""
    import glob
    import site
    import sys

    roots = {sys.prefix, "/usr/local", *site.getsitepackages()}
    for root in roots:
        for pattern in ("lib/libmkl_rt.so*", "../../libmkl_rt.so*", "libmkl_rt.so*"):
            hits = sorted(glob.glob(os.path.join(root, pattern)))
            if hits:
                return os.path.abspath(hits[0])
    return None


def _load_pardiso():
    if "PYPARDISO_MKL_RT" not in os.environ:
        path = _find_mkl_rt()
        if path is not None:
            os.environ["PYPARDISO_MKL_RT"] = path
    try:
        import pypardiso
    except (ImportError, OSError):
        return None
    return pypardiso


class LinearSolver:
    """Sparse direct solver for ``J d = -r``.

    ``backend`` is ``"superlu"`` (scipy), ``"pardiso"`` (MKL through
    pypardiso) or ``"auto"``, which prefers PARDISO when importable. The
    PARDISO backend keeps the symbolic analysis while the sparsity pattern
    is unchanged. Solutions are checked against ``check_tol`` relative
    residual, with up to two refinement sweeps.
    """

    def __init__(self, backend: str = "auto", check_tol: float = 1e-10):
        if backend not in ("auto", "superlu", "pardiso"):
            raise ValueError(f"unknown backend {backend!r}")
        self.check_tol = check_tol
        self._pardiso = None
        self._pattern = None
        if backend in ("auto", "pardiso"):
            mod = _load_pardiso()
            if mod is None and backend == "pardiso":
                raise ImportError("pypardiso with an MKL runtime is required for backend='pardiso'")
            if mod is not None:
                self._pardiso = mod.PyPardisoSolver()
        self.backend = "pardiso" if self._pardiso is not None else "superlu"

    def _factor_solve_pardiso(self, A: sps.csr_matrix, b: np.ndarray):
        ps = self._pardiso
        ps._check_A(A)
        pattern = (A.indptr, A.indices)
        same = self._pattern is not None and all(
            np.array_equal(x, y) for x, y in zip(pattern, self._pattern)
        )
        if not same:
            ps.set_phase(11)
            ps._call_pardiso(A, np.asfortranarray(b))
            self._pattern = (A.indptr.copy(), A.indices.copy())
        ps.set_phase(23)
        x = ps._call_pardiso(A, np.asfortranarray(b))
        ps.set_phase(33)

        def resolve(rhs):
            return ps._call_pardiso(A, np.asfortranarray(rhs))

        return x, resolve

    def _factor_solve_superlu(self, A, b):
        try:
            lu = spla.splu(sps.csc_matrix(A))
        except RuntimeError as exc:  # SuperLU reports exact singularity this way
            raise LinearSolveError(str(exc)) from exc
        return lu.solve(b), lu.solve

    def solve(self, J: sps.spmatrix, residual: np.ndarray) -> np.ndarray:
        n, m = J.shape
        if n != m or residual.shape != (n,):
            raise LinearSolveError(f"shape mismatch: matrix {J.shape}, residual {residual.shape}")
        A = sps.csr_matrix(J, dtype=float)
        A.sort_indices()
        b = -np.asarray(residual, dtype=float)
        if self.backend == "pardiso":
            if not np.diff(A.indptr).all():
                raise LinearSolveError("matrix has an empty row")
            x, resolve = self._factor_solve_pardiso(A, b)
        else:
            x, resolve = self._factor_solve_superlu(A, b)
        bnorm = np.linalg.norm(b)
        for _ in range(3):
            if not np.all(np.isfinite(x)):
                raise LinearSolveError("non-finite solution of the linear system")
            res = b - A @ x
            if np.linalg.norm(res) <= self.check_tol * max(bnorm, 1e-300):
                return x
            x = x + resolve(res)
        raise LinearSolveError(
            f"linear solve residual {np.linalg.norm(b - A @ x) / max(bnorm, 1e-300):.2e} exceeds {self.check_tol:g}"
        )


def linear_solve(J: sps.spmatrix, residual: np.ndarray, backend: str = "superlu") -> np.ndarray:
    """Solve ``J d = -residual`` by sparse LU with pivoting."""
    return LinearSolver(backend).solve(J, residual)


def newton_solve(
    U0: np.ndarray,
    assemble: Callable[[np.ndarray, bool], tuple[np.ndarray, sps.spmatrix | None]],
    config: NewtonConfig = NewtonConfig(),
    step: int | None = None,
    solver: LinearSolver | None = None,
) -> tuple[np.ndarray, NewtonReport]:
    """Newton iteration from ``U0``.

    ``assemble(U, jacobian)`` returns ``(residual, J)``; ``J`` may be None
    when ``jacobian`` is False.
    """
    U = np.array(U0, dtype=float)
    solver = solver or LinearSolver(config.linear_solver)
    report = NewtonReport()
    r, _ = assemble(U, False)
    norm = float(np.linalg.norm(r))
    r0 = norm
    report.residuals.append(norm)
    log.debug("step=%s iter=0 residual=%.3e", step, norm)
    while True:
        if norm <= config.abs_tol or (report.iterations > 0 and norm <= config.rel_tol * r0):
            report.converged = True
            return U, report
        if report.iterations >= config.max_iters:
            raise NewtonNonConvergence(
                f"Newton did not converge in {config.max_iters} iterations (residual {norm:.3e})",
                report.residuals,
                step,
            )
        # the Jacobian is only assembled once convergence has been ruled out
        r, J = assemble(U, True)
        d = solver.solve(J, r)
        lam = 1.0
        U_new = U + d
        r_new, _ = assemble(U_new, False)
        if config.line_search == "backtracking":
            for _ in range(config.max_halvings):
                if np.linalg.norm(r_new) < norm:
                    break
                lam *= 0.5
                U_new = U + lam * d
                r_new, _ = assemble(U_new, False)
        U, r = U_new, r_new
        report.iterations += 1
        norm = float(np.linalg.norm(r))
        report.residuals.append(norm)
        log.debug("step=%s iter=%d residual=%.3e damping=%.3g", step, report.iterations, norm, lam)
