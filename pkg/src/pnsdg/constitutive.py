"""
Power-law extra stress with (p, delta)-structure and the associated N-functions.

Tensors are numpy arrays with trailing shape (2, 2); every function
broadcasts over leading axes. The shifted stress is

    S_a(A) = (delta + a + |A^sym|)^(p-2) A^sym,

which is the plain stress with delta replaced by delta + a.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelParams",
    "SingularJacobianError",
    "sym",
    "frob",
    "phi",
    "phi_prime",
    "stress",
    "stress_jacobian",
    "stress_shift_derivative",
    "f_map",
    "f_star_map",
    "sym_coords",
    "stress_sym3",
]

STRESS_VARIANTS = ("ldg", "sip")
CONVECTIVE_VARIANTS = ("I", "II")


class SingularJacobianError(ArithmeticError):
    """The stress derivative is unbounded at the requested point."""


@dataclass(frozen=True)
class ModelParams:
    """Material and discretisation parameters.

    Parameters
    ----------
    p : float
        Power-law exponent, p > 1.
    delta : float
        Regularisation, delta >= 0.
    alpha : float
        Interior penalty parameter.
    ell : int
        Polynomial degree of the broken velocity space.
    stress_variant : {"ldg", "sip"}
    convective_variant : {"I", "II"}
    alpha0 : float
        SIP coercivity warning threshold; alpha <= alpha0 warns.
    """

    p: float = 2.0
    delta: float = 1e-4
    alpha: float = 2.5
    ell: int = 1
    stress_variant: str = "ldg"
    convective_variant: str = "II"
    alpha0: float = 1.0

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.ell < 1:
            raise ValueError("ell must be >= 1")
        variant = self.stress_variant.lower()
        if variant not in STRESS_VARIANTS:
            raise ValueError(f"unknown stress variant {self.stress_variant!r}")
        object.__setattr__(self, "stress_variant", variant)
        conv = str(self.convective_variant).upper().replace("2", "II").replace("1", "I")
        if conv not in CONVECTIVE_VARIANTS:
            raise ValueError(f"unknown convective variant {self.convective_variant!r}")
        object.__setattr__(self, "convective_variant", conv)
        if self.p < 2.0:
            warnings.warn(
                f"p = {self.p} is below (3d+2)/(d+2) = 2; the convective terms are not covered",
                stacklevel=2,
            )
        if variant == "sip" and self.alpha <= self.alpha0:
            warnings.warn(f"SIP penalty alpha = {self.alpha} <= alpha0 = {self.alpha0}", stacklevel=2)

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)


def sym(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def frob(A):
    return np.sqrt(np.einsum("...ij,...ij->...", A, A))


def _power(base, expo):
    # 0**negative -> inf is intended to be masked by callers
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.power(base, expo)


def phi_prime(t, a=0.0, params: ModelParams = None, *, p=None, delta=None):
    """Derivative of the shifted N-function: (delta + a + t)^(p-2) t."""
    p, delta = _pd(params, p, delta)
    t = np.asarray(t, dtype=float)
    c = delta + np.asarray(a, dtype=float)
    out = _power(c + t, p - 2.0) * t
    return np.where(t == 0.0, 0.0, out)


_GL64 = np.polynomial.legendre.leggauss(64)


def phi(t, a=0.0, params: ModelParams = None, *, p=None, delta=None):
    """Shifted N-function phi_a(t) = int_0^t (delta + a + s)^(p-2) s ds.

    Uses the closed-form antiderivative when t is not small relative to
    delta + a, and 64-point Gauss-Legendre on [0, t] otherwise.
    """
    p, delta = _pd(params, p, delta)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.asarray(a) < 0):
        raise ValueError("phi requires t >= 0 and a >= 0")
    c = np.broadcast_to(delta + np.asarray(a, dtype=float), t.shape).astype(float)
    if p == 2.0:
        return 0.5 * t * t
    out = np.empty_like(t)
    closed = t > 0.1 * c
    if np.any(closed):
        tc, cc = t[closed], c[closed]
        val = (_power(cc + tc, p) - _power(cc, p)) / p
        val -= cc * (_power(cc + tc, p - 1.0) - _power(cc, p - 1.0)) / (p - 1.0)
        out[closed] = np.where(cc == 0.0, _power(tc, p) / p, val)
    rest = ~closed
    if np.any(rest):
        tr, cr = t[rest], c[rest]
        x, w = _GL64
        s = 0.5 * (x[None, :] + 1.0) * tr[:, None]
        f = _power(cr[:, None] + s, p - 2.0) * s
        out[rest] = 0.5 * tr * (f @ w)
    return out


def _pd(params, p, delta):
    if params is not None:
        return params.p, params.delta
    if p is None or delta is None:
        raise TypeError("pass params or both p and delta")
    return float(p), float(delta)


def stress(A, a=0.0, params: ModelParams = None, *, p=None, delta=None):
    """Shifted extra stress S_a(A); a = 0 gives S(A) = (delta+|A^sym|)^(p-2) A^sym."""
    p, delta = _pd(params, p, delta)
    As = sym(A)
    t = frob(As)
    c = delta + np.asarray(a, dtype=float)
    scale = _power(c + t, p - 2.0)
    scale = np.where(t == 0.0, 0.0, scale)
    return scale[..., None, None] * As


def stress_jacobian(A, a=0.0, params: ModelParams = None, *, p=None, delta=None):
    """Derivative dS_a/dA as an array with trailing shape (2, 2, 2, 2).

    ``J[..., i, j, k, l]`` is the derivative of component (i, j) with respect
    to A_kl. The shift a is held fixed.
    """
    p, delta = _pd(params, p, delta)
    As = sym(A)
    t = frob(As)
    c = delta + np.asarray(a, dtype=float) + np.zeros_like(t)
    if p < 2.0 and np.any((c == 0.0) & (t == 0.0)):
        raise SingularJacobianError("stress derivative is unbounded at A^sym = 0 for delta + a = 0, p < 2")
    base = c + t
    psi = _power(base, p - 2.0)
    psi = np.where(base == 0.0, 1.0 if p == 2.0 else 0.0, psi)
    with np.errstate(divide="ignore", invalid="ignore"):
        dpsi_over_t = (p - 2.0) * _power(base, p - 3.0) / t
    dpsi_over_t = np.where(t == 0.0, 0.0, dpsi_over_t)
    eye = np.eye(2)
    P = 0.5 * (np.einsum("ik,jl->ijkl", eye, eye) + np.einsum("il,jk->ijkl", eye, eye))
    return psi[..., None, None, None, None] * P + dpsi_over_t[..., None, None, None, None] * np.einsum(
        "...ij,...kl->...ijkl", As, As
    )


def stress_shift_derivative(A, a=0.0, params: ModelParams = None, *, p=None, delta=None):
    """Derivative of S_a(A) with respect to the shift a."""
    p, delta = _pd(params, p, delta)
    As = sym(A)
    t = frob(As)
    base = delta + np.asarray(a, dtype=float) + t
    d = (p - 2.0) * _power(base, p - 3.0)
    d = np.where(base == 0.0, 0.0, d)
    return d[..., None, None] * As


def f_map(A, params: ModelParams = None, *, p=None, delta=None):
    """F(A) = (delta + |A^sym|)^((p-2)/2) A^sym."""
    p, delta = _pd(params, p, delta)
    As = sym(A)
    t = frob(As)
    scale = _power(delta + t, 0.5 * (p - 2.0))
    scale = np.where(t == 0.0, 0.0, scale)
    return scale[..., None, None] * As


def f_star_map(A, params: ModelParams = None, *, p=None, delta=None):
    """F*(A) = (delta^(p-1) + |A^sym|)^((p'-2)/2) A^sym."""
    p, delta = _pd(params, p, delta)
    pc = p / (p - 1.0)
    As = sym(A)
    t = frob(As)
    scale = _power(delta ** (p - 1.0) + t, 0.5 * (pc - 2.0))
    scale = np.where(t == 0.0, 0.0, scale)
    return scale[..., None, None] * As


_R2 = np.sqrt(2.0)


def sym_coords(X):
    """Orthonormal coordinates (X00, X11, sqrt(2) X01^sym) of the symmetric part.

    ``X`` has a trailing axis of 4 flat components (00, 01, 10, 11). The
    Frobenius product of symmetric parts equals the dot product of the
    coordinates.
    """
    X = np.asarray(X, dtype=float)
    return np.stack([X[..., 0], X[..., 3], (X[..., 1] + X[..., 2]) / _R2], axis=-1)


def stress_sym3(s, a=0.0, *, p, delta, jacobian=True, shift_derivative=False):
    """Shifted stress in symmetric coordinates (see :func:`sym_coords`).

    Returns ``(S, J, dS_da)``, where ``J`` (trailing 3 x 3) and ``dS_da`` are
    None unless requested.
    """
    s = np.asarray(s, dtype=float)
    t = np.sqrt(np.einsum("...i,...i->...", s, s))
    base = delta + np.asarray(a, dtype=float) + t
    psi = _power(base, p - 2.0)
    if p == 2.0:
        psi = np.ones_like(t)
    psi = np.where(base == 0.0, 0.0, psi)
    S = psi[..., None] * s
    J = dS = None
    if jacobian or shift_derivative:
        d = (p - 2.0) * _power(base, p - 3.0)
        d = np.where(base == 0.0, 0.0, d)
    if jacobian:
        with np.errstate(divide="ignore", invalid="ignore"):
            d_over_t = np.where(t == 0.0, 0.0, d / t)
        if p == 2.0:
            J = np.broadcast_to(np.eye(3), t.shape + (3, 3)).copy()
        else:
            J = psi[..., None, None] * np.eye(3) + d_over_t[..., None, None] * s[..., :, None] * s[..., None, :]
    if shift_derivative:
        dS = d[..., None] * s
    return S, J, dS
