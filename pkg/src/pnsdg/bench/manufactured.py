"""
Manufactured solution with a point singularity at the origin.

    v(t, x) = t |x|^beta (x2, -x1),    q(t, x) = t^2 (|x|^gamma - <|.|^gamma>)

with beta = 2 (rho - 1) / p and gamma = rho - 2 / p'. The velocity is
divergence free and ``[grad v] v = -t^2 |x|^(2 beta) x``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from ..constitutive import stress

__all__ = ["ManufacturedCase", "pressure_mean", "forcing"]


@lru_cache(maxsize=None)
def pressure_mean(gamma: float) -> float:
    """Mean of |x|^gamma over (-1, 1)^2, by symmetry an integral over one octant."""
    if not gamma > -2.0:
        raise ValueError("gamma must exceed -2 for integrability")
    # mean = (1/4) * 8 * int_0^{pi/4} int_0^{sec} r^(gamma+1) dr dtheta
    val, _ = quad(lambda th: np.cos(th) ** (-(gamma + 2.0)), 0.0, np.pi / 4, epsabs=0, epsrel=1e-13)
    return 2.0 * val / (gamma + 2.0)


def _radius(x, allow_origin=False):
    x = np.asarray(x, dtype=float)
    r = np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2)
    if not allow_origin and np.any(r == 0.0):
        raise ValueError("evaluation at the origin, where the solution is singular")
    return x, r


@dataclass(frozen=True)
class ManufacturedCase:
    p: float
    rho: float
    delta: float = 1e-4

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def beta(self) -> float:
        return 2.0 * (self.rho - 1.0) / self.p

    @property
    def gamma(self) -> float:
        return self.rho - 2.0 / self.p_conj

    @property
    def pressure_mean(self) -> float:
        return pressure_mean(self.gamma)

    @property
    def expected_rate(self) -> float:
        """rho p' / 2."""
        return 0.5 * self.rho * self.p_conj

    @property
    def case_id(self) -> str:
        return f"p{self.p:g}_rho{self.rho:g}"

    # ---------------------------------------------------------------- fields
    def velocity(self, t, x):
        x, r = _radius(x, allow_origin=self.beta + 1.0 > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            rb = np.where(r == 0.0, 0.0, r**self.beta)
        return t * rb[..., None] * np.stack([x[..., 1], -x[..., 0]], axis=-1)

    def velocity_dt(self, t, x):
        return self.velocity(1.0, x)

    def velocity_gradient(self, t, x):
        """(..., 2, 2) with entry [a, b] = d v_a / d x_b."""
        x, r = _radius(x)
        b = self.beta
        w = np.stack([x[..., 1], -x[..., 0]], axis=-1)
        rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
        return t * (b * r[..., None, None] ** (b - 2.0) * w[..., :, None] * x[..., None, :] + r[..., None, None] ** b * rot)

    def sym_gradient(self, t, x):
        G = self.velocity_gradient(t, x)
        return 0.5 * (G + np.swapaxes(G, -1, -2))

    def pressure(self, t, x):
        x, r = _radius(x, allow_origin=self.gamma > 0)
        with np.errstate(divide="ignore"):
            return t * t * (r**self.gamma - self.pressure_mean)

    def convection(self, t, x):
        """[grad v] v in closed form."""
        x, r = _radius(x, allow_origin=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            r2b = np.where(r == 0.0, 0.0, r ** (2.0 * self.beta))
        return -(t * t) * r2b[..., None] * x


def forcing(t, x, case: ManufacturedCase):
    """Body force g and tensor G with G = S(Dv) - q I and g = dv/dt + [grad v] v.

    With these, (g, z) + (G, grad z) equals the momentum form applied to
    the exact (v, q) for smooth test fields z.
    """
    Dv = case.sym_gradient(t, x)
    G = stress(Dv, p=case.p, delta=case.delta) - case.pressure(t, x)[..., None, None] * np.eye(2)
    g = case.velocity_dt(t, x) + case.convection(t, x)
    return g, G
