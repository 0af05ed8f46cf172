"""Independent oracles shared by the unit and acceptance tests."""
import numpy as np
import sympy as sp

from pnsdg.bench import ManufacturedCase, forcing


def symbolic_fields(case: ManufacturedCase):
    """Lambdified v, dv/dt, grad v, [grad v] v and q derived with sympy."""
    t, x, y = sp.symbols("t x y", real=True)
    r = sp.sqrt(x**2 + y**2)
    beta = sp.Rational(2) * (sp.nsimplify(case.rho) - 1) / sp.nsimplify(case.p)
    pc = sp.nsimplify(case.p) / (sp.nsimplify(case.p) - 1)
    gamma = sp.nsimplify(case.rho) - 2 / pc
    v = sp.Matrix([t * r**beta * y, -t * r**beta * x])
    q = t**2 * (r**gamma - sp.Float(case.pressure_mean, 30))
    grad = v.jacobian([x, y])
    conv = grad * v
    args = (t, x, y)
    return {
        "v": sp.lambdify(args, v, "numpy"),
        "dt": sp.lambdify(args, v.diff(t), "numpy"),
        "grad": sp.lambdify(args, grad, "numpy"),
        "conv": sp.lambdify(args, conv, "numpy"),
        "q": sp.lambdify(args, q, "numpy"),
    }


def _stress(D, p, delta):
    n = np.sqrt(np.einsum("...ij,...ij->...", D, D))
    return ((delta + n) ** (p - 2))[..., None, None] * D


def forcing_residual(case: ManufacturedCase, t: float, n_fields: int = 5, seed: int = 0) -> float:
    """Largest relative defect of the weak momentum identity on an annulus.

    For smooth fields z supported in 0.2 < |x| < 0.9 the quantity
    (g, z) + (G, grad z) - [(dv/dt, z) + (S(Dv), Dz) + ([grad v] v, z) - (q, div z)]
    is evaluated by tensor Gauss quadrature in polar coordinates.
    """
    f = symbolic_fields(case)
    r0, r1 = 0.2, 0.9
    xr, wr = np.polynomial.legendre.leggauss(80)
    rr = r0 + 0.5 * (r1 - r0) * (xr + 1)
    wr = 0.5 * (r1 - r0) * wr
    nth = 256
    th = 2 * np.pi * np.arange(nth) / nth
    R, TH = np.meshgrid(rr, th, indexing="ij")
    X, Y = R * np.cos(TH), R * np.sin(TH)
    W = (wr[:, None] * R) * (2 * np.pi / nth)
    pts = np.stack([X, Y], -1)

    gradv = np.moveaxis(np.asarray(f["grad"](t, X, Y), float), (0, 1), (-2, -1))
    dvdt = np.moveaxis(np.asarray(f["dt"](t, X, Y), float)[:, 0], 0, -1) * np.ones(X.shape + (1,))
    conv = np.moveaxis(np.asarray(f["conv"](t, X, Y), float)[:, 0], 0, -1)
    q = np.asarray(f["q"](t, X, Y), float) * np.ones(X.shape)
    Dv = 0.5 * (gradv + np.swapaxes(gradv, -1, -2))
    S = _stress(Dv, case.p, case.delta)
    g, G = forcing(t, pts, case)

    rng = np.random.default_rng(seed)
    worst = 0.0
    s = (R - r0) * (r1 - R)
    ds_dr = (r1 - R) - (R - r0)
    bump, dbump = s**4, 4 * s**3 * ds_dr  # C^3 across the annulus edges
    for _ in range(n_fields):
        c = rng.standard_normal((2, 3))
        poly = c[:, 0, None, None] + c[:, 1, None, None] * X + c[:, 2, None, None] * Y  # (2, nr, nth)
        z = np.moveaxis(bump * poly, 0, -1)
        # grad z[a, b] = d z_a / d x_b
        gb = np.stack([dbump * X / R, dbump * Y / R], -1)
        gz = np.moveaxis(poly, 0, -1)[..., :, None] * gb[..., None, :] + bump[..., None, None] * np.stack(
            [np.stack([np.full_like(X, c[a, 1]), np.full_like(X, c[a, 2])], -1) for a in range(2)], -2
        )
        Dz = 0.5 * (gz + np.swapaxes(gz, -1, -2))
        divz = gz[..., 0, 0] + gz[..., 1, 1]
        lhs = np.sum(W * (np.einsum("...a,...a->...", g, z) + np.einsum("...ab,...ab->...", G, gz)))
        terms = [
            np.sum(W * np.einsum("...a,...a->...", dvdt, z)),
            np.sum(W * np.einsum("...ab,...ab->...", S, Dz)),
            np.sum(W * np.einsum("...a,...a->...", conv, z)),
            -np.sum(W * q * divz),
        ]
        scale = max(sum(abs(x) for x in terms), abs(lhs))
        worst = max(worst, abs(lhs - sum(terms)) / scale)
    return worst
