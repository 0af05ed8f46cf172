import csv
import io
import math

import numpy as np
import pytest

from _oracles import forcing_residual, symbolic_fields
from pnsdg.bench import (
    ErrorReport,
    ExperimentConfig,
    LevelErrors,
    ManufacturedCase,
    eoc,
    error_quantities,
    forcing,
    pressure_mean,
    run_case,
    run_experiment,
    to_csv,
    to_markdown,
)
from pnsdg.bench.cli import _levels, build_parser, main
from pnsdg.bench.experiment import CSV_COLUMNS
from pnsdg.constitutive import ModelParams
from pnsdg.forms import FormAssembler
from pnsdg.rothe import Trajectory
from pnsdg.spaces import ContinuousPressure, l2_project

CASES = [ManufacturedCase(p, rho) for p in (1.5, 2.0, 2.5, 3.0) for rho in (0.1, 0.2, 0.5)]


# ------------------------------------------------------------ manufactured
def test_case_parameters():
    c = ManufacturedCase(2.5, 0.2)
    assert c.beta == pytest.approx(2 * (0.2 - 1) / 2.5)
    assert c.gamma == pytest.approx(0.2 - 2 / (2.5 / 1.5))
    assert c.expected_rate == pytest.approx(0.2 * (2.5 / 1.5) / 2)
    assert c.case_id == "p2.5_rho0.2"


def test_t0_fields_vanish(rng):
    x = rng.uniform(-1, 1, (50, 2))
    c = ManufacturedCase(2.5, 0.2)
    assert np.all(c.velocity(0.0, x) == 0) and np.all(c.pressure(0.0, x) == 0)


@pytest.mark.parametrize("case", CASES, ids=lambda c: c.case_id)
def test_divergence_free(case, rng):
    x = rng.uniform(-1, 1, (10_000, 2))
    G = case.velocity_gradient(0.7, x)
    div = G[:, 0, 0] + G[:, 1, 1]
    assert np.all(np.abs(div) <= 1e-12 * np.linalg.norm(G, axis=(1, 2)))


@pytest.mark.parametrize("case", CASES, ids=lambda c: c.case_id)
def test_velocity_modulus(case, rng):
    x = rng.uniform(-1, 1, (200, 2))
    r = np.linalg.norm(x, axis=1)
    np.testing.assert_allclose(np.linalg.norm(case.velocity(0.3, x), axis=1), 0.3 * r ** (case.beta + 1), rtol=1e-13)


@pytest.mark.parametrize("case", CASES[:6], ids=lambda c: c.case_id)
def test_closed_forms_against_sympy(case, rng):
    f = symbolic_fields(case)
    x = rng.uniform(-1, 1, (40, 2))
    t = 0.37
    for i, xi in enumerate(x):
        np.testing.assert_allclose(case.velocity(t, xi), np.ravel(f["v"](t, *xi)), rtol=1e-12)
        np.testing.assert_allclose(case.velocity_gradient(t, xi), np.asarray(f["grad"](t, *xi), float), rtol=1e-11, atol=1e-13)
        np.testing.assert_allclose(case.convection(t, xi), np.ravel(f["conv"](t, *xi)), rtol=1e-11, atol=1e-14)
        assert case.pressure(t, xi) == pytest.approx(float(f["q"](t, *xi)), rel=1e-11, abs=1e-14)


def test_origin_raises():
    with pytest.raises(ValueError):
        ManufacturedCase(2.5, 0.2).velocity_gradient(0.1, np.zeros(2))
    with pytest.raises(ValueError):
        forcing(0.1, np.zeros((1, 2)), ManufacturedCase(2.5, 0.2))


@pytest.mark.parametrize("case", CASES, ids=lambda c: c.case_id)
def test_forcing_oracle_annulus(case):
    assert forcing_residual(case, 0.05) <= 1e-10


def test_forcing_linear_case(rng):
    c = ManufacturedCase(2.0, 0.2, delta=0.0)
    x = rng.uniform(0.1, 1, (20, 2))
    g, G = forcing(0.4, x, c)
    np.testing.assert_allclose(G, c.sym_gradient(0.4, x) - c.pressure(0.4, x)[:, None, None] * np.eye(2), atol=1e-14)


def test_forcing_t0(rng):
    c = ManufacturedCase(2.5, 0.2)
    x = rng.uniform(0.1, 1, (20, 2))
    g, G = forcing(0.0, x, c)
    assert np.all(G == 0)
    r = np.linalg.norm(x, axis=1)
    np.testing.assert_allclose(g, r[:, None] ** c.beta * np.stack([x[:, 1], -x[:, 0]], -1), rtol=1e-14)


# ------------------------------------------------------------ pressure mean
def test_pressure_mean_values():
    assert pressure_mean(0.0) == pytest.approx(1.0, rel=1e-12)
    assert pressure_mean(2.0) == pytest.approx(2 / 3, rel=1e-12)


def test_pressure_mean_grid_oracle():
    n = 10_000
    xs = -1 + (np.arange(n) + 0.5) * (2 / n)
    total = 0.0
    for chunk in np.array_split(xs, 20):
        total += np.sum((chunk[:, None] ** 2 + xs[None, :] ** 2) ** -0.25)
    assert pressure_mean(-0.5) == pytest.approx(total / n**2, abs=1e-4)


def test_pressure_mean_domain():
    with pytest.raises(ValueError):
        pressure_mean(-2.0)


# -------------------------------------------------------------------- eoc
def test_eoc_examples():
    assert eoc(0.2, 0.1, 1.0, 0.5) == pytest.approx(1.0)
    assert eoc(0.1, 0.1, 1.0, 0.5) == pytest.approx(0.0)
    assert eoc(0.1, 0.087, 1.0, 0.5) == pytest.approx(math.log(0.87) / math.log(0.5))
    assert eoc(0.1, 0.087, 1.0, 0.5) == pytest.approx(0.2009, abs=1e-4)
    assert eoc(0.0, 0.1, 1.0, 0.5) is None


# ----------------------------------------------------------------- errors
class _AffineCase:
    """Exact solution with affine velocity and pressure: projections are exact."""

    p, rho, delta = 2.5, 0.2, 1e-4
    p_conj = 2.5 / 1.5
    A = np.array([[0.3, -0.7], [0.4, -0.3]])

    def velocity(self, t, x):
        return t * (x @ self.A.T + np.array([0.1, -0.2]))

    def sym_gradient(self, t, x):
        S = 0.5 * (self.A + self.A.T)
        return np.broadcast_to(t * S, x.shape[:-1] + (2, 2))

    def pressure(self, t, x):
        return t * t * (x[..., 0] - 2 * x[..., 1])


def _exact_trajectory(space, case, K=4, T=0.1):
    V, Q = [], []
    for k in range(K + 1):
        t = k * T / K
        V.append(l2_project(lambda x: case.velocity(t, x), space).coeffs)
        Q.append(ContinuousPressure.interpolate(space.mesh, lambda x: case.pressure(t, x)).values)
    return Trajectory(T=T, K=K, velocities=V, pressures=Q)


def test_errors_vanish_for_exact_affine(space1):
    case = _AffineCase()
    fa = FormAssembler(space1, ModelParams(p=case.p))
    traj = _exact_trajectory(space1, case)
    bpts = space1.fpts[space1.mesh.n_interior_faces :]
    rec = error_quantities(traj, case, fa, 1, boundary_data=lambda t: case.velocity(t, bpts))
    for name, val in rec.errors().items():
        assert val < 1e-12, name


def test_e_jump_nonnegative(space1, rng):
    case = ManufacturedCase(2.5, 0.2)
    fa = FormAssembler(space1, ModelParams(p=2.5))
    V = [rng.standard_normal(fa.layout.n_velocity) for _ in range(3)]
    traj = Trajectory(T=0.1, K=2, velocities=V, pressures=[np.zeros(fa.layout.n_pressure)] * 3)
    assert error_quantities(traj, case, fa, 1).eJump > 0


def test_eF_linear_case_is_sym_gradient_error(space1, rng):
    case = ManufacturedCase(2.0, 0.2, delta=0.0)
    fa = FormAssembler(space1, ModelParams(p=2.0, delta=0.0))
    V = [0.1 * k * rng.standard_normal(fa.layout.n_velocity) for k in range(3)]
    traj = Trajectory(T=0.1, K=2, velocities=V, pressures=[np.zeros(fa.layout.n_pressure)] * 3)
    rec = error_quantities(traj, case, fa, 1)
    from pnsdg.dgcalc import sym_dg_gradient
    from pnsdg.spaces import BrokenField

    ref = 0.0
    for k, v in enumerate(V):
        Dh = sym_dg_gradient(BrokenField(space1, 2, v)).at_quadrature().reshape(space1.n_elements, space1.nq, 2, 2)
        d = case.sym_gradient(k * 0.05, space1.qpts) - Dh
        ref += 0.05 * np.einsum("eq,eqab,eqab->", space1.qw, d, d)
    assert rec.eF == pytest.approx(math.sqrt(ref), rel=1e-12)


# ------------------------------------------------------------- experiment
def _small_cfg(**kw):
    return ExperimentConfig(ps=(2.0,), rhos=(0.2,), levels=(1, 2), **kw)


@pytest.fixture(scope="module")
def p2_report():
    return run_case(2.0, 0.2, _small_cfg())


def test_errors_decrease_level1_to_2(p2_report):
    a, b = p2_report.levels
    for name in a.errors():
        assert getattr(b, name) < getattr(a, name), name


def test_energy_attached(p2_report):
    assert all(rec.energy.holds for rec in p2_report.levels)


def test_csv_schema(p2_report):
    text = to_csv([p2_report])
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0].keys()) == CSV_COLUMNS
    assert rows[0]["eocF"] == "" and rows[1]["eocF"] != ""
    assert rows[0]["case_id"] == "p2_rho0.2"


def test_markdown(p2_report):
    md = to_markdown([p2_report], "eL2")
    assert "p=2, rho=0.2" in md and "| 2 |" in md
    with pytest.raises(ValueError):
        to_markdown([p2_report], "foo")


def test_reproducible_csv():
    cfg = ExperimentConfig(ps=(2.5,), rhos=(0.2,), levels=(0, 1))
    a = to_csv(run_experiment(cfg)[0], include_timing=False)
    b = to_csv(run_experiment(cfg)[0], include_timing=False)
    assert a == b


def test_failure_isolated():
    # too few Newton iterations for p = 2.5: the case fails without raising
    from pnsdg.solver import NewtonConfig

    cfg = ExperimentConfig(ps=(2.5,), rhos=(0.2,), levels=(0,), newton=NewtonConfig(max_iters=1, abs_tol=1e-15, rel_tol=1e-15))
    reports, failures = run_experiment(cfg)
    assert reports == [] and failures[0][0] == "p2.5_rho0.2"


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(boundary="weird")
    with pytest.raises(ValueError):
        ExperimentConfig(levels=())


# -------------------------------------------------------------------- cli
def test_levels_parser():
    assert _levels("1-4") == (1, 2, 3, 4)
    assert _levels("0,2") == (0, 2)


def test_parser_defaults():
    args = build_parser().parse_args([])
    assert args.alpha == 2.5 and args.delta == 1e-4 and args.T == 0.1
    assert args.variant_stress == "ldg" and args.variant_convective == "2"


def test_cli_run(tmp_path, capsys):
    out = tmp_path / "eoc.csv"
    code = main(["--p", "2", "--rho", "0.2", "--levels", "0,1", "--out", str(out), "--table"])
    assert code == 0
    assert out.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert "EOC(eF)" in capsys.readouterr().out
