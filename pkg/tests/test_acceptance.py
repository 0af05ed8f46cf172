"""
Acceptance criteria for the solver and the convergence benchmark.

Each criterion is one test and records one PASS/FAIL line; the lines are
printed in the terminal summary and by running this file directly::

    python3 tests/test_acceptance.py

Criteria 1, 2 and 4 share one benchmark run (four cases, levels 1-4) and
are marked ``slow``.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _oracles import forcing_residual  # noqa: E402
from pnsdg.bench import ExperimentConfig, ManufacturedCase, run_experiment  # noqa: E402

RESULTS: dict = {}

CASES = [(2.0, 0.1), (2.5, 0.1), (2.0, 0.2), (2.5, 0.2)]
LEVELS = (1, 2, 3, 4)
# level-4 reference EOCs of the published experiment
REF_EF = {(2.0, 0.1): 0.104, (2.5, 0.1): 0.089, (2.0, 0.2): 0.202, (2.5, 0.2): 0.176}
REF_EL2 = {(2.0, 0.1): 1.002, (2.5, 0.1): 1.151, (2.0, 0.2): 1.080, (2.5, 0.2): 1.216}
REF_EQ = {(2.0, 0.1): 0.121, (2.5, 0.1): 0.122, (2.0, 0.2): 0.222, (2.5, 0.2): 0.221}


def _record(key, ok, detail):
    RESULTS[key] = f"criterion {key}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(RESULTS[key])
    return ok


# --------------------------------------------------------------- benchmark
_BENCH: dict = {}


def _benchmark():
    if "reports" not in _BENCH:
        cfg = ExperimentConfig(ps=(2.0, 2.5), rhos=(0.1, 0.2), levels=LEVELS)
        start = time.perf_counter()
        reports, failures = run_experiment(cfg)
        _BENCH.update(
            reports={(r.case.p, r.case.rho): r for r in reports},
            failures=failures,
            seconds=time.perf_counter() - start,
        )
    return _BENCH


@pytest.mark.slow
def test_criterion_1_eoc_regression():
    b = _benchmark()
    lines, ok = [], not b["failures"]
    for key in CASES:
        rep = b["reports"].get(key)
        if rep is None:
            ok = False
            lines.append(f"p={key[0]:g},rho={key[1]:g}: missing")
            continue
        e = rep.eocs()[-1]
        checks = [("eF", REF_EF[key], 0.05), ("eL2", REF_EL2[key], 0.1), ("eQ", REF_EQ[key], 0.05)]
        parts = []
        for name, ref, tol in checks:
            good = e[name] is not None and abs(e[name] - ref) <= tol
            ok &= good
            parts.append(f"{name} {e[name]:.3f} (ref {ref:.3f}{'' if good else ' X'})")
        lines.append(f"p={key[0]:g},rho={key[1]:g}: " + ", ".join(parts))
    _record(1, ok, "; ".join(lines) + f"; total {b['seconds']:.0f}s")
    assert ok, RESULTS[1]


@pytest.mark.slow
def test_criterion_2_asymptotic_rates():
    b = _benchmark()
    ok, lines = not b["failures"], []
    for key in CASES:
        rep = b["reports"].get(key)
        if rep is None:
            ok = False
            continue
        r = rep.case.expected_rate
        lo, hi = r - 0.08, r + 0.12
        e = rep.eocs()[-1]
        vals = {n: e[n] for n in ("eF", "eJump", "eFstar", "eQ")}
        good = all(v is not None and lo <= v <= hi for v in vals.values())
        ok &= good
        lines.append(
            f"p={key[0]:g},rho={key[1]:g} in [{lo:.3f},{hi:.3f}]: "
            + " ".join(f"{n}={v:.3f}" for n, v in vals.items())
            + ("" if good else " X")
        )
    _record(2, ok, "; ".join(lines))
    assert ok, RESULTS[2]


@pytest.mark.slow
def test_criterion_4_stability_energy():
    b = _benchmark()
    ok, lines = not b["failures"], []
    for key in CASES:
        rep = b["reports"].get(key)
        if rep is None:
            ok = False
            continue
        en = [rec.energy for rec in rep.levels]
        energy_ok = all(x.holds and x.identity_error < 1e-8 for x in en)
        growth = [
            max(b_.max_l2 / a_.max_l2, b_.dissipation / a_.dissipation) for a_, b_ in zip(en, en[1:])
        ]
        good = energy_ok and max(growth) <= 2.0
        ok &= good
        lines.append(
            f"p={key[0]:g},rho={key[1]:g}: energy {'ok' if energy_ok else 'VIOLATED'}"
            f" (max defect {max(x.identity_error for x in en):.1e}), max growth {max(growth):.3f}"
        )
    _record(4, ok, "; ".join(lines))
    assert ok, RESULTS[4]


# --------------------------------------------------------- operator suite
def _operator_checks():
    from test_dgcalc import _face_pairing, _korn_ratios, _random, _vol_pairing

    from pnsdg.constitutive import ModelParams
    from pnsdg.dgcalc import dg_divergence, dg_gradient, lift
    from pnsdg.forms import FormAssembler, assemble_convective_I, assemble_convective_II, assemble_stress_ldg
    from pnsdg.mesh import build_level
    from pnsdg.spaces import BrokenField, ContinuousPressure, DGSpace, l2_project
    from test_forms import CONFIGS, _random_step

    rng = np.random.default_rng(2024)
    sp0, sp1, sp2 = (DGSpace(build_level(n)) for n in (0, 1, 2))
    res = {}

    def skew(fn):
        worst = 0.0
        for _ in range(100):
            v = _random(sp1, 2, rng)
            r = fn(v, jacobian=False).residual
            worst = max(worst, abs(r @ v.coeffs) / (np.linalg.norm(r) * np.linalg.norm(v.coeffs)))
        return worst

    res["skew B^II <= 1e-12"] = skew(assemble_convective_II) <= 1e-12
    res["skew B^I <= 1e-10"] = skew(assemble_convective_I) <= 1e-10

    params = ModelParams(p=2.5)
    worst = np.inf
    for _ in range(100):
        w, z = _random(sp1, 2, rng), _random(sp1, 2, rng)
        d = w.coeffs - z.coeffs
        dr = assemble_stress_ldg(w, params, jacobian=False).residual - assemble_stress_ldg(z, params, jacobian=False).residual
        worst = min(worst, dr @ d / (np.linalg.norm(dr) * np.linalg.norm(d)))
    res["LDG monotone >= -1e-10"] = worst >= -1e-10

    lift_err = grad_err = 0.0
    for _ in range(5):
        w, X = _random(sp0, 2, rng), _random(sp0, 4, rng)
        fp = _face_pairing(sp0, w, X)
        lift_err = max(lift_err, abs(_vol_pairing(sp0, lift(w), X) - fp) / abs(fp))
        g = np.einsum("eqib,eai->eqab", sp0.dphi, w.local).reshape(sp0.n_elements, sp0.nq, 4)
        rhs = np.einsum("eq,eqx,eqx->", sp0.qw, g, X.at_quadrature()) - fp
        grad_err = max(grad_err, abs(_vol_pairing(sp0, dg_gradient(w), X) - rhs) / abs(rhs))
    res["lifting identity <= 1e-10"] = lift_err <= 1e-10
    res["DG gradient identity <= 1e-10"] = grad_err <= 1e-10

    div_err = 0.0
    for _ in range(20):
        c = rng.standard_normal(4)
        z = lambda x: np.stack([np.sin(c[0] * x[..., 0] + c[1] * x[..., 1]), np.cos(c[2] * x[..., 0] * x[..., 1]) + c[3]], -1)
        qh = ContinuousPressure(sp1.mesh, rng.standard_normal(sp1.mesh.n_vertices))
        div = dg_divergence(l2_project(z, sp1)).at_quadrature()[..., 0]
        lhs = np.einsum("eq,eq,eq->", sp1.qw, div, qh.at_points(sp1))
        rhs = -np.einsum("eq,eqi,ei->", sp1.qw, z(sp1.qpts), qh.gradient())
        div_err = max(div_err, abs(lhs - rhs))
    res["divergence identity <= 1e-9"] = div_err <= 1e-9

    c_fit = max(_korn_ratios(sp1, 50, 7))
    res["Korn fit-and-check"] = max(_korn_ratios(sp2, 50, 8)) <= 1.05 * c_fit

    fd_err = 0.0
    for p, sv, cv, frozen in CONFIGS[:2]:
        fa = FormAssembler(sp0, ModelParams(p=p, stress_variant=sv, convective_variant=cv), frozen_shift=frozen)
        for _ in range(5):
            step = _random_step(sp0, rng)
            U = rng.standard_normal(fa.layout.size)
            d = rng.standard_normal(fa.layout.size)
            J = fa.assemble(U, step).jacobian
            fd = (fa.residual(U + 1e-6 * d, step) - fa.residual(U - 1e-6 * d, step)) / 2e-6
            fd_err = max(fd_err, np.linalg.norm(J @ d - fd) / np.linalg.norm(fd))
    res["Jacobian vs central FD <= 1e-5"] = fd_err <= 1e-5
    return res


def test_criterion_3_operator_suite():
    start = time.perf_counter()
    res = _operator_checks()
    secs = time.perf_counter() - start
    ok = all(res.values()) and secs < 60
    failed = [k for k, v in res.items() if not v]
    detail = f"{len(res) - len(failed)}/{len(res)} checks in {secs:.1f}s" + (f"; failed: {', '.join(failed)}" if failed else "")
    _record(3, ok, detail)
    assert ok, RESULTS[3]


def test_criterion_5_forcing_oracle():
    worst = max(forcing_residual(ManufacturedCase(p, rho), t) for p, rho in CASES for t in (0.01, 0.05, 0.1))
    ok = worst <= 1e-10
    _record(5, ok, f"max relative defect {worst:.2e} on 0.2<|x|<0.9 (4 cases x 3 times)")
    assert ok, RESULTS[5]


if __name__ == "__main__":
    tests = [
        test_criterion_5_forcing_oracle,
        test_criterion_3_operator_suite,
        test_criterion_1_eoc_regression,
        test_criterion_2_asymptotic_rates,
        test_criterion_4_stability_energy,
    ]
    for fn in tests:
        try:
            fn()
        except AssertionError:
            pass
    sys.exit(0 if all("PASS" in line for line in RESULTS.values()) else 1)
