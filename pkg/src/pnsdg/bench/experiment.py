"""
Convergence experiment driver: one run per (p, rho) case over mesh levels.

Level n uses the initial grid refined n times and K_n = 2^(n+2) time steps
of size T / K_n.
"""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from ..constitutive import ModelParams
from ..forms import FormAssembler
from ..mesh import build_level
from ..rothe import clement_mean, energy_balance, run_rothe
from ..solver import NewtonConfig
from ..spaces import DGSpace, l2_project
from .errors import ERROR_NAMES, ErrorReport, error_quantities
from .manufactured import ManufacturedCase, forcing

__all__ = ["ExperimentConfig", "run_case", "run_experiment", "report_rows", "to_csv", "to_markdown", "CSV_COLUMNS"]

log = logging.getLogger(__name__)

CSV_COLUMNS = [
    "case_id", "p", "rho", "level", "h", "tau",
    "eF", "eJump", "eFstar", "eL2", "eQ",
    "eocF", "eocJump", "eocFstar", "eocL2", "eocQ",
    "newton_iters_total", "wall_seconds",
]  # fmt: skip
_EOC_COL = dict(zip(ERROR_NAMES, ["eocF", "eocJump", "eocFstar", "eocL2", "eocQ"]))


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings shared by all cases of an experiment.

    ``boundary`` selects the Dirichlet data in boundary jumps: ``"exact"``
    uses the exact velocity at t_k, ``"zero"`` the homogeneous condition.
    """

    ps: tuple = (2.0,)
    rhos: tuple = (0.2,)
    levels: tuple = (1, 2, 3, 4)
    stress_variant: str = "ldg"
    convective_variant: str = "II"
    alpha: float = 2.5
    delta: float = 1e-4
    T: float = 0.1
    clement: bool = False
    boundary: str = "exact"
    frozen_shift: bool = True
    newton: NewtonConfig = NewtonConfig()

    def __post_init__(self):
        if self.boundary not in ("exact", "zero"):
            raise ValueError("boundary must be 'exact' or 'zero'")
        if not self.levels or min(self.levels) < 0:
            raise ValueError("levels must be nonnegative")

    def params(self, p: float) -> ModelParams:
        return ModelParams(
            p=p,
            delta=self.delta,
            alpha=self.alpha,
            stress_variant=self.stress_variant,
            convective_variant=self.convective_variant,
        )


def _flat(A):
    return A.reshape(*A.shape[:-2], 4)


def _source(case: ManufacturedCase, space: DGSpace, cfg: ExperimentConfig, tau: float):
    nI = space.mesh.n_interior_faces
    bpts = space.fpts[nI:]

    def data_at(t):
        g, G = forcing(t, space.qpts, case)
        return g, _flat(G)

    def source(k, t):
        if cfg.clement:
            g = clement_mean(lambda s: data_at(s)[0], k, tau)
            G = clement_mean(lambda s: data_at(s)[1], k, tau)
        else:
            g, G = data_at(t)
        wD = case.velocity(t, bpts) if cfg.boundary == "exact" else None
        return g, G, wD

    def boundary_data(t):
        return case.velocity(t, bpts) if cfg.boundary == "exact" else None

    return source, boundary_data


def run_level(case: ManufacturedCase, level: int, cfg: ExperimentConfig):
    """Solve one level and return its :class:`LevelErrors`."""
    start = time.perf_counter()
    mesh = build_level(level)
    space = DGSpace(mesh, 1)
    params = cfg.params(case.p)
    fa = FormAssembler(space, params, frozen_shift=cfg.frozen_shift)
    K = 2 ** (level + 2)
    tau = cfg.T / K
    v0 = l2_project(lambda x: case.velocity(0.0, x), space, 2).coeffs
    source, bdata = _source(case, space, cfg, tau)
    traj = run_rothe(v0, K, fa, source, T=cfg.T, config=cfg.newton)
    rec = error_quantities(traj, case, fa, level, boundary_data=bdata)
    rec.energy = energy_balance(traj, fa, source)
    rec.wall_seconds = time.perf_counter() - start
    log.info(
        "case=%s level=%d eF=%.4e eJump=%.4e eFstar=%.4e eL2=%.4e eQ=%.4e newton=%d wall=%.1fs",
        case.case_id, level, rec.eF, rec.eJump, rec.eFstar, rec.eL2, rec.eQ, rec.newton_iters_total, rec.wall_seconds,
    )  # fmt: skip
    return rec


def run_case(p: float, rho: float, cfg: ExperimentConfig) -> ErrorReport:
    case = ManufacturedCase(p=p, rho=rho, delta=cfg.delta)
    report = ErrorReport(case)
    for level in sorted(cfg.levels):
        report.levels.append(run_level(case, level, cfg))
    return report


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> tuple[list, list]:
    """Run every (p, rho) case; failures are logged and reported, not raised.

    Returns ``(reports, failures)`` with failures as ``(case_id, message)``.
    """
    cases = [(p, rho) for p in cfg.ps for rho in cfg.rhos]
    reports, failures = [], []

    def one(pr):
        try:
            return run_case(pr[0], pr[1], cfg), None
        except Exception as exc:  # per-case isolation
            cid = ManufacturedCase(pr[0], pr[1], cfg.delta).case_id
            log.error("case=%s failed: %s", cid, exc)
            return None, (cid, str(exc))

    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, cases))
    else:
        results = [one(c) for c in cases]
    for rep, fail in results:
        if rep is not None:
            reports.append(rep)
        if fail is not None:
            failures.append(fail)
    return reports, failures


def report_rows(report: ErrorReport) -> list[dict]:
    rows = []
    case = report.case
    for rec, e in zip(report.levels, report.eocs()):
        row = {
            "case_id": case.case_id,
            "p": case.p,
            "rho": case.rho,
            "level": rec.level,
            "h": rec.h,
            "tau": rec.tau,
            **rec.errors(),
            **{_EOC_COL[k]: e[k] for k in ERROR_NAMES},
            "newton_iters_total": rec.newton_iters_total,
            "wall_seconds": rec.wall_seconds,
        }
        rows.append(row)
    return rows


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def to_csv(reports, path=None, include_timing: bool = True) -> str:
    """CSV text (written to ``path`` if given); timing column blank if not included."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        for row in report_rows(rep):
            if not include_timing:
                row["wall_seconds"] = None
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def to_markdown(reports, quantity: str = "eF") -> str:
    """Markdown EOC table for one quantity: rows are levels, columns cases."""
    if quantity not in ERROR_NAMES:
        raise ValueError(f"unknown quantity {quantity!r}")
    col = _EOC_COL[quantity]
    levels = sorted({r.level for rep in reports for r in rep.levels})
    header = "| n | " + " | ".join(f"p={rep.case.p:g}, rho={rep.case.rho:g}" for rep in reports) + " |"
    lines = [f"EOC({quantity})", "", header, "|---" * (len(reports) + 1) + "|"]
    table = {rep.case.case_id: {row["level"]: row[col] for row in report_rows(rep)} for rep in reports}
    for n in levels:
        cells = []
        for rep in reports:
            val = table[rep.case.case_id].get(n)
            cells.append("" if val is None else f"{val:.3f}")
        lines.append(f"| {n} | " + " | ".join(cells) + " |")
    lines.append("| rho p'/2 | " + " | ".join(f"{rep.case.expected_rate:.3f}" for rep in reports) + " |")
    return "\n".join(lines)
