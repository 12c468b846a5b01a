"""Acceptance criteria, one test each.

Every test prints a single line ``[PASS] n. title: details`` (or FAIL) to the
terminal, bypassing output capture, and then asserts the criterion including
its runtime budget.
"""
import json
import math
import time

import numpy as np
import pytest

from blowup_lab import bsde, checks, closedform, config, pde
from blowup_lab.diffusion import CoefficientField
from blowup_lab.geometry import Interval

UNIT = Interval(0, 1)
BM = CoefficientField.brownian(1)
SEED = 1
pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def report(number, title, ok, detail, seconds, budget):
        ok = bool(ok) and seconds < budget
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail} ({seconds:.1f}s, budget {budget:g}s)")
        assert ok, detail

    return report


def _check(name, **kw):
    t0 = time.perf_counter()
    rep = checks.run_check(name, kw or None, seed=SEED)
    return rep, time.perf_counter() - t0


def _conditions(rep):
    return "; ".join(f"{c.name}={c.value:.4g}" for c in rep.conditions) if rep.error is None else rep.error


def test_01_ode_flow_convergence(verdict):
    t0 = time.perf_counter()
    gen, exact = closedform.power(1.0), 2.0 / 3.0
    y0 = bsde.solve_pure_ode(gen, 2.0, 1.0, 1e-3)
    e4 = abs(bsde.solve_pure_ode(gen, 2.0, 1.0, 4e-3) - exact)
    e2 = abs(bsde.solve_pure_ode(gen, 2.0, 1.0, 2e-3) - exact)
    secs = time.perf_counter() - t0
    ok = abs(y0 - exact) <= 0.01 and 1.6 <= e4 / e2 <= 2.4
    verdict(1, "ODE-flow convergence", ok, f"|Y0-2/3|={abs(y0 - exact):.2e}, ratio={e4 / e2:.3f}", secs, 1.0)


def test_02_keller_osserman(verdict):
    rep, secs = _check("keller_osserman")
    ok = rep.verdict and rep.measured["C"] == 16.0 and rep.config["n_paths"] == 100_000 and rep.config["h"] == 1 / 512
    verdict(2, "Keller-Osserman, C=16", ok, _conditions(rep), secs, 120)


def test_03_halfline_boundary_layer(verdict):
    t0 = time.perf_counter()
    h = 1 / 4096
    bd = config.build_boundary(config.interval_boundary(None, 1.0), 1)
    prob = pde.EllipticProblem(pde.Grid(UNIT, h), BM, closedform.power(2.0), bd)
    u, _ = pde.ladder_minimal(prob, [2.0**k for k in range(1, 15)])
    x = u.grid.points[:, 0]
    xu = x * u.values
    inner = u.grid.interior
    band = (x >= 0.01 - 1e-12) & (x <= 0.03 + 1e-12)
    lo, hi, top = xu[band].min(), xu[band].max(), xu[inner].max()
    rep = checks.run_check("blowup_rate", seed=SEED)
    secs = time.perf_counter() - t0
    ok = 0.9 <= lo and hi <= 1.1 and top <= math.sqrt(6) and rep.verdict
    detail = f"x*u on [0.01,0.03] in [{lo:.4f}, {hi:.4f}], max x*u={top:.4f} <= sqrt6, blowup_rate {'pass' if rep.verdict else 'fail'}"
    verdict(3, "boundary layer vs half-line profile", ok, detail, secs, 60)


def test_04_xi_lower_bound(verdict):
    rep, secs = _check("xi_bound")
    pts = rep.measured.get("points", [])
    detail = ", ".join(f"x={p['x']}: xi={p['xi']:.3f}+-{p['stderr']:.3f} u={p['u']:.3f}" for p in pts) or _conditions(rep)
    ok = rep.verdict and [p["x"] for p in pts] == [0.25, 0.5, 0.75]
    verdict(4, "Xi lower bound", ok, detail, secs, 120)


def test_05_phi_sign(verdict):
    rep, secs = _check("phi_sign")
    phi = rep.measured.get("phi", {})
    detail = f"phi={phi.get('value', float('nan')):.4f}+-{phi.get('stderr', float('nan')):.4f}, |phi_transport|={rep.measured.get('phi_transport', float('nan')):.2e}"
    verdict(5, "Phi residual sign", rep.verdict, detail, secs, 60)


def test_06_lemma3_band(verdict):
    rep, secs = _check("lemma3_band")
    ok = rep.verdict and rep.config["n_paths"] >= 100_000 and rep.config["x"] == [0.01, 0.02, 0.05, 0.1]
    verdict(6, "exit-time band", ok, _conditions(rep), secs, 120)


def test_07_degenerate_negative_control(verdict):
    rep, secs = _check("degenerate_sigma")
    xs, vals = np.array(rep.config["x"]), np.array(rep.measured["values"])
    ok = rep.verdict and xs[-1] == 0.998 and np.allclose(vals, 1 - xs, rtol=0, atol=1e-12) and vals[-1] < 0.05
    detail = f"values {np.round(rep.measured['values'], 6).tolist()} at x={xs}; band condition holds={rep.conditions[-1].holds}"
    verdict(7, "degenerate negative control", ok, detail, secs, 1.0)


def test_08_cross_representation(verdict):
    t0 = time.perf_counter()
    gen = closedform.power(1.0)
    bd = config.build_boundary({"default": 1.0}, 1)
    u = pde.solve_truncated(pde.EllipticProblem(pde.Grid(UNIT, 1 / 512), BM, gen, bd, truncation=1.0))
    worst, parts = -math.inf, []
    for i, x in enumerate((0.25, 0.5, 0.75)):
        run = bsde.solve_regression(
            bsde.RunConfig(gen, BM, UNIT, bd, (x,), dt=1e-3, n_paths=100_000, seed=SEED + i, truncation=1.0, t_max=6.0)
        )
        gap = abs(u.at((x,)) - run.y0_mean)
        worst = max(worst, gap - 3 * run.y0_stderr - 0.05)
        parts.append(f"x={x}: u={u.at((x,)):.4f} Y0={run.y0_mean:.4f}+-{run.y0_stderr:.4f}")
    secs = time.perf_counter() - t0
    verdict(8, "PDE vs BSDE", worst <= 0, ", ".join(parts), secs, 180)


def test_09_ladder_and_comparison(verdict):
    lad, s1 = _check("ladder_monotone")
    cmp_, s2 = _check("minimality_comparison")
    ok = lad.verdict and cmp_.verdict
    detail = f"{_conditions(lad)}; {_conditions(cmp_)}"
    verdict(9, "ladder monotonicity and comparison", ok, detail, s1 + s2, 60)


def test_10_general_generator(verdict):
    rep, secs = _check("general_generator")
    ok = rep.verdict and rep.config["kappa"] == 2.0
    verdict(10, "general generator, kappa=2", ok, _conditions(rep), secs, 180)


def test_11_determinism(verdict):
    runs, times = [], []
    for workers in (1, 1, 4):
        t0 = time.perf_counter()
        runs.append(checks.to_jsonl(checks.run_suite("fast", seed=SEED, workers=workers)).encode())
        times.append(time.perf_counter() - t0)
    same = runs[0] == runs[1] == runs[2]
    passed = all(json.loads(line)["verdict"] == "pass" for line in runs[0].splitlines())
    detail = f"{len(runs[0])} bytes, identical={same}, all pass={passed}, times {[round(t, 1) for t in times]}"
    verdict(11, "suite determinism (1, 1, 4 workers)", same and passed, detail, max(times), 120)


def test_12_weighted_z(verdict):
    rep, secs = _check("weighted_z")
    vals = rep.measured.get("values", [])
    detail = f"levels {rep.config['levels'][0]:g}..{rep.config['levels'][-1]:g}, eps={rep.config['eps']}, values {np.round(vals, 4).tolist()}; {_conditions(rep)}"
    verdict(12, "weighted-Z diagnostic", rep.verdict, detail, secs, 300)
