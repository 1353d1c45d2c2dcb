"""Acceptance criteria 1-12, each reported as one PASS/FAIL line.

Criteria 3-5 and 7-11 read the CSV tables of one run of
``configs/acceptance.ini``; criterion 12 repeats that run.
"""
import csv
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mcsvortex.cli import main
from mcsvortex.errors import IntegrationDiverged
from mcsvortex.green import TorusLattice
from mcsvortex.radial import check_integral_identities, shoot, solve_for_beta
from mcsvortex.spectral import Grid

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "acceptance.ini"
S_GRID = [-0.25, -0.5, -1.0, -2.0, -4.0, -8.0]


def report(n, ok, detail):
    ACCEPTANCE_LINES[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[n])


def rows(path):
    with open(path, newline="") as fh:
        return [{k: (float(v) if k not in ("file", "verdict", "fp_converged") else v)
                 for k, v in r.items()} for r in csv.DictReader(fh)]


@pytest.fixture(scope="module")
def acceptance_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance") / "out"
    t0 = time.perf_counter()
    code = main(["run", "--config", str(CONFIG), "--out", str(out)])
    return code, out, time.perf_counter() - t0


@pytest.mark.xfail(strict=True, raises=AssertionError,
                   reason="no entire solution exists for m=1 at s >= -2 or m=2 at s >= -4")
def test_criterion_01_profile_identities():
    t0 = time.perf_counter()
    bad, worst = [], 0.0
    for m in (0, 1, 2):
        for s in S_GRID:
            try:
                dev = check_integral_identities(shoot(s, m)).max_deviation
            except IntegrationDiverged:
                bad.append(f"(s={s:g},m={m}) no entire solution")
                continue
            worst = max(worst, dev)
            if dev >= 1e-4:
                bad.append(f"(s={s:g},m={m}) dev {dev:.1e}")
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 60
    report(1, ok, f"worst deviation {worst:.1e} on {18 - len(bad)}/18 points, {elapsed:.1f}s"
           + (f"; failing: {', '.join(bad)}" if bad else ""))
    assert elapsed < 60
    assert worst < 1e-4
    assert not bad, "; ".join(bad)


def test_criterion_02_beta_bijectivity():
    betas = [shoot(s, 0).beta for s in sorted(S_GRID)]
    increasing = all(b > a for a, b in zip(betas, betas[1:]))
    p40 = shoot(-40.0, 0)
    b40 = p40.beta
    # beta - 4 ~ e^s is below double resolution at s = -40; resolve it through
    # beta (beta - 4) = int e^{2w} / pi
    excess = check_integral_identities(p40).int_e2w / (math.pi * b40)
    ds = abs(solve_for_beta(shoot(-1.0, 0).beta, 0) + 1.0)
    ok = increasing and excess > 0 and b40 < 4.5 and ds < 1e-4
    report(2, ok, f"monotone={increasing}, beta(-40) = 4 + {excess:.3e}, "
           f"round trip |ds|={ds:.1e}")
    assert ok


def test_criterion_03_mcs_identities(acceptance_run):
    code, out, _ = acceptance_run
    assert code == 0
    sel = [r for r in rows(out / "solve-mcs" / "solve-mcs.csv") if r["lambda"] in (4.0, 8.0)]
    mass = max(r["mass_rel_err"] for r in sel)
    bal = max(r["balance_rel_err"] for r in sel)
    signs = all(r["max_u"] < 0 and r["min_N"] > 0 and r["max_N_over_lambda"] < 1 for r in sel)
    ok = len(sel) == 2 and mass < 1e-6 and bal < 1e-6 and signs
    report(3, ok, f"lambda 4,8: mass err {mass:.1e}, balance err {bal:.1e}, sign bounds {signs}")
    assert ok


def test_criterion_04_cs_limit(acceptance_run):
    _, out, _ = acceptance_run
    sw = sorted(rows(out / "sweep" / "sweep.csv"), key=lambda r: r["mu"])
    dev = [r["cs_deviation"] for r in sw]
    mono = all(b < a for a, b in zip(dev, dev[1:]))
    ok = [r["mu"] for r in sw] == [200, 400, 800, 1600] and mono and dev[-1] < 0.05
    report(4, ok, "cs_deviation " + " > ".join(f"{d:.2e}" for d in dev))
    assert ok


def test_criterion_05_gradient_bound(acceptance_run):
    _, out, _ = acceptance_run
    gb = [r["gradient_bound"] for r in rows(out / "solve-mcs" / "solve-mcs.csv")]
    gb += [r["gradient_bound"] for r in rows(out / "sweep" / "sweep.csv")]
    ratio = max(gb) / min(gb)
    report(5, ratio < 10, f"gradient bound in [{min(gb):.3f}, {max(gb):.3f}], ratio {ratio:.2f}")
    assert ratio < 10


def test_criterion_06_helmholtz_estimate():
    rng = np.random.default_rng(6)
    g = Grid(TorusLattice.square(), 128)
    t = g.points
    worst = 0.0
    for mu in (1e2, 1e3, 1e4):
        for _ in range(20):
            f = np.zeros((g.n, g.n))
            for _ in range(6):
                k1, k2 = rng.integers(-8, 9, size=2)
                f += rng.normal() * np.cos(2 * math.pi * (k1 * t[..., 0] + k2 * t[..., 1])
                                           + 2 * math.pi * rng.random())
            _, r = g.helmholtz_solve(mu, f, report=True)
            worst = max(worst, r["L2"])
    ok = worst <= 1 + 1e-6
    report(6, ok, f"max mu^2 |S|/|g| = {worst:.12f} over 60 fields")
    assert ok


def test_criterion_07_ansatz_residual(acceptance_run):
    _, out, _ = acceptance_run
    b = {r["lambda"]: r for r in rows(out / "blowup" / "blowup.csv")}
    vals = [b[lam]["g1_Y_scaled"] for lam in (10.0, 20.0, 40.0)]
    ratio = vals[2] / vals[0]
    report(7, ratio < 3, "g1 Y-norm * lam/sqrt(ln lam): "
           + ", ".join(f"{v:.3g}" for v in vals) + f"; ratio 40/10 = {ratio:.3g}")
    assert ratio < 3


def test_criterion_08_contraction_reduction(acceptance_run):
    _, out, _ = acceptance_run
    b = {r["lambda"]: r for r in rows(out / "blowup" / "blowup.csv")}
    r20 = b[20.0]
    conv = r20["fp_converged"] == "true" and r20["fp_iterations"] <= 100
    drop = b[10.0]["reduced_grad_norm"] / b[40.0]["reduced_grad_norm"]
    ok = conv and r20["contraction"] < 1 and drop >= 2
    report(8, ok, f"lambda=20: converged in {int(r20['fp_iterations'])} steps, contraction "
           f"{r20['contraction']:.2e}; reduced gradient drop 10->40 = {drop:.1f}x")
    assert ok


def test_criterion_09_concentration(acceptance_run):
    _, out, _ = acceptance_run
    b = {r["lambda"]: r for r in rows(out / "blowup" / "blowup.csv")}
    ratio = b[40.0]["local_mass_ratio"]
    cls = json.loads((out / "diagnose.blowup" / "classify.json").read_text())
    alphas = cls["evidence"]["alphas"]
    mu = [r["max_u"] for r in b.values()]
    spread = max(mu) - min(mu)
    ok = (0.95 <= ratio <= 1.05 and cls["verdict"] == "III" and alphas
          and min(alphas) >= 8 * math.pi and spread <= 1.0)
    report(9, ok, f"local mass ratio {ratio:.4f}, verdict {cls['verdict']}, alpha_1 "
           f"{min(alphas):.3f}, max u in [{min(mu):.4f}, {max(mu):.4f}]")
    assert ok


def test_criterion_10_vortex_point(acceptance_run):
    _, out, _ = acceptance_run
    (r,) = rows(out / "blowup.vortex" / "blowup.csv")
    ok = (r["interface_jump"] < 1e-8 and r["fp_converged"] == "true"
          and abs(r["local_mass_ratio"] - 1) <= 0.1 and r["mu"] <= 1e8)
    report(10, ok, f"jump {r['interface_jump']:.1e}, fixed point {r['fp_converged']} in "
           f"{int(r['fp_iterations'])} steps, local mass ratio {r['local_mass_ratio']:.3f}")
    assert ok


def test_criterion_11_flux(acceptance_run):
    _, out, _ = acceptance_run
    errs = []
    for f in ("solve-mcs/solve-mcs.csv", "sweep/sweep.csv", "blowup/blowup.csv",
              "blowup.vortex/blowup.csv"):
        errs += [r["flux_rel_err"] for r in rows(out / f)]
    worst = max(errs)
    report(11, worst < 1e-6, f"worst flux error {worst:.1e} over {len(errs)} states")
    assert worst < 1e-6


def test_criterion_12_determinism(acceptance_run, tmp_path):
    code, out, _ = acceptance_run
    again = tmp_path / "again"
    code2 = main(["run", "--config", str(CONFIG), "--out", str(again), "--threads", "2"])
    files = sorted(p.relative_to(out) for p in out.rglob("*.csv"))
    differ = [str(p) for p in files if (again / p).read_bytes() != (out / p).read_bytes()]
    ok = code == code2 == 0 and files and not differ
    report(12, ok, f"{len(files)} CSV files byte-identical across a serial and a 2-process run"
           if ok else f"differing: {differ}")
    assert ok
