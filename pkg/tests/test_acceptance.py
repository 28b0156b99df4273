"""
Acceptance criteria. Each test records one PASS/FAIL line; the lines are
repeated in the terminal summary under "acceptance criteria".
"""
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from surprise_index import (
    ControllerSpec,
    McSpec,
    Scenario,
    build_joint,
    build_joint_nonlinear,
    chi2_cdf,
    cumulative_si,
    grid_si,
    marginalize,
    mc_si,
    run_monte_carlo,
    surprise_index,
)
from surprise_index.harness import model_joint, subsample_steps
from surprise_index.models import cr3bp_model, duffing_model, gps_system

from lgm_helpers import moment_z_scores, random_system, simulate_literal
from nonlinear_helpers import random_linear_pair, rel_fro

pytestmark = pytest.mark.acceptance

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_1_closed_form_matches_oracles(report):
    t0 = time.perf_counter()
    joint = build_joint(gps_system(3))
    y = joint.sample(1, np.random.default_rng(2024))[0]
    trace = cumulative_si(joint, y)
    worst_grid, worst_mc = 0.0, 0.0
    ok = True
    for k in range(1, 4):
        prefix = marginalize(joint, range(1, k + 1))
        yk = y[:2 * k]
        closed = surprise_index(prefix, yk)
        assert closed == pytest.approx(trace.si[k - 1], abs=1e-12)
        est, se = mc_si(prefix, yk, McSpec(100_000, 1000 + k))
        worst_mc = max(worst_mc, abs(est - closed) / se if se else (0.0 if est == closed else math.inf))
        ok &= abs(est - closed) <= 4 * se
        if prefix.dim <= 4:
            diff = abs(grid_si(prefix, yk) - closed)
            worst_grid = max(worst_grid, diff)
            ok &= diff <= 1e-2
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    report("1 closed form vs grid/MC oracle, GPS N=3", ok,
           f"max grid diff {worst_grid:.2e}, max MC diff {worst_mc:.2f} stderr, {elapsed:.1f}s")
    assert ok


def test_2_matched_model_uniformity(report):
    t0 = time.perf_counter()
    s = run_monte_carlo(Scenario(gps_system(20), runs=1000, seed=2))
    final = s.final_si
    p = stats.kstest(final, "uniform").pvalue
    elapsed = time.perf_counter() - t0
    ok = abs(final.mean() - 0.5) <= 0.05 and p > 1e-3 and elapsed < 60
    report("2 matched-model uniformity, 1000 GPS runs", ok,
           f"mean {final.mean():.4f}, KS p {p:.3f}, {elapsed:.1f}s")
    assert ok


def test_3_mismatch_sweep(report):
    t0 = time.perf_counter()
    base = Scenario(gps_system(50), runs=100, seed=1)
    joint = model_joint(base)
    rhos = (0.5, 0.75, 1.0, 1.5, 2.0)
    finals = [run_monte_carlo(base.replace(R_scale=r), joint).mean[-1] for r in rhos]
    elapsed = time.perf_counter() - t0
    ordered = all(a >= b for a, b in zip(finals, finals[1:]))
    ok = finals[0] > 0.9 and finals[-1] < 0.1 and ordered and elapsed < 120
    report("3 mismatch sweep ordering, 100 runs x 50 steps", ok,
           "final means " + ", ".join(f"{r}:{m:.4f}" for r, m in zip(rhos, finals)) + f", {elapsed:.1f}s")
    assert ok


def test_4_linear_exactness(report):
    worst = 0.0
    for seed in range(20):
        model, system, u = random_linear_pair(np.random.default_rng(4000 + seed))
        assert system.state_dim <= 4 and system.horizon <= 10
        a, b = build_joint_nonlinear(model, system.horizon, u), build_joint(system)
        worst = max(worst, rel_fro(a.cov, b.cov), rel_fro(a.mean, b.mean))
    ok = worst <= 1e-8
    report("4 sigma-point joint equals linear joint, 20 systems", ok, f"worst relative Frobenius error {worst:.2e}")
    assert ok


def test_5_gauss_markov_monte_carlo(report):
    worst = 0.0
    entries = 0
    for seed in range(10):
        rng = np.random.default_rng(5000 + seed)
        sys_ = random_system(rng, process_noise=True)
        assert sys_.Q.shape[1] > 0
        j = build_joint(sys_)
        zm, zc = moment_z_scores(simulate_literal(sys_, rng, 20_000), j.mean, j.cov)
        worst = max(worst, np.abs(zm).max(), np.abs(zc).max())
        entries += zm.size + zc.size
    ok = worst < 5
    report("5 Gauss-Markov moments within 5 standard errors, 10 systems", ok,
           f"largest |z| {worst:.2f} over {entries} entries")
    assert ok


def test_6_chi2_cdf(report):
    xs = np.linspace(0.0, 60.0, 1000)
    err2 = max(abs(chi2_cdf(2, x) + math.expm1(-x / 2)) for x in xs)
    err1 = max(abs(chi2_cdf(1, x) - math.erf(math.sqrt(x / 2))) for x in np.linspace(0.0, 40.0, 1000))
    ok = err2 <= 1e-12 and err1 <= 1e-6 and abs(chi2_cdf(1, 3.841) - 0.950) <= 1e-3
    report("6 chi2_cdf vs 2-dof closed form and 1-dof normal values", ok,
           f"2-dof max error {err2:.1e}, 1-dof max error {err1:.1e}")
    assert ok


def test_7_divergence_detection(report):
    scn = Scenario(duffing_model(), horizon=100, nominal_controls=[0.5], runs=20, seed=3,
                   controller=ControllerSpec("linear_feedback", gain=((0.3, 0.3),)))
    on = run_monte_carlo(scn).final_si
    off = run_monte_carlo(scn.replace(disable_control_at=50)).final_si
    pair_ok = off[0] < 0.05 and 0.01 <= on[0] <= 0.99
    all_diverged = bool(np.all(off < 0.05))
    in_band = float(np.mean((on >= 0.01) & (on <= 0.99)))

    model = cr3bp_model()
    sub = marginalize(build_joint_nonlinear(model, 150), subsample_steps(150, 15))
    smoke = (sub.steps == 15 and np.all(np.isfinite(sub.cov)) and np.all(np.isfinite(sub.mean))
             and np.linalg.eigvalsh(sub.cov).min() > 0)

    ok = pair_ok and all_diverged and smoke
    report("7 divergence detection (Duffing pair) and CR3BP smoke", ok,
           f"pair: diverged {off[0]:.2e}, matched {on[0]:.3f}; "
           f"20 pairs: max diverged {off.max():.2e}, matched in band {in_band:.0%}; CR3BP joint PD {smoke}")
    assert ok


def _cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "surprise_index", *args], cwd=cwd, capture_output=True)


def _snapshot(directory):
    return {str(p.relative_to(directory)): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_8_cli_determinism(tmp_path, report):
    cfg = tmp_path / "gps.json"
    raw = json.loads((CONFIGS / "gps_sweep.json").read_text())
    raw.update(horizon=3, runs=20)
    cfg.write_text(json.dumps(raw))
    y = build_joint(gps_system(3)).sample(1, np.random.default_rng(8))[0].reshape(3, 2)
    obs = tmp_path / "y.csv"
    obs.write_text("y1,y2\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in y))
    duffing = CONFIGS / "duffing_divergence.json"

    commands = {
        "validate": ["validate", "--config", str(cfg)],
        "si-mc": ["si", "--config", str(cfg), "--obs", str(obs), "--oracle", "mc", "--samples", "20000"],
        "si-grid": ["si", "--config", str(cfg), "--obs", str(obs), "--oracle", "grid"],
        "montecarlo": ["montecarlo", "--config", str(cfg), "--workers", "2"],
        "montecarlo-duffing": ["montecarlo", "--config", str(duffing), "--seed", "5"],
    }
    mismatched = []
    for name, args in commands.items():
        outputs = []
        for rep in range(2):
            out = tmp_path / f"{name}-{rep}"
            out.mkdir()
            full = args + (["--out", str(out)] if name != "validate" else [])
            proc = _cli(full, cwd=out)
            assert proc.returncode == 0, proc.stderr.decode()
            outputs.append((proc.stdout, _snapshot(out)))
        if outputs[0] != outputs[1] or (name != "validate" and not outputs[0][1]):
            mismatched.append(name)
    ok = not mismatched
    report("8 CLI reruns are byte-identical", ok,
           f"{len(commands)} commands compared" + (f"; differing: {mismatched}" if mismatched else ""))
    assert ok
