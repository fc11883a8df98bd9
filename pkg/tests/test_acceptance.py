"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The summary block at the end of the pytest run lists every criterion.
"""

from __future__ import annotations

import itertools
import time

import numpy as np

from conftest import ACCEPTANCE, random_rotation
from procrustes_leak import experiments as ex
from procrustes_leak.cli import main
from procrustes_leak.gpa import gpa
from procrustes_leak.grad_models import ConvSpec, TrainSpec, conv_loss_grads, init_conv, init_linear, linear_loss_grads
from procrustes_leak.shape_core import LandmarkConfig, procrustes_distance, registered_displacement
from procrustes_leak.simulator import default_config, sensitivity_presets, simulate
from procrustes_leak.split_align import align_clean, align_contaminated, split
from procrustes_leak.stat_models import count_nonzero, isotropy_null_check, null_spectrum, tangent_dimension


def report(num: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[num] = (bool(ok), detail)
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_01_gpa_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    t = 2 * np.pi * np.arange(5) / 5
    pent = np.column_stack([np.cos(t), np.sin(t)])
    pent[0] += [0.3, 0.1]
    copies = np.stack([rng.uniform(0.2, 5) * pent @ random_rotation(rng, 2) + rng.normal(size=2) * 10 for _ in range(25)])
    res = gpa(copies)
    aligned = res.aligned
    worst = max(procrustes_distance(a, b) for a, b in itertools.combinations(aligned, 2))

    def unit(x):
        x = x - x.mean(axis=0)
        return x / np.linalg.norm(x)

    a = unit(np.array([[0.0, 0.0], [1.0, 0.0], [0.2, 0.9]]))
    b = unit(np.array([[0.0, 0.0], [1.3, 0.4], [-0.1, 0.6]]))
    # two-shape OPA in closed form: SVD of a^T b with the sign fix for proper rotations
    s = np.linalg.svd(a.T @ b, compute_uv=False)
    sign = np.sign(np.linalg.det(a.T @ b))
    opa = 2.0 - 2.0 * (s[0] + sign * s[1])
    two = gpa([LandmarkConfig(a), LandmarkConfig(b)]).objective
    elapsed = time.perf_counter() - t0
    ok = res.objective < 1e-12 and worst < 1e-8 and abs(two - opa) < 1e-8 and elapsed < 1.0
    report(1, ok, f"Q={res.objective:.2e} max pairwise d={worst:.2e} |Q2-OPA|={abs(two - opa):.2e} t={elapsed:.2f}s")


def test_criterion_02_leakage_freedom():
    t0 = time.perf_counter()
    x = simulate(default_config(100, 32, seed=0)).coords
    train = x[:70]
    fingerprints = set()
    for s in range(10):
        test = simulate(default_config(30, 32, seed=1000 + s)).coords
        fingerprints.add(align_clean(train, test).train.tobytes())
    idx = split(100, 0.7, 0)
    tr = list(idx.train_ids)
    cont = align_contaminated(x, idx).train
    alone = gpa(x[tr]).aligned_coords
    disp = float(registered_displacement(cont, alone).mean())
    elapsed = time.perf_counter() - t0
    ok = len(fingerprints) == 1 and disp > 0 and elapsed < 10
    report(2, ok, f"distinct clean outputs={len(fingerprints)} contaminated displacement={disp:.3e} t={elapsed:.1f}s")


def test_criterion_03_loo_instability():
    t0 = time.perf_counter()
    recs = ex.run_loo_instability(default_config(200, 32), (10, 200), replicates=100, boot_reps=1000, seed=0)
    small = {r.replicate: r.value for r in recs if r.n == 10 and r.metric == "displacement"}
    large = {r.replicate: r.value for r in recs if r.n == 200 and r.metric == "displacement"}
    frac = np.mean([small[r] > large[r] for r in small])
    elapsed = time.perf_counter() - t0
    ok = frac >= 0.95 and elapsed < 300
    report(3, ok, f"paired n=10 > n=200 in {frac:.0%} (mean {np.mean(list(small.values())):.4f} vs {np.mean(list(large.values())):.4f}) t={elapsed:.0f}s")


def test_criterion_04_delta_rmse():
    t0 = time.perf_counter()
    recs = ex.run_contamination(default_config(20, 4), replicates=200, seed=0, boot_reps=1000)
    mean = ex.select(recs, metric="delta_rmse_mean")[0].value
    lo = ex.select(recs, metric="delta_rmse_ci_lower")[0].value
    hi = ex.select(recs, metric="delta_rmse_ci_upper")[0].value
    elapsed = time.perf_counter() - t0
    overlaps = lo <= 0.057 and hi >= -0.053
    ok = mean < 0 and -0.06 <= mean <= 0.01 and overlaps and elapsed < 600
    report(4, ok, f"mean dRMSE={mean:.4f} CI=[{lo:.4f}, {hi:.4f}] t={elapsed:.0f}s")


def test_criterion_05_boundary(default_grid_2d, default_grid_3d):
    t0 = time.perf_counter()
    fit2 = ex.fit_boundary(default_grid_2d)
    fit3 = ex.fit_boundary(default_grid_3d)
    planted = {(n, p): float(p > n / 3 + 3) for n in ex.DEFAULT_N_VALUES for p in ex.DEFAULT_P_VALUES}
    fitp = ex.fit_boundary(planted, threshold_quantile=0.5)
    elapsed = time.perf_counter() - t0
    ok = (
        abs(fit2.slope - 1 / 3) <= 0.10
        and abs(fit2.intercept - 3) <= 2
        and abs(fitp.slope - 1 / 3) <= 4 / 180
        and abs(fitp.intercept - 3) <= 4
        and 0.18 <= fit3.slope <= 0.30
    )
    report(
        5,
        ok,
        f"2D p={fit2.slope:.3f}n+{fit2.intercept:.2f}; 3D slope={fit3.slope:.3f}; planted p={fitp.slope:.3f}n+{fitp.intercept:.2f} (fit t={elapsed:.1f}s)",
    )


def test_criterion_06_sensitivity():
    t0 = time.perf_counter()
    presets = sensitivity_presets(2, 3, 2)
    _, fits = ex.run_sensitivity(2, presets, replicates=20, seed=0)
    slopes = {k: f.slope for k, f in fits.items()}
    gap = max(slopes.values()) - min(slopes.values())
    elapsed = time.perf_counter() - t0
    ok = len(slopes) == 6 and gap <= 0.15 and elapsed < 7200
    detail = " ".join(f"{k}={v:.3f}" for k, v in sorted(slopes.items()))
    report(6, ok, f"max pairwise slope gap={gap:.3f} ({detail}) t={elapsed:.0f}s")


def test_criterion_07_spatial():
    t0 = time.perf_counter()
    recs = ex.run_spatial(default_config(100, 32), replicates=300, train_spec=TrainSpec(), conv_spec=ConvSpec(), seed=0)
    lin = {r.replicate: r.value for r in ex.select(recs, metric="rmse_linear")}
    conv = {r.replicate: r.value for r in ex.select(recs, metric="rmse_conv")}
    wins = np.mean([conv[r] < lin[r] for r in lin])
    ml, mc = np.mean(list(lin.values())), np.mean(list(conv.values()))
    elapsed = time.perf_counter() - t0
    ok = len(lin) == 300 and mc < ml and wins >= 0.65 and elapsed < 1800
    report(7, ok, f"mean RMSE conv={mc:.4f} linear={ml:.4f} conv wins {wins:.0%} t={elapsed:.0f}s")


def test_criterion_08_pca_null():
    t0 = time.perf_counter()
    q2, q3 = tangent_dimension(60, 2), tangent_dimension(40, 3)
    e2, m2 = isotropy_null_check(60, 2, 100 * q2, seed=0)
    e3, m3 = isotropy_null_check(40, 3, 100 * q3, seed=0)
    counts = {}
    for p, k in [(5, 2), (8, 2), (5, 3)]:
        res = null_spectrum(p, k, 50 * k * p, seed=0)
        counts[(p, k)] = (count_nonzero(res.eigenvalues), tangent_dimension(p, k))
    elapsed = time.perf_counter() - t0
    counts_ok = all(a == b for a, b in counts.values())
    ok = abs(m2 - e2) < 0.03 and abs(m3 - e3) < 0.03 and counts_ok and elapsed < 300
    cstr = " ".join(f"{p},{k}:{a}/{b}" for (p, k), (a, b) in counts.items())
    report(8, ok, f"k=2 V={m2:.3f} vs {e2:.3f}; k=3 V={m3:.3f} vs {e3:.3f}; eigen counts {cstr} t={elapsed:.0f}s")


def test_criterion_09_gradients():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        g = np.random.default_rng(seed)
        X = g.normal(size=(8, 5, 2))
        y = g.normal(size=8)
        cases = [
            (linear_loss_grads, init_linear(10, g), X.reshape(8, -1)),
            (conv_loss_grads, init_conv(5, 2, ConvSpec(), g), X),
        ]
        for fn, params, inp in cases:
            _, grads = fn(params, inp, y)
            for name, value in params.items():
                for i in range(value.size):
                    plus = {k: v.copy() for k, v in params.items()}
                    minus = {k: v.copy() for k, v in params.items()}
                    plus[name].flat[i] += 1e-5
                    minus[name].flat[i] -= 1e-5
                    fd = (fn(plus, inp, y)[0] - fn(minus, inp, y)[0]) / 2e-5
                    an = grads[name].flat[i]
                    worst = max(worst, abs(an - fd) / max(abs(fd), abs(an), 1e-6))
    elapsed = time.perf_counter() - t0
    report(9, worst < 1e-4 and elapsed < 10, f"max relative FD error={worst:.2e} over 20 seeds t={elapsed:.1f}s")


RUNS = {
    "simulate": ["--n", "15", "--p", "6"],
    "loo": ["--sizes", "6,12", "--p", "6", "--replicates", "3", "--boot-reps", "50"],
    "contamination": ["--replicates", "5", "--boot-reps", "50"],
    "grid": ["--n-values", "20,30,40,50,60", "--p-values", "4,8,12,16,20,24", "--replicates", "2"],
    "sensitivity": ["--n-values", "20,30,40,50,60", "--p-values", "4,6,8,10,12,14,16,18,20,22,24,26,28", "--replicates", "1", "--presets", "rho_2,sigma_1"],
    "spatial": ["--n", "30", "--p", "6", "--replicates", "3", "--epochs", "3", "--boot-reps", "50"],
    "pca-null": ["--p-values", "5", "--k-values", "2,3", "--n-multiplier", "20"],
}


def test_criterion_10_determinism(tmp_path):
    mismatched = []
    compared = 0
    for sub, args in RUNS.items():
        first, second = tmp_path / sub / "a", tmp_path / sub / "b"
        assert main([sub, *args, "--seed", "3", "--threads", "2", "--out", str(first)]) == 0
        assert main([sub, "--config", str(first / "manifest.ini"), "--out", str(second)]) == 0
        for f in sorted(first.iterdir()):
            if f.suffix in (".csv", ".svg", ".txt", ".ini"):
                compared += 1
                if f.read_bytes() != (second / f.name).read_bytes():
                    mismatched.append(f"{sub}/{f.name}")
    report(10, not mismatched, f"{compared} output files replayed from manifests, mismatches: {mismatched or 'none'}")
