"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test records a PASS/FAIL line shown in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy.special import digamma

from bergman_lab.asymptotics import convergence_suite, kernel_ratio_certificate
from bergman_lab.bergman import bergman_kernel, bfs2_residual, gram_matrix, onb_values
from bergman_lab.cli import parse_config, run
from bergman_lab.geometry import STENCIL_TOL, Chart, TestFunction, fs_measure, integrate, measure_distance
from bergman_lab.random_zeros import (
    EnsembleSpec,
    empirical_measure,
    expected_log_sphere,
    harmonic_half,
    sample_section,
    y_statistic,
    zeros_from_basis,
)
from bergman_lab.weights import BUILTIN_SCHEDULES, schedule_from_spec
from conftest import random_unitary

FS = schedule_from_spec("power(fs)")
EQ = schedule_from_spec("power(equilibrium)")
DISK = TestFunction("radial_indicator", radius=1.0)


def test_criterion_01_fs_constant_kernel(acceptance):
    t0 = time.perf_counter()
    chart = Chart()
    worst = {"quadrature": 0.0, "analytic": 0.0}
    for p in (5, 10, 20, 40):
        for method in worst:
            k = bergman_kernel(gram_matrix(FS, p, chart, method=method), chart=chart)
            err = float(np.max(np.abs(k.values - (p + 1)))) / (p + 1)
            worst[method] = max(worst[method], err, abs(k.at_infinity - (p + 1)) / (p + 1))
    dt = time.perf_counter() - t0
    ok = worst["quadrature"] < 1e-6 and worst["analytic"] < 1e-10 and dt < 30
    assert acceptance(1, "FS constant kernel", ok,
                      f"quadrature {worst['quadrature']:.2e} (<1e-6), Beta {worst['analytic']:.2e} (<1e-10), {dt:.1f}s")


def test_criterion_02_trace_identity(acceptance):
    chart = Chart()
    worst, where = 0.0, None
    for spec in BUILTIN_SCHEDULES:
        s = schedule_from_spec(spec)
        for p in (8, 16, 32):
            k = bergman_kernel(gram_matrix(s, p, chart), chart=chart)
            rel = abs(k.trace - k.d_p) / k.d_p
            if rel >= worst:
                worst, where = rel, f"{spec} p={p}"
    ok = worst < 1e-6
    assert acceptance(2, "trace identity", ok,
                      f"max relative error {worst:.2e} (<1e-6) over {len(BUILTIN_SCHEDULES)} schedules, at {where}")


def test_criterion_03_log_kernel_l1(acceptance):
    t0 = time.perf_counter()
    eq = convergence_suite(EQ, [8, 64]).column("L1_log_kernel")
    ps = np.array([8, 16, 32, 64])
    fs = convergence_suite(FS, list(ps)).column("L1_log_kernel")
    fs_err = float(np.max(np.abs(fs - np.log(ps + 1) / ps)))
    dt = time.perf_counter() - t0
    ok = eq[1] < 0.5 * eq[0] and fs_err < 1e-6 and dt < 120
    assert acceptance(3, "L1 of log kernel", ok,
                      f"equilibrium {eq[0]:.4f} -> {eq[1]:.4f} (ratio {eq[1] / eq[0]:.3f} < 0.5), "
                      f"FS vs log(p+1)/p {fs_err:.1e} (<1e-6), {dt:.1f}s")


def test_criterion_04_curvature_identity_residual(acceptance):
    lim = 5 * STENCIL_TOL
    r_fs = bfs2_residual(gram_matrix(FS, 24))
    w = EQ.weight_at(24)
    r_eq = bfs2_residual(gram_matrix(w, 24))
    r_eq_shift = bfs2_residual(gram_matrix(w.shifted(3.25), 24))
    r_fs_shift = bfs2_residual(gram_matrix(FS.weight_at(24).shifted(-7.5), 24))
    shift = max(abs(r_eq - r_eq_shift), abs(r_fs - r_fs_shift))
    ok = r_fs < lim and r_eq < lim and shift <= 1e-12
    assert acceptance(4, "curvature identity residual", ok,
                      f"FS {r_fs:.2e}, equilibrium p=24 {r_eq:.2e} (<{lim:.0e}), shift change {shift:.1e} (<=1e-12)")


def test_criterion_05_fs_equidistribution(acceptance):
    t0 = time.perf_counter()
    b = gram_matrix(FS, 50)
    samples = zeros_from_basis(b, EnsembleSpec("sphere", seed=0, samples=200))
    mu = empirical_measure(samples)
    dist = measure_distance(mu, fs_measure(mu.chart))
    disk = integrate(DISK, mu)
    dt = time.perf_counter() - t0
    ok = dist < 0.02 and abs(disk - 0.5) <= 0.02 and dt < 180
    assert acceptance(5, "FS zero equidistribution", ok,
                      f"distance {dist:.4f} (<0.02), unit-disk mass {disk:.4f} (0.50+-0.02), {dt:.1f}s")


def test_criterion_06_mixed_limit(acceptance):
    s = schedule_from_spec("tensor([fs, ceil(p / 2)], [equilibrium, p - ceil(p / 2)])")
    tab = convergence_suite(s, [64], ensemble=EnsembleSpec("sphere", seed=0, samples=200), threads=4)
    gap = tab.rows[0].zero_gap
    b = gram_matrix(s, 64)
    mu = empirical_measure(zeros_from_basis(b, EnsembleSpec("sphere", seed=0, samples=200), threads=4))
    mass = integrate(TestFunction("radial_indicator", radius=0.8), mu)
    target = 0.5 * 0.64 / 1.64
    ok = gap < 0.05 and abs(mass - target) <= 0.02
    assert acceptance(6, "mixed tensor limit", ok,
                      f"zero gap {gap:.4f} (<0.05), mass |z|<=0.8 {mass:.4f} ({target:.4f}+-0.02)")


def test_criterion_07_expected_log(acceptance):
    t0 = time.perf_counter()
    zs = {}
    for k in (2, 5, 10, 100):
        est, se, exact = expected_log_sphere(k, M=100_000, seed=k)
        assert exact == pytest.approx(harmonic_half(k), rel=1e-12)
        zs[k] = (est - exact) / se
    ks = np.arange(1, 10_001)
    exact_all = 0.5 * (digamma(ks) - digamma(1))
    env_ok = bool(np.all(exact_all <= 2 * np.log(ks) + 2))
    dt = time.perf_counter() - t0
    ok = all(abs(z) <= 3 for z in zs.values()) and env_ok and dt < 30
    zs_txt = ", ".join(f"k={k}: z={z:+.2f}" for k, z in zs.items())
    assert acceptance(7, "expected log modulus", ok, f"{zs_txt}; envelope k<=1e4 {env_ok}; {dt:.1f}s")


def test_criterion_08_kernel_ratio_certificate(acceptance):
    t0 = time.perf_counter()
    s = schedule_from_spec("tensor([fs, p], [bump, sqrt(p)])")
    rep = kernel_ratio_certificate(s, [16, 32, 64])
    dt = time.perf_counter() - t0
    ok = rep.decreasing and rep.trend_bounded and rep.sandwich_ok and dt < 180
    devs = ", ".join(f"{d:.3f}" for d in rep.deviations)
    statuses = ",".join(r.status for r in rep.rows)
    assert acceptance(8, "kernel ratio certificate", ok,
                      f"deviations {devs} decreasing={rep.decreasing}, trend bounded={rep.trend_bounded}, "
                      f"sandwich={rep.sandwich_ok} ({statuses}), C={rep.C:.2f}, {dt:.1f}s")


def test_criterion_09_y_statistic(acceptance):
    means, ok, parts = [], True, []
    for p in (16, 32, 64):
        b = gram_matrix(FS, p)
        k = bergman_kernel(b)
        a = sample_section(b, EnsembleSpec("sphere", seed=p, samples=500))
        y, _ = y_statistic(a, b, k)
        m = float(y.mean())
        bound = -(2 * math.log(b.dim) + 2) / (2 * k.A_p) * 1.0  # vol = int omega_FS = 1
        good = m <= 0 and m >= 1.1 * bound
        ok &= good
        means.append(abs(m))
        parts.append(f"p={p}: {m:.4f} >= {1.1 * bound:.4f}")
    decreasing = all(b < a for a, b in zip(means, means[1:]))
    ok &= decreasing
    assert acceptance(9, "Y statistic", ok, "; ".join(parts) + f"; |mean| decreasing {decreasing}")


def test_criterion_10_determinism_and_invariance(acceptance, tmp_path):
    cfg = parse_config("[run]\nschedule = power(fs)\np = [16]\nseed = 99\nthreads = 2\n"
                       "[ensemble]\nsamples = 100\n[grid]\ngrid_radial = 128\ngrid_angular = 64\n")
    _, o1 = run("zeros", cfg, out=tmp_path / "a", emit_csv=True)
    _, o2 = run("zeros", cfg, out=tmp_path / "b", emit_csv=True)
    files = sorted(p.name for p in o1.iterdir() if p.name != "manifest.json")
    identical = all((o1 / n).read_bytes() == (o2 / n).read_bytes() for n in files)

    s = schedule_from_spec("tensor([fs, p], [bump(amplitude=0.5, sigma=1, center=0.5), 1])")
    chart = Chart(grid_radial=128, grid_angular=64)
    b = gram_matrix(s, 12, chart)
    vals = onb_values(b, chart.points())
    U = random_unitary(b.dim, np.random.default_rng(10))
    P0 = np.sum(np.abs(vals) ** 2, axis=0)
    P1 = np.sum(np.abs(np.tensordot(U, vals, axes=(1, 0))) ** 2, axis=0)
    unitary = float(np.max(np.abs(P1 - P0) / P0))

    p = 20
    samples = zeros_from_basis(gram_matrix(FS, p), EnsembleSpec("sphere", seed=5, samples=10_000), threads=4)
    conserved = all(int(x.multiplicities.sum()) + x.infinity_multiplicity == p for x in samples)
    ok = identical and unitary < 1e-10 and conserved and len(samples) == 10_000
    assert acceptance(10, "determinism and invariance", ok,
                      f"byte-identical reruns {identical} ({len(files)} files), unitary change {unitary:.1e} (<1e-10), "
                      f"zero count conserved on {len(samples)} samples {conserved}")
