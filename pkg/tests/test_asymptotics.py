import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as sint

from bergman_lab.asymptotics import (
    DBAR_CHI_NORM,
    BoundReport,
    RowError,
    convergence_suite,
    cutoff_profile,
    e_function,
    envelope_functions,
    kernel_ratio_certificate,
    measure_reference_constant,
)
from bergman_lab.random_zeros import EnsembleSpec
from bergman_lab.weights import FubiniStudy, c3_norm, schedule_from_spec

FS = schedule_from_spec("power(fs)")
BUMP = schedule_from_spec("tensor([fs, p], [bump, sqrt(p)])")
MIXED = schedule_from_spec("mixed(h=equilibrium, h0=fs, n=ceil(sqrt(p)))")


# -- E(r) and envelopes ----------------------------------------------------

def test_e_function_values():
    assert e_function(0.0) == 0.0
    assert e_function(1.0) == pytest.approx(0.5 * math.pi * (1 - math.exp(-2)), rel=1e-15)
    assert e_function(1.0) == pytest.approx(1.358212, abs=5e-7)
    assert e_function(50.0) == pytest.approx(math.pi / 2, rel=1e-15)
    with pytest.raises(ValueError):
        e_function(-1.0)


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0, 4.0])
def test_e_function_against_2d_quadrature(r):
    val, _ = sint.dblquad(lambda y, x: math.exp(-2 * (x * x + y * y)), -r, r,
                          lambda x: -math.sqrt(max(r * r - x * x, 0.0)),
                          lambda x: math.sqrt(max(r * r - x * x, 0.0)), epsabs=1e-13, epsrel=1e-13)
    assert e_function(r) == pytest.approx(val, abs=1e-8)


def test_e_function_monotone():
    r = np.linspace(0, 3, 200)
    e = e_function(r)
    assert np.all(np.diff(e) > 0) and e.max() < math.pi / 2
    assert e_function(6.0) <= math.pi / 2


def test_dbar_chi_norm_dense_sampling():
    s = np.linspace(1.0, 2.0, 2_000_001)
    chi = cutoff_profile(s)
    slope = np.abs(np.gradient(chi, s))
    # |dbar chi| = |d chi / d|xi|| / 2
    assert 0.5 * slope.max() == pytest.approx(DBAR_CHI_NORM, rel=1e-6)
    assert cutoff_profile(np.array([0.0, 1.0]))[0] == 1.0
    assert cutoff_profile(np.array([2.0, 3.0])).max() == 0.0


def test_envelopes_tend_to_one():
    prev = 0.0
    for rs in (1e2, 1e4, 1e6):
        a = 1e6 * rs * rs  # r_p = 1e-3: C r^2 and h3 r^3 both small
        env = envelope_functions(rs / math.sqrt(a), a, 1.0, 1.0)
        assert env["active"] and env["lower"] > prev
        prev = env["lower"]
    assert env["K3"] == pytest.approx(1.0, abs=1e-5)
    assert env["lower"] == pytest.approx(1.0, abs=1e-5)


@given(st.floats(2.0, 1e3), st.floats(1e-2, 1e4), st.floats(1.0, 1e3), st.floats(0.0, 50.0))
@settings(max_examples=200, deadline=None)
def test_sandwich_orders(rs, a, h3, C):
    r = rs / math.sqrt(a)
    env = envelope_functions(r, a, h3, C)
    assert env["lower"] <= 1.0 <= env["K3"]
    assert 0.0 <= env["K1"] <= 1.0 <= env["K2"]


def test_envelope_rejects_higher_dimension():
    with pytest.raises(ValueError):
        envelope_functions(1.0, 1.0, 1.0, 1.0, n=2)


def test_k3_linearization():
    # along r_p = eps^{-2/3} a_p^{-1/2}, K3 - 1 = O(eps^{2/3}) as eps -> 0
    # here C r_p^2 = C h3^{-2/3} eps^{2/3} and h3 r_p^3 = eps
    C = 5.0
    for h3 in (1.0, 30.0):
        ratios = []
        for a in np.geomspace(1e4, 1e14, 11):
            eps = h3 ** (1 / 3) / math.sqrt(a)
            if eps > 0.1:
                continue
            r = eps ** (-2 / 3) / math.sqrt(a)
            assert C * r * r == pytest.approx(C * h3 ** (-2 / 3) * eps ** (2 / 3), rel=1e-9)
            K3 = envelope_functions(r, a, h3, C)["K3"]
            ratios.append((K3 - 1) / eps ** (2 / 3))
            first_order = C * h3 ** (-2 / 3) + 2 * C * eps ** (1 / 3)
        c_prime = max(ratios)
        assert c_prime < 3 * C
        assert np.all(np.diff(ratios) <= 1e-12)  # shrinks toward its limit as eps -> 0
        assert ratios[-1] == pytest.approx(first_order, rel=1e-3)


# -- certificate -----------------------------------------------------------

def test_fs_certificate_deviation():
    rep = kernel_ratio_certificate(FS, [30])
    row = rep.rows[0]
    assert row.sup_ratio_deviation == pytest.approx(1 / 30, rel=1e-10)
    assert row.ratio_min == pytest.approx(31 / 30, rel=1e-10)
    assert row.sharp_gap == pytest.approx(1 / 30, rel=1e-9)
    assert row.r_p * math.sqrt(row.a_p) == pytest.approx(row.epsilon_p ** (-2 / 3), rel=1e-12)
    assert row.sandwich_holds


def test_certificate_rejects_p0_and_nonsmooth():
    with pytest.raises(ValueError):
        kernel_ratio_certificate(FS, [0, 4])
    with pytest.raises(ValueError):
        kernel_ratio_certificate(schedule_from_spec("power(equilibrium)"), [4])
    with pytest.raises(ValueError):
        kernel_ratio_certificate(FS, [8, 4])


def test_bump_certificate_trend():
    rep = kernel_ratio_certificate(BUMP, [16, 32, 64])
    assert isinstance(rep, BoundReport)
    assert rep.decreasing and rep.trend_bounded
    assert rep.sandwich_ok and rep.fitted_ok
    for row in rep.rows:
        assert row.epsilon_p > 0
        assert row.lower <= row.ratio_min and row.ratio_max <= row.K3
        assert row.r_p * math.sqrt(row.a_p) == pytest.approx(row.epsilon_p ** (-2 / 3), rel=1e-12)
        assert not row.under_resolved
        assert row.status in ("active", "pre-asymptotic")
    d = rep.to_dict()
    assert d["verdict"] == rep.verdict and len(d["rows"]) == 3


def test_reference_constant_at_least_volume_term():
    w = FubiniStudy() * 10
    h3 = c3_norm(w, a_p=10).h_norm_3
    C, c_vol, c_rem = measure_reference_constant(w, h3)
    assert c_vol == pytest.approx(2 * math.pi + math.pi ** 2, rel=1e-12)
    assert C == max(c_vol, c_rem)


# -- convergence suite -----------------------------------------------------

def test_fs_table_constant_kernel():
    tab = convergence_suite(FS, [8, 16, 32, 64])
    l1 = tab.column("L1_log_kernel")
    ps = np.array([8, 16, 32, 64])
    assert np.allclose(l1, np.log(ps + 1) / ps, rtol=1e-6, atol=0)
    assert np.all(np.diff(l1) < 0)
    assert np.allclose(tab.column("log_dim_ratio"), np.log(ps + 1) / ps, rtol=1e-12)
    assert tab.inverse_square_sum == pytest.approx(sum(1 / p ** 2 for p in ps))
    assert tab.verdict


def test_mixed_fs_gap_trend():
    tab = convergence_suite(MIXED, [8, 64])
    g = tab.column("fs_gap")
    assert g[1] < g[0]


def test_equilibrium_l1_halves():
    tab = convergence_suite(schedule_from_spec("power(equilibrium)"), [8, 64])
    l1 = tab.column("L1_log_kernel")
    assert l1[1] < 0.5 * l1[0]


def test_table_invariants_with_zeros():
    tab = convergence_suite(FS, [8, 16], ensemble=EnsembleSpec(seed=2, samples=40),
                            thresholds={"zero_gap": 0.5})
    for c in tab.COLUMNS:
        v = tab.column(c)
        assert np.all(np.isfinite(v)) and np.all(v >= 0)
    assert [r.p for r in tab.rows] == [8, 16]
    d = tab.to_dict()
    assert d["verdict"] == tab.verdict
    assert d["failures"] == tab.failures()


def test_threshold_failure_reported():
    tab = convergence_suite(FS, [8, 16], thresholds={"L1_log_kernel": 1e-6})
    assert not tab.verdict
    assert any("threshold" in f for f in tab.failures())


def test_row_error_tagged():
    with pytest.raises(RowError) as info:
        convergence_suite(FS, [8, 100])
    assert info.value.p == 100


def test_increasing_p_required():
    with pytest.raises(ValueError):
        convergence_suite(FS, [16, 8])


def test_tensor_disk_mass_finite_p_bias():
    # the expected zero measure is gamma_p / p exactly; its disk mass approaches
    # the limit value from above, and is still 0.027 away at p = 64
    from bergman_lab.bergman import fubini_study_current, gram_matrix
    from bergman_lab.geometry import TestFunction, integrate

    s = schedule_from_spec("tensor([fs, ceil(p / 2)], [equilibrium, p - ceil(p / 2)])")
    disk = TestFunction("radial_indicator", radius=0.8)
    target = 0.5 * 0.64 / 1.64
    gaps = [integrate(disk, fubini_study_current(gram_matrix(s, p, enforce_cap=False)).scaled(1 / p)) - target
            for p in (64, 128, 256, 512)]
    assert all(g > 0 for g in gaps)
    assert all(b < 0.5 * a for a, b in zip(gaps, gaps[1:]))
    assert 0.025 < gaps[0] < 0.03 and gaps[-1] < 1e-3
