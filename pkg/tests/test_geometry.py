import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as sint
from scipy.special import beta

from bergman_lab.geometry import (
    Chart,
    GridMeasure,
    TestFunction,
    ddc_stencil,
    default_family,
    fs_measure,
    fs_volume_density,
    integrate,
    measure_distance,
    point_measure,
)

SMALL = Chart(grid_radial=32, grid_angular=8)


def test_fs_density_at_origin():
    assert fs_volume_density(0) == pytest.approx(1 / math.pi, rel=1e-15)


def test_fs_total_mass_radial_oracle(chart):
    val, _ = sint.quad(lambda r: 2 * r * (1 + r * r) ** -2, 0, np.inf, epsabs=1e-13)
    assert val == pytest.approx(1.0, abs=1e-10)
    assert fs_measure(chart).total == pytest.approx(1.0, abs=1e-12)
    # grid quadrature of the density against Lebesgue measure, per ring
    r = chart.r
    t = chart.t_bounds
    assert np.all(np.diff(t) > 0)
    assert chart.radial_weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(chart.radial_weights > 0) and np.all(r > 0)


@pytest.mark.parametrize("radius", [0.5, 0.8, 1.0, 1.25, 2.0])
def test_disk_masses(chart, radius):
    got = integrate(TestFunction("radial_indicator", radius=radius), fs_measure(chart))
    assert got == pytest.approx(radius ** 2 / (1 + radius ** 2), abs=1e-12)


def test_unit_disk_is_half(chart):
    assert integrate(TestFunction("radial_indicator", radius=1.0), fs_measure(chart)) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("k,j", [(0, 0), (1, 3), (5, 5), (10, 2), (0, 20), (12, 12)])
def test_quadrature_exact_on_beta_moments(chart, k, j):
    t = chart.t
    got = chart.radial_weights @ (t ** k * (1 - t) ** j)
    assert got == pytest.approx(beta(k + 1, j + 1), rel=1e-10)


def test_truncation_audit_doubling_radius():
    # nothing is dropped beyond R: doubling it only moves panel edges
    a, b = Chart(truncation_radius=20.0), Chart(truncation_radius=40.0)
    for k, j in [(3, 40), (20, 20), (40, 3)]:
        ma = a.radial_weights @ (a.t ** k * (1 - a.t) ** j)
        mb = b.radial_weights @ (b.t ** k * (1 - b.t) ** j)
        assert abs(ma - mb) <= 1e-12 * beta(k + 1, j + 1)


def test_chart_validation():
    with pytest.raises(ValueError):
        Chart(truncation_radius=1.0)
    with pytest.raises(ValueError):
        Chart(grid_radial=4)
    with pytest.raises(ValueError):
        Chart(grid_angular=6)


@given(st.floats(1e-3, 1e3), st.floats(0, 2 * math.pi))
@settings(max_examples=60, deadline=None)
def test_locate_finds_containing_cell(r, th):
    ring, sector = SMALL.locate(r * np.exp(1j * th))
    rb = SMALL.r_bounds
    assert rb[ring[0]] <= r * (1 + 1e-12) and r <= rb[ring[0] + 1] * (1 + 1e-12)
    centre = SMALL.theta[sector[0]]
    d = (th - centre + math.pi) % (2 * math.pi) - math.pi
    assert abs(d) <= SMALL.dtheta / 2 + 1e-12


def test_integrate_trivial_cases(chart):
    ones = np.ones(chart.shape)
    assert integrate(ones, fs_measure(chart), at_infinity=1.0) == pytest.approx(1.0, abs=1e-12)
    atom_inf = GridMeasure(chart, np.zeros(chart.shape), 1.0)
    assert integrate(TestFunction("radial_indicator", radius=1.0), atom_inf) == 0.0
    with pytest.raises(ValueError):
        integrate(ones, atom_inf)


def test_distance_examples(chart):
    fs = fs_measure(chart)
    assert measure_distance(fs, fs) == 0.0
    atom0 = point_measure(chart, [0.0])
    disk = (TestFunction("radial_indicator", radius=1.0),)
    assert measure_distance(fs, atom0, disk) == pytest.approx(0.5, abs=1e-12)
    radial = [f for f in default_family() if f.kind == "radial_indicator"]
    assert measure_distance(fs, fs.rotated(17), radial) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        measure_distance(fs, fs.scaled(2.0))


def _random_measure(seed):
    rng = np.random.default_rng(seed)
    m = rng.random(SMALL.shape) ** 3
    inf = rng.random() * 0.1
    tot = m.sum() + inf
    return GridMeasure(SMALL, m / tot, inf / tot)


@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_distance_is_pseudometric(a, b, c):
    x, y, z = (_random_measure(s) for s in (a, b, c))
    assert measure_distance(x, y) == measure_distance(y, x)
    assert measure_distance(x, z) <= measure_distance(x, y) + measure_distance(y, z) + 1e-15
    assert measure_distance(x, x) == 0.0


@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_measure_total_and_normalization(seed):
    mu = _random_measure(seed).scaled(3.5)
    assert mu.total == pytest.approx(mu.cell_masses.sum() + mu.infinity_mass, rel=1e-12)
    assert mu.normalized().total == pytest.approx(1.0, rel=1e-12)


def test_unsigned_measure_rejects_negative_mass():
    m = np.zeros(SMALL.shape)
    m[0, 0] = -1e-3
    with pytest.raises(ValueError):
        GridMeasure(SMALL, m, 0.0)
    m[0, 0] = -1e-12  # within tol_neg
    GridMeasure(SMALL, m, 1.0)


@pytest.mark.parametrize("f", default_family(), ids=lambda f: f.label())
def test_test_functions_bounded(f):
    z = np.concatenate([SMALL.points().ravel(), [0, 1e8, -1e-8j]])
    v = f(z)
    assert np.all(np.isfinite(v))
    if f.kind != "harmonic_moment":
        assert v.min() >= 0.0 and v.max() <= 1.0
    else:
        assert np.abs(v).max() <= 1.0


def test_harmonic_moment_range():
    with pytest.raises(ValueError):
        TestFunction("harmonic_moment", k=5)


def test_stencil_log_modulus_is_atom_at_origin(chart):
    m = ddc_stencil(np.log(chart.r), chart, 1.0)
    assert m.cell_masses[0].sum() == pytest.approx(1.0, abs=1e-12)
    assert abs(m.cell_masses[1:].sum()) < 1e-12
    assert m.infinity_mass == pytest.approx(0.0, abs=1e-12)


def test_stencil_radial_and_2d_agree(chart):
    u = 0.5 * np.log1p(chart.r ** 2)
    a = ddc_stencil(u, chart, 1.0)
    b = ddc_stencil(np.repeat(u[:, None], chart.grid_angular, axis=1), chart, 1.0)
    assert np.max(np.abs(a.cell_masses - b.cell_masses)) < 1e-13


def test_point_measure_bins_atoms(chart):
    pts = np.exp(2j * np.pi * np.arange(8) / 8) * 0.9
    mu = point_measure(chart, pts, 1 / 8)
    assert mu.total == pytest.approx(1.0)
    assert np.count_nonzero(mu.cell_masses) == 8
