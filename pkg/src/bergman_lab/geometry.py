"""Model space P^1: Fubini-Study volume, polar quadrature grid, grid measures.

The sphere is covered by one affine chart ``z`` plus the point at infinity.
Radial quadrature works in the variable ``t = r^2 / (1 + r^2)`` which maps
``[0, inf)`` onto ``[0, 1)``; in ``(t, theta)`` the Fubini-Study form of total
mass one is the uniform measure ``dt dtheta / 2pi``.  The radial axis is split
into Gauss-Legendre panels whose breakpoints are symmetric under the inversion
``r -> 1/r`` (i.e. ``t -> 1 - t``), so the two hemispheres are resolved alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

__all__ = [
    "Chart",
    "GridMeasure",
    "TestFunction",
    "fs_volume_density",
    "fs_measure",
    "point_measure",
    "integrate",
    "measure_distance",
    "pairing_table",
    "default_family",
    "ddc_stencil",
    "STENCIL_TOL",
]

# Weak-topology discretization error budget of the conservative five-point
# stencil on the default grid (checked against the exact Fubini-Study cells in
# the test-suite).
STENCIL_TOL = 1e-3

DEFAULT_BREAKPOINTS = (0.5, 0.8, 1.0, 1.25, 2.0)


def fs_volume_density(z):
    """Density of the Fubini-Study form (total mass 1) against Lebesgue measure."""
    r2 = np.abs(np.asarray(z)) ** 2
    return 1.0 / (np.pi * (1.0 + r2) ** 2)


def _t_of_r(r):
    r = np.asarray(r, dtype=float)
    return r * r / (1.0 + r * r)


def _r_of_t(t):
    t = np.asarray(t, dtype=float)
    return np.sqrt(t / (1.0 - t))


@dataclass(frozen=True)
class Chart:
    """Polar quadrature grid on the affine chart of P^1.

    Parameters
    ----------
    truncation_radius : float
        Radius ``R_cut`` of the chart region.  The complement ``|z| > R_cut``
        (a cap around infinity) and its mirror ``|z| < 1/R_cut`` get their own
        panels; nothing outside the chart is dropped.
    grid_radial, grid_angular : int
        Node counts.
    breakpoints : sequence of float
        Extra radii at which panel boundaries are placed (mirrored under
        ``r -> 1/r``).  The default family of radial indicators sits on them.
    """

    truncation_radius: float = 20.0
    grid_radial: int = 512
    grid_angular: int = 256
    breakpoints: tuple = DEFAULT_BREAKPOINTS

    r: np.ndarray = field(init=False, repr=False, compare=False)
    t: np.ndarray = field(init=False, repr=False, compare=False)
    s: np.ndarray = field(init=False, repr=False, compare=False)
    radial_weights: np.ndarray = field(init=False, repr=False, compare=False)
    t_bounds: np.ndarray = field(init=False, repr=False, compare=False)
    theta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.truncation_radius > 1:
            raise ValueError("truncation_radius must exceed 1")
        if self.grid_radial < 8 or self.grid_angular < 8:
            raise ValueError("grid node counts must be at least 8")
        if self.grid_radial % 2:
            raise ValueError("grid_radial must be even (the radial grid is inversion symmetric)")
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))

        radii = {self.truncation_radius, 1.0 / self.truncation_radius, 1.0}
        for b in self.breakpoints:
            if b <= 0:
                raise ValueError("breakpoints must be positive")
            radii.update((b, 1.0 / b))
        radii = sorted(x for x in radii if 1.0 / self.truncation_radius <= x <= self.truncation_radius)
        edges = np.concatenate(([0.0], _t_of_r(np.array(radii)), [1.0]))
        # force exact inversion symmetry of the panel edges
        edges = 0.5 * (edges + (1.0 - edges[::-1]))
        lengths = np.diff(edges)
        half = _allocate(lengths[: lengths.size // 2], self.grid_radial // 2)
        counts = np.concatenate((half, half[::-1]))

        nodes, weights = [], []
        for a, b, m in zip(edges[:-1], edges[1:], counts):
            x, w = np.polynomial.legendre.leggauss(int(m))
            nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
            weights.append(0.5 * (b - a) * w)
        t = np.concatenate(nodes)
        w = np.concatenate(weights)
        bounds = np.concatenate(([0.0], np.cumsum(w)))
        bounds[-1] = 1.0
        # panel edges are cell boundaries exactly
        for e in edges[1:-1]:
            bounds[np.argmin(np.abs(bounds - e))] = e

        for name, val in (
            ("t", t),
            ("r", _r_of_t(t)),
            ("s", 0.5 * np.log(t / (1.0 - t))),
            ("radial_weights", w),
            ("t_bounds", bounds),
            ("theta", 2.0 * np.pi * np.arange(self.grid_angular) / self.grid_angular),
        ):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    # -- grid helpers -------------------------------------------------------
    @property
    def shape(self):
        return (self.t.size, self.grid_angular)

    @property
    def dtheta(self):
        return 2.0 * np.pi / self.grid_angular

    @property
    def r_bounds(self):
        with np.errstate(divide="ignore"):
            return _r_of_t(self.t_bounds)

    def points(self):
        """Complex grid nodes, shape ``(n_r, n_theta)``."""
        return self.r[:, None] * np.exp(1j * self.theta[None, :])

    def cell_weights(self):
        """Fubini-Study mass of each cell; sums to one."""
        return np.repeat(self.radial_weights[:, None] / self.grid_angular, self.grid_angular, axis=1)

    def locate(self, z):
        """Return ``(ring, sector)`` indices of the cells containing ``z``."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        t = _t_of_r(np.abs(z))
        ring = np.clip(np.searchsorted(self.t_bounds, t, side="right") - 1, 0, self.t.size - 1)
        ang = np.mod(np.angle(z) + 0.5 * self.dtheta, 2.0 * np.pi)
        sector = np.floor(ang / self.dtheta).astype(int) % self.grid_angular
        return ring, sector

    def refined(self, factor=2):
        return Chart(self.truncation_radius, self.grid_radial * factor,
                     self.grid_angular * factor, self.breakpoints)

    def with_truncation(self, radius):
        return Chart(radius, self.grid_radial, self.grid_angular, self.breakpoints)


def _allocate(lengths, total):
    """Largest-remainder split of ``total`` nodes over panels, at least 4 each."""
    k = len(lengths)
    base = max(4, total // (4 * k))
    if base * k > total:
        raise ValueError(f"grid_radial={total} too small for {k} panels")
    share = lengths / lengths.sum() * (total - base * k)
    counts = base + np.floor(share).astype(int)
    rest = total - counts.sum()
    order = np.argsort(-(share - np.floor(share)))
    counts[order[:rest]] += 1
    return counts


@dataclass(frozen=True)
class GridMeasure:
    """A measure on P^1: masses per polar cell plus an atom at infinity.

    ``signed=True`` admits differences of measures (used for residuals).
    """

    chart: Chart
    cell_masses: np.ndarray
    infinity_mass: float = 0.0
    signed: bool = False
    tol_neg: float = 1e-9

    def __post_init__(self):
        m = np.array(self.cell_masses, dtype=float)
        if m.shape != self.chart.shape:
            raise ValueError(f"cell_masses shape {m.shape} != grid shape {self.chart.shape}")
        if not self.signed:
            scale = max(1.0, abs(m.sum() + self.infinity_mass))
            if m.min(initial=0.0) < -self.tol_neg * scale or self.infinity_mass < -self.tol_neg * scale:
                raise ValueError("negative mass in an unsigned GridMeasure")
        m.setflags(write=False)
        object.__setattr__(self, "cell_masses", m)
        object.__setattr__(self, "infinity_mass", float(self.infinity_mass))

    @property
    def total(self):
        return float(self.cell_masses.sum() + self.infinity_mass)

    def scaled(self, c):
        return GridMeasure(self.chart, c * self.cell_masses, c * self.infinity_mass,
                           signed=self.signed or c < 0)

    def normalized(self):
        """Rescale to total one, clamping tiny negative quadrature noise."""
        m = np.clip(self.cell_masses, 0.0, None)
        inf = max(self.infinity_mass, 0.0)
        tot = m.sum() + inf
        return GridMeasure(self.chart, m / tot, inf / tot)

    def __add__(self, other):
        _same_chart(self, other)
        return GridMeasure(self.chart, self.cell_masses + other.cell_masses,
                           self.infinity_mass + other.infinity_mass,
                           signed=self.signed or other.signed)

    def __sub__(self, other):
        _same_chart(self, other)
        return GridMeasure(self.chart, self.cell_masses - other.cell_masses,
                           self.infinity_mass - other.infinity_mass, signed=True)

    def __mul__(self, c):
        return self.scaled(float(c))

    __rmul__ = __mul__

    def rotated(self, sectors):
        """Rotate by ``sectors`` angular cells (exact grid rotation)."""
        return GridMeasure(self.chart, np.roll(self.cell_masses, sectors, axis=1),
                           self.infinity_mass, signed=self.signed)

    def radial_profile(self):
        """Mass per ring."""
        return self.cell_masses.sum(axis=1)


def _same_chart(a, b):
    if a.chart != b.chart:
        raise ValueError("measures live on different charts")


def fs_measure(chart):
    """Exact Fubini-Study cell masses (the tributary cells of the quadrature)."""
    return GridMeasure(chart, chart.cell_weights(), 0.0)


def point_measure(chart, points, masses=None, infinity_mass=0.0):
    """Bin point masses into cells; atoms at the origin are spread over ring 0."""
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    masses = np.ones(pts.size) if masses is None else np.broadcast_to(np.asarray(masses, float), pts.shape)
    cells = np.zeros(chart.shape)
    at_origin = pts == 0
    if at_origin.any():
        cells[0, :] += masses[at_origin].sum() / chart.grid_angular
    ring, sector = chart.locate(pts[~at_origin])
    np.add.at(cells, (ring, sector), masses[~at_origin])
    return GridMeasure(chart, cells, infinity_mass)


@dataclass(frozen=True)
class TestFunction:
    """Bounded test function on P^1 with an explicit value at infinity.

    kinds: ``radial_indicator`` (param ``radius``), ``smooth_bump``
    (``center``, ``radius``), ``harmonic_moment`` (``k`` in 1..4, ``part``
    're' or 'im'); the moment is ``z^k / (1 + |z|^2)^k`` which vanishes at
    infinity and at the origin.
    """

    __test__ = False  # not a pytest class

    kind: str
    radius: float = 1.0
    center: complex = 0.0
    k: int = 1
    part: str = "re"

    def __post_init__(self):
        if self.kind not in ("radial_indicator", "smooth_bump", "harmonic_moment"):
            raise ValueError(f"unknown test function kind {self.kind!r}")
        if self.kind == "harmonic_moment" and not 1 <= self.k <= 4:
            raise ValueError("harmonic moments are defined for k <= 4")

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if self.kind == "radial_indicator":
            return (np.abs(z) <= self.radius).astype(float)
        if self.kind == "smooth_bump":
            q = np.abs(z - self.center) ** 2 / self.radius ** 2
            out = np.zeros(q.shape)
            inside = q < 1
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - q[inside]))
            return out
        v = z ** self.k / (1.0 + np.abs(z) ** 2) ** self.k
        return v.real if self.part == "re" else v.imag

    @property
    def at_infinity(self):
        return 0.0

    def label(self):
        if self.kind == "radial_indicator":
            return f"disk(r={self.radius:g})"
        if self.kind == "smooth_bump":
            return f"bump(c={complex(self.center):g},r={self.radius:g})"
        return f"moment(k={self.k},{self.part})"


def default_family():
    """Radial indicators, four bumps and harmonic moments k <= 4."""
    fam = [TestFunction("radial_indicator", radius=r) for r in DEFAULT_BREAKPOINTS]
    fam += [
        TestFunction("smooth_bump", center=0.5, radius=0.5),
        TestFunction("smooth_bump", center=1j, radius=0.6),
        TestFunction("smooth_bump", center=-1.2 - 0.3j, radius=0.8),
        TestFunction("smooth_bump", center=2 + 2j, radius=1.5),
    ]
    fam += [TestFunction("harmonic_moment", k=k, part=p) for k in range(1, 5) for p in ("re", "im")]
    return tuple(fam)


GridFunction = Union[TestFunction, Callable, np.ndarray]


def integrate(f, mu, at_infinity=None):
    """Pair a function with a grid measure: sum of f(cell node) * mass + f(inf) * atom.

    ``f`` may be a :class:`TestFunction`, a callable of complex points, or an
    array of node values.  For arrays and plain callables the value at
    infinity must be passed explicitly; it is required whenever the measure
    carries mass there.
    """
    chart = mu.chart
    if isinstance(f, np.ndarray):
        vals = np.broadcast_to(f, chart.shape)
    else:
        vals = f(chart.points())
        if at_infinity is None:
            at_infinity = getattr(f, "at_infinity", None)
    total = float(np.sum(vals * mu.cell_masses))
    if mu.infinity_mass != 0.0:
        if at_infinity is None:
            raise ValueError("test function undefined at infinity but the measure has mass there")
        total += float(at_infinity) * mu.infinity_mass
    return total


def _pairings(mu, family):
    chart = mu.chart
    pts = chart.points()
    out = np.empty(len(family))
    for i, f in enumerate(family):
        out[i] = np.sum(f(pts) * mu.cell_masses) + f.at_infinity * mu.infinity_mass
    return out


def pairing_table(mu, family=None):
    family = default_family() if family is None else tuple(family)
    return dict(zip((f.label() for f in family), _pairings(mu, family)))


def measure_distance(mu, nu, family=None):
    """Max over the family of |<f, mu> - <f, nu>| for measures of equal mass."""
    family = default_family() if family is None else tuple(family)
    _same_chart(mu, nu)
    a, b = mu.total, nu.total
    if abs(a - b) > 1e-9 * max(1.0, abs(a), abs(b)):
        raise ValueError(f"mass mismatch: {a!r} vs {b!r}")
    diff = nu - mu
    return float(np.max(np.abs(_pairings(diff, family))))


def ddc_stencil(values, chart, total_mass, signed=False):
    """Cell-aggregated dd^c of node values via the conservative five-point stencil.

    Works in log-polar coordinates ``(s, theta)`` where the Laplacian is
    conformally flat, so the mass of a cell is the net gradient flux through
    its faces divided by 2 pi.  The flux through ``r = 0`` is zero (an atom at
    the origin shows up in ring 0); the outermost ring and everything beyond is
    lumped into the atom at infinity so that the total equals ``total_mass``.

    ``values`` has shape ``(n_r, n_theta)`` or ``(n_r,)`` for radial data.
    """
    u = np.asarray(values, dtype=float)
    s = chart.s
    n_r, n_t = chart.shape
    ds = np.diff(s)
    dth = chart.dtheta
    if u.ndim == 1:
        flux = np.empty(n_r + 1)
        flux[0] = 0.0
        flux[1:-1] = np.diff(u) / ds
        flux[-1] = np.nan
        ring = (flux[1:n_r] - flux[0:n_r - 1]) / n_t
        cells = np.zeros(chart.shape)
        cells[: n_r - 1] = ring[:, None]
    else:
        fr = np.zeros((n_r + 1, n_t))
        fr[1:-1] = np.diff(u, axis=0) / ds[:, None] * dth
        width = np.empty(n_r)
        width[1:-1] = 0.5 * (s[2:] - s[:-2])
        width[0] = ds[0]
        width[-1] = ds[-1]
        ft = (np.roll(u, -1, axis=1) - u) / dth * width[:, None]
        cells = (fr[1:] - fr[:-1] + ft - np.roll(ft, 1, axis=1)) / (2.0 * np.pi)
        cells[-1] = 0.0
    if not np.all(np.isfinite(cells)):
        raise FloatingPointError("non-finite stencil flux (potential has -inf nodes?)")
    inf_mass = total_mass - cells.sum()
    return GridMeasure(chart, cells, inf_mass, signed=signed)
