"""Weights of (singular) Hermitian metrics on O(1) and metric schedules.

A weight ``W`` on the affine chart represents the metric ``|e|_h = e^{-W}`` on
the standard frame; its curvature is ``dd^c W`` with ``dd^c log|z| = delta_0``,
i.e. the density ``Delta W / 2 pi`` against Lebesgue measure.  A weight of
growth ``g`` behaves like ``g log|z|`` at infinity and its curvature has total
mass ``g``.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Chart, GridMeasure, ddc_stencil, fs_volume_density

__all__ = [
    "Weight",
    "FubiniStudy",
    "Equilibrium",
    "LogPole",
    "Cone",
    "Bump",
    "Quadratic",
    "Combination",
    "Rule",
    "MetricSchedule",
    "RegularityReport",
    "NotSubharmonicError",
    "ScheduleError",
    "curvature",
    "curvature_ratio",
    "c3_norm",
    "build_schedule",
    "weight_from_spec",
    "schedule_from_spec",
    "empirical_ratio_min",
    "measured_growth",
    "BUILTIN_SCHEDULES",
]


class NotSubharmonicError(ValueError):
    """Raised when a curvature measure has negative mass beyond tolerance."""


class ScheduleError(ValueError):
    """A schedule violates one of its structural hypotheses."""


# --------------------------------------------------------------------------
# weights
# --------------------------------------------------------------------------

class Weight:
    """Base class.  Subclasses implement ``_variable`` (the weight without its
    additive constant) and set the descriptive attributes below."""

    growth_order = 1.0
    is_radial = True
    smoothness = "smooth"
    constant = 0.0
    spec = "weight"

    # Lelong coefficient of a log pole at the origin
    origin_lelong = 0.0

    def _variable(self, z):
        raise NotImplementedError

    def variable(self, z):
        """Weight values without the additive constant."""
        return self._variable(np.asarray(z, dtype=complex))

    def evaluate(self, z):
        return self.variable(z) + self.constant

    __call__ = evaluate

    def laplacian(self, z):
        """Euclidean Laplacian; five-point finite differences unless overridden."""
        z = np.asarray(z, dtype=complex)
        h = 1e-4 * np.maximum(1.0, np.abs(z))
        f = self.variable
        return (f(z + h) + f(z - h) + f(z + 1j * h) + f(z - 1j * h) - 4.0 * f(z)) / h**2

    def radial_flux(self, r):
        """``r dW/dr`` for radial weights (the flux of dd^c through |z| = r)."""
        if not self.is_radial:
            raise TypeError("radial_flux needs a radial weight")
        r = np.asarray(r, dtype=float)
        h = 1e-6
        up = self.variable(r * math.exp(h))
        dn = self.variable(r * math.exp(-h))
        return (up - dn) / (2 * h)

    @property
    def curvature_lower_bound(self):
        """A lower bound for the density ratio ``c_1(h) / omega_FS``."""
        return empirical_ratio_min(self, Chart(grid_radial=128, grid_angular=64))

    @property
    def infinity_offset(self):
        """``lim (W - growth * log|z|)`` as ``|z| -> inf`` (variable part)."""
        r = 1e8
        return float(self.variable(np.array([r]))[0] - self.growth_order * math.log(r))

    def exact_curvature(self, chart):
        """Curvature from the exact flux ``r W'(r)`` at cell boundaries (radial only)."""
        if not self.is_radial:
            return None
        rb = chart.r_bounds
        flux = np.empty(rb.size)
        flux[0] = 0.0
        flux[1:-1] = self.radial_flux(rb[1:-1])
        ring = np.diff(flux)[:-1]
        cells = np.zeros(chart.shape)
        cells[:-1] = ring[:, None] / chart.grid_angular
        inf = self.growth_order - cells.sum()
        signed = min(cells.min(), inf) < -1e-9 * max(1.0, abs(self.growth_order))
        return GridMeasure(chart, cells, inf, signed=signed)

    # algebra ----------------------------------------------------------------
    def shifted(self, c):
        return Combination([(1.0, self)], constant=self.constant + float(c))

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return self.shifted(other)
        return Combination([(1.0, self), (1.0, other)])

    __radd__ = __add__

    def __mul__(self, c):
        return Combination([(float(c), self)])

    __rmul__ = __mul__

    def __repr__(self):
        return self.spec


class FubiniStudy(Weight):
    """``log(1 + |z|^2) / 2``; curvature is the Fubini-Study form."""

    spec = "fs"

    def _variable(self, z):
        return 0.5 * np.log1p(np.abs(z) ** 2)

    def laplacian(self, z):
        return 2.0 / (1.0 + np.abs(np.asarray(z)) ** 2) ** 2

    def radial_flux(self, r):
        r = np.asarray(r, dtype=float)
        return r * r / (1.0 + r * r)

    curvature_lower_bound = 1.0
    infinity_offset = 0.0


class Equilibrium(Weight):
    """``max(log|z|, 0)``; curvature is the uniform measure on the unit circle."""

    spec = "equilibrium"
    smoothness = "continuous"

    def _variable(self, z):
        return np.maximum(np.log(np.maximum(np.abs(z), 1e-300)), 0.0)

    def laplacian(self, z):
        return np.zeros(np.shape(z))

    def radial_flux(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r > 1.0, 1.0, np.where(r < 1.0, 0.0, 0.5))

    curvature_lower_bound = 0.0
    infinity_offset = 0.0


class LogPole(Weight):
    """``(1 - nu) log(1 + |z|^2) / 2 + nu log|z|``: an atom of mass ``nu`` at 0.

    The Fubini-Study part is scaled by ``1 - nu`` so the weight stays a metric
    on O(1) (growth one).
    """

    smoothness = "log_poles"

    def __init__(self, nu=0.5):
        if not 0.0 < nu < 1.0:
            raise ValueError("log-pole coefficient must lie in (0, 1)")
        self.nu = float(nu)
        self.origin_lelong = self.nu
        self.spec = f"logpole(nu={self.nu:g})"

    def _variable(self, z):
        a = np.abs(z)
        with np.errstate(divide="ignore"):
            return 0.5 * (1.0 - self.nu) * np.log1p(a * a) + self.nu * np.log(a)

    def laplacian(self, z):
        return (1.0 - self.nu) * 2.0 / (1.0 + np.abs(np.asarray(z)) ** 2) ** 2

    def radial_flux(self, r):
        r = np.asarray(r, dtype=float)
        return (1.0 - self.nu) * r * r / (1.0 + r * r) + self.nu

    @property
    def curvature_lower_bound(self):
        return 1.0 - self.nu

    infinity_offset = 0.0


def _smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    out[x >= 1] = 1.0
    mid = (x > 0) & (x < 1)
    a = np.exp(-1.0 / x[mid])
    b = np.exp(-1.0 / (1.0 - x[mid]))
    out[mid] = a / (a + b)
    return out


class Cone(Weight):
    """Fubini-Study backbone plus a localized cone term at the origin.

    ``W = log(1+|z|^2)/2 + amplitude * chi(|z|) * |z|^(2(1-beta))`` with a
    smooth cut-off ``chi`` equal to 1 on ``|z| <= rho`` and 0 beyond ``2 rho``.
    The curvature density blows up like ``|z|^(-2 beta)`` at 0 (integrable).
    """

    smoothness = "cone"

    def __init__(self, beta=0.5, amplitude=0.02, rho=0.5):
        if not 0.0 < beta < 1.0:
            raise ValueError("cone parameter beta must lie in (0, 1)")
        self.beta, self.amplitude, self.rho = float(beta), float(amplitude), float(rho)
        self.spec = f"cone(beta={self.beta:g}, amplitude={self.amplitude:g}, rho={self.rho:g})"

    def _profile(self, r):
        chi = _smoothstep((2.0 * self.rho - r) / self.rho)
        return self.amplitude * chi * r ** (2.0 * (1.0 - self.beta))

    def _variable(self, z):
        a = np.abs(z)
        return 0.5 * np.log1p(a * a) + self._profile(a)

    def radial_flux(self, r):
        r = np.asarray(r, dtype=float)
        h = 1e-6
        d = (self._profile(r * math.exp(h)) - self._profile(r * math.exp(-h))) / (2 * h)
        return r * r / (1.0 + r * r) + d

    def laplacian(self, z):
        # radial: Delta f = (1/r) d/dr (r f')
        r = np.abs(np.asarray(z, dtype=complex))
        h = 1e-4
        rp, rm = r * math.exp(h), r * math.exp(-h)
        dflux = (self.radial_flux(rp) - self.radial_flux(rm)) / (2 * h)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, dflux / np.maximum(r, 1e-300) ** 2, np.inf)

    infinity_offset = 0.0


class Bump(Weight):
    """Smooth Gaussian perturbation ``amplitude * exp(-|z-c|^2 / (2 sigma^2))`` (growth 0)."""

    growth_order = 0.0

    def __init__(self, amplitude=1.0, sigma=1.0, center=0.0):
        self.amplitude, self.sigma = float(amplitude), float(sigma)
        self.center = complex(center)
        self.is_radial = self.center == 0
        c = self.center
        cs = f"{c.real:g}" if c.imag == 0 else f"{c.real:g}{c.imag:+g}j"
        self.spec = f"bump(amplitude={self.amplitude:g}, sigma={self.sigma:g}, center={cs})"

    def _variable(self, z):
        return self.amplitude * np.exp(-np.abs(z - self.center) ** 2 / (2 * self.sigma**2))

    def laplacian(self, z):
        q = np.abs(np.asarray(z) - self.center) ** 2
        s2 = self.sigma**2
        return self.amplitude * np.exp(-q / (2 * s2)) * (q / s2**2 - 2.0 / s2)

    def radial_flux(self, r):
        if not self.is_radial:
            raise TypeError("off-center bump is not radial")
        r = np.asarray(r, dtype=float)
        s2 = self.sigma**2
        return -self.amplitude * r * r / s2 * np.exp(-r * r / (2 * s2))

    @property
    def curvature_lower_bound(self):
        # min of Delta b (1+|z|^2)^2 / 2; attained numerically
        return empirical_ratio_min(self, Chart(grid_radial=256, grid_angular=128))

    infinity_offset = 0.0


class Quadratic(Weight):
    """``lam |z|^2``; a local model only (no growth at infinity as a metric on O(1))."""

    growth_order = 0.0

    def __init__(self, lam=1.0):
        self.lam = float(lam)
        self.spec = f"quadratic(lam={self.lam:g})"

    def _variable(self, z):
        return self.lam * np.abs(z) ** 2

    def laplacian(self, z):
        return np.full(np.shape(z), 4.0 * self.lam)

    def radial_flux(self, r):
        return 2.0 * self.lam * np.asarray(r, dtype=float) ** 2


class Combination(Weight):
    """Nonnegative-or-signed linear combination of weights plus a constant."""

    def __init__(self, terms, constant=0.0):
        flat = []
        for c, w in terms:
            if isinstance(w, Combination):
                flat.extend((c * cc, ww) for cc, ww in w.terms)
                constant += c * w.constant
            else:
                flat.append((float(c), w))
        self.terms = tuple((c, w) for c, w in flat if c != 0.0)
        self.constant = float(constant)
        self.growth_order = float(sum(c * w.growth_order for c, w in self.terms))
        self.is_radial = all(w.is_radial for _, w in self.terms)
        kinds = {w.smoothness for _, w in self.terms}
        for k in ("cone", "log_poles", "continuous"):
            if k in kinds:
                self.smoothness = k
                break
        else:
            self.smoothness = "smooth"
        self.origin_lelong = float(sum(c * w.origin_lelong for c, w in self.terms))
        parts = [f"{c:g}*{w.spec}" for c, w in self.terms]
        if self.constant:
            parts.append(f"{self.constant:g}")
        self.spec = " + ".join(parts) if parts else "0"

    def _variable(self, z):
        out = np.zeros(np.shape(z))
        for c, w in self.terms:
            out = out + c * w.variable(z)
        return out

    def laplacian(self, z):
        out = np.zeros(np.shape(z))
        for c, w in self.terms:
            out = out + c * w.laplacian(z)
        return out

    def radial_flux(self, r):
        out = np.zeros(np.shape(r))
        for c, w in self.terms:
            out = out + c * w.radial_flux(r)
        return out

    @property
    def curvature_lower_bound(self):
        if all(c >= 0 for c, _ in self.terms):
            return float(sum(c * w.curvature_lower_bound for c, w in self.terms))
        return empirical_ratio_min(self, Chart(grid_radial=256, grid_angular=128))

    @property
    def infinity_offset(self):
        return float(sum(c * w.infinity_offset for c, w in self.terms))

    def exact_curvature(self, chart):
        if not self.is_radial:
            return None
        parts = [w.exact_curvature(chart) for _, w in self.terms]
        cells = sum(c * m.cell_masses for (c, _), m in zip(self.terms, parts))
        inf = sum(c * m.infinity_mass for (c, _), m in zip(self.terms, parts))
        return GridMeasure(chart, cells, inf, signed=any(c < 0 for c, _ in self.terms))


def curvature_ratio(weight, z):
    """Pointwise ratio of the curvature density to the Fubini-Study density."""
    z = np.asarray(z, dtype=complex)
    return weight.laplacian(z) / (2.0 * np.pi) / fs_volume_density(z)


def empirical_ratio_min(weight, chart):
    """Grid minimum of ``c_1 / omega_FS`` (the "empirical a" of a weight)."""
    if weight.is_radial:
        z = chart.r.astype(complex)
    else:
        z = chart.points()
    vals = curvature_ratio(weight, z)
    at_inf = curvature_ratio(weight, np.array([1e6]))[0]
    return float(min(np.nanmin(vals), at_inf))


def measured_growth(weight, radius=20.0):
    """Slope of W against log r between ``radius`` and ``2 radius``."""
    pts = np.array([radius, 2 * radius]) * np.exp(1j * np.linspace(0, 2 * np.pi, 8, endpoint=False))[:, None]
    vals = weight.variable(pts).mean(axis=0)
    return float((vals[1] - vals[0]) / math.log(2.0))


# --------------------------------------------------------------------------
# curvature and regularity
# --------------------------------------------------------------------------

def curvature(weight, chart=None, allow_signed=False):
    """Discrete curvature measure ``dd^c W`` of a weight on the grid.

    Uses the conservative five-point stencil on node values; the additive
    constant never enters.  Mass beyond the outermost ring goes to the atom at
    infinity so the total equals ``growth_order``.
    """
    chart = Chart() if chart is None else chart
    if weight.is_radial:
        vals = weight.variable(chart.r.astype(complex))
    else:
        vals = weight.variable(chart.points())
    m = ddc_stencil(vals, chart, weight.growth_order, signed=True)
    if not allow_signed:
        scale = max(1.0, abs(weight.growth_order))
        worst = min(m.cell_masses.min(), m.infinity_mass)
        if worst < -1e-9 * scale:
            raise NotSubharmonicError(f"weight not subharmonic: cell mass {worst:.3e} < 0 ({weight.spec})")
        m = GridMeasure(chart, m.cell_masses, m.infinity_mass)
    return m


@dataclass(frozen=True)
class RegularityReport:
    """C^3 size of a degree-p total weight and the resulting small parameter."""

    h_norm_3: float
    a_p: float
    epsilon_p: float
    p: Optional[int] = None
    raw_sup: float = 0.0
    richardson_gap: float = 0.0
    charts: tuple = ("zero", "infinity")

    def __post_init__(self):
        if self.h_norm_3 < 1.0:
            raise ValueError("h_norm_3 is floored at 1")
        if self.a_p <= 0:
            raise ValueError("a_p must be positive")


def _third_derivatives(f, x, y, h):
    """All four real third partials of ``f(x + iy)`` by central differences."""
    def F(dx, dy):
        return f((x + dx) + 1j * (y + dy))

    f_xxx = (F(2 * h, 0) - 2 * F(h, 0) + 2 * F(-h, 0) - F(-2 * h, 0)) / (2 * h**3)
    f_yyy = (F(0, 2 * h) - 2 * F(0, h) + 2 * F(0, -h) - F(0, -2 * h)) / (2 * h**3)

    def fxx(dy):
        return (F(h, dy) - 2 * F(0, dy) + F(-h, dy)) / h**2

    def fyy(dx):
        return (F(dx, h) - 2 * F(dx, 0) + F(dx, -h)) / h**2

    f_xxy = (fxx(h) - fxx(-h)) / (2 * h)
    f_xyy = (fyy(h) - fyy(-h)) / (2 * h)
    return np.stack([f_xxx, f_xxy, f_xyy, f_yyy])


def _probe_lattice(radius, n=41):
    # offset lattice so that no difference stencil lands on the origin
    g = np.linspace(-radius, radius, n) + 0.37 * (2 * radius / (n - 1))
    x, y = np.meshgrid(g, g)
    keep = x**2 + y**2 <= radius**2
    return x[keep], y[keep]


def c3_norm(weight, p=None, a_p=None, charts=("zero", "infinity"), probe_radius=2.0,
            steps=(0.02, 0.01), rel_tol=0.05):
    """Measure ``||h||_3`` of a total weight by finite differences of order three.

    The sup is taken over an offset lattice in ``|z| <= probe_radius`` and, for
    the chart at infinity, over ``|w| <= probe_radius`` with the transported
    weight ``W(1/w) + growth * log|w|``.  Two step sizes must agree to
    ``rel_tol`` (Richardson check).  ``a_p`` defaults to the empirical grid
    minimum of the curvature ratio.
    """
    if weight.smoothness != "smooth":
        raise NotImplementedError(f"c3_norm needs a smooth weight, got {weight.smoothness}")
    g = weight.growth_order

    def chart_fn(name):
        if name == "zero":
            return weight.variable
        if name == "infinity":
            return lambda w: weight.variable(1.0 / w) + g * np.log(np.abs(w))
        raise ValueError(f"unknown chart {name!r}")

    x, y = _probe_lattice(probe_radius)
    sups = []
    for h in steps:
        s = 0.0
        for name in charts:
            d = _third_derivatives(chart_fn(name), x, y, h)
            s = max(s, float(np.max(np.abs(d))))
        sups.append(s)
    coarse, fine = sups[0], sups[-1]
    extrap = fine + (fine - coarse) / 3.0
    # differences below the floor cannot change the floored norm
    if max(coarse, fine) > 1e-6 and max(coarse, fine) >= 0.5:
        gap = abs(coarse - fine) / max(fine, 1e-300)
        if gap > rel_tol:
            raise FloatingPointError(
                f"finite-difference third derivatives unstable: sup {coarse:.6g} (h={steps[0]}) "
                f"vs {fine:.6g} (h={steps[-1]}), gap {gap:.1%}")
    else:
        gap = 0.0
    h3 = max(1.0, extrap)
    if a_p is None:
        a_p = empirical_ratio_min(weight, Chart(grid_radial=256, grid_angular=128 if not weight.is_radial else 8))
    if a_p <= 0:
        raise ValueError(f"curvature lower bound a_p={a_p} is not positive")
    eps = h3 ** (1.0 / 3.0) * a_p ** -0.5
    return RegularityReport(h3, float(a_p), float(eps), p, extrap, gap, tuple(charts))


# --------------------------------------------------------------------------
# rules and schedules
# --------------------------------------------------------------------------

_RULE_FUNCS = {
    "ceil": math.ceil,
    "floor": math.floor,
    "sqrt": math.sqrt,
    "log": math.log,
    "min": min,
    "max": max,
    "round": round,
    "int": int,
}
_RULE_OPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.FloorDiv, ast.Pow, ast.Mod, ast.USub, ast.UAdd)


class Rule:
    """An integer-sequence rule ``p -> m_p`` written as an arithmetic expression in ``p``."""

    def __init__(self, expr):
        self.expr = str(expr).strip()
        tree = ast.parse(self.expr, mode="eval")
        for node in ast.walk(tree):
            if isinstance(node, (ast.Expression, ast.Load, ast.BinOp, ast.UnaryOp) + _RULE_OPS):
                continue
            if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
                continue
            if isinstance(node, ast.Name) and (node.id == "p" or node.id in _RULE_FUNCS):
                continue
            if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _RULE_FUNCS:
                continue
            raise ScheduleError(f"rule {self.expr!r}: unsupported syntax {type(node).__name__}")
        self._code = compile(tree, "<rule>", "eval")

    def __call__(self, p):
        return eval(self._code, {"__builtins__": {}}, dict(_RULE_FUNCS, p=p))

    def __repr__(self):
        return self.expr

    def __eq__(self, other):
        return isinstance(other, Rule) and other.expr == self.expr

    def __hash__(self):
        return hash(self.expr)


_CHECK_P = (10**3, 10**4, 10**5, 10**6)


@dataclass(frozen=True)
class MetricSchedule:
    """The sequence ``p -> (W_p, a_p, A_p)``.

    ``terms`` lists ``(Weight, Rule)`` pairs with ``W_p = sum rule(p) * W``;
    ``kind`` is ``power``, ``mixed`` or ``tensor``.
    """

    kind: str
    terms: tuple
    positivity_index: int = 0
    empirical_a: bool = False
    hypothesis_ok: bool = True
    note: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def coefficients(self, p):
        return [float(rule(p)) for _, rule in self.terms]

    def weight_at(self, p):
        if p not in self._cache:
            self._cache[p] = Combination([(c, w) for c, (w, _) in zip(self.coefficients(p), self.terms)])
        return self._cache[p]

    def degree(self, p):
        g = self.weight_at(p).growth_order
        d = round(g)
        if abs(g - d) > 1e-9:
            raise ScheduleError(f"degree of L_p is not an integer at p={p}: {g}")
        return int(d)

    def A(self, p):
        """Total curvature mass of ``W_p``."""
        return float(self.weight_at(p).growth_order)

    def a(self, p, chart=None):
        """Curvature lower bound ``c_1(L_p, h_p) >= a_p omega``."""
        if self.empirical_a:
            chart = chart or Chart(grid_radial=256, grid_angular=8 if self.is_radial else 128)
            return empirical_ratio_min(self.weight_at(p), chart)
        w, rule = self.terms[self.positivity_index]
        return float(rule(p)) * float(w.curvature_lower_bound)

    @property
    def is_radial(self):
        return all(w.is_radial for w, _ in self.terms)

    def limit_ratios(self):
        """``lim m_{j,p} / p`` per term, estimated at a large p."""
        big = 10**15
        return [float(rule(big)) / big for _, rule in self.terms]

    def limit_measure(self, chart, exact=True):
        """Target ``T = lim c_1(L_p,h_p) / A_p`` as a grid measure."""
        r = self.limit_ratios()
        mass = sum(rj * w.growth_order for rj, (w, _) in zip(r, self.terms))
        parts = []
        for rj, (w, _) in zip(r, self.terms):
            if rj == 0:
                continue
            m = w.exact_curvature(chart) if exact else None
            if m is None:
                m = curvature(w, chart, allow_signed=True)
            parts.append(m * (rj / mass))
        out = parts[0]
        for m in parts[1:]:
            out = out + m
        return GridMeasure(chart, out.cell_masses, out.infinity_mass, signed=True)

    def describe(self):
        if self.kind == "power":
            return f"power({self.terms[0][0].spec})"
        if self.kind == "mixed":
            (h, _), (h0, n) = self.terms
            return f"mixed(h={h.spec}, h0={h0.spec}, n={n.expr})"
        inner = ", ".join(f"[{w.spec}, {r.expr}]" for w, r in self.terms)
        return f"tensor({inner})"


def _check_nonnegative(rule, p_range, label):
    for p in p_range:
        v = rule(p)
        if v < 0:
            raise ScheduleError(f"{label} is negative at p={p}: {v}")


def build_schedule(kind, *, h=None, h0=None, n=None, factors=None, p_range=range(1, 257),
                   allow_degenerate=False):
    """Validate and assemble a metric schedule.

    power(h):            W_p = p W_h,                  a_p = p eps_h
    mixed(h, h0, n):     W_p = (p - n_p) W_h + n_p W_h0, a_p = n_p eps_h0
    tensor(factors):     W_p = sum m_{j,p} W_j,         a_p = m_{1,p} eps_1

    ``allow_degenerate`` admits a power schedule whose base curvature is only
    nonnegative (e.g. the equilibrium weight); the schedule then carries
    ``hypothesis_ok=False`` and an empirical (possibly zero) ``a_p``.
    """
    if kind == "power":
        if h is None:
            raise ScheduleError("power schedule needs a base weight")
        eps = h.curvature_lower_bound
        ok = eps > 0
        if not ok and not allow_degenerate:
            raise ScheduleError(f"power schedule needs c_1(L,h) >= eps*omega with eps > 0; got {eps:g} for {h.spec}")
        return MetricSchedule("power", ((h, Rule("p")),), hypothesis_ok=ok,
                              note="" if ok else "curvature lower bound is zero: a_p not positive")
    if kind == "mixed":
        if h is None or h0 is None or n is None:
            raise ScheduleError("mixed schedule needs h, h0 and an n_p rule")
        n = n if isinstance(n, Rule) else Rule(n)
        if h.curvature_lower_bound < 0:
            raise ScheduleError(f"mixed schedule needs c_1(L,h) >= 0; {h.spec} has negative curvature")
        if not h0.curvature_lower_bound > 0:
            raise ScheduleError(f"mixed schedule needs c_1(L,h0) >= eps*omega with eps > 0 ({h0.spec})")
        vals = [n(P) for P in _CHECK_P]
        if not (vals[-1] > vals[0] and vals[-1] >= 10):
            raise ScheduleError(f"n_p must tend to infinity (rule {n.expr!r})")
        ratios = [v / P for v, P in zip(vals, _CHECK_P)]
        if not (ratios[-1] <= 0.5 * ratios[0] and ratios[-1] <= 0.1):
            raise ScheduleError(f"n_p/p must tend to 0 (rule {n.expr!r})")
        _check_nonnegative(n, p_range, "n_p")
        _check_nonnegative(Rule(f"p - ({n.expr})"), p_range, "p - n_p")
        return MetricSchedule("mixed", ((h, Rule(f"p - ({n.expr})")), (h0, n)), positivity_index=1)
    if kind == "tensor":
        if not factors:
            raise ScheduleError("tensor schedule needs factors")
        terms = []
        for w, m in factors:
            m = m if isinstance(m, Rule) else Rule(m)
            _check_nonnegative(m, p_range, f"multiplicity {m.expr!r}")
            r = [m(P) / P for P in (10**5, 10**5 + 1, 10**6, 10**6 + 1)]
            if max(r) - min(r) > 0.01:
                raise ScheduleError(f"m_p/p must converge (rule {m.expr!r})")
            if w.growth_order != 0:
                for p in p_range:
                    v = m(p)
                    if abs(v - round(v)) > 1e-12:
                        raise ScheduleError(f"multiplicity {m.expr!r} of a line-bundle factor is not an integer at p={p}")
            terms.append((w, m))
        w1, m1 = terms[0]
        if not w1.curvature_lower_bound > 0:
            raise ScheduleError(f"first tensor factor must have strictly positive curvature ({w1.spec})")
        if not m1(_CHECK_P[-1]) > m1(_CHECK_P[0]):
            raise ScheduleError("m_{1,p} must tend to infinity")
        empirical = any(w.curvature_lower_bound < 0 for w, _ in terms[1:])
        return MetricSchedule("tensor", tuple(terms), empirical_a=empirical,
                              note="empirical a_p" if empirical else "")
    raise ScheduleError(f"unknown schedule kind {kind!r}")


# --------------------------------------------------------------------------
# tagged weight specs
# --------------------------------------------------------------------------

_FAMILIES = {
    "fs": FubiniStudy,
    "equilibrium": Equilibrium,
    "logpole": LogPole,
    "cone": Cone,
    "bump": Bump,
    "quadratic": Quadratic,
}


def weight_from_spec(node):
    """Build a weight from a tagged record: a name or a call like ``logpole(nu=0.5)``."""
    if isinstance(node, str):
        node = ast.parse(node.strip(), mode="eval").body
    if isinstance(node, ast.Name):
        name, kwargs = node.id, {}
    elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        if node.args:
            raise ScheduleError("weight parameters must be given as keywords")
        name = node.func.id
        kwargs = {kw.arg: ast.literal_eval(kw.value) for kw in node.keywords}
    else:
        raise ScheduleError(f"cannot read weight spec {ast.unparse(node)!r}")
    if name not in _FAMILIES:
        import difflib
        near = difflib.get_close_matches(name, list(_FAMILIES), n=1)
        hint = f" (did you mean {near[0]!r}?)" if near else ""
        raise ScheduleError(f"unknown weight family {name!r}{hint}")
    try:
        return _FAMILIES[name](**kwargs)
    except TypeError as exc:
        raise ScheduleError(f"bad parameters for {name}: {exc}") from None


def schedule_from_spec(text, p_range=range(1, 257), allow_degenerate=None):
    """Parse a schedule record.

    Accepted forms::

        power(fs)
        mixed(h=equilibrium, h0=fs, n=ceil(sqrt(p)))
        tensor([fs, ceil(p/2)], [equilibrium, p - ceil(p/2)])
    """
    try:
        node = ast.parse(str(text).strip(), mode="eval").body
    except SyntaxError as exc:
        raise ScheduleError(f"cannot parse schedule {text!r}: {exc.msg}") from None
    if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)):
        raise ScheduleError(f"schedule must look like kind(...), got {text!r}")
    kind = node.func.id
    if kind == "power":
        if len(node.args) != 1 or node.keywords:
            raise ScheduleError("power(...) takes exactly one weight")
        h = weight_from_spec(node.args[0])
        degenerate = (h.curvature_lower_bound <= 0) if allow_degenerate is None else allow_degenerate
        return build_schedule("power", h=h, p_range=p_range, allow_degenerate=degenerate)
    if kind == "mixed":
        kw = {k.arg: k.value for k in node.keywords}
        missing = {"h", "h0", "n"} - set(kw)
        extra = set(kw) - {"h", "h0", "n"}
        if node.args or missing or extra:
            raise ScheduleError("mixed(...) takes keywords h, h0, n")
        return build_schedule("mixed", h=weight_from_spec(kw["h"]), h0=weight_from_spec(kw["h0"]),
                              n=Rule(ast.unparse(kw["n"])), p_range=p_range)
    if kind == "tensor":
        factors = []
        for arg in node.args:
            if not (isinstance(arg, (ast.List, ast.Tuple)) and len(arg.elts) == 2):
                raise ScheduleError("tensor factors are [weight, multiplicity rule] pairs")
            factors.append((weight_from_spec(arg.elts[0]), Rule(ast.unparse(arg.elts[1]))))
        return build_schedule("tensor", factors=factors, p_range=p_range)
    import difflib
    near = difflib.get_close_matches(kind, ["power", "mixed", "tensor"], n=1)
    hint = f" (did you mean {near[0]!r}?)" if near else ""
    raise ScheduleError(f"unknown schedule kind {kind!r}{hint}")


# One schedule per built-in weight family and schedule kind.
BUILTIN_SCHEDULES = (
    "power(fs)",
    "power(equilibrium)",
    "power(logpole(nu=0.5))",
    "power(cone)",
    "mixed(h=equilibrium, h0=fs, n=ceil(sqrt(p)))",
    "tensor([fs, ceil(p / 2)], [equilibrium, p - ceil(p / 2)])",
    "tensor([fs, p], [bump, sqrt(p)])",
)
