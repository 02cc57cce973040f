"""Convergence statistics and the explicit kernel-ratio bound chain.

The bound chain works in Moebius-normal coordinates around each point
``x``: ``zeta = M_x(z) / sqrt(pi)`` with ``M_x(z) = (z - x)/(1 + conj(x) z)``,
in which the Fubini-Study form equals ``(1 + pi|zeta|^2)^-2 dm``.  The local
weight is the total weight minus the harmonic frame change, and its cubic
Taylor remainder measures the reference constant ``C``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .bergman import bergman_kernel, fubini_study_current, gram_matrix, kernel_at
from .geometry import Chart, GridMeasure, default_family, measure_distance
from .random_zeros import empirical_measure, zeros_from_basis
from .weights import c3_norm, curvature, curvature_ratio

__all__ = [
    "e_function",
    "envelope_functions",
    "DBAR_CHI_NORM",
    "cutoff_profile",
    "measure_reference_constant",
    "ratio_field",
    "BoundRow",
    "BoundReport",
    "kernel_ratio_certificate",
    "ConvergenceRow",
    "ConvergenceTable",
    "RowError",
    "convergence_suite",
    "log_kernel_l1",
]

# The cut-off is chi(xi) = S(2 - |xi|) with S(x) = e^{-1/x} / (e^{-1/x} + e^{-1/(1-x)})
# on (0, 1).  Then |dbar chi| = |S'| / 2, whose maximum S'(1/2) / 2 = 1 is
# attained on |xi| = 3/2 (checked by dense sampling in the test suite).
DBAR_CHI_NORM = 1.0

_INF_PROBE = 1e6


def cutoff_profile(s):
    """Radial cut-off ``chi(|xi| = s)``: 1 on ``s <= 1``, 0 on ``s >= 2``."""
    x = np.clip(2.0 - np.asarray(s, dtype=float), 0.0, 1.0)
    out = np.where(x >= 1.0, 1.0, 0.0)
    mid = (x > 0) & (x < 1)
    xm = x[mid]
    a = np.exp(-1.0 / xm)
    b = np.exp(-1.0 / (1.0 - xm))
    out = out.astype(float)
    out[mid] = a / (a + b)
    return out


def e_function(r):
    """``E(r) = int_{|xi| <= r} exp(-2|xi|^2) dm = (pi/2)(1 - exp(-2 r^2))``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("E(r) needs r >= 0")
    out = -0.5 * math.pi * np.expm1(-2.0 * r * r)
    return float(out) if out.ndim == 0 else out


def envelope_functions(r_p, a_p, h3, C, n=1, dbar_chi=DBAR_CHI_NORM):
    """The envelopes ``K1, K2, K3`` of the sandwich ``K1/K2 <= P omega / c_1 <= K3``.

    Returns
    -------
    dict
        ``K1``, ``K2``, ``K3``, ``lower`` (``K1/K2`` or 0 when inactive) and
        ``active`` (whether the bracket inside ``K1`` is positive).
    """
    if n != 1:
        raise ValueError("only n = 1 is supported")
    if not (r_p > 0 and a_p > 0):
        raise ValueError("r_p and a_p must be positive")
    rs = r_p * math.sqrt(a_p)
    E = e_function(rs)
    cube = h3 * r_p ** 3
    with np.errstate(over="ignore"):
        K3 = (0.5 * math.pi / E) ** n * (1.0 + C * r_p * r_p) * math.exp(min(2.0 * C * cube, 700.0))
        inner = ((0.5 * math.pi) ** (n / 2) * math.sqrt(2.0) * dbar_chi * (1.0 + 4.0 * C * r_p * r_p)
                 / (rs * E ** (n / 2)) * math.exp(min(9.0 * C * cube, 700.0)))
        K2 = ((1.0 + 4.0 * C * r_p * r_p) * math.exp(min(16.0 * C * cube, 700.0))
              * (1.0 + math.sqrt(2.0) * dbar_chi / rs) ** 2)
    active = inner < 1.0
    K1 = (1.0 - inner) ** 2 if active else 0.0
    return {"K1": K1, "K2": K2, "K3": K3, "lower": K1 / K2 if active else 0.0, "active": bool(active),
            "E": E, "r_sqrt_a": rs}


def _mobius_inverse(x, w):
    return (w + x) / (1.0 - np.conj(x) * w)


def _local_weight(weight, x, zeta):
    """Weight in normal coordinates at ``x`` with the frame change removed."""
    g = weight.growth_order
    w = math.sqrt(math.pi) * zeta
    if x is None:  # the point at infinity: z = 1/w
        with np.errstate(divide="ignore"):
            z = np.where(w == 0, _INF_PROBE, 1.0 / np.where(w == 0, 1.0, w))
        vals = weight.variable(z) - g * np.log(np.abs(z))
        vals = np.where(w == 0, weight.variable(np.array([_INF_PROBE])) - g * math.log(_INF_PROBE), vals)
        return vals
    z = _mobius_inverse(x, w)
    return weight.variable(z) - g * np.log(np.abs(1.0 + np.conj(x) * z))


def measure_reference_constant(weight, h3, R=1.0, centers=None, n_probe=24):
    """Measured constant ``C`` for the normal-form estimates.

    ``C`` is the larger of the volume-distortion constant ``2 pi + pi^2 R^2``
    (so that ``(1 + pi r^2)^2 <= 1 + C r^2`` on ``r <= R``) and the sup of
    ``|phi~(zeta)| / (h3 |zeta|^3)``, where ``phi~`` is the local weight
    minus its second-order Taylor polynomial.
    """
    c_vol = 2.0 * math.pi + math.pi ** 2 * R * R
    if centers is None:
        rad = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0]
        angs = [0.0] if weight.is_radial else list(np.linspace(0, 2 * np.pi, 6, endpoint=False))
        centers = [r * np.exp(1j * a) for r in rad for a in (angs if r > 0 else [0.0])] + [None]
    # Taylor coefficients from a small symmetric stencil, remainder on rings up to R
    h = 1e-3
    offs = np.array([0, h, -h, 1j * h, -1j * h, h + 1j * h, -h - 1j * h, h - 1j * h, -h + 1j * h])
    rr = np.linspace(R / n_probe, R, n_probe)
    th = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    probe = (rr[:, None] * np.exp(1j * th)[None, :]).ravel()
    worst = 0.0
    for x in centers:
        f0 = _local_weight(weight, x, offs)
        fx = (f0[1] - f0[2]) / (2 * h)
        fy = (f0[3] - f0[4]) / (2 * h)
        fxx = (f0[1] - 2 * f0[0] + f0[2]) / h ** 2
        fyy = (f0[3] - 2 * f0[0] + f0[4]) / h ** 2
        fxy = (f0[5] + f0[6] - f0[7] - f0[8]) / (4 * h * h)
        X, Y = probe.real, probe.imag
        T2 = f0[0] + fx * X + fy * Y + 0.5 * (fxx * X * X + 2 * fxy * X * Y + fyy * Y * Y)
        rem = np.abs(_local_weight(weight, x, probe) - T2)
        worst = max(worst, float(np.max(rem / (h3 * np.abs(probe) ** 3))))
    return max(c_vol, worst), c_vol, worst


def ratio_field(basis, chart, min_density=1e-10):
    """``P_p omega_FS / c_1(L_p, h_p)`` at grid nodes plus the point at infinity.

    Nodes with curvature density below ``min_density`` (relative to Fubini-Study)
    are excluded.
    """
    w = basis.weight
    if w.is_radial and basis.is_diagonal:
        z = chart.r.astype(complex)
    else:
        z = chart.points().ravel()
    P = kernel_at(basis, z)
    dens = curvature_ratio(w, z)
    z_inf = np.array([_INF_PROBE], dtype=complex)
    P_inf = kernel_at(basis, z_inf)
    d_inf = curvature_ratio(w, z_inf)
    P = np.concatenate([P, P_inf])
    dens = np.concatenate([dens, d_inf])
    ok = dens > min_density
    return P[ok] / dens[ok], int((~ok).sum())


@dataclass(frozen=True)
class BoundRow:
    p: int
    epsilon_p: float
    h_norm_3: float
    a_p: float
    r_p: float
    sup_ratio_deviation: float
    ratio_min: float
    ratio_max: float
    K1: float
    K2: float
    K3: float
    lower: float
    k1_active: bool
    sandwich_holds: bool
    envelope: float
    trend_ratio: float
    sharp_gap: Optional[float]
    refinement_shift: float
    under_resolved: bool
    excluded_nodes: int
    status: str


@dataclass
class BoundReport:
    """Per-p kernel-ratio bound rows plus the two verdict modes."""

    schedule: str
    C: float
    C_volume: float
    C_remainder: float
    C_fit: float
    rows: list = field(default_factory=list)
    n: int = 1
    activation_p: Optional[int] = None

    @property
    def deviations(self):
        return np.array([r.sup_ratio_deviation for r in self.rows])

    @property
    def decreasing(self):
        d = self.deviations
        return bool(np.all(np.diff(d) < 0))

    @property
    def trend_bounded(self):
        """``deviation / eps_p^{2/3}`` never exceeds its first value by more than 10%."""
        t = np.array([r.trend_ratio for r in self.rows])
        return bool(np.all(t <= 1.1 * t[0]))

    @property
    def fitted_ok(self):
        return all(r.sup_ratio_deviation <= r.envelope * (1 + 1e-12) for r in self.rows)

    @property
    def sandwich_ok(self):
        return all(r.sandwich_holds for r in self.rows)

    @property
    def verdict(self):
        return self.decreasing and self.trend_bounded and self.sandwich_ok and self.fitted_ok

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k != "rows"}
        d["rows"] = [asdict(r) for r in self.rows]
        d.update(decreasing=self.decreasing, trend_bounded=self.trend_bounded,
                 fitted_ok=self.fitted_ok, sandwich_ok=self.sandwich_ok, verdict=self.verdict)
        return d


def kernel_ratio_certificate(schedule, p_values, chart=None, check_refinement=True):
    """Evaluate the kernel-ratio bound along ``p_values``.

    ``sup_ratio_deviation`` is the sup of ``|P_p omega / c_1 - 1|`` over grid
    nodes and infinity.  Rows carry the envelopes at ``r_p = eps^{-2/3}
    a_p^{-1/2}`` with the measured ``C``, and the fitted-C envelope
    ``C_fit eps_p^{2/3}`` calibrated on the first row.
    """
    chart = Chart() if chart is None else chart
    p_values = [int(p) for p in p_values]
    if any(p <= 0 for p in p_values):
        raise ValueError("rows need p >= 1 (the bound is only claimed for p > p0)")
    if sorted(set(p_values)) != p_values:
        raise ValueError("p values must be strictly increasing")
    for w, _ in schedule.terms:
        if w.smoothness not in ("smooth",):
            raise ValueError(f"certificate needs smooth weights; {w.spec} is {w.smoothness}")
    fine = chart.refined() if check_refinement else None
    base = None
    if schedule.kind == "power":
        base = schedule.terms[0][0]
    rows = []
    Cs = []
    raw = []
    for p in p_values:
        W = schedule.weight_at(p)
        a = schedule.a(p)
        if not a > 0:
            raise ValueError(f"a_p = {a} is not positive at p={p}")
        rep = c3_norm(W, p=p, a_p=a)
        C, c_vol, c_rem = measure_reference_constant(W, rep.h_norm_3)
        Cs.append((C, c_vol, c_rem))
        basis = gram_matrix(schedule, p, chart)
        ratio, excluded = ratio_field(basis, chart)
        dev = float(np.max(np.abs(ratio - 1.0)))
        shift = 0.0
        if fine is not None:
            rf, _ = ratio_field(gram_matrix(schedule, p, fine), fine)
            dev_f = float(np.max(np.abs(rf - 1.0)))
            shift = abs(dev_f - dev) / max(dev, 1e-300)
        r_p = rep.epsilon_p ** (-2.0 / 3.0) / math.sqrt(a)
        env = envelope_functions(r_p, a, rep.h_norm_3, C)
        holds = bool(env["lower"] <= ratio.min() and ratio.max() <= env["K3"])
        sharp = None
        if base is not None:
            z = chart.r.astype(complex) if basis.is_diagonal and W.is_radial else chart.points().ravel()
            b0 = curvature_ratio(base, z)
            sharp = float(np.max(np.abs(kernel_at(basis, z) / p - b0)))
        raw.append(dict(p=p, epsilon_p=rep.epsilon_p, h_norm_3=rep.h_norm_3, a_p=a, r_p=r_p,
                        sup_ratio_deviation=dev, ratio_min=float(ratio.min()), ratio_max=float(ratio.max()),
                        K1=env["K1"], K2=env["K2"], K3=env["K3"], lower=env["lower"],
                        k1_active=env["active"], sandwich_holds=holds,
                        trend_ratio=dev / rep.epsilon_p ** (2.0 / 3.0), sharp_gap=sharp,
                        refinement_shift=shift, under_resolved=shift >= 0.1, excluded_nodes=excluded))
    C_fit = raw[0]["trend_ratio"]
    activation = None
    for d in raw:
        d["envelope"] = C_fit * d["epsilon_p"] ** (2.0 / 3.0)
        if not d["sandwich_holds"]:
            d["status"] = "violated"
        elif not d["k1_active"]:
            d["status"] = "pre-asymptotic"
        else:
            d["status"] = "active"
            if activation is None:
                activation = d["p"]
        rows.append(BoundRow(**d))
    C, c_vol, c_rem = max(Cs)
    return BoundReport(schedule.describe(), C, c_vol, c_rem, C_fit, rows, 1, activation)


# ---------------------------------------------------------------------------
# convergence statistics
# ---------------------------------------------------------------------------

def log_kernel_l1(kernel):
    """``(1/A_p) int |log P_p| omega_FS``."""
    return float(np.sum(np.abs(np.log(kernel.values)) * kernel.chart.cell_weights())) / kernel.A_p


class RowError(RuntimeError):
    """A constituent computation failed for one table row."""

    def __init__(self, p, cause):
        super().__init__(f"row p={p}: {type(cause).__name__}: {cause}")
        self.p = p
        self.cause = cause


@dataclass(frozen=True)
class ConvergenceRow:
    p: int
    d_p: int
    A_p: float
    L1_log_kernel: float
    fs_gap: float
    zero_gap: Optional[float]
    log_dim_ratio: float
    infinity_fraction: Optional[float] = None


@dataclass
class ConvergenceTable:
    schedule: str
    rows: list
    thresholds: dict = field(default_factory=dict)

    COLUMNS = ("L1_log_kernel", "fs_gap", "zero_gap", "log_dim_ratio")

    @property
    def inverse_square_sum(self):
        """``sum 1/A_p^2`` over the rows."""
        return float(sum(1.0 / r.A_p ** 2 for r in self.rows))

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def failures(self):
        """Column checks: finite, nonnegative, final below first, under thresholds."""
        out = []
        for c in self.COLUMNS:
            v = self.column(c)
            if np.all(np.isnan(v)):
                continue
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                out.append(f"{c}: non-finite or negative entry")
                continue
            if len(v) > 1 and not v[-1] < v[0]:
                out.append(f"{c}: final {v[-1]:.4g} not below first {v[0]:.4g} (p={self.rows[-1].p})")
            lim = self.thresholds.get(c)
            if lim is not None and v[-1] > lim:
                out.append(f"{c}: final {v[-1]:.4g} above threshold {lim:.4g} (p={self.rows[-1].p})")
        return out

    @property
    def verdict(self):
        return not self.failures()

    def to_dict(self):
        return {"schedule": self.schedule, "rows": [asdict(r) for r in self.rows],
                "inverse_square_sum": self.inverse_square_sum, "thresholds": dict(self.thresholds),
                "failures": self.failures(), "verdict": self.verdict}


def convergence_suite(schedule, p_values, ensemble=None, chart=None, family=None, thresholds=None,
                      threads=1):
    """Assemble the convergence table along ``p_values``.

    ``zero_gap`` compares the averaged normalized zero measure with the
    limit ``T = lim c_1(L_p, h_p)/A_p``; it is skipped when ``ensemble`` is None.
    """
    chart = Chart() if chart is None else chart
    family = default_family() if family is None else family
    p_values = [int(p) for p in p_values]
    if sorted(set(p_values)) != p_values:
        raise ValueError("p values must be strictly increasing")
    target = schedule.limit_measure(chart) if ensemble is not None else None
    zero = GridMeasure(chart, np.zeros(chart.shape), 0.0, signed=True)
    rows = []
    for p in p_values:
        try:
            basis = gram_matrix(schedule, p, chart)
            kern = bergman_kernel(basis, chart=chart)
            A = kern.A_p
            gamma = fubini_study_current(basis, chart=chart)
            c1 = curvature(basis.weight, chart, allow_signed=True)
            gap = measure_distance((gamma - c1).scaled(1.0 / A), zero, family)
            zgap = None
            inf_frac = None
            if ensemble is not None:
                samples = zeros_from_basis(basis, ensemble, threads=threads)
                emp = empirical_measure(samples, chart=chart)
                zgap = measure_distance(emp, target, family)
                inf_frac = emp.infinity_mass
            rows.append(ConvergenceRow(p, basis.dim, A, log_kernel_l1(kern), gap, zgap,
                                       math.log(basis.dim) / A, inf_frac))
        except Exception as exc:
            raise RowError(p, exc) from exc
    return ConvergenceTable(schedule.describe(), rows, dict(thresholds or {}))
