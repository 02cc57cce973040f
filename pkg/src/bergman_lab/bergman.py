"""L^2 section spaces, Bergman kernel functions and Fubini-Study currents.

Sections of O(d) are polynomials of degree at most d.  With the weight
``W_p`` and the Fubini-Study volume the Gram matrix of the monomials is

    G_jk = int z^j conj(z)^k exp(-2 W_p) omega_FS,

and an orthonormal basis is ``S = B z`` with ``B`` the inverse Cholesky
factor of the diagonally scaled Gram matrix.  The additive constant of the
weight is factored out analytically, so kernel values and the Fubini-Study
potential do not depend on it at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.special import betaln

from .geometry import Chart, GridMeasure, ddc_stencil, default_family, measure_distance
from .weights import Combination, FubiniStudy, LogPole, MetricSchedule, Weight, curvature

__all__ = [
    "OrthoBasis",
    "KernelField",
    "ConditioningError",
    "gram_matrix",
    "bergman_kernel",
    "kernel_at",
    "onb_values",
    "fubini_study_current",
    "bfs2_residual",
    "extremal_section",
    "admissible_exponents",
    "MAX_DEGREE_RADIAL",
    "MAX_DEGREE_GENERAL",
    "MAX_CONDITION",
]

MAX_DEGREE_RADIAL = 64
MAX_DEGREE_GENERAL = 48
MAX_CONDITION = 1e12


class ConditioningError(RuntimeError):
    """The scaled Gram matrix is too ill-conditioned for double precision."""

    def __init__(self, message, condition, max_safe_dim):
        super().__init__(message)
        self.condition = condition
        self.max_safe_dim = max_safe_dim


@dataclass(frozen=True)
class OrthoBasis:
    """Orthonormal basis of the weighted section space at one degree.

    ``transform`` (``B``) maps monomials to orthonormal sections,
    ``S_i = sum_k B[i, k] z**exponents[k]``, so that ``B @ gram @ B^H = I``.
    """

    degree: int
    exponents: np.ndarray
    gram: np.ndarray
    transform: np.ndarray
    norms: np.ndarray
    condition_estimate: float
    weight: Weight
    method: str
    factorization: str = "cholesky"
    excluded: tuple = ()
    transform_variable: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self):
        return int(self.exponents.size)

    @property
    def is_diagonal(self):
        B = self.transform_variable
        return bool(np.all(B == np.diag(np.diag(B))))

    def monomial_coefficients(self, a):
        """Full length ``degree + 1`` monomial coefficients of ``sum_i a_i S_i``.

        ``a`` may be a vector or an ``(M, dim)`` batch.
        """
        a = np.asarray(a, dtype=complex)
        c = a @ self.transform
        out = np.zeros(a.shape[:-1] + (self.degree + 1,), dtype=complex)
        out[..., self.exponents] = c
        return out


def admissible_exponents(weight, degree):
    """Monomials ``z^k`` with finite weighted L^2 norm, and the excluded ones.

    A log pole of Lelong coefficient ``lam`` at the origin makes
    ``int r^(2k - 2 lam) r dr`` diverge iff ``k <= lam - 1``.
    """
    lam = float(weight.origin_lelong)
    k_min = max(0, math.floor(lam - 1.0 + 1e-9) + 1)
    k_max = degree
    keep = np.arange(k_min, k_max + 1)
    excluded = tuple(range(0, k_min))
    return keep, excluded


def _analytic_moments(weight, exps):
    """Closed-form radial moments ``int r^(2k) e^(-2W) omega_FS`` for weights
    built from Fubini-Study and origin log-pole terms (Beta integrals in t).

    Returns ``None`` when the weight is not of that form.
    """
    terms = weight.terms if isinstance(weight, Combination) else ((1.0, weight),)
    c_fs = 0.0
    lam = 0.0
    for c, w in terms:
        if type(w) is FubiniStudy:
            c_fs += c
        elif type(w) is LogPole:
            c_fs += c * (1.0 - w.nu)
            lam += c * w.nu
        else:
            return None
    a = exps - lam + 1.0
    b = c_fs - exps + lam + 1.0
    if np.any(a <= 0) or np.any(b <= 0):
        return None
    return np.exp(betaln(a, b))


def _radial_moments(weight, exps, chart):
    r = chart.r
    wv = weight.variable(r.astype(complex))
    logs = np.log(r)
    expo = 2.0 * (np.outer(logs, exps) - wv[:, None])
    return chart.radial_weights @ np.exp(expo)


def _full_gram(weight, exps, chart, block=32):
    n_r, n_t = chart.shape
    theta = chart.theta
    G = np.zeros((exps.size, exps.size), dtype=complex)
    phase = np.exp(1j * np.outer(theta, exps))  # (n_t, d)
    for i0 in range(0, n_r, block):
        r = chart.r[i0:i0 + block]
        z = r[:, None] * np.exp(1j * theta[None, :])
        wv = weight.variable(z)  # (b, n_t)
        logmod = np.log(r)[:, None, None] * exps[None, None, :] - wv[:, :, None]
        V = np.exp(logmod) * phase[None, :, :]
        V = V.reshape(-1, exps.size)
        wt = np.repeat(chart.radial_weights[i0:i0 + block] / n_t, n_t)
        G += V.T @ (wt[:, None] * V.conj())
    return 0.5 * (G + G.conj().T)


def gram_matrix(schedule, p, chart=None, method="auto", max_condition=MAX_CONDITION, enforce_cap=True):
    """Gram matrix and orthonormal basis of ``H^0_(2)(P^1, L_p)``.

    method: ``"analytic"`` (Beta integrals, Fubini-Study/log-pole weights),
    ``"radial"`` (diagonal 1-D quadrature, radial weights), ``"quadrature"``
    (full 2-D grid quadrature) or ``"auto"``.
    """
    chart = Chart() if chart is None else chart
    if isinstance(schedule, MetricSchedule):
        weight = schedule.weight_at(p)
        degree = schedule.degree(p)
    else:
        weight = schedule
        degree = int(round(weight.growth_order))
    if enforce_cap:
        cap = MAX_DEGREE_RADIAL if weight.is_radial else MAX_DEGREE_GENERAL
        if degree > cap:
            raise ValueError(f"degree {degree} above the double-precision cap {cap} for this weight")
    exps, excluded = admissible_exponents(weight, degree)
    if exps.size == 0:
        raise ValueError("no admissible monomials")

    moments = None
    if method in ("auto", "analytic"):
        moments = _analytic_moments(weight, exps.astype(float))
        if moments is None and method == "analytic":
            raise ValueError(f"no closed-form moments for {weight.spec}")
        if moments is not None:
            method = "analytic"
    if moments is None and method in ("auto", "radial"):
        if not weight.is_radial:
            if method == "radial":
                raise ValueError("radial path needs a radial weight")
        else:
            moments = _radial_moments(weight, exps, chart)
            method = "radial"
    if moments is not None:
        G_var = np.diag(moments.astype(complex))
    else:
        method = "quadrature"
        G_var = _full_gram(weight, exps, chart)

    diag = G_var.diagonal().real
    bad = ~np.isfinite(diag) | (diag <= 0)
    if bad.any():
        # divergent or overflow-scale norms: drop those monomials
        excluded = tuple(sorted(set(excluded) | set(exps[bad].tolist())))
        keep = ~bad
        exps = exps[keep]
        G_var = G_var[np.ix_(keep, keep)]
        diag = diag[keep]

    D = 1.0 / np.sqrt(diag)
    Gs = D[:, None] * G_var * D[None, :]
    if method == "quadrature":
        cond = float(np.linalg.cond(Gs))
    else:
        cond = 1.0
    if not cond < max_condition:
        safe = 0
        for k in range(1, exps.size + 1):
            if np.linalg.cond(Gs[:k, :k]) < max_condition:
                safe = k
            else:
                break
        raise ConditioningError(
            f"Gram condition {cond:.3e} exceeds {max_condition:.0e}; largest safe dimension {safe}",
            cond, safe)

    factorization = "cholesky"
    if method == "quadrature":
        try:
            L = sla.cholesky(Gs, lower=True)
            Binv = sla.solve_triangular(L, np.eye(exps.size), lower=True)
        except np.linalg.LinAlgError:
            lam, U = np.linalg.eigh(Gs)
            Binv = (U / np.sqrt(lam)).conj().T
            factorization = "eigh"
        B_var = Binv * D[None, :]
    else:
        B_var = np.diag(D).astype(complex)

    c = float(weight.constant)
    gram = math.exp(-2.0 * c) * G_var
    B = math.exp(c) * B_var
    for arr in (gram, B, B_var, exps):
        arr.setflags(write=False)
    return OrthoBasis(degree, exps, gram, B, gram.diagonal().real.copy(), cond, weight, method,
                      factorization, excluded, B_var)


def _xlogr(e, logr):
    """``e * log|z|`` with the convention ``0 * log 0 = 0``."""
    with np.errstate(invalid="ignore"):
        out = e * logr[None]
    return np.where(e == 0, 0.0, out)


def onb_values(basis, z):
    """Orthonormal sections in the metric frame, ``e^{-W} s_i(z)``; shape ``(d,) + z.shape``."""
    z = np.asarray(z, dtype=complex)
    wv = basis.weight.variable(z)
    with np.errstate(divide="ignore"):
        logr = np.log(np.abs(z))
    ang = np.angle(z)
    e = basis.exponents.reshape((-1,) + (1,) * z.ndim)
    V = np.exp(_xlogr(e, logr) - wv[None] + 1j * e * ang[None])
    return np.tensordot(basis.transform_variable, V, axes=(1, 0))


def _origin_pole_limit(basis):
    """``P_p(0)`` for a weight with a log pole ``lam log|z|`` at the origin.

    Only monomials with ``k = lam`` survive the limit; any ``k < lam`` sends
    the kernel to infinity.
    """
    lam = float(basis.weight.origin_lelong)
    e = basis.exponents
    if np.any(e < lam - 1e-9):
        return np.inf
    hit = np.abs(e - lam) <= 1e-9
    if not hit.any():
        return 0.0
    tiny = 1e-150
    w_reg = float(basis.weight.variable(np.array([tiny], dtype=complex))[0]) - lam * math.log(tiny)
    cols = basis.transform_variable[:, hit]
    return float(np.sum(np.abs(cols) ** 2) * math.exp(-2.0 * w_reg))


def kernel_at(basis, z):
    """Bergman kernel function ``P_p`` at arbitrary points.

    At a log pole of the weight (the origin) the value is the
    surviving-monomial limit.
    """
    z = np.asarray(z, dtype=complex)
    if basis.weight.origin_lelong > 0 and np.any(z == 0):
        out = np.empty(z.shape)
        at0 = z == 0
        out[~at0] = kernel_at(basis, z[~at0])
        out[at0] = _origin_pole_limit(basis)
        return out
    if basis.is_diagonal:
        wv = basis.weight.variable(z)
        with np.errstate(divide="ignore"):
            logr = np.log(np.abs(z))
        b2 = np.abs(np.diag(basis.transform_variable)) ** 2
        e = basis.exponents.reshape((-1,) + (1,) * z.ndim)
        terms = np.exp(2.0 * (_xlogr(e, logr) - wv[None]))
        return np.tensordot(b2, terms, axes=(0, 0))
    return np.sum(np.abs(onb_values(basis, z)) ** 2, axis=0)


def kernel_at_infinity(basis):
    """Limit of ``P_p`` at infinity through the top monomial."""
    w = basis.weight
    top = np.nonzero(basis.exponents == basis.degree)[0]
    if top.size == 0 or abs(w.growth_order - basis.degree) > 1e-9:
        return 0.0
    col = basis.transform_variable[:, top[0]]
    return float(np.sum(np.abs(col) ** 2) * math.exp(-2.0 * w.infinity_offset))


@dataclass(frozen=True)
class KernelField:
    """Values of ``P_p`` on the grid nodes and at infinity."""

    p: int
    values: np.ndarray
    at_infinity: float
    A_p: float
    d_p: int
    chart: Chart
    pole_nodes: int = 0

    @property
    def trace(self):
        """``int P_p omega_FS`` by the grid quadrature."""
        return float(np.sum(self.values * self.chart.cell_weights()))

    def trace_check(self, rtol=1e-6):
        return abs(self.trace - self.d_p) <= rtol * self.d_p


def bergman_kernel(basis, schedule=None, p=None, chart=None):
    """Evaluate ``P_p = sum |S_j|^2_{h_p}`` on the grid."""
    chart = Chart() if chart is None else chart
    w = basis.weight
    if basis.is_diagonal and w.is_radial:
        vals = np.broadcast_to(kernel_at(basis, chart.r.astype(complex))[:, None], chart.shape).copy()
    else:
        vals = kernel_at(basis, chart.points())
    # grid nodes never sit on the origin; count nodes where the weight is -inf
    poles = ~np.isfinite(w.variable(chart.points()))
    vals.setflags(write=False)
    p = basis.degree if p is None else p
    A = float(w.growth_order)
    return KernelField(p, vals, kernel_at_infinity(basis), A, basis.dim, chart, int(poles.sum()))


def extremal_section(basis, x):
    """Orthonormal-basis coefficients of the unit section maximizing ``|S(x)|_h``."""
    phi = onb_values(basis, np.asarray([x], dtype=complex))[:, 0]
    return phi.conj() / np.linalg.norm(phi)


def _fs_potential(basis, chart):
    """``log sum_j |s_j|^2 / 2`` on the grid (weight-independent frame potential)."""
    d = basis.degree
    B = basis.transform_variable
    e = basis.exponents
    if basis.is_diagonal and basis.weight.is_radial:
        r = chart.r
        logscale = 0.5 * d * np.log1p(r * r)
        b2 = np.abs(np.diag(B)) ** 2
        terms = np.exp(2.0 * (np.outer(np.log(r), e) - logscale[:, None]))
        return 0.5 * np.log(terms @ b2) + logscale
    z = chart.points()
    r = np.abs(z)
    logscale = 0.5 * d * np.log1p(r * r)
    V = np.exp(e[:, None, None] * np.log(r)[None] - logscale[None] + 1j * e[:, None, None] * np.angle(z)[None])
    S = np.tensordot(B, V, axes=(1, 0))
    return 0.5 * np.log(np.sum(np.abs(S) ** 2, axis=0)) + logscale


def fubini_study_current(basis, schedule=None, p=None, chart=None):
    """``gamma_p = dd^c log(sum |s_j|^2) / 2`` as a cell-aggregated grid measure."""
    chart = Chart() if chart is None else chart
    u = _fs_potential(basis, chart)
    if not np.all(np.isfinite(u)):
        raise FloatingPointError(f"base-locus cells: {int(np.sum(~np.isfinite(u)))} nodes with all sections zero")
    m = ddc_stencil(u, chart, float(basis.weight.growth_order), signed=True)
    scale = max(1.0, basis.weight.growth_order)
    if min(m.cell_masses.min(), m.infinity_mass) < -1e-9 * scale:
        raise FloatingPointError("negative Fubini-Study mass beyond stencil noise")
    return GridMeasure(chart, m.cell_masses, m.infinity_mass)


def bfs2_residual(basis, schedule=None, p=None, chart=None, family=None, kernel=None):
    """Max pairing gap between ``gamma_p - c_1(L_p,h_p)`` and ``dd^c log P_p / 2``.

    Both sides are assembled independently on the grid: the left from the
    frame potential and the weight, the right from the kernel node values.
    """
    chart = Chart() if chart is None else chart
    family = default_family() if family is None else family
    gamma = fubini_study_current(basis, chart=chart)
    c1 = curvature(basis.weight, chart, allow_signed=True)
    kf = bergman_kernel(basis, chart=chart) if kernel is None else kernel
    if np.any(kf.values <= 0):
        raise ValueError("kernel not strictly positive on the grid")
    logp = np.log(kf.values)
    if basis.weight.is_radial and basis.is_diagonal:
        logp = logp[:, 0]
    rhs = ddc_stencil(0.5 * logp, chart, 0.0, signed=True)
    lhs = gamma - c1
    return measure_distance(lhs, rhs, family)
