"""Random sections, their zeros, and the log statistics of the zero currents.

Coefficients are drawn in the orthonormal basis, either uniformly on the unit
sphere or as independent standard complex Gaussians.  Every sample has its
own generator keyed by ``(seed, p, index)``, so a sample does not depend on
how a batch is split between workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma

from .geometry import Chart, _r_of_t, point_measure

__all__ = [
    "EnsembleSpec",
    "ZeroSample",
    "RootFindingError",
    "sample_section",
    "find_zeros",
    "find_zeros_batch",
    "zeros_from_basis",
    "empirical_measure",
    "expected_log_sphere",
    "harmonic_half",
    "y_statistic",
    "DEFLATION_TOL",
    "CLUSTER_TOL",
]

DEFLATION_TOL = 1e-13
CLUSTER_TOL = 1e-7
_CHUNK = 256


class RootFindingError(RuntimeError):
    """Aberth iteration failed; carries the partial roots and the sample key."""

    def __init__(self, message, partial_roots=None, seed=None, index=None):
        super().__init__(message)
        self.partial_roots = partial_roots
        self.seed = seed
        self.index = index


@dataclass(frozen=True)
class EnsembleSpec:
    """Random section law: ``"sphere"`` (uniform on the unit sphere) or ``"gaussian"``."""

    kind: str = "sphere"
    seed: int = 0
    samples: int = 1

    def __post_init__(self):
        if self.kind not in ("sphere", "gaussian"):
            raise ValueError(f"unknown ensemble {self.kind!r}; expected 'sphere' or 'gaussian'")
        if int(self.samples) < 1:
            raise ValueError("samples must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class ZeroSample:
    """Zero divisor of one section of ``O(p)``.

    ``zeros`` holds the distinct finite roots and ``multiplicities`` their
    orders; ``infinity_multiplicity`` is the degree deficit.
    """

    zeros: np.ndarray
    multiplicities: np.ndarray
    infinity_multiplicity: int
    residual: float
    degree: int
    coefficient_vector: np.ndarray = field(default=None, repr=False)
    seed: int = None
    index: int = None

    @property
    def count(self):
        return int(self.multiplicities.sum()) + int(self.infinity_multiplicity)

    def expanded(self):
        """Roots repeated according to multiplicity."""
        return np.repeat(self.zeros, self.multiplicities)


def _stream(seed, p, index):
    return np.random.default_rng([int(seed), int(p), int(index)])


def sample_section(basis, spec, p=None, start=0):
    """Orthonormal-basis coefficients, shape ``(spec.samples, basis.dim)``."""
    p = basis.degree if p is None else p
    d = basis.dim
    out = np.empty((spec.samples, d), dtype=complex)
    for m in range(spec.samples):
        g = _stream(spec.seed, p, start + m).standard_normal(2 * d)
        a = (g[:d] + 1j * g[d:]) / math.sqrt(2.0)
        if spec.kind == "sphere":
            a = a / np.linalg.norm(a)
        out[m] = a
    return out


def _horner(c, z):
    """Value and derivative of ``sum_k c[:, k] z^k`` rowwise."""
    n = c.shape[1] - 1
    val = np.broadcast_to(c[:, n:n + 1], z.shape).astype(complex)
    der = np.zeros_like(val)
    for k in range(n - 1, -1, -1):
        der = der * z + val
        val = val * z + c[:, k:k + 1]
    return val, der


def _abs_horner(c, r):
    n = c.shape[1] - 1
    ac = np.abs(c)
    val = np.broadcast_to(ac[:, n:n + 1], r.shape).astype(float)
    for k in range(n - 1, -1, -1):
        val = val * r + ac[:, k:k + 1]
    return val


def _newton_and_backward(c, z):
    """Newton step ``p/p'`` and relative backward error, using the reversed
    polynomial outside the unit disk."""
    n = c.shape[1] - 1
    inside = np.abs(z) <= 1.0
    with np.errstate(all="ignore"):
        zi = np.where(inside, z, 0.0)
        v, dv = _horner(c, zi)
        w = np.where(inside, 0.0, 1.0 / z)
        cr = c[:, ::-1]
        q, dq = _horner(cr, w)
        step_in = v / dv
        # p'/p = n w - w^2 q'/q
        step_out = 1.0 / (n * w - w * w * dq / q)
        step = np.where(inside, step_in, step_out)
        back_in = np.abs(v) / _abs_horner(c, np.abs(zi))
        back_out = np.abs(q) / _abs_horner(cr, np.abs(w))
        back = np.where(inside, back_in, back_out)
    step = np.where(np.isfinite(step), step, 0.0)
    return step, back


def _aberth(c, max_iter=400, tol=4e-16):
    """Batched Aberth-Ehrlich iteration for rows of ascending coefficients
    with nonzero constant and leading terms.  Converged rows are frozen."""
    M, n1 = c.shape
    n = n1 - 1
    rad = np.exp((np.log(np.abs(c[:, 0])) - np.log(np.abs(c[:, -1]))) / n)
    ang = 2.0 * np.pi * (np.arange(n) + 0.25) / n
    z = rad[:, None] * np.exp(1j * ang)[None, :]
    active = np.ones(M, dtype=bool)
    eye = np.eye(n, dtype=bool)
    it = 0
    for it in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        za = z[idx]
        N, _ = _newton_and_backward(c[idx], za)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / (za[:, :, None] - za[:, None, :])
        inv[:, eye] = 0.0
        inv[~np.isfinite(inv)] = 0.0
        S = inv.sum(axis=2)
        with np.errstate(all="ignore"):
            corr = N / (1.0 - N * S)
        corr = np.where(np.isfinite(corr), corr, N)
        z[idx] = za - corr
        small = np.abs(corr) <= tol * np.maximum(1.0, np.abs(za))
        active[idx[np.all(small, axis=1)]] = False
    return z, active


def _cluster(roots):
    """Group roots closer than ``CLUSTER_TOL`` (relative beyond the unit disk)."""
    n = roots.size
    if n < 2:
        return roots, np.ones(n, dtype=int)
    scale = np.maximum(1.0, np.abs(roots))
    dist = np.abs(roots[:, None] - roots[None, :]) / np.maximum(scale[:, None], scale[None, :])
    np.fill_diagonal(dist, np.inf)
    if not np.any(dist < CLUSTER_TOL):
        return roots, np.ones(n, dtype=int)
    label = -np.ones(n, dtype=int)
    groups = []
    for i in range(n):
        if label[i] >= 0:
            continue
        members = [i]
        label[i] = len(groups)
        stack = [i]
        while stack:
            j = stack.pop()
            for k in np.nonzero((dist[j] < CLUSTER_TOL) & (label < 0))[0]:
                label[k] = label[i]
                members.append(k)
                stack.append(k)
        groups.append(members)
    centers = np.array([roots[g].mean() for g in groups])
    mult = np.array([len(g) for g in groups], dtype=int)
    return centers, mult


def _split(coeffs):
    """Deflation bookkeeping: (infinity multiplicity, origin multiplicity, core slice)."""
    a = np.abs(coeffs)
    scale = a.max()
    if not scale > 0:
        raise ValueError("section is identically zero")
    big = np.nonzero(a > DEFLATION_TOL * scale)[0]
    top = int(big[-1])
    nz = np.nonzero(a[:top + 1] > 0)[0]
    low = int(nz[0])
    return len(coeffs) - 1 - top, low, top


def find_zeros_batch(coeffs, p=None, seeds=None, indices=None, max_iter=400, threads=1,
                     keep_coefficients=None):
    """Zeros of many degree-``p`` sections given ascending monomial coefficients.

    Rows with the same deflated shape are solved together; the result of each
    row does not depend on batching or thread count.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    M, n1 = coeffs.shape
    p = n1 - 1 if p is None else int(p)
    if n1 != p + 1:
        raise ValueError(f"expected {p + 1} coefficients, got {n1}")
    info = [_split(row) for row in coeffs]
    results = [None] * M
    keys = {}
    for m, (inf_mult, low, top) in enumerate(info):
        keys.setdefault((low, top), []).append(m)

    def solve(rows, low, top):
        sub = coeffs[rows][:, low:top + 1]
        if top == low:
            return np.empty((len(rows), 0), dtype=complex), np.zeros(len(rows)), np.zeros(len(rows), bool)
        z, active = _aberth(sub, max_iter=max_iter)
        step, _ = _newton_and_backward(sub, z)
        polished = z - step
        _, b_old = _newton_and_backward(sub, z)
        _, b_new = _newton_and_backward(sub, polished)
        z = np.where(b_new <= b_old, polished, z)
        back = np.minimum(b_new, b_old).max(axis=1)
        return z, back, active

    jobs = []
    for (low, top), rows in keys.items():
        for i in range(0, len(rows), _CHUNK):
            jobs.append((rows[i:i + _CHUNK], low, top))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            outs = list(ex.map(lambda j: solve(*j), jobs))
    else:
        outs = [solve(*j) for j in jobs]

    for (rows, low, top), (z, back, active) in zip(jobs, outs):
        for r, m in enumerate(rows):
            inf_mult = info[m][0]
            seed = None if seeds is None else seeds[m]
            index = None if indices is None else indices[m]
            if active[r] and back[r] > 1e-8:
                raise RootFindingError(
                    f"Aberth iteration did not converge (backward error {back[r]:.2e})",
                    partial_roots=z[r].copy(), seed=seed, index=index)
            roots, mult = _cluster(z[r])
            if low > 0:
                roots = np.concatenate([[0.0 + 0.0j], roots])
                mult = np.concatenate([[low], mult])
            keep = coeffs[m] if keep_coefficients is None else keep_coefficients[m]
            results[m] = ZeroSample(roots, mult.astype(int), int(inf_mult), float(back[r]) if back.size else 0.0,
                                    p, keep, seed, index)
    return results


def find_zeros(coeffs, p=None, max_iter=400):
    """Zeros of one section from ascending monomial coefficients."""
    return find_zeros_batch(np.asarray(coeffs)[None, :], p, max_iter=max_iter)[0]


def zeros_from_basis(basis, spec, threads=1, start=0):
    """Sample ``spec.samples`` sections of ``basis`` and return their zero samples."""
    a = sample_section(basis, spec, start=start)
    mono = basis.monomial_coefficients(a)
    idx = list(range(start, start + spec.samples))
    return find_zeros_batch(mono, basis.degree, seeds=[spec.seed] * spec.samples, indices=idx,
                            threads=threads, keep_coefficients=a)


def empirical_measure(samples, p=None, chart=None):
    """Average normalized zero counting measure ``(1/p)[s = 0]`` on the grid."""
    if not samples:
        raise ValueError("need at least one sample")
    chart = Chart() if chart is None else chart
    pts = []
    masses = []
    inf = 0.0
    M = len(samples)
    for s in samples:
        deg = s.degree if p is None else p
        pts.append(s.zeros)
        masses.append(s.multiplicities / (deg * M))
        inf += s.infinity_multiplicity / (deg * M)
    return point_measure(chart, np.concatenate(pts), np.concatenate(masses), infinity_mass=inf)


def harmonic_half(k):
    """``(1 + 1/2 + ... + 1/(k-1)) / 2`` by direct summation."""
    return 0.5 * math.fsum(1.0 / j for j in range(1, int(k)))


def expected_log_sphere(k, M=100_000, seed=0, chunk=20_000):
    """Monte Carlo ``I(k) = E[-log|z_k|]`` for ``z`` uniform on the unit sphere of ``C^k``.

    Returns
    -------
    estimate, standard_error, exact
        ``exact`` is ``(psi(k) - psi(1)) / 2``, since ``|z_k|^2 ~ Beta(1, k-1)``.
    """
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    exact = 0.5 * float(digamma(k) - digamma(1))
    rng = np.random.default_rng([int(seed), k])
    total = 0.0
    total2 = 0.0
    done = 0
    while done < M:
        m = min(chunk, M - done)
        g = rng.standard_normal((m, 2 * k))
        sq = g[:, :k] ** 2 + g[:, k:] ** 2
        val = -0.5 * np.log(sq[:, -1] / sq.sum(axis=1))
        total += val.sum()
        total2 += np.sum(val * val)
        done += m
    mean = total / M
    var = max(total2 / M - mean * mean, 0.0)
    se = math.sqrt(var / max(M - 1, 1))
    return mean, se, exact


def _unit_profiles(basis, kernel):
    """``u_k(r) = |S_k|_h / sqrt(P)`` on rings for a diagonal radial basis."""
    chart = kernel.chart
    r = chart.r.astype(complex)
    w = basis.weight.variable(r)
    b = np.abs(np.diag(basis.transform_variable))
    logu = np.log(b)[None, :] + np.outer(np.log(chart.r), basis.exponents) - w.real[:, None]
    logu -= 0.5 * np.log(kernel.values[:, :1])
    return np.exp(logu)


def y_statistic(coeffs, basis, kernel, flag_fraction=0.01, fast=True):
    """``Y_p = (1/A_p) int log(|s|_h / sqrt(P_p)) omega_FS`` for each coefficient row.

    Returns
    -------
    values : ndarray
        One value per sample.
    flagged : ndarray of bool
        Samples where more than ``flag_fraction`` of the cells needed the
        cell-averaged replacement of a log singularity.

    For diagonal radial bases the angular sums are done by FFT on each ring
    (``fast=True``); otherwise sections are evaluated node by node.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    chart = kernel.chart
    n_r, n_t = chart.shape
    cw = chart.cell_weights()
    A = kernel.A_p
    out = np.empty(coeffs.shape[0])
    flagged = np.zeros(coeffs.shape[0], dtype=bool)
    radial = fast and basis.is_diagonal and basis.weight.is_radial and n_t > basis.degree
    if radial:
        U = _unit_profiles(basis, kernel)
        e = basis.exponents
    else:
        from .bergman import onb_values
        phi = onb_values(basis, chart.points())
        phi = phi / np.sqrt(kernel.values)[None]
    for m, a in enumerate(coeffs):
        if radial:
            F = np.zeros((n_r, n_t), dtype=complex)
            F[:, e] = a[None, :] * U
            vals = np.fft.ifft(F, axis=1) * n_t
        else:
            vals = np.tensordot(a, phi, axes=(0, 0))
        mod = np.abs(vals)
        bad = ~(mod > 0)
        if bad.any():
            mod = mod.copy()
            mod[bad] = _cell_average(basis, kernel, a, np.nonzero(bad))
            flagged[m] = bad.mean() > flag_fraction
        out[m] = float(np.sum(np.log(mod) * cw)) / A
    return out, flagged


def _cell_average(basis, kernel, a, where):
    """Geometric mean of ``|s|_h / sqrt(P)`` over four interior points of the cells."""
    from .bergman import kernel_at, onb_values
    chart = kernel.chart
    i, j = where
    tb = chart.t_bounds
    acc = np.zeros(i.size)
    for fr, ft in ((0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)):
        r = _r_of_t(tb[i] + fr * (tb[i + 1] - tb[i]))
        th = (j + ft - 0.5) * chart.dtheta
        z = r * np.exp(1j * th)
        v = np.tensordot(a, onb_values(basis, z), axes=(0, 0))
        acc += np.log(np.abs(v) / np.sqrt(kernel_at(basis, z)))
    return np.exp(acc / 4)
