"""Estimator-style wrappers around the functional API.

``fit`` builds the orthonormal basis for one degree; ``predict`` evaluates
the Bergman kernel function at points and ``transform`` returns the
orthonormal sections in the metric frame.  Parameters follow the usual
``get_params``/``set_params`` conventions.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_coefficients, check_degree, check_points
from .bergman import bergman_kernel, gram_matrix, kernel_at, onb_values
from .geometry import Chart
from .random_zeros import EnsembleSpec, empirical_measure, find_zeros_batch, zeros_from_basis
from .weights import schedule_from_spec

__all__ = ["BergmanKernel", "RandomZeros"]


def _chart(est):
    return Chart(truncation_radius=est.truncation_radius, grid_radial=est.grid_radial,
                 grid_angular=est.grid_angular)


class BergmanKernel(TransformerMixin, BaseEstimator):
    """Bergman kernel of ``H^0_(2)(P^1, L_p)`` for one schedule and degree.

    Parameters
    ----------
    schedule : str
        Schedule record such as ``"power(fs)"``.
    p : int
        Degree index.
    method : {"auto", "analytic", "radial", "quadrature"}
        Gram assembly path.

    Attributes
    ----------
    basis_ : OrthoBasis
    kernel_ : KernelField
    n_features_out_ : int
        Dimension ``d_p`` of the section space.
    """

    def __init__(self, schedule="power(fs)", p=8, method="auto", truncation_radius=20.0,
                 grid_radial=512, grid_angular=256):
        self.schedule = schedule
        self.p = p
        self.method = method
        self.truncation_radius = truncation_radius
        self.grid_radial = grid_radial
        self.grid_angular = grid_angular

    def fit(self, X=None, y=None):
        p = check_degree(self.p)
        sched = schedule_from_spec(self.schedule)
        chart = _chart(self)
        self.schedule_ = sched
        self.basis_ = gram_matrix(sched, p, chart, method=self.method)
        self.kernel_ = bergman_kernel(self.basis_, chart=chart)
        self.n_features_out_ = self.basis_.dim
        return self

    def predict(self, X):
        """``P_p`` at the given points."""
        check_is_fitted(self, "basis_")
        return kernel_at(self.basis_, check_points(X))

    def transform(self, X):
        """``e^{-W_p} S_j(z)`` for each point, shape ``(n_points, d_p)``."""
        check_is_fitted(self, "basis_")
        return onb_values(self.basis_, check_points(X)).T

    def score(self, X=None, y=None):
        """Negative relative trace error ``-|int P_p omega - d_p| / d_p``."""
        check_is_fitted(self, "kernel_")
        return -abs(self.kernel_.trace - self.kernel_.d_p) / self.kernel_.d_p


class RandomZeros(BaseEstimator):
    """Zeros of random sections drawn from the sphere or Gaussian ensemble.

    ``fit`` samples ``samples`` sections and stores their zeros;
    ``transform`` solves for the zeros of given coefficient rows.
    """

    def __init__(self, schedule="power(fs)", p=8, ensemble="sphere", samples=100, seed=0, threads=1,
                 truncation_radius=20.0, grid_radial=512, grid_angular=256):
        self.schedule = schedule
        self.p = p
        self.ensemble = ensemble
        self.samples = samples
        self.seed = seed
        self.threads = threads
        self.truncation_radius = truncation_radius
        self.grid_radial = grid_radial
        self.grid_angular = grid_angular

    def fit(self, X=None, y=None):
        p = check_degree(self.p)
        chart = _chart(self)
        self.basis_ = gram_matrix(schedule_from_spec(self.schedule), p, chart)
        spec = EnsembleSpec(self.ensemble, self.seed, self.samples)
        self.samples_ = zeros_from_basis(self.basis_, spec, threads=self.threads)
        self.measure_ = empirical_measure(self.samples_, chart=chart)
        return self

    def transform(self, A):
        """Zero samples for rows of orthonormal-basis coefficients."""
        check_is_fitted(self, "basis_")
        A = check_coefficients(A, self.basis_.dim)
        mono = self.basis_.monomial_coefficients(A)
        return find_zeros_batch(mono, self.basis_.degree, threads=self.threads, keep_coefficients=A)

    def fit_transform(self, X=None, y=None):
        return self.fit(X).samples_

    def zeros(self):
        """All sampled finite zeros, repeated by multiplicity."""
        check_is_fitted(self, "samples_")
        return np.concatenate([s.expanded() for s in self.samples_])
