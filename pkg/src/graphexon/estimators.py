"""scikit-learn compatible wrappers.

Grid fields are rows of an ``(n_samples, N**2)`` array, so the operators
compose with pipelines and the rest of the sklearn tooling. Couplings passed
to :class:`CouplingClassifier` are a single feature column.
"""
import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DimensionError
from .margulis import MargulisGraph
from .mfg import Coupling, MfgParameters, classify_coupling, closed_loop_rate, solve_riccati, stability_atlas
from .simulation import decompose, evolve_mean_field
from .spectral import KESTEN_RADIUS


def _infer_resolution(n_features, resolution=None):
    N = int(round(math.sqrt(n_features)))
    if N * N != n_features:
        raise DimensionError(f"{n_features} features is not a square grid")
    if resolution is not None and resolution != N:
        raise DimensionError(f"expected {resolution**2} features, got {n_features}")
    return N


class AdjacencyOperator(TransformerMixin, BaseEstimator):
    """Apply ``O_N`` (``power`` times) to each row of X.

    Parameters
    ----------
    resolution : int or None
        Grid side N. Inferred from the number of columns when None.
    power : int
        Number of successive applications.
    """

    def __init__(self, resolution=None, power=1):
        self.resolution = resolution
        self.power = power

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.graph_ = MargulisGraph(_infer_resolution(X.shape[1], self.resolution))
        return self

    def transform(self, X):
        check_is_fitted(self, "graph_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        out = X
        for _ in range(self.power):
            out = out[:, self.graph_.permutations].mean(axis=1)
        return out


class ModalMeanField(TransformerMixin, BaseEstimator):
    """Map initial mean fields (rows of X) to the closed-loop field at ``horizon``."""

    def __init__(self, a=-1.0, b=1.0, q=2.0, r=1.0, gamma=0.5, eta=2.0, c=-1.28, horizon=3.0, resolution=None):
        self.a = a
        self.b = b
        self.q = q
        self.r = r
        self.gamma = gamma
        self.eta = eta
        self.c = c
        self.horizon = horizon
        self.resolution = resolution

    def _params(self):
        return MfgParameters(a=self.a, b=self.b, q=self.q, r=self.r, gamma=self.gamma, eta=self.eta, c=self.c)

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.graph_ = MargulisGraph(_infer_resolution(X.shape[1], self.resolution))
        self.riccati_ = solve_riccati(self._params())
        self.decomposition_ = decompose(self.graph_)
        self.rates_ = closed_loop_rate(self.riccati_, self.c, self.decomposition_.eigenvalues)
        return self

    def transform(self, X):
        check_is_fitted(self, "rates_")
        X = check_array(X)
        md = self.decomposition_
        coef = md.coefficients(X) * np.exp(self.rates_ * self.horizon)
        return md.reconstruct(coef)

    def trajectory(self, m0, t_grid, test_fns=None):
        check_is_fitted(self, "rates_")
        return evolve_mean_field(self.decomposition_, self.riccati_, self.c, m0, t_grid, test_fns=test_fns)


class CouplingClassifier(ClassifierMixin, BaseEstimator):
    """Label coupling strengths as stable, Turing-unstable, mean-unstable, etc.

    ``fit`` ignores X and y beyond validation; the labels follow from the
    model parameters alone.
    """

    def __init__(self, a=-1.0, b=1.0, q=2.0, r=1.0, gamma=0.5, eta=2.0, rho=KESTEN_RADIUS):
        self.a = a
        self.b = b
        self.q = q
        self.r = r
        self.gamma = gamma
        self.eta = eta
        self.rho = rho

    def fit(self, X=None, y=None):
        if X is not None:
            check_array(X)
        self.riccati_ = solve_riccati(MfgParameters(a=self.a, b=self.b, q=self.q, r=self.r, gamma=self.gamma, eta=self.eta))
        self.atlas_ = stability_atlas(self.riccati_, self.rho)
        self.classes_ = np.array([c.value for c in Coupling])
        return self

    def predict(self, X):
        check_is_fitted(self, "atlas_")
        X = check_array(X, ensure_2d=False)
        cs = np.ravel(X) if X.ndim == 1 or X.shape[1] == 1 else None
        if cs is None:
            raise DimensionError("couplings must be a single column")
        return np.array([classify_coupling(self.riccati_, float(c), self.rho, self.atlas_).value for c in cs])

    def decision_function(self, X):
        """Largest closed-loop rate over ``{-rho, rho, 1}``; NaN without a real solution."""
        check_is_fitted(self, "atlas_")
        cs = np.ravel(check_array(X, ensure_2d=False))
        out = np.full(cs.shape, np.nan)
        for i, c in enumerate(cs):
            try:
                out[i] = np.max(closed_loop_rate(self.riccati_, float(c), np.array([-self.rho, self.rho, 1.0])))
            except ArithmeticError:
                pass
        return out
