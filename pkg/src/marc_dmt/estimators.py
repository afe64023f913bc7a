"""scikit-learn style estimator for diversity (log-log slope) fits."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .channel_mc import InsufficientDataError


class DiversityRegressor(RegressorMixin, BaseEstimator):
    """Power-law fit ``p = 10**(-intercept) * rho**(-slope)`` with ``rho`` from dB.

    ``X`` holds SNR in dB (one column), ``y`` the error or outage
    probabilities.  ``slope_`` is the diversity estimate.
    """

    def __init__(self, min_points=3):
        self.min_points = min_points

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=1)
        if X.shape[1] != 1:
            raise ValueError("X must have a single column of SNR values in dB")
        if len(y) < self.min_points:
            raise InsufficientDataError(
                f"need at least {self.min_points} points, got {len(y)}"
            )
        if np.any(y <= 0):
            raise InsufficientDataError("zero probability in the fit window; raise trials or lower SNR")
        x = X[:, 0] / 10.0
        t = -np.log10(y)
        A = np.column_stack([x, np.ones_like(x)])
        (slope, intercept), *_ = np.linalg.lstsq(A, t, rcond=None)
        self.slope_ = float(slope)
        self.intercept_ = float(intercept)
        self.residual_ = float(np.sqrt(np.mean((A @ [slope, intercept] - t) ** 2)))
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        return 10.0 ** -(self.slope_ * X[:, 0] / 10.0 + self.intercept_)
