"""scikit-learn flavoured wrappers so the estimators compose with the
wider ecosystem (pipelines, get_params/set_params, clone)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .estimation import ols, tsls
from .within import demean_by_player


def _as_groups(groups, n):
    if groups is None:
        raise ValueError("groups (player codes) must be passed to fit")
    groups = np.asarray(groups)
    if groups.shape != (n,):
        raise ValueError(f"groups must have shape ({n},)")
    _, codes = np.unique(groups, return_inverse=True)
    return codes


class PlayerDemeaner(BaseEstimator, TransformerMixin):
    """Within transformer: subtracts group means column-wise.

    Stateless apart from remembering the groups seen in fit; transform
    demeans with the groups supplied at fit time, so fit and transform
    must see the same rows (the usual panel workflow).
    """

    def fit(self, X, y=None, groups=None):
        X = check_array(X, ensure_2d=True)
        self.groups_ = _as_groups(groups, len(X))
        self.n_groups_ = int(self.groups_.max()) + 1
        return self

    def transform(self, X):
        check_is_fitted(self, "groups_")
        X = check_array(X, ensure_2d=True)
        if len(X) != len(self.groups_):
            raise ValueError("transform rows must match the rows seen in fit")
        return demean_by_player(X, self.groups_)


class WithinOLS(BaseEstimator):
    """OLS with player fixed effects absorbed by demeaning."""

    def __init__(self, vcov_mode: str = "hc1"):
        self.vcov_mode = vcov_mode

    def fit(self, X, y, groups=None):
        X = check_array(X, ensure_2d=True)
        y = np.asarray(y, dtype=float)
        codes = _as_groups(groups, len(X))
        n_absorbed = int(codes.max()) + 1
        x_d = demean_by_player(X, codes)
        y_d = demean_by_player(y, codes)
        self.result_ = ols(
            y_d, x_d, vcov_mode=self.vcov_mode, cluster=codes, n_absorbed=n_absorbed
        )
        self.coef_ = self.result_.beta
        self.se_ = self.result_.se
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, ensure_2d=True)
        return X @ self.coef_


class WithinIV2SLS(BaseEstimator):
    """2SLS with player fixed effects absorbed by demeaning.

    The first ``n_exog`` columns of X are treated as exogenous; the rest
    are endogenous and matched 1:1 against the Z passed to fit.
    """

    def __init__(self, n_exog: int = 0, vcov_mode: str = "hc1"):
        self.n_exog = n_exog
        self.vcov_mode = vcov_mode

    def fit(self, X, y, Z=None, groups=None):
        X = check_array(X, ensure_2d=True)
        y = np.asarray(y, dtype=float)
        if Z is None:
            raise ValueError("Z (instruments) must be passed to fit")
        Z = check_array(Z, ensure_2d=True)
        codes = _as_groups(groups, len(X))
        n_absorbed = int(codes.max()) + 1

        w = X[:, : self.n_exog]
        x_endog = X[:, self.n_exog :]
        x_d = demean_by_player(x_endog, codes)
        w_d = demean_by_player(w, codes) if self.n_exog else None
        z_d = demean_by_player(Z, codes)
        y_d = demean_by_player(y, codes)
        self.result_ = tsls(
            y_d, x_d, w_d, z_d,
            vcov_mode=self.vcov_mode, cluster=codes, n_absorbed=n_absorbed,
        )
        # coefficients reported in X's column order (exog first)
        k = x_endog.shape[1]
        beta = self.result_.beta
        self.coef_ = np.concatenate([beta[k:], beta[:k]])
        self.se_ = self.result_.se
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, ensure_2d=True)
        return X @ self.coef_
