"""scikit-learn compatible estimators.

All estimators take ``X`` in the array form described by
:data:`openbia.refit.INPUT_COLUMNS`::

    height_cm, weight_kg, resistance_ohm, reactance_ohm, age_years, sex_code

with ``age_years`` and ``sex_code`` allowed to be NaN (missing age;
nonbinary or unspecified sex entry). They can be dropped into a
``Pipeline`` or ``cross_val_score`` like any other regressor.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .equations import EquationSpec, SexScheme, builtin_registry
from .estimator import CodingPolicy, ImpedanceReading, SubjectProfile, estimate_composition
from .exceptions import InputError
from .refit import DEFAULT_COVARIATES, INPUT_COLUMNS, canonical_covariates, design_matrix, ols_qr

__all__ = ["CovariateTransformer", "FFMRegressor", "EquationPredictor", "check_input_array"]

_GENDER_FROM_CODE = {1.0: "male", 0.0: "female"}


def check_input_array(estimator, X, *, reset):
    """Validate ``X`` against the six-column input layout."""
    X = validate_data(estimator, X, reset=reset, dtype=float, ensure_all_finite="allow-nan")
    if X.shape[1] != len(INPUT_COLUMNS):
        raise ValueError(
            f"X must have {len(INPUT_COLUMNS)} columns ({', '.join(INPUT_COLUMNS)}), got {X.shape[1]}"
        )
    if np.isnan(X[:, :4]).any():
        raise ValueError("height, weight, resistance and reactance may not be NaN")
    sex = X[:, 5]
    if not np.all(np.isnan(sex) | (sex == 0) | (sex == 1)):
        raise ValueError("sex_code must be 0, 1 or NaN")
    return X


class CovariateTransformer(TransformerMixin, BaseEstimator):
    """Map raw inputs to regression covariates (``h2_over_r`` etc.)."""

    def __init__(self, covariates=DEFAULT_COVARIATES):
        self.covariates = covariates

    def fit(self, X, y=None):
        check_input_array(self, X, reset=True)
        self.covariates_ = canonical_covariates(self.covariates)
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_input_array(self, X, reset=False)
        return design_matrix(X, self.covariates_)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self)
        return np.asarray(self.covariates_, dtype=object)


class FFMRegressor(RegressorMixin, BaseEstimator):
    """Ordinary least-squares FFM equation.

    Parameters
    ----------
    covariates : sequence of str
        Terms to fit; the intercept is always added. Drop ``"sex_offset"``
        for a sex-free equation.
    equation_id : str
        Id given to the spec returned by :meth:`to_spec`.

    Attributes
    ----------
    coef_ : ndarray
        Coefficients aligned with ``covariates_`` (intercept first).
    std_errors_ : ndarray
    rmse_ : float
        In-sample RMSE in kg.
    """

    def __init__(self, covariates=DEFAULT_COVARIATES, equation_id="refit"):
        self.covariates = covariates
        self.equation_id = equation_id

    def fit(self, X, y):
        X, y = validate_data(
            self, X, y, dtype=float, ensure_all_finite="allow-nan", y_numeric=True
        )
        X = check_input_array(self, X, reset=False)
        self.covariates_ = canonical_covariates(self.covariates)
        A = design_matrix(X, self.covariates_)
        coef, resid, cov = ols_qr(A, y, self.covariates_)
        n, p = A.shape
        rss = float(resid @ resid)
        self.coef_ = coef
        self.intercept_ = float(coef[0])
        self.rmse_ = float(np.sqrt(rss / n))
        self.std_errors_ = np.sqrt(rss / (n - p) * np.diag(cov)) if n > p else np.full(p, np.nan)
        self.n_samples_ = n
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_input_array(self, X, reset=False)
        return design_matrix(X, self.covariates_) @ self.coef_

    def to_spec(self, population="", gold_standard="") -> EquationSpec:
        check_is_fitted(self)
        with_sex = "sex_offset" in self.covariates_
        return EquationSpec(
            id=self.equation_id,
            terms=tuple(zip(self.covariates_, map(float, self.coef_))),
            sex_scheme=SexScheme.offset() if with_sex else SexScheme.none(),
            population=population,
            gold_standard=gold_standard,
        )


class EquationPredictor(RegressorMixin, BaseEstimator):
    """Predict FFM with a fixed published equation under a coding policy.

    ``fit`` only resolves the equation; nothing is learned. Interval
    estimates (nonbinary or unspecified entries under ``as-entered``) are
    reported at their midpoint.
    """

    def __init__(self, equation="kyle2001", policy="as-entered", registry=None):
        self.equation = equation
        self.policy = policy
        self.registry = registry

    def fit(self, X=None, y=None):
        if X is not None:
            check_input_array(self, X, reset=True)
        registry = self.registry if self.registry is not None else builtin_registry()
        self.spec_ = self.equation if isinstance(self.equation, EquationSpec) else registry[self.equation]
        self.policy_ = (
            self.policy if isinstance(self.policy, CodingPolicy) else CodingPolicy.parse(self.policy)
        )
        self.registry_ = registry
        return self

    def estimate(self, X):
        """Full :class:`CompositionEstimate` objects, one per row."""
        check_is_fitted(self)
        X = check_input_array(self, X, reset=not hasattr(self, "n_features_in_"))
        out = []
        for height, weight, res, react, age, sex in X:
            gender = _GENDER_FROM_CODE.get(sex, "nonbinary_or_unspecified")
            try:
                profile = SubjectProfile(
                    height, weight, None if np.isnan(age) else age, gender_entry=gender
                )
                reading = ImpedanceReading(res, react)
            except InputError as exc:
                raise ValueError(str(exc)) from exc
            out.append(estimate_composition(self.spec_, profile, reading, self.policy_, self.registry_))
        return out

    def predict(self, X):
        return np.array([e.point.ffm_kg for e in self.estimate(X)])
