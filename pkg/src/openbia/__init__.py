"""openbia: transparent bioimpedance body-composition estimation.

The public surface is re-exported here; see the submodules for details:

- :mod:`openbia.core` cylinder model and composition identities
- :mod:`openbia.equations` equation specs, registry, transparency reports
- :mod:`openbia.estimator` per-person estimates under sex-coding policies
- :mod:`openbia.sensitivity` coding swing, gradients, error propagation
- :mod:`openbia.refit` least-squares fitting, sex-free refits, cross-validation
- :mod:`openbia.regression` scikit-learn compatible estimators
- :mod:`openbia.validation` agreement metrics and subgroup reports
- :mod:`openbia.store` measurement history and trends
"""

__version__ = "0.1.0"

from .core import (
    CompositionBreakdown,
    CylinderParams,
    HydrationConstant,
    body_composition,
    cylinder_resistance,
    ffm_from_tbw,
    tbw_from_impedance,
)
from .equations import (
    EquationSpec,
    Registry,
    SexScheme,
    builtin_registry,
    describe_transparency,
    parse_spec,
    serialize_spec,
)
from .estimator import (
    AS_ENTERED,
    FORCE_FEMALE,
    FORCE_MALE,
    INTERVAL,
    CodingPolicy,
    CompositionEstimate,
    ImpedanceReading,
    SubjectProfile,
    check_applicability,
    estimate_composition,
    evaluate_ffm,
    recommend_coding,
    sex_free,
)
from .refit import (
    CohortConfig,
    FitDataset,
    cross_validate,
    fit_least_squares,
    ingest_dataset,
    refit_without_sex,
    synthesize_cohort,
)
from .regression import CovariateTransformer, EquationPredictor, FFMRegressor
from .sensitivity import coding_swing, gradient, propagate
from .store import HistoryStore, MeasurementRecord, record_measurement, trend_report
from .validation import agreement_metrics, classify_against_threshold, subgroup_disaggregate
