"""Least-squares fitting of FFM equations to reference data.

Includes the sex-free refit, round-robin k-fold cross-validation, CSV
ingestion and a seeded synthetic cohort generator used as a test oracle.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .equations import COVARIATES, EquationSpec, SexScheme
from .estimator import ImpedanceReading, SubjectProfile, sex_code_for
from .exceptions import BIAError, InputError, RowError, SchemaError, SingularityError, UnknownCovariateError

logger = logging.getLogger(__name__)

__all__ = [
    "INPUT_COLUMNS",
    "CSV_COLUMNS",
    "DEFAULT_COVARIATES",
    "FitRow",
    "FitDataset",
    "FitDiagnostics",
    "FittedEquation",
    "CVResult",
    "CohortConfig",
    "ingest_dataset",
    "dataset_to_csv",
    "synthesize_cohort",
    "canonical_covariates",
    "design_matrix",
    "ols_qr",
    "fit_least_squares",
    "refit_without_sex",
    "cross_validate",
]

# Column order of the numeric array form used by the estimator classes.
INPUT_COLUMNS = ("height_cm", "weight_kg", "resistance_ohm", "reactance_ohm", "age_years", "sex_code")
CSV_COLUMNS = (
    "height_cm",
    "weight_kg",
    "age_years",
    "athlete",
    "sex",
    "resistance_ohm",
    "reactance_ohm",
    "ref_ffm_kg",
)
GROUP_PREFIX = "group_"
DEFAULT_COVARIATES = ("h2_over_r", "weight", "reactance", "sex_offset")

_SEX_CODES = {"m": "male", "f": "female", "x": "nonbinary_or_unspecified", "": "nonbinary_or_unspecified"}
_SEX_LETTERS = {"male": "m", "female": "f", "nonbinary_or_unspecified": "x"}


@dataclass(frozen=True)
class FitRow:
    profile: SubjectProfile
    reading: ImpedanceReading
    ref_ffm_kg: float
    groups: tuple = ()  # ((column, value), ...); value "" when missing

    def __post_init__(self):
        ref = float(self.ref_ffm_kg)
        if not (math.isfinite(ref) and 0 < ref <= self.profile.weight):
            raise InputError(
                f"ref_ffm_kg must be in (0, weight={self.profile.weight:g}], got {ref!r}"
            )
        object.__setattr__(self, "ref_ffm_kg", ref)
        object.__setattr__(self, "groups", tuple((str(k), str(v)) for k, v in self.groups))

    @property
    def group_map(self):
        return dict(self.groups)


@dataclass(frozen=True)
class FitDataset:
    """Reference rows plus the free-text provenance that travels with them."""

    rows: tuple
    description: str = ""
    sex_provenance: str = ""
    reference_method: str = ""

    def __post_init__(self):
        rows = tuple(self.rows)
        if not rows:
            raise InputError("a dataset needs at least one row")
        object.__setattr__(self, "rows", rows)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def group_columns(self):
        seen = dict.fromkeys(col for row in self.rows for col, _ in row.groups)
        return tuple(seen)

    def subset(self, indices):
        return FitDataset(
            tuple(self.rows[i] for i in indices),
            self.description,
            self.sex_provenance,
            self.reference_method,
        )

    def to_arrays(self):
        """``(X, y)`` with ``X`` columns in :data:`INPUT_COLUMNS` order.

        Missing age and non-binary sex entries become NaN.
        """
        X = np.empty((len(self.rows), len(INPUT_COLUMNS)))
        y = np.empty(len(self.rows))
        for i, row in enumerate(self.rows):
            p, r = row.profile, row.reading
            code = sex_code_for(p.gender_entry)
            X[i] = (
                p.height,
                p.weight,
                r.resistance,
                r.reactance,
                np.nan if p.age is None else p.age,
                np.nan if code is None else code,
            )
            y[i] = row.ref_ffm_kg
        return X, y

    def describe(self):
        """Population metadata string for a spec fitted on this dataset."""
        n = len(self.rows)
        sexes = [row.profile.gender_entry for row in self.rows]
        athletes = sum(row.profile.athlete for row in self.rows)
        if athletes == 0:
            athlete_text = "non-athletes only"
        elif athletes == n:
            athlete_text = "athletes only"
        else:
            athlete_text = f"mixed athlete status ({athletes} of {n})"
        ages = [row.profile.age for row in self.rows if row.profile.age is not None]
        age_text = f"age {min(ages):g}-{max(ages):g} years" if ages else "age not recorded"
        parts = [
            f"n={n}",
            f"sex entries: {sexes.count('male')} male, {sexes.count('female')} female, "
            f"{sexes.count('nonbinary_or_unspecified')} nonbinary/unspecified",
            athlete_text,
            age_text,
        ]
        for col in self.group_columns:
            values = sorted({row.group_map.get(col, "") or "unlabeled" for row in self.rows})
            parts.append(f"{col}: {', '.join(values)}")
        parts.append(f"sex provenance: {self.sex_provenance or 'not reported'}")
        if self.description:
            parts.insert(0, self.description)
        return "; ".join(parts)


@dataclass(frozen=True)
class FitDiagnostics:
    rmse_kg: float
    r_squared: float
    std_errors: dict
    n: int


@dataclass(frozen=True)
class FittedEquation:
    spec: EquationSpec
    diagnostics: FitDiagnostics

    @property
    def coefficients(self):
        return self.spec.coefficients


@dataclass(frozen=True)
class CVResult:
    mean_rmse: float
    fold_rmse: tuple


# --- ingestion -------------------------------------------------------------


def _parse_float(text, column):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ValueError(f"{column} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"{column} is not finite: {text!r}")
    return value


def _parse_row(record, group_columns):
    age_text = (record["age_years"] or "").strip()
    athlete_text = (record["athlete"] or "").strip()
    if athlete_text not in ("0", "1"):
        raise ValueError(f"athlete must be 0 or 1, got {athlete_text!r}")
    sex_text = (record["sex"] or "").strip().lower()
    if sex_text not in _SEX_CODES:
        raise ValueError(f"sex must be m, f, x or empty, got {record['sex']!r}")
    profile = SubjectProfile(
        height=_parse_float(record["height_cm"], "height_cm"),
        weight=_parse_float(record["weight_kg"], "weight_kg"),
        age=_parse_float(age_text, "age_years") if age_text else None,
        athlete=athlete_text == "1",
        gender_entry=_SEX_CODES[sex_text],
    )
    reading = ImpedanceReading(
        resistance=_parse_float(record["resistance_ohm"], "resistance_ohm"),
        reactance=_parse_float(record["reactance_ohm"], "reactance_ohm"),
    )
    groups = tuple((col, (record[col] or "").strip()) for col in group_columns)
    return FitRow(profile, reading, _parse_float(record["ref_ffm_kg"], "ref_ffm_kg"), groups)


def ingest_dataset(stream, description="", sex_provenance="", reference_method=""):
    """Read a reference dataset from CSV text or a text stream.

    All row problems are collected and raised together as :class:`RowError`,
    numbered from 1 over data rows.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.DictReader(stream)
    header = reader.fieldnames
    if not header:
        raise SchemaError("dataset has no header row")
    header = [h.strip() for h in header]
    reader.fieldnames = header
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")
    extra = [c for c in header if c not in CSV_COLUMNS and not c.startswith(GROUP_PREFIX)]
    if extra:
        raise SchemaError(
            f"unknown column(s): {', '.join(extra)} (subgroup columns must start with {GROUP_PREFIX!r})"
        )
    group_columns = [c for c in header if c.startswith(GROUP_PREFIX)]

    rows, errors = [], []
    for number, record in enumerate(reader, start=1):
        if None in record or any(record[c] is None for c in header):
            errors.append((number, f"expected {len(header)} fields"))
            continue
        try:
            rows.append(_parse_row(record, group_columns))
        except (ValueError, BIAError) as exc:
            errors.append((number, str(exc)))
    if errors:
        raise RowError(errors)
    if not rows:
        raise InputError("dataset has a header but no data rows")
    if not sex_provenance:
        logger.info("dataset has no sex-provenance note; it will read 'not reported'")
    return FitDataset(tuple(rows), description, sex_provenance, reference_method)


def _fmt(value):
    return repr(float(value))


def dataset_to_csv(dataset: FitDataset) -> str:
    """Serialize a dataset to the CSV schema accepted by :func:`ingest_dataset`."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    group_columns = dataset.group_columns
    writer.writerow([*CSV_COLUMNS, *group_columns])
    for row in dataset.rows:
        p, r = row.profile, row.reading
        groups = row.group_map
        writer.writerow(
            [
                _fmt(p.height),
                _fmt(p.weight),
                "" if p.age is None else _fmt(p.age),
                "1" if p.athlete else "0",
                _SEX_LETTERS[p.gender_entry],
                _fmt(r.resistance),
                _fmt(r.reactance),
                _fmt(row.ref_ffm_kg),
                *(groups.get(col, "") for col in group_columns),
            ]
        )
    return out.getvalue()


# --- synthetic cohorts -----------------------------------------------------


@dataclass(frozen=True)
class CohortConfig:
    """Generative model for a synthetic reference cohort.

    ``coefficients`` is the true equation without the sex term; the sex
    effect is ``true_sex_offset``. Rows alternate male/female. When
    ``group_labels`` is set, rows are assigned to labels round-robin in
    column ``group_column`` and ``group_ref_offsets`` is added to their
    reference FFM (an effect the fitted equation cannot see).
    """

    n: int = 100
    seed: int = 0
    height_range: tuple = (150.0, 195.0)
    weight_range: tuple = (55.0, 110.0)
    resistance_range: tuple = (380.0, 720.0)
    reactance_range: tuple = (40.0, 80.0)
    age_range: tuple = (20.0, 70.0)
    coefficients: dict = field(
        default_factory=lambda: {"intercept": -4.104, "h2_over_r": 0.518, "weight": 0.231, "reactance": 0.130}
    )
    true_sex_offset: float = 4.229
    noise_sd: float = 1.0
    group_column: str = "group_cohort"
    group_labels: tuple = ()
    group_ref_offsets: dict = field(default_factory=dict)
    max_redraws: int = 1000

    def __post_init__(self):
        if self.n < 1:
            raise InputError(f"cohort size must be >= 1, got {self.n}")
        if not self.noise_sd >= 0:
            raise InputError(f"noise_sd must be >= 0, got {self.noise_sd}")
        bad = set(self.coefficients) - set(COVARIATES) | ({"sex_offset"} & set(self.coefficients))
        if bad:
            raise UnknownCovariateError(
                f"cohort coefficients may not include {', '.join(sorted(bad))}; "
                "use true_sex_offset for the sex effect"
            )
        if not self.group_column.startswith(GROUP_PREFIX):
            raise InputError(f"group_column must start with {GROUP_PREFIX!r}")


def _true_ffm(config, height, weight, resistance, reactance, age, sex_code):
    values = {
        "intercept": 1.0,
        "h2_over_r": height * height / resistance,
        "weight": weight,
        "reactance": reactance,
        "age": age,
    }
    total = 0.0
    for name in COVARIATES:
        if name in config.coefficients:
            total += config.coefficients[name] * values[name]
    return total + config.true_sex_offset * sex_code


def synthesize_cohort(config: CohortConfig) -> FitDataset:
    """Deterministic cohort drawn from ``config``; same seed, same dataset.

    Draws whose reference FFM falls outside (0, weight] are redrawn.
    """
    rng = np.random.default_rng(config.seed)
    rows = []
    for i in range(config.n):
        sex_code = 1 if i % 2 == 0 else 0
        label = config.group_labels[i % len(config.group_labels)] if config.group_labels else None
        offset = config.group_ref_offsets.get(label, 0.0) if label is not None else 0.0
        for _ in range(config.max_redraws):
            height = rng.uniform(*config.height_range)
            weight = rng.uniform(*config.weight_range)
            resistance = rng.uniform(*config.resistance_range)
            reactance = rng.uniform(*config.reactance_range)
            age = rng.uniform(*config.age_range)
            noise = rng.normal(0.0, config.noise_sd) if config.noise_sd > 0 else 0.0
            ref = _true_ffm(config, height, weight, resistance, reactance, age, sex_code) + noise + offset
            if 0 < ref <= weight:
                break
        else:
            raise InputError("cohort configuration keeps producing reference FFM outside (0, weight]")
        rows.append(
            FitRow(
                SubjectProfile(
                    height=float(height),
                    weight=float(weight),
                    age=float(age),
                    gender_entry="male" if sex_code else "female",
                ),
                ImpedanceReading(float(resistance), float(reactance)),
                float(ref),
                ((config.group_column, label),) if label is not None else (),
            )
        )
    return FitDataset(
        tuple(rows),
        description=f"synthetic cohort (seed={config.seed})",
        sex_provenance="synthetic: assigned alternately",
        reference_method="synthetic generative model",
    )


# --- least squares ---------------------------------------------------------


def canonical_covariates(covariates):
    """Validate names, add the intercept, and order them by the vocabulary."""
    names = set(covariates)
    unknown = names - set(COVARIATES)
    if unknown:
        raise UnknownCovariateError(
            f"unknown covariate(s) {', '.join(sorted(unknown))}; allowed: {', '.join(COVARIATES)}"
        )
    names.add("intercept")
    return tuple(c for c in COVARIATES if c in names)


def design_matrix(X, covariates):
    """Build the regression design from the :data:`INPUT_COLUMNS` array form."""
    X = np.asarray(X, dtype=float)
    height, weight, resistance, reactance, age, sex = X.T
    columns = []
    for name in covariates:
        if name == "intercept":
            col = np.ones(len(X))
        elif name == "h2_over_r":
            if np.any(resistance <= 0):
                raise InputError("resistance must be > 0 in every row")
            col = height * height / resistance
        elif name == "weight":
            col = weight
        elif name == "reactance":
            col = reactance
        elif name == "age":
            col = age
        elif name == "sex_offset":
            col = sex
        else:
            raise UnknownCovariateError(f"unknown covariate {name!r}")
        bad = np.flatnonzero(~np.isfinite(col))
        if bad.size:
            rows = ", ".join(str(i + 1) for i in bad[:10])
            what = "a binary sex code" if name == "sex_offset" else f"a value for {name}"
            raise InputError(f"rows {rows} lack {what}, required by the {name} term")
        columns.append(col)
    return np.column_stack(columns)


def _collinear_names(A, names):
    """Name a set of columns that are (numerically) linearly dependent."""
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    An = A / scale
    for j in range(1, An.shape[1] + 1):
        block = An[:, :j]
        if np.linalg.matrix_rank(block) < j:
            _, _, vt = np.linalg.svd(block)
            null = vt[-1]
            involved = np.flatnonzero(np.abs(null) > 1e-8 * np.abs(null).max())
            return tuple(names[i] for i in involved)
    return tuple(names)


def ols_qr(A, y, names=None):
    """Least squares via Householder QR.

    Returns ``(coef, residuals, cov_unscaled)`` where ``cov_unscaled`` is
    ``(A^T A)^{-1}`` computed from the triangular factor.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = A.shape
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(p))
    if n < p:
        raise SingularityError(
            f"{n} rows cannot determine {p} coefficients", collinear=names
        )
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    if np.linalg.matrix_rank(A / scale) < p:
        collinear = _collinear_names(A, names)
        raise SingularityError(
            f"design matrix is rank deficient; collinear covariates: {', '.join(collinear)}",
            collinear=collinear,
        )
    q, r = np.linalg.qr(A, mode="reduced")
    coef = np.linalg.solve(r, q.T @ y)
    residuals = y - A @ coef
    r_inv = np.linalg.solve(r, np.eye(p))
    return coef, residuals, r_inv @ r_inv.T


def _rmse(residuals):
    return float(np.sqrt(np.mean(np.square(residuals))))


def _fit_arrays(X, y, covariates):
    names = canonical_covariates(covariates)
    A = design_matrix(X, names)
    coef, resid, cov = ols_qr(A, y, names)
    n, p = A.shape
    rss = float(resid @ resid)
    tss = float(np.sum(np.square(y - y.mean())))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    if n > p:
        se = np.sqrt(rss / (n - p) * np.diag(cov))
    else:
        se = np.full(p, np.nan)
    return names, coef, resid, FitDiagnostics(
        rmse_kg=_rmse(resid),
        r_squared=min(r2, 1.0),
        std_errors=dict(zip(names, map(float, se))),
        n=n,
    )


def fit_least_squares(dataset: FitDataset, covariates=DEFAULT_COVARIATES, equation_id=None) -> FittedEquation:
    """Ordinary least-squares fit of an FFM equation on ``dataset``.

    The intercept is always included. A spec with an ``offset`` sex scheme
    results when ``sex_offset`` is among the covariates, else ``none``.
    """
    X, y = dataset.to_arrays()
    names, coef, _, diagnostics = _fit_arrays(X, y, covariates)
    with_sex = "sex_offset" in names
    if equation_id is None:
        equation_id = "refit" if with_sex else "refit_sex_free"
    spec = EquationSpec(
        id=equation_id,
        terms=tuple(zip(names, map(float, coef))),
        sex_scheme=SexScheme.offset() if with_sex else SexScheme.none(),
        population=dataset.describe(),
        gold_standard=dataset.reference_method,
        assumptions=(
            "units: height in cm, weight in kg, resistance and reactance in ohm",
            f"ordinary least squares on {diagnostics.n} rows; in-sample RMSE "
            f"{diagnostics.rmse_kg:.4g} kg, R^2 {diagnostics.r_squared:.4g}",
        ),
    )
    return FittedEquation(spec, diagnostics)


def refit_without_sex(dataset: FitDataset, covariates=DEFAULT_COVARIATES, equation_id=None) -> FittedEquation:
    """Same fit with the sex term removed; the spec gets ``sex_scheme = none``."""
    kept = [c for c in covariates if c != "sex_offset"]
    return fit_least_squares(dataset, kept, equation_id or "refit_sex_free")


def cross_validate(dataset: FitDataset, covariates=DEFAULT_COVARIATES, k_folds=5) -> CVResult:
    """k-fold CV with round-robin folds: row ``i`` is held out in fold ``i % k``.

    ``mean_rmse`` is the mean of the per-fold held-out RMSEs.
    """
    n = len(dataset)
    if k_folds < 2:
        raise InputError(f"k_folds must be >= 2, got {k_folds}")
    if n < k_folds:
        raise InputError(f"{n} rows cannot be split into {k_folds} folds")
    X, y = dataset.to_arrays()
    names = canonical_covariates(covariates)
    fold_of = np.arange(n) % k_folds
    fold_rmse = []
    for fold in range(k_folds):
        test = fold_of == fold
        _, coef, _, _ = _fit_arrays(X[~test], y[~test], names)
        pred = design_matrix(X[test], names) @ coef
        fold_rmse.append(_rmse(y[test] - pred))
    return CVResult(float(np.mean(fold_rmse)), tuple(fold_rmse))
