"""Agreement between estimated and reference values, overall and by subgroup.

Reports carry MAPE, mean bias, and Bland-Altman limits of agreement
(bias +/- 1.96 SD of the differences, SD with ``ddof=1``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .estimator import AS_ENTERED, estimate_composition
from .exceptions import BIAError, InputError, UndefinedMetricError

__all__ = [
    "DEFAULT_THRESHOLD_PERCENT",
    "UNLABELED",
    "Verdict",
    "RowResult",
    "ValidationReport",
    "agreement_metrics",
    "classify_against_threshold",
    "subgroup_disaggregate",
]

DEFAULT_THRESHOLD_PERCENT = 1.5
LOA_Z = 1.96
UNLABELED = "unlabeled"


@dataclass(frozen=True)
class Verdict:
    passed: bool
    mape_percent: float
    threshold_percent: float

    @property
    def label(self):
        return "pass" if self.passed else "fail"

    def __str__(self):
        op = "<=" if self.passed else ">"
        return f"{self.label}: MAPE {self.mape_percent:.4g}% {op} threshold {self.threshold_percent:g}%"

    def to_dict(self):
        return {
            "verdict": self.label,
            "mape_percent": self.mape_percent,
            "threshold_percent": self.threshold_percent,
        }


def classify_against_threshold(mape_percent, threshold_percent=DEFAULT_THRESHOLD_PERCENT) -> Verdict:
    """Pass iff ``mape_percent <= threshold_percent`` (boundary passes)."""
    mape = float(mape_percent)
    threshold = float(threshold_percent)
    if not (mape >= 0 and threshold >= 0):
        raise InputError("MAPE and threshold must both be nonnegative")
    return Verdict(mape <= threshold, mape, threshold)


@dataclass(frozen=True)
class RowResult:
    """Individual-level outcome for one dataset row."""

    row: int  # 1-based
    estimate: float | None
    reference: float
    residual: float | None  # estimate - reference
    error: str | None = None
    groups: tuple = ()

    def to_dict(self):
        return {
            "row": self.row,
            "estimate_kg": self.estimate,
            "reference_kg": self.reference,
            "residual_kg": self.residual,
            "error": self.error,
            "groups": dict(self.groups),
        }


@dataclass(frozen=True)
class ValidationReport:
    n: int
    mape_percent: float
    mean_bias: float
    sd_bias: float
    limits_of_agreement: tuple
    verdict: Verdict
    subgroups: dict = field(default_factory=dict)  # {column: {value: ValidationReport}}
    rows: tuple = ()
    failed_rows: tuple = ()
    equation_id: str | None = None
    policy: str | None = None

    # Unit-explicit aliases; metrics are in kg when comparing FFM.
    @property
    def mean_bias_kg(self):
        return self.mean_bias

    @property
    def sd_bias_kg(self):
        return self.sd_bias

    def to_dict(self):
        doc = {
            "n": self.n,
            "mape_percent": self.mape_percent,
            "mean_bias": self.mean_bias,
            "sd_bias": self.sd_bias,
            "limits_of_agreement": list(self.limits_of_agreement),
            "threshold": self.verdict.to_dict(),
        }
        if self.equation_id is not None:
            doc = {"equation_id": self.equation_id, "policy": self.policy, **doc}
        if self.subgroups:
            doc["subgroups"] = {
                col: {val: sub.to_dict() for val, sub in parts.items()}
                for col, parts in self.subgroups.items()
            }
        if self.rows or self.failed_rows:
            doc["rows"] = [r.to_dict() for r in self.rows]
            doc["failed_rows"] = [r.to_dict() for r in self.failed_rows]
        return doc

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, allow_nan=False) + "\n"

    def render(self):
        lo, hi = self.limits_of_agreement
        lines = []
        if self.equation_id is not None:
            lines.append(f"equation: {self.equation_id} (policy: {self.policy})")
        lines += [
            f"n: {self.n}",
            f"MAPE: {self.mape_percent:.4f}%",
            f"mean bias (estimate - reference): {self.mean_bias:+.4f}",
            f"SD of differences: {self.sd_bias:.4f}",
            f"limits of agreement: [{lo:+.4f}, {hi:+.4f}]",
            f"threshold: {self.verdict}",
        ]
        for col, parts in self.subgroups.items():
            lines.append(f"subgroups by {col}:")
            for value, sub in parts.items():
                lines.append(
                    f"  {value}: n={sub.n} MAPE={sub.mape_percent:.4f}% bias={sub.mean_bias:+.4f} "
                    f"LoA=[{sub.limits_of_agreement[0]:+.4f}, {sub.limits_of_agreement[1]:+.4f}] "
                    f"{sub.verdict.label}"
                )
        if self.failed_rows:
            lines.append("rows that could not be evaluated:")
            lines += [f"  row {r.row}: {r.error}" for r in self.failed_rows]
        if self.rows:
            lines.append("individual rows (estimate, reference, residual):")
            lines += [
                f"  row {r.row}: {r.estimate:.4f} {r.reference:.4f} {r.residual:+.4f}"
                for r in self.rows
            ]
        return "\n".join(lines)


def agreement_metrics(estimates, references, threshold_percent=DEFAULT_THRESHOLD_PERCENT) -> ValidationReport:
    """MAPE, bias and limits of agreement for paired values."""
    est = np.asarray(estimates, dtype=float).ravel()
    ref = np.asarray(references, dtype=float).ravel()
    if est.size != ref.size:
        raise InputError(f"{est.size} estimates vs {ref.size} references")
    if est.size == 0:
        raise InputError("agreement metrics need at least one pair")
    if not (np.all(np.isfinite(est)) and np.all(np.isfinite(ref))):
        raise InputError("estimates and references must be finite")
    if np.any(ref <= 0):
        raise UndefinedMetricError("MAPE is undefined for zero or negative reference values")
    diff = est - ref
    mape = float(100.0 * np.mean(np.abs(diff) / ref))
    bias = float(np.mean(diff))
    sd = float(np.std(diff, ddof=1)) if diff.size > 1 else 0.0
    loa = (bias - LOA_Z * sd, bias + LOA_Z * sd)
    return ValidationReport(
        n=int(diff.size),
        mape_percent=mape,
        mean_bias=bias,
        sd_bias=sd,
        limits_of_agreement=loa,
        verdict=classify_against_threshold(mape, threshold_percent),
    )


def subgroup_disaggregate(
    dataset,
    spec,
    policy=AS_ENTERED,
    registry=None,
    threshold_percent=DEFAULT_THRESHOLD_PERCENT,
) -> ValidationReport:
    """Evaluate ``spec`` on every row and break agreement down by subgroup.

    Subgroups are formed for the sex entry and every ``group_`` column;
    missing values are collected under ``"unlabeled"``. Interval estimates
    are scored at their midpoint. Rows the estimator rejects are listed in
    ``failed_rows`` and excluded from the metrics.
    """
    results, failed = [], []
    for number, row in enumerate(dataset.rows, start=1):
        groups = (("sex", row.profile.gender_entry),) + tuple(
            (col, value or UNLABELED) for col, value in row.groups
        )
        try:
            est = estimate_composition(spec, row.profile, row.reading, policy, registry)
        except BIAError as exc:
            failed.append(RowResult(number, None, row.ref_ffm_kg, None, str(exc), groups))
            continue
        ffm = est.point.ffm_kg
        results.append(RowResult(number, ffm, row.ref_ffm_kg, ffm - row.ref_ffm_kg, None, groups))
    if not results:
        raise InputError("no row could be evaluated; see failures: " + "; ".join(r.error for r in failed))

    overall = agreement_metrics(
        [r.estimate for r in results], [r.reference for r in results], threshold_percent
    )
    columns = ["sex", *dataset.group_columns]
    subgroups = {}
    for col in columns:
        buckets = {}
        for r in results:
            value = dict(r.groups).get(col) or UNLABELED
            buckets.setdefault(value, []).append(r)
        subgroups[col] = {
            value: agreement_metrics(
                [r.estimate for r in members], [r.reference for r in members], threshold_percent
            )
            for value, members in sorted(buckets.items())
        }
    return ValidationReport(
        n=overall.n,
        mape_percent=overall.mape_percent,
        mean_bias=overall.mean_bias,
        sd_bias=overall.sd_bias,
        limits_of_agreement=overall.limits_of_agreement,
        verdict=overall.verdict,
        subgroups=subgroups,
        rows=tuple(results),
        failed_rows=tuple(failed),
        equation_id=spec.id,
        policy=str(policy),
    )
