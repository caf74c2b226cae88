"""How estimates move when the sex code flips or measured inputs wobble."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .core import CompositionBreakdown, body_composition
from .equations import EquationSpec
from .estimator import (
    ImpedanceReading,
    SubjectProfile,
    _linear_ffm,
    _resolve_member,
    _term_contributions,
)
from .exceptions import DomainError, InputError, NotApplicableError

__all__ = [
    "PERTURBABLE",
    "SwingReport",
    "GradientVector",
    "FFMInterval",
    "coding_swing",
    "gradient",
    "propagate",
]

PERTURBABLE = ("resistance", "reactance", "weight", "height")


@dataclass(frozen=True)
class SwingReport:
    """Change in FFM and BF% when the binary sex code goes from female to male."""

    delta_ffm_kg: float
    delta_bf_pp: float
    male: CompositionBreakdown
    female: CompositionBreakdown


@dataclass(frozen=True)
class GradientVector:
    d_resistance: float  # kg/ohm
    d_reactance: float  # kg/ohm
    d_weight: float  # kg/kg
    d_height: float  # kg/cm

    def as_dict(self):
        return {
            "d_ffm/d_resistance": self.d_resistance,
            "d_ffm/d_reactance": self.d_reactance,
            "d_ffm/d_weight": self.d_weight,
            "d_ffm/d_height": self.d_height,
        }


@dataclass(frozen=True)
class FFMInterval:
    low: float
    point: float
    high: float

    @property
    def below(self):
        return self.point - self.low

    @property
    def above(self):
        return self.high - self.point


def coding_swing(spec, profile: SubjectProfile, reading: ImpedanceReading, registry=None):
    """Evaluate both binary codings and report the difference (male - female)."""
    if spec.sex_scheme.kind == "none":
        raise NotApplicableError(f"equation {spec.id!r} has no sex term; there is no swing")
    male_spec = _resolve_member(spec, 1, registry)
    female_spec = _resolve_member(spec, 0, registry)
    args = (profile.height, profile.weight, reading.resistance, reading.reactance, profile.age)
    ffm_male = _linear_ffm(male_spec, *args, 1)
    ffm_female = _linear_ffm(female_spec, *args, 0)
    # Difference taken term by term so shared terms cancel exactly instead of
    # leaving rounding residue from two large sums.
    male_terms = _term_contributions(male_spec, *args, 1)
    female_terms = _term_contributions(female_spec, *args, 0)
    delta = sum(
        male_terms.get(name, 0.0) - female_terms.get(name, 0.0)
        for name in dict.fromkeys([*male_terms, *female_terms])
    )
    return SwingReport(
        delta_ffm_kg=delta,
        # FM moves by exactly -delta, so BF% moves by -100*delta/weight.
        delta_bf_pp=100.0 * delta / profile.weight,
        male=body_composition(profile.weight, ffm_male),
        female=body_composition(profile.weight, ffm_female),
    )


def gradient(
    spec: EquationSpec,
    profile: SubjectProfile,
    reading: ImpedanceReading,
    sex_code: int = 1,
    registry=None,
) -> GradientVector:
    """Analytic partial derivatives of FFM with respect to the measured inputs.

    ``sex_code`` only matters for stratified pairs, where it selects the member.
    """
    member = _resolve_member(spec, sex_code, registry)
    c_h2r = member.coefficient("h2_over_r")
    h, r = profile.height, reading.resistance
    if r <= 0:
        raise DomainError(f"resistance must be > 0, got {r}")
    return GradientVector(
        d_resistance=-c_h2r * h * h / (r * r),
        d_reactance=member.coefficient("reactance"),
        d_weight=member.coefficient("weight"),
        d_height=2.0 * c_h2r * h / r,
    )


def propagate(
    spec: EquationSpec,
    profile: SubjectProfile,
    reading: ImpedanceReading,
    deltas: dict,
    sex_code: int = 1,
    registry=None,
) -> FFMInterval:
    """Exact FFM range over every corner of the input box ``x +/- delta``.

    ``deltas`` maps any of ``resistance``, ``reactance``, ``weight``,
    ``height`` to a nonnegative half-width. The equation is re-evaluated at
    each of the 2**k corners rather than linearised, since FFM is nonlinear
    in resistance.
    """
    unknown = set(deltas) - set(PERTURBABLE)
    if unknown:
        raise InputError(f"cannot perturb {', '.join(sorted(unknown))}; use {', '.join(PERTURBABLE)}")
    for name, d in deltas.items():
        if not d >= 0:
            raise InputError(f"delta for {name} must be >= 0, got {d}")
    member = _resolve_member(spec, sex_code, registry)
    base = {
        "height": profile.height,
        "weight": profile.weight,
        "resistance": reading.resistance,
        "reactance": reading.reactance,
    }

    def at(values):
        return _linear_ffm(
            member,
            values["height"],
            values["weight"],
            values["resistance"],
            values["reactance"],
            profile.age,
            sex_code,
        )

    point = at(base)
    active = [name for name in PERTURBABLE if deltas.get(name, 0) > 0]
    if base["resistance"] - deltas.get("resistance", 0.0) <= 0:
        raise DomainError("resistance perturbation reaches zero or below")
    low = high = point
    for signs in itertools.product((-1.0, 1.0), repeat=len(active)):
        values = dict(base)
        for name, sign in zip(active, signs):
            values[name] = base[name] + sign * deltas[name]
        ffm = at(values)
        low = min(low, ffm)
        high = max(high, ffm)
    return FFMInterval(low=low, point=point, high=high)
