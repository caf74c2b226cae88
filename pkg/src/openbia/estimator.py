"""Evaluate an FFM equation for one person under an explicit sex-coding policy."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .core import CompositionBreakdown, body_composition
from .equations import EquationSpec, Registry
from .exceptions import ConfigurationError, DomainError, InputError, NotFoundError

__all__ = [
    "GENDER_ENTRIES",
    "HORMONE_STATUSES",
    "DISCLAIMER",
    "MIDPOINT_NOTE",
    "SubjectProfile",
    "ImpedanceReading",
    "PolicyKind",
    "CodingPolicy",
    "CompositionInterval",
    "CompositionEstimate",
    "CodingRecommendation",
    "sex_code_for",
    "evaluate_ffm",
    "estimate_composition",
    "recommend_coding",
    "check_applicability",
]

GENDER_ENTRIES = ("male", "female", "nonbinary_or_unspecified")
HORMONE_STATUSES = ("testosterone_dominant", "estrogen_dominant", "mixed_or_unknown")

DISCLAIMER = (
    "These figures come from a population-level regression equation, not from a direct "
    "measurement of your body. Accuracy for any individual is unknown, so treat them with "
    "extreme caution and use them to track change over time rather than as absolute values."
)
MIDPOINT_NOTE = (
    "midpoint is an approximation (mean of the male and female codings); "
    "no sex-free refit was used"
)
NO_SEX_TERM_NOTE = "equation has no sex term; gender entry ignored"


def _check_range(name, value, low, high, *, low_open=False):
    value = float(value)
    ok = math.isfinite(value) and (low < value if low_open else low <= value) and value <= high
    if not ok:
        bracket = "(" if low_open else "["
        raise InputError(f"{name} must be in {bracket}{low:g}, {high:g}], got {value!r}")
    return value


@dataclass(frozen=True)
class SubjectProfile:
    height: float  # cm
    weight: float  # kg
    age: float | None = None  # years
    athlete: bool = False
    gender_entry: str = "nonbinary_or_unspecified"
    hormone_status: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "height", _check_range("height", self.height, 50, 250))
        object.__setattr__(self, "weight", _check_range("weight", self.weight, 10, 300))
        if self.age is not None:
            object.__setattr__(self, "age", _check_range("age", self.age, 18, 120))
        if self.gender_entry not in GENDER_ENTRIES:
            raise InputError(
                f"gender_entry must be one of {', '.join(GENDER_ENTRIES)}, got {self.gender_entry!r}"
            )
        if self.hormone_status is not None and self.hormone_status not in HORMONE_STATUSES:
            raise InputError(
                f"hormone_status must be one of {', '.join(HORMONE_STATUSES)}, "
                f"got {self.hormone_status!r}"
            )
        object.__setattr__(self, "athlete", bool(self.athlete))

    def to_dict(self):
        return {
            "height": self.height,
            "weight": self.weight,
            "age": self.age,
            "athlete": self.athlete,
            "gender_entry": self.gender_entry,
            "hormone_status": self.hormone_status,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class ImpedanceReading:
    resistance: float  # ohm
    reactance: float  # ohm
    frequency: float = 50.0  # kHz

    def __post_init__(self):
        object.__setattr__(
            self, "resistance", _check_range("resistance", self.resistance, 0, 2000, low_open=True)
        )
        object.__setattr__(self, "reactance", _check_range("reactance", self.reactance, 0, 500))
        freq = float(self.frequency)
        if not (math.isfinite(freq) and freq > 0):
            raise InputError(f"frequency must be > 0 kHz, got {freq!r}")
        object.__setattr__(self, "frequency", freq)

    def to_dict(self):
        return {"resistance": self.resistance, "reactance": self.reactance, "frequency": self.frequency}

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


class PolicyKind(str, enum.Enum):
    AS_ENTERED = "as-entered"
    FORCE_MALE = "force-male"
    FORCE_FEMALE = "force-female"
    SEX_FREE = "sex-free"
    INTERVAL = "interval"


@dataclass(frozen=True)
class CodingPolicy:
    """How the gender entry is turned into the equation's sex input.

    ``SEX_FREE`` carries the id of a refitted equation without a sex term.
    """

    kind: PolicyKind
    refit_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if (self.kind is PolicyKind.SEX_FREE) != bool(self.refit_id):
            raise InputError("a sex-free policy needs exactly one refit equation id")

    @classmethod
    def parse(cls, text):
        """Parse the CLI form: ``as-entered``, ``force-male``, ``sex-free=<id>`` ..."""
        name, sep, arg = text.partition("=")
        try:
            kind = PolicyKind(name)
        except ValueError:
            raise InputError(f"unknown policy {text!r}") from None
        if kind is PolicyKind.SEX_FREE:
            if not arg:
                raise InputError("sex-free policy needs an equation id: sex-free=<id>")
            return cls(kind, arg)
        if sep:
            raise InputError(f"policy {name!r} takes no argument")
        return cls(kind)

    def __str__(self):
        if self.kind is PolicyKind.SEX_FREE:
            return f"{self.kind.value}={self.refit_id}"
        return self.kind.value


AS_ENTERED = CodingPolicy(PolicyKind.AS_ENTERED)
FORCE_MALE = CodingPolicy(PolicyKind.FORCE_MALE)
FORCE_FEMALE = CodingPolicy(PolicyKind.FORCE_FEMALE)
INTERVAL = CodingPolicy(PolicyKind.INTERVAL)


def sex_free(refit_id):
    return CodingPolicy(PolicyKind.SEX_FREE, refit_id)


@dataclass(frozen=True)
class CompositionInterval:
    """Estimates under both binary codings plus their midpoint."""

    low: CompositionBreakdown
    mid: CompositionBreakdown
    high: CompositionBreakdown

    @property
    def ffm_width(self):
        return self.high.ffm_kg - self.low.ffm_kg

    @property
    def bf_width(self):
        return self.low.bf_percent - self.high.bf_percent

    def to_dict(self):
        return {"low": self.low.to_dict(), "mid": self.mid.to_dict(), "high": self.high.to_dict()}

    @classmethod
    def from_dict(cls, data):
        return cls(*(CompositionBreakdown.from_dict(data[k]) for k in ("low", "mid", "high")))


@dataclass(frozen=True)
class CompositionEstimate:
    """Result of :func:`estimate_composition`.

    ``policy_used`` names the coding that was actually applied: ``male``,
    ``female``, ``interval``, ``sex-free=<id>`` or ``no-sex-term``.
    """

    breakdown: CompositionBreakdown | CompositionInterval
    equation_id: str
    policy_used: str
    warnings: tuple = ()

    @property
    def is_interval(self):
        return isinstance(self.breakdown, CompositionInterval)

    @property
    def point(self) -> CompositionBreakdown:
        """The point estimate, or the interval midpoint."""
        return self.breakdown.mid if self.is_interval else self.breakdown

    def to_dict(self):
        return {
            "kind": "interval" if self.is_interval else "point",
            "breakdown": self.breakdown.to_dict(),
            "equation_id": self.equation_id,
            "policy_used": self.policy_used,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data):
        if data["kind"] == "interval":
            breakdown = CompositionInterval.from_dict(data["breakdown"])
        else:
            breakdown = CompositionBreakdown.from_dict(data["breakdown"])
        return cls(breakdown, data["equation_id"], data["policy_used"], tuple(data["warnings"]))


def sex_code_for(gender_entry):
    """1 for male, 0 for female, None when no binary code applies."""
    return {"male": 1, "female": 0}.get(gender_entry)


def _resolve_member(spec, sex_code, registry):
    """For stratified pairs, pick the equation matching ``sex_code``."""
    scheme = spec.sex_scheme
    if scheme.kind != "stratified":
        return spec
    target = scheme.male_id if sex_code == 1 else scheme.female_id
    if target == spec.id:
        return spec
    if registry is None:
        raise ConfigurationError(
            f"stratified equation {spec.id!r} needs a registry to find {target!r}"
        )
    try:
        return registry[target]
    except NotFoundError:
        raise ConfigurationError(f"stratified partner {target!r} is not registered") from None


def _term_contributions(spec, height, weight, resistance, reactance, age, sex_code):
    """``{covariate: coefficient * value}`` for every term of ``spec``."""
    if resistance <= 0:
        raise DomainError(f"resistance must be > 0, got {resistance}")
    out = {}
    for name, coef in spec.terms:
        if name == "intercept":
            value = 1.0
        elif name == "h2_over_r":
            value = height * height / resistance
        elif name == "weight":
            value = weight
        elif name == "reactance":
            value = reactance
        elif name == "age":
            if age is None:
                raise InputError(f"equation {spec.id!r} needs age, but none was given")
            value = age
        else:  # sex_offset
            if sex_code not in (0, 1):
                raise InputError(f"equation {spec.id!r} needs a sex code of 0 or 1")
            value = sex_code
        out[name] = coef * value
    return out


def _linear_ffm(spec, height, weight, resistance, reactance, age, sex_code):
    """Evaluate the equation on raw numbers; shared by the sensitivity code."""
    total = 0.0
    for value in _term_contributions(
        spec, height, weight, resistance, reactance, age, sex_code
    ).values():
        total += value
    return total


def evaluate_ffm(
    spec: EquationSpec,
    profile: SubjectProfile,
    reading: ImpedanceReading,
    sex_code: int | None = None,
    registry: Registry | None = None,
) -> float:
    """Fat-free mass in kg from one equation at a fixed binary sex code.

    ``sex_code`` is ignored by equations without a sex term. Range checks are
    left to :func:`check_applicability`; they warn, never fail.
    """
    member = _resolve_member(spec, sex_code, registry)
    return _linear_ffm(
        member,
        profile.height,
        profile.weight,
        reading.resistance,
        reading.reactance,
        profile.age,
        sex_code,
    )


def _resolved_codes(policy, profile):
    """Map a policy to ``[sex_code]`` (point) or ``[0, 1]`` (interval)."""
    kind = policy.kind
    if kind is PolicyKind.FORCE_MALE:
        return [1]
    if kind is PolicyKind.FORCE_FEMALE:
        return [0]
    if kind is PolicyKind.INTERVAL:
        return [0, 1]
    code = sex_code_for(profile.gender_entry)
    return [0, 1] if code is None else [code]


def estimate_composition(
    spec: EquationSpec,
    profile: SubjectProfile,
    reading: ImpedanceReading,
    policy: CodingPolicy = AS_ENTERED,
    registry: Registry | None = None,
) -> CompositionEstimate:
    """Point or interval composition estimate with applicability warnings.

    ``AS_ENTERED`` never forces a binary choice: a nonbinary or unspecified
    entry yields the interval spanned by both codings.
    """
    if policy.kind is PolicyKind.SEX_FREE:
        if registry is None or policy.refit_id not in registry:
            raise ConfigurationError(
                f"sex-free policy refers to {policy.refit_id!r}, which is not registered"
            )
        refit = registry[policy.refit_id]
        if refit.sex_scheme.kind != "none":
            raise ConfigurationError(
                f"equation {refit.id!r} still uses sex ({refit.sex_scheme}); "
                "a sex-free policy needs an equation without a sex term"
            )
        warnings = check_applicability(refit, profile, reading)
        ffm = evaluate_ffm(refit, profile, reading)
        return CompositionEstimate(
            body_composition(profile.weight, ffm), refit.id, str(policy), tuple(warnings)
        )

    warnings = check_applicability(spec, profile, reading)
    if spec.sex_scheme.kind == "none":
        ffm = evaluate_ffm(spec, profile, reading)
        warnings.append(NO_SEX_TERM_NOTE)
        return CompositionEstimate(
            body_composition(profile.weight, ffm), spec.id, "no-sex-term", tuple(warnings)
        )

    codes = _resolved_codes(policy, profile)
    if len(codes) == 1:
        ffm = evaluate_ffm(spec, profile, reading, codes[0], registry)
        label = "male" if codes[0] == 1 else "female"
        return CompositionEstimate(
            body_composition(profile.weight, ffm), spec.id, label, tuple(warnings)
        )

    ffm_female = evaluate_ffm(spec, profile, reading, 0, registry)
    ffm_male = evaluate_ffm(spec, profile, reading, 1, registry)
    low, high = sorted((ffm_female, ffm_male))
    mid = (ffm_female + ffm_male) / 2.0
    interval = CompositionInterval(
        low=body_composition(profile.weight, low),
        mid=body_composition(profile.weight, mid),
        high=body_composition(profile.weight, high),
    )
    warnings.append(MIDPOINT_NOTE)
    return CompositionEstimate(interval, spec.id, "interval", tuple(warnings))


@dataclass(frozen=True)
class CodingRecommendation:
    policy: CodingPolicy
    rationale: str


_TREND_ADVICE = (
    "Whatever coding you use, the absolute number is unlikely to be accurate for you; "
    "use it to track change over time and keep the same coding across measurements."
)


def recommend_coding(profile: SubjectProfile) -> CodingRecommendation:
    """Suggest a coding policy from hormone status rather than gender entry."""
    status = profile.hormone_status
    if status == "testosterone_dominant":
        policy = FORCE_MALE
        reason = "Testosterone in the typical male range: the male coding is the closer fit."
    elif status == "estrogen_dominant":
        policy = FORCE_FEMALE
        reason = "Testosterone outside the typical male range: the female coding is the closer fit."
    else:
        policy = INTERVAL
        reason = (
            "Hormone status is mixed or unknown, so no single binary coding is preferred; "
            "both codings are reported as an interval."
        )
    return CodingRecommendation(policy, f"{reason} {_TREND_ADVICE}")


def _population_athlete_stance(population):
    """Return True / False when the population text declares athlete status."""
    text = population.lower().replace("-", " ")
    if "non athlete" in text or "nonathlete" in text:
        return False
    if "mixed athlete" in text:
        return None
    if "athlete" in text:
        return True
    return None


def check_applicability(
    spec: EquationSpec, profile: SubjectProfile, reading: ImpedanceReading | None = None
) -> list:
    """Warnings about how well ``profile`` matches the equation's source population."""
    warnings = []
    values = {"height": profile.height, "weight": profile.weight, "age": profile.age}
    if reading is not None:
        values["resistance"] = reading.resistance
        values["reactance"] = reading.reactance
        values["h2_over_r"] = profile.height**2 / reading.resistance
    for key, (low, high) in spec.valid_ranges:
        value = values.get(key)
        if value is not None and not low <= value <= high:
            warnings.append(
                f"{key} {value:g} is outside the equation's validated range [{low:g}, {high:g}]"
            )

    population = spec.population.strip()
    if not population:
        warnings.append(
            f"population for {spec.id} not reported; how well it fits you is unknown"
        )
    else:
        stance = _population_athlete_stance(population)
        if stance is False and profile.athlete:
            warnings.append(
                f"{spec.id} was developed on non-athletes but you are marked as an athlete"
            )
        elif stance is True and not profile.athlete:
            warnings.append(
                f"{spec.id} was developed on athletes but you are not marked as an athlete"
            )
    return warnings
