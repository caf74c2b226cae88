"""Fat-free-mass regression equations, their registry and disclosure reports.

An equation is a linear combination over a closed covariate vocabulary::

    FFM = sum(coefficient * covariate)

with ``h2_over_r = height_cm**2 / resistance_ohm`` and ``sex_offset`` the 0/1
sex code. Equations are stored one per UTF-8 JSON file; the schema is
documented in ``docs/equation_spec_format.md``.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

from .exceptions import (
    ConsistencyError,
    NotFoundError,
    ParseError,
    SchemaError,
    UnknownCovariateError,
)

__all__ = [
    "COVARIATES",
    "RANGE_KEYS",
    "SCHEMA_VERSION",
    "NOT_REPORTED",
    "SexScheme",
    "ReportedError",
    "EquationSpec",
    "Registry",
    "TransparencyReport",
    "KYLE2001",
    "builtin_registry",
    "parse_spec",
    "serialize_spec",
    "load_spec",
    "describe_transparency",
]

SCHEMA_VERSION = 1
NOT_REPORTED = "not reported"

COVARIATES = ("intercept", "h2_over_r", "weight", "reactance", "age", "sex_offset")
COVARIATE_UNITS = {
    "intercept": "kg",
    "h2_over_r": "cm^2/ohm",
    "weight": "kg",
    "reactance": "ohm",
    "age": "years",
    "sex_offset": "0/1 (male = 1, female = 0)",
}
# Validity ranges may constrain raw inputs as well as derived covariates.
RANGE_KEYS = ("height", "weight", "age", "resistance", "reactance", "h2_over_r")
RANGE_UNITS = {
    "height": "cm",
    "weight": "kg",
    "age": "years",
    "resistance": "ohm",
    "reactance": "ohm",
    "h2_over_r": "cm^2/ohm",
}

_REQUIRED_KEYS = {"id", "terms", "sex_scheme"}
_OPTIONAL_KEYS = {
    "schema_version",
    "population",
    "gold_standard",
    "valid_ranges",
    "reported_error",
    "assumptions",
}


@dataclass(frozen=True)
class SexScheme:
    """How an equation encodes sex.

    ``kind`` is ``"offset"`` (a 0/1 ``sex_offset`` term), ``"none"`` (no sex
    input at all) or ``"stratified"`` (a pair of equations, one per binary
    code, identified by ``male_id`` and ``female_id``).
    """

    kind: str
    male_id: str | None = None
    female_id: str | None = None

    def __post_init__(self):
        if self.kind not in ("offset", "none", "stratified"):
            raise SchemaError(f"unknown sex_scheme {self.kind!r}")
        if self.kind == "stratified":
            if not self.male_id or not self.female_id:
                raise SchemaError("stratified sex_scheme needs male and female equation ids")
        elif self.male_id is not None or self.female_id is not None:
            raise SchemaError(f"sex_scheme {self.kind!r} takes no equation ids")

    @classmethod
    def offset(cls):
        return cls("offset")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def stratified(cls, male_id, female_id):
        return cls("stratified", male_id, female_id)

    def to_json(self):
        if self.kind == "stratified":
            return {"stratified": {"male": self.male_id, "female": self.female_id}}
        return self.kind

    @classmethod
    def from_json(cls, value):
        if isinstance(value, str):
            return cls(value)
        if isinstance(value, dict) and set(value) == {"stratified"}:
            inner = value["stratified"]
            if not isinstance(inner, dict) or set(inner) != {"male", "female"}:
                raise SchemaError("stratified sex_scheme must be {'male': id, 'female': id}")
            if not all(isinstance(v, str) for v in inner.values()):
                raise SchemaError("stratified equation ids must be strings")
            return cls("stratified", inner["male"], inner["female"])
        raise SchemaError(f"malformed sex_scheme: {value!r}")

    def __str__(self):
        if self.kind == "stratified":
            return f"stratified(male={self.male_id}, female={self.female_id})"
        return self.kind


@dataclass(frozen=True)
class ReportedError:
    """Published accuracy figure. Disclosure only; never used in computation."""

    metric: str
    value: float


@dataclass(frozen=True)
class EquationSpec:
    """A published (or refitted) FFM regression with its provenance."""

    id: str
    terms: tuple  # ((covariate, coefficient), ...)
    sex_scheme: SexScheme = field(default_factory=SexScheme.none)
    population: str = ""
    gold_standard: str = ""
    valid_ranges: tuple = ()  # ((key, (low, high)), ...)
    reported_error: ReportedError | None = None
    assumptions: tuple = ()

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id.strip():
            raise SchemaError("equation id must be a nonempty string")
        terms = tuple((str(name), float(coef)) for name, coef in self.terms)
        names = [name for name, _ in terms]
        for name in names:
            if name not in COVARIATES:
                raise UnknownCovariateError(
                    f"unknown covariate {name!r}; allowed: {', '.join(COVARIATES)}"
                )
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConsistencyError(f"duplicate coefficient for {', '.join(dupes)}")
        for name, coef in terms:
            if not math.isfinite(coef):
                raise ParseError(f"coefficient for {name} is not finite")
        if "intercept" not in names:
            raise SchemaError(f"equation {self.id!r} has no intercept term")
        has_sex = "sex_offset" in names
        if self.sex_scheme.kind == "offset" and not has_sex:
            raise ConsistencyError("sex_scheme 'offset' requires a sex_offset term")
        if self.sex_scheme.kind != "offset" and has_sex:
            raise ConsistencyError(
                f"sex_scheme {self.sex_scheme.kind!r} must not have a sex_offset term"
            )
        if self.sex_scheme.kind == "stratified" and self.id not in (
            self.sex_scheme.male_id,
            self.sex_scheme.female_id,
        ):
            raise ConsistencyError(
                f"stratified equation {self.id!r} must be one of its own pair "
                f"({self.sex_scheme.male_id}, {self.sex_scheme.female_id})"
            )
        ranges = []
        for key, bounds in self.valid_ranges:
            if key not in RANGE_KEYS:
                raise UnknownCovariateError(
                    f"unknown valid_ranges key {key!r}; allowed: {', '.join(RANGE_KEYS)}"
                )
            low, high = (float(b) for b in bounds)
            if not (math.isfinite(low) and math.isfinite(high)) or low > high:
                raise ConsistencyError(f"valid range for {key} is empty: [{low}, {high}]")
            ranges.append((key, (low, high)))
        keys = [k for k, _ in ranges]
        if len(set(keys)) != len(keys):
            raise ConsistencyError("duplicate valid_ranges key")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "valid_ranges", tuple(ranges))
        object.__setattr__(self, "assumptions", tuple(str(a) for a in self.assumptions))

    @property
    def coefficients(self):
        return dict(self.terms)

    def coefficient(self, covariate):
        return self.coefficients.get(covariate, 0.0)

    @property
    def covariates(self):
        return tuple(name for name, _ in self.terms)

    @property
    def ranges(self):
        return dict(self.valid_ranges)

    def formula(self):
        """Human-readable formula, e.g. ``FFM = -4.104 + 0.518*h2_over_r + ...``."""
        parts = []
        for name, coef in self.terms:
            if name == "intercept":
                parts.append(f"{coef:g}")
            else:
                parts.append(f"{coef:g}*{name}")
        return "FFM = " + " + ".join(parts).replace("+ -", "- ")


def serialize_spec(spec: EquationSpec) -> str:
    """Render a spec as a deterministic JSON document."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "id": spec.id,
        "terms": [{"covariate": n, "coefficient": c} for n, c in spec.terms],
        "sex_scheme": spec.sex_scheme.to_json(),
        "population": spec.population,
        "gold_standard": spec.gold_standard,
        "valid_ranges": {k: [lo, hi] for k, (lo, hi) in spec.valid_ranges},
        "reported_error": (
            None
            if spec.reported_error is None
            else {"metric": spec.reported_error.metric, "value": spec.reported_error.value}
        ),
        "assumptions": list(spec.assumptions),
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _text(value, where):
    if value is None:
        return ""
    if not isinstance(value, str):
        raise SchemaError(f"{where} must be a string")
    return value


def parse_spec(document: str | bytes) -> EquationSpec:
    """Parse and validate one equation document (JSON text)."""
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"equation document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("equation document must be a JSON object")

    missing = _REQUIRED_KEYS - doc.keys()
    if missing:
        raise SchemaError(f"missing required key(s): {', '.join(sorted(missing))}")
    unknown = doc.keys() - _REQUIRED_KEYS - _OPTIONAL_KEYS
    if unknown:
        raise SchemaError(f"unsupported key(s): {', '.join(sorted(unknown))}")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}")

    if not isinstance(doc["id"], str):
        raise SchemaError("id must be a string")
    if not isinstance(doc["terms"], list):
        raise SchemaError("terms must be an array")
    terms = []
    for i, term in enumerate(doc["terms"]):
        if not isinstance(term, dict) or set(term) != {"covariate", "coefficient"}:
            raise SchemaError(f"terms[{i}] must be {{covariate, coefficient}}")
        if not isinstance(term["covariate"], str):
            raise SchemaError(f"terms[{i}].covariate must be a string")
        terms.append((term["covariate"], _number(term["coefficient"], f"terms[{i}].coefficient")))

    ranges = doc.get("valid_ranges") or {}
    if not isinstance(ranges, dict):
        raise SchemaError("valid_ranges must be an object")
    valid_ranges = []
    for key, bounds in ranges.items():
        if not isinstance(bounds, list) or len(bounds) != 2:
            raise SchemaError(f"valid_ranges.{key} must be [low, high]")
        valid_ranges.append(
            (key, tuple(_number(b, f"valid_ranges.{key}") for b in bounds))
        )

    reported = doc.get("reported_error")
    if reported is not None:
        if not isinstance(reported, dict) or set(reported) != {"metric", "value"}:
            raise SchemaError("reported_error must be {metric, value} or null")
        reported = ReportedError(
            _text(reported["metric"], "reported_error.metric"),
            _number(reported["value"], "reported_error.value"),
        )

    assumptions = doc.get("assumptions") or []
    if not isinstance(assumptions, list) or not all(isinstance(a, str) for a in assumptions):
        raise SchemaError("assumptions must be an array of strings")

    return EquationSpec(
        id=doc["id"],
        terms=tuple(terms),
        sex_scheme=SexScheme.from_json(doc["sex_scheme"]),
        population=_text(doc.get("population"), "population"),
        gold_standard=_text(doc.get("gold_standard"), "gold_standard"),
        valid_ranges=tuple(valid_ranges),
        reported_error=reported,
        assumptions=tuple(assumptions),
    )


def load_spec(path) -> EquationSpec:
    return parse_spec(Path(path).read_text(encoding="utf-8"))


KYLE2001 = EquationSpec(
    id="kyle2001",
    terms=(
        ("intercept", -4.104),
        ("h2_over_r", 0.518),
        ("weight", 0.231),
        ("reactance", 0.130),
        ("sex_offset", 4.229),
    ),
    sex_scheme=SexScheme.offset(),
    population="",
    gold_standard="DXA (dual x-ray absorptiometry)",
    assumptions=(
        "units: height in cm, weight in kg, resistance and reactance in ohm",
        "sex coded as a single 0/1 offset: male = 1, female = 0",
        "coefficients are a least-squares fit against the gold standard in the source population",
    ),
)


class Registry(Mapping):
    """Immutable id -> :class:`EquationSpec` mapping."""

    def __init__(self, specs=()):
        table = {}
        for spec in specs:
            if spec.id in table:
                raise ConsistencyError(f"duplicate equation id {spec.id!r}")
            table[spec.id] = spec
        self._specs = MappingProxyType(table)

    def __getitem__(self, key):
        try:
            return self._specs[key]
        except KeyError:
            raise NotFoundError(f"no equation with id {key!r}") from None

    def __iter__(self):
        return iter(self._specs)

    def __len__(self):
        return len(self._specs)

    def __repr__(self):
        return f"Registry({sorted(self._specs)})"

    def __reduce__(self):
        return (Registry, (tuple(self._specs.values()),))

    def __deepcopy__(self, memo):
        return self  # immutable

    def with_specs(self, *specs):
        """Return a new registry with ``specs`` added (ids must be new)."""
        return Registry([*self._specs.values(), *specs])

    def with_directory(self, directory):
        """Return a new registry extended with every ``*.json`` spec in ``directory``."""
        paths = sorted(Path(directory).glob("*.json"))
        return self.with_specs(*(load_spec(p) for p in paths))


def builtin_registry() -> Registry:
    return Registry([KYLE2001])


_SCHEME_TEXT = {
    "offset": (
        "single equation with a 0/1 sex term (male = 1, female = 0); flipping the code "
        "shifts fat-free mass by the sex coefficient"
    ),
    "none": "no sex or gender input; the estimate is the same for every gender entry",
}

_BASE_ASSUMPTIONS = (
    "body treated as a homogeneous cylinder whose length is proportional to height",
    "fat-free mass assumed ~73% water with a fixed density",
    "fat mass = weight - fat-free mass (two-compartment model)",
)


@dataclass(frozen=True)
class TransparencyReport:
    """Disclosure sheet for one equation; every absent field reads 'not reported'."""

    equation_id: str
    formula: str
    terms: tuple
    sex_scheme: str
    sex_scheme_explanation: str
    population: str
    gold_standard: str
    assumptions: tuple
    reported_error: str
    valid_ranges: tuple

    def as_dict(self):
        return {
            "equation_id": self.equation_id,
            "formula": self.formula,
            "terms": [list(t) for t in self.terms],
            "sex_scheme": self.sex_scheme,
            "sex_scheme_explanation": self.sex_scheme_explanation,
            "population": self.population,
            "gold_standard": self.gold_standard,
            "assumptions": list(self.assumptions),
            "reported_error": self.reported_error,
            "valid_ranges": [list(r) for r in self.valid_ranges],
        }

    def render(self):
        lines = [
            f"equation: {self.equation_id}",
            f"formula: {self.formula}",
            "terms:",
        ]
        lines += [f"  {name} ({unit}): {coef}" for name, coef, unit in self.terms]
        lines += [
            f"sex scheme: {self.sex_scheme}",
            f"  {self.sex_scheme_explanation}",
            f"population: {self.population}",
            f"gold standard: {self.gold_standard}",
            f"reported error: {self.reported_error}",
            "valid ranges:",
        ]
        if self.valid_ranges:
            lines += [f"  {key}: {rng}" for key, rng in self.valid_ranges]
        else:
            lines.append(f"  {NOT_REPORTED}")
        lines.append("assumptions:")
        lines += [f"  - {a}" for a in self.assumptions]
        return "\n".join(lines)


def describe_transparency(spec: EquationSpec) -> TransparencyReport:
    scheme = spec.sex_scheme
    if scheme.kind == "stratified":
        explanation = (
            f"separate equations per binary sex code: male -> {scheme.male_id}, "
            f"female -> {scheme.female_id}"
        )
    else:
        explanation = _SCHEME_TEXT[scheme.kind]
    if spec.reported_error is None:
        reported = NOT_REPORTED
    else:
        reported = f"{spec.reported_error.metric} {spec.reported_error.value}"
    ranges = tuple(
        (key, f"[{lo:g}, {hi:g}] {RANGE_UNITS[key]}") for key, (lo, hi) in spec.valid_ranges
    )
    return TransparencyReport(
        equation_id=spec.id,
        formula=spec.formula(),
        terms=tuple((n, c, COVARIATE_UNITS[n]) for n, c in spec.terms),
        sex_scheme=str(scheme),
        sex_scheme_explanation=explanation,
        population=spec.population.strip() or NOT_REPORTED,
        gold_standard=spec.gold_standard.strip() or NOT_REPORTED,
        assumptions=_BASE_ASSUMPTIONS + (spec.assumptions or (f"equation-specific: {NOT_REPORTED}",)),
        reported_error=reported,
        valid_ranges=ranges,
    )
