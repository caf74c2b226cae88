"""Cylinder conduction model and two-compartment composition identities.

Everything here is a pure function of its arguments. Units follow the
physiological convention: lengths in cm, volumes in cm^3 (or L), masses in kg,
resistance in ohm, resistivity in ohm*cm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .exceptions import DomainError

__all__ = [
    "CylinderParams",
    "HydrationConstant",
    "CompositionBreakdown",
    "DEFAULT_HYDRATION",
    "FLAG_NEGATIVE_FM",
    "FLAG_IMPLAUSIBLE_BF",
    "WATER_DENSITY_KG_PER_L",
    "cylinder_resistance",
    "tbw_from_impedance",
    "ffm_from_tbw",
    "body_composition",
]

FLAG_NEGATIVE_FM = "implausible_negative_fm"
FLAG_IMPLAUSIBLE_BF = "implausible_bf"

# 1 L of body water is taken as 1 kg.
WATER_DENSITY_KG_PER_L = 1.0


def _finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class CylinderParams:
    """Homogeneous conductor of constant cross-section."""

    resistivity: float  # ohm*cm
    length: float  # cm
    area: float  # cm^2

    def __post_init__(self):
        rho = _finite("resistivity", self.resistivity)
        length = _finite("length", self.length)
        area = _finite("area", self.area)
        if rho < 0:
            raise DomainError(f"resistivity must be >= 0, got {rho}")
        if length <= 0:
            raise DomainError(f"length must be > 0, got {length}")
        if area <= 0:
            raise DomainError(f"area must be > 0, got {area}")
        object.__setattr__(self, "resistivity", rho)
        object.__setattr__(self, "length", length)
        object.__setattr__(self, "area", area)

    @property
    def volume(self):
        return self.length * self.area


@dataclass(frozen=True)
class HydrationConstant:
    """Water fraction of fat-free mass.

    Defaults to 0.73. The companion bone fraction (~0.07) is carried as
    metadata and never enters a computation.
    """

    fraction: float = 0.73
    bone_fraction: float = 0.07

    def __post_init__(self):
        frac = _finite("hydration fraction", self.fraction)
        if not 0.0 < frac <= 1.0:
            raise DomainError(f"hydration fraction must be in (0, 1], got {frac}")
        object.__setattr__(self, "fraction", frac)


DEFAULT_HYDRATION = HydrationConstant()


@dataclass(frozen=True)
class CompositionBreakdown:
    """Fat-free mass, fat mass and body-fat percentage for one weight.

    ``ffm_kg + fm_kg == weight`` holds exactly in float arithmetic whenever
    ``-weight <= ffm_kg <= 2 * weight``; see :func:`body_composition`.
    """

    ffm_kg: float
    fm_kg: float
    bf_percent: float
    flags: frozenset = field(default_factory=frozenset)

    @property
    def weight_kg(self):
        return self.ffm_kg + self.fm_kg

    @property
    def plausible(self):
        return not self.flags

    def to_dict(self):
        return {
            "ffm_kg": self.ffm_kg,
            "fm_kg": self.fm_kg,
            "bf_percent": self.bf_percent,
            "flags": sorted(self.flags),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            ffm_kg=float(data["ffm_kg"]),
            fm_kg=float(data["fm_kg"]),
            bf_percent=float(data["bf_percent"]),
            flags=frozenset(data.get("flags", ())),
        )


def cylinder_resistance(params: CylinderParams) -> float:
    """Resistance of a homogeneous cylinder, ``rho * L / A`` in ohm."""
    return params.resistivity * params.length / params.area


def tbw_from_impedance(resistivity: float, length: float, resistance: float) -> float:
    """Conductive volume ``rho * L**2 / R`` in cm^3 (total body water)."""
    rho = _finite("resistivity", resistivity)
    length = _finite("length", length)
    resistance = _finite("resistance", resistance)
    if resistance <= 0:
        raise DomainError(f"resistance must be > 0, got {resistance}")
    if length <= 0:
        raise DomainError(f"length must be > 0, got {length}")
    if rho < 0:
        raise DomainError(f"resistivity must be >= 0, got {rho}")
    return rho * length * length / resistance


def ffm_from_tbw(tbw_liters: float, hydration: HydrationConstant = DEFAULT_HYDRATION) -> float:
    """Fat-free mass in kg implied by a body-water volume in litres."""
    tbw = _finite("tbw_liters", tbw_liters)
    if tbw < 0:
        raise DomainError(f"total body water must be >= 0, got {tbw}")
    return tbw * WATER_DENSITY_KG_PER_L / hydration.fraction


def _exact_split(weight, ffm):
    """Return ``(fm, ffm')`` with ``fm + ffm' == weight`` in float arithmetic.

    ``ffm'`` differs from ``ffm`` by at most one ulp of ``weight``. Exactness
    is guaranteed for ``-weight <= ffm <= 2 * weight``; outside that band
    binary64 may have no such pair and the plain difference is returned.
    """
    fm = weight - ffm
    # Sterbenz: for fm in [weight/2, 2*weight] the back-subtraction is exact.
    snapped = weight - fm
    if fm + snapped == weight:
        return fm, snapped
    # Put fm on the ulp grid of weight so that weight - fm is representable.
    unit = Fraction(math.ulp(weight))
    steps = round((Fraction(weight) - Fraction(ffm)) / unit)
    grid_fm = float(steps * unit)
    grid_ffm = float(Fraction(weight) - steps * unit)
    if grid_fm + grid_ffm == weight:
        return grid_fm, grid_ffm
    return fm, ffm


def body_composition(weight_kg: float, ffm_kg: float) -> CompositionBreakdown:
    """Split body weight into FFM and FM and compute BF%.

    Implausible results are flagged, never clamped.
    """
    weight = _finite("weight_kg", weight_kg)
    ffm = _finite("ffm_kg", ffm_kg)
    if weight <= 0:
        raise DomainError(f"weight must be > 0, got {weight}")
    fm, ffm = _exact_split(weight, ffm)
    bf = 100.0 * fm / weight
    flags = set()
    if fm < 0:
        flags.add(FLAG_NEGATIVE_FM)
    if not 0.0 <= bf <= 100.0:
        flags.add(FLAG_IMPLAUSIBLE_BF)
    return CompositionBreakdown(ffm_kg=ffm, fm_kg=fm, bf_percent=bf, flags=frozenset(flags))
