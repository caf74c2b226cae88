import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from openbia.core import (
    FLAG_IMPLAUSIBLE_BF,
    FLAG_NEGATIVE_FM,
    CylinderParams,
    HydrationConstant,
    body_composition,
    cylinder_resistance,
    ffm_from_tbw,
    tbw_from_impedance,
)
from openbia.exceptions import DomainError

positive = st.floats(1e-3, 1e4)


class TestCylinderResistance:
    def test_identity(self):
        assert cylinder_resistance(CylinderParams(1, 1, 1)) == 1

    def test_worked_example(self):
        # 700 * 170 / 238 = 119000 / 238 = 500
        assert cylinder_resistance(CylinderParams(700, 170, 238)) == pytest.approx(500, rel=1e-12)

    def test_zero_resistivity(self):
        assert cylinder_resistance(CylinderParams(0, 170, 238)) == 0

    @pytest.mark.parametrize("length, area", [(170, 0), (170, -1), (0, 238), (-5, 238)])
    def test_degenerate_geometry(self, length, area):
        with pytest.raises(DomainError):
            CylinderParams(700, length, area)

    def test_negative_resistivity(self):
        with pytest.raises(DomainError):
            CylinderParams(-1, 170, 238)


class TestTotalBodyWater:
    def test_worked_example(self):
        # 700 * 170**2 / 500 = 700 * 28900 / 500
        assert tbw_from_impedance(700, 170, 500) == pytest.approx(40460, rel=1e-12)

    def test_zero_resistivity(self):
        assert tbw_from_impedance(0, 170, 500) == 0

    def test_identity(self):
        assert tbw_from_impedance(1, 1, 1) == 1

    @pytest.mark.parametrize("resistance", [0, -10])
    def test_nonpositive_resistance(self, resistance):
        with pytest.raises(DomainError):
            tbw_from_impedance(700, 170, resistance)

    @given(rho=positive, length=positive, area=positive)
    def test_round_trip_recovers_volume(self, rho, length, area):
        params = CylinderParams(rho, length, area)
        resistance = cylinder_resistance(params)
        volume = tbw_from_impedance(rho, length, resistance)
        assert volume == pytest.approx(params.volume, rel=1e-9)

    @given(rho=positive, length=positive, r1=positive, r2=positive)
    def test_decreasing_in_resistance(self, rho, length, r1, r2):
        lo, hi = sorted((r1, r2))
        if lo < hi:
            assert tbw_from_impedance(rho, length, lo) > tbw_from_impedance(rho, length, hi)

    @given(rho=positive, resistance=positive, l1=positive, l2=positive)
    def test_increasing_in_length(self, rho, resistance, l1, l2):
        lo, hi = sorted((l1, l2))
        if lo < hi:
            assert tbw_from_impedance(rho, lo, resistance) < tbw_from_impedance(rho, hi, resistance)


class TestFFMFromWater:
    def test_worked_example(self):
        assert ffm_from_tbw(40.46, HydrationConstant(0.73)) == pytest.approx(55.42, abs=0.01)

    def test_full_hydration(self):
        assert ffm_from_tbw(10, HydrationConstant(1.0)) == 10

    def test_zero(self):
        assert ffm_from_tbw(0) == 0

    def test_negative_water(self):
        with pytest.raises(DomainError):
            ffm_from_tbw(-1)

    @pytest.mark.parametrize("fraction", [0, -0.1, 1.01, math.nan])
    def test_hydration_bounds(self, fraction):
        with pytest.raises(DomainError):
            HydrationConstant(fraction)

    def test_default_hydration_and_bone_metadata(self):
        h = HydrationConstant()
        assert h.fraction == 0.73
        assert h.bone_fraction == 0.07


class TestBodyComposition:
    def test_worked_example(self):
        b = body_composition(70, 52.7354)
        assert b.fm_kg == pytest.approx(17.2646, abs=1e-9)
        assert b.bf_percent == pytest.approx(24.6637, abs=1e-4)
        assert b.flags == frozenset()

    def test_all_lean(self):
        b = body_composition(70, 70)
        assert (b.fm_kg, b.bf_percent, b.flags) == (0, 0, frozenset())

    def test_ffm_above_weight_is_flagged_not_clamped(self):
        b = body_composition(70, 75)
        assert b.fm_kg == -5
        assert b.bf_percent == pytest.approx(-7.142857, abs=1e-6)
        assert FLAG_NEGATIVE_FM in b.flags

    def test_negative_ffm_flags_bf(self):
        b = body_composition(70, -1)
        assert b.flags == {FLAG_IMPLAUSIBLE_BF}
        assert b.bf_percent > 100

    @pytest.mark.parametrize("weight", [0, -70])
    def test_nonpositive_weight(self, weight):
        with pytest.raises(DomainError):
            body_composition(weight, 50)

    @given(
        weight=st.floats(10, 300),
        ratio=st.floats(-1, 2),
    )
    def test_exact_identity_in_guaranteed_band(self, weight, ratio):
        b = body_composition(weight, weight * ratio)
        assert b.ffm_kg + b.fm_kg == weight
        assert abs(b.ffm_kg - weight * ratio) <= math.ulp(weight)

    @given(weight=st.floats(10, 300), ratio=st.floats(0, 1))
    def test_bf_matches_complement_form(self, weight, ratio):
        b = body_composition(weight, weight * ratio)
        expected = 100 * (1 - b.ffm_kg / weight)
        assert b.bf_percent == pytest.approx(expected, rel=1e-12, abs=1e-12)
        assert b.bf_percent == pytest.approx(100 * b.fm_kg / (b.fm_kg + b.ffm_kg), rel=1e-12, abs=1e-12)

    @given(weight=st.floats(10, 300), ffm=st.floats(-1000, 1000))
    def test_flags_fire_exactly_on_conditions(self, weight, ffm):
        b = body_composition(weight, ffm)
        assert (FLAG_NEGATIVE_FM in b.flags) == (b.fm_kg < 0)
        assert (FLAG_IMPLAUSIBLE_BF in b.flags) == (not 0 <= b.bf_percent <= 100)
        if 0 <= b.bf_percent <= 100:
            assert not b.flags
