import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from openbia.equations import EquationSpec, builtin_registry
from openbia.estimator import FORCE_MALE
from openbia.exceptions import InputError, UndefinedMetricError
from openbia.refit import CohortConfig, ingest_dataset, synthesize_cohort
from openbia.validation import (
    UNLABELED,
    agreement_metrics,
    classify_against_threshold,
    subgroup_disaggregate,
)


def brute_force(est, ref):
    n = len(est)
    diffs = [e - r for e, r in zip(est, ref)]
    mape = sum(abs(d) / r for d, r in zip(diffs, ref)) * 100 / n
    bias = sum(diffs) / n
    sd = math.sqrt(sum((d - bias) ** 2 for d in diffs) / (n - 1)) if n > 1 else 0.0
    return mape, bias, sd, (bias - 1.96 * sd, bias + 1.96 * sd)


class TestAgreementMetrics:
    def test_small_example(self):
        r = agreement_metrics([50, 60], [50, 50])
        assert r.mape_percent == pytest.approx(10.0)
        assert r.mean_bias == pytest.approx(5.0)
        assert r.sd_bias == pytest.approx(math.sqrt(50))

    def test_perfect_agreement(self):
        r = agreement_metrics([40, 50, 60], [40, 50, 60])
        assert (r.mape_percent, r.mean_bias, r.sd_bias) == (0, 0, 0)
        assert r.limits_of_agreement == (0, 0)

    def test_single_pair(self):
        r = agreement_metrics([51], [50])
        assert r.sd_bias == 0 and r.limits_of_agreement == (1, 1)

    @pytest.mark.parametrize("ref", [0, -1])
    def test_nonpositive_reference(self, ref):
        with pytest.raises(UndefinedMetricError):
            agreement_metrics([50, 50], [50, ref])

    def test_length_mismatch_and_empty(self):
        with pytest.raises(InputError):
            agreement_metrics([1, 2], [1])
        with pytest.raises(InputError):
            agreement_metrics([], [])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 60))
            ref = rng.uniform(20, 90, n)
            est = ref + rng.normal(0, 3, n)
            r = agreement_metrics(est, ref)
            mape, bias, sd, loa = brute_force(list(est), list(ref))
            assert r.mape_percent == pytest.approx(mape, rel=1e-10, abs=1e-10)
            assert r.mean_bias == pytest.approx(bias, rel=1e-10, abs=1e-10)
            assert r.sd_bias == pytest.approx(sd, rel=1e-10, abs=1e-10)
            assert r.limits_of_agreement == pytest.approx(loa, rel=1e-10, abs=1e-10)


class TestThreshold:
    @pytest.mark.parametrize("mape, passed", [(25.0, False), (1.5, True), (0.0, True), (1.5000001, False)])
    def test_cases(self, mape, passed):
        assert classify_against_threshold(mape, 1.5).passed is passed

    def test_default_threshold(self):
        assert classify_against_threshold(1.5).passed
        assert classify_against_threshold(25.0).label == "fail"

    @given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 100))
    def test_monotone(self, a, b, threshold):
        lo, hi = sorted((a, b))
        if classify_against_threshold(hi, threshold).passed:
            assert classify_against_threshold(lo, threshold).passed

    def test_negative_rejected(self):
        with pytest.raises(InputError):
            classify_against_threshold(-1)


@pytest.fixture(scope="module")
def two_group_report():
    ds = synthesize_cohort(
        CohortConfig(n=400, seed=5, group_labels=("A", "B"), group_ref_offsets={"B": 5.0})
    )
    return ds, subgroup_disaggregate(ds, builtin_registry()["kyle2001"])


class TestSubgroups:
    def test_offset_group_biases(self, two_group_report):
        _, report = two_group_report
        groups = report.subgroups["group_cohort"]
        for label, expected in (("A", 0.0), ("B", -5.0)):
            g = groups[label]
            assert abs(g.mean_bias - expected) <= 3 * g.sd_bias / math.sqrt(g.n)

    def test_weighted_bias_equals_overall(self, two_group_report):
        _, report = two_group_report
        for parts in report.subgroups.values():
            weighted = sum(g.n * g.mean_bias for g in parts.values()) / report.n
            assert weighted == pytest.approx(report.mean_bias, abs=1e-10)

    def test_rows_listed(self, two_group_report):
        ds, report = two_group_report
        assert len(report.rows) == len(ds) and not report.failed_rows
        assert report.rows[0].residual == pytest.approx(report.rows[0].estimate - report.rows[0].reference)

    def test_sex_subgroups(self, two_group_report):
        _, report = two_group_report
        assert set(report.subgroups["sex"]) == {"male", "female"}

    def test_unlabeled_and_nonbinary(self):
        header = "height_cm,weight_kg,age_years,athlete,sex,resistance_ohm,reactance_ohm,ref_ffm_kg,group_site\n"
        ds = ingest_dataset(header + "170,70,30,0,m,500,50,52,A\n170,70,30,0,x,500,50,50,\n")
        report = subgroup_disaggregate(ds, builtin_registry()["kyle2001"])
        assert set(report.subgroups["group_site"]) == {"A", UNLABELED}
        # The nonbinary row is scored at its interval midpoint.
        assert report.rows[1].estimate == pytest.approx(50.6209, abs=1e-4)

    def test_single_group(self):
        ds = synthesize_cohort(CohortConfig(n=10, seed=1, group_labels=("only",)))
        report = subgroup_disaggregate(ds, builtin_registry()["kyle2001"], FORCE_MALE)
        assert list(report.subgroups["group_cohort"]) == ["only"]
        assert report.subgroups["group_cohort"]["only"].mean_bias == pytest.approx(report.mean_bias)

    def test_failed_rows_collected(self):
        from openbia.equations import SexScheme

        spec = EquationSpec("m_only", (("intercept", 1.0), ("weight", 0.7)), SexScheme.stratified("m_only", "f_missing"))
        ds = synthesize_cohort(CohortConfig(n=4, seed=0))
        report = subgroup_disaggregate(ds, spec)
        assert report.n == 2
        assert [r.row for r in report.failed_rows] == [2, 4]
        assert "f_missing" in report.failed_rows[0].error

    def test_json_document(self, two_group_report):
        _, report = two_group_report
        doc = json.loads(report.to_json())
        for key in ("equation_id", "policy", "n", "mape_percent", "mean_bias", "sd_bias", "limits_of_agreement", "threshold", "subgroups", "rows"):
            assert key in doc
        assert doc["threshold"]["verdict"] in ("pass", "fail")
        assert doc["subgroups"]["group_cohort"]["B"]["n"] == 200

    def test_render(self, two_group_report):
        _, report = two_group_report
        text = report.render()
        assert "limits of agreement" in text and "subgroups by group_cohort" in text
