import numpy as np
import pytest

from adequacy.reliability import (ReliabilityReport, compare_is_oos, estimate,
                                  evaluate_in_sample, shed_distribution,
                                  validate)
from adequacy.scenario import sample_indexed
from adequacy.synth import small_system

from test_dispatch import conv, tiny


class TestEstimate:
    def test_frozen_arithmetic(self):
        rep = estimate(np.array([0.0, 0.0, 10.0]), np.array([0, 0, 1]))
        assert rep.n == 3
        assert rep.eue_mean == pytest.approx(10.0 / 3.0)
        # s = 10/sqrt(3) (ddof=1), so hw = 1.96 s / sqrt(3) = 1.96 * 10/3
        assert rep.eue_half_width == pytest.approx(6.5333333, abs=1e-6)
        assert rep.eue_rel_width == pytest.approx(3.92, abs=1e-9)
        assert rep.lole_mean == pytest.approx(1.0 / 3.0)

    def test_zero_mean_relative_width_none(self):
        rep = estimate(np.zeros(5), np.zeros(5))
        assert rep.eue_mean == 0.0
        assert rep.eue_half_width == 0.0
        assert rep.eue_rel_width is None
        assert rep.lole_rel_width is None

    def test_requires_two_samples(self):
        with pytest.raises(ValueError):
            estimate(np.array([1.0]), np.array([1]))

    def test_dict_round_trip(self, tmp_path):
        rep = estimate(np.array([1.0, 3.0]), np.array([1, 0]),
                       label="out-of-sample", seed=7)
        p = tmp_path / "r.json"
        rep.to_json(p)
        import json
        back = ReliabilityReport.from_dict(json.loads(p.read_text()))
        assert back.label == "out-of-sample"
        assert back.eue_mean == rep.eue_mean
        assert back.eue_half_width == rep.eue_half_width
        assert back.seed == 7


class TestValidate:
    def test_deterministic_closed_form(self):
        sys_ = tiny([10.0, 5.0], [conv("g", 20)])
        # x = 4: every scenario sheds (10-4) + (5-4) = 7 exactly
        rep, traces = validate(sys_, np.array([4.0]), 6, master_seed=1)
        assert rep.eue_mean == pytest.approx(7.0, abs=1e-6)
        assert rep.eue_half_width == pytest.approx(0.0, abs=1e-6)
        assert rep.lole_mean == pytest.approx(1.0)
        assert rep.n == 6
        assert rep.label == "out-of-sample"
        assert traces == []

    def test_ample_capacity_zero_everything(self):
        sys_ = tiny([10.0, 5.0], [conv("g", 20)])
        rep, _ = validate(sys_, np.array([20.0]), 4, master_seed=1)
        assert rep.eue_mean == 0.0
        assert rep.lole_mean == 0.0
        assert rep.eue_rel_width is None

    def test_same_seed_reproduces(self):
        sys_ = small_system(T=24)
        x = 0.5 * sys_.capacity_upper()
        r1, _ = validate(sys_, x, 20, master_seed=9)
        r2, _ = validate(sys_, x, 20, master_seed=9)
        assert r1.eue_mean == r2.eue_mean
        assert r1.lole_mean == r2.lole_mean
        r3, _ = validate(sys_, x, 20, master_seed=10)
        assert r3.eue_mean != r1.eue_mean

    def test_threads_do_not_change_estimates(self):
        sys_ = small_system(T=24)
        x = 0.5 * sys_.capacity_upper()
        r1, _ = validate(sys_, x, 16, master_seed=2, threads=1)
        r2, _ = validate(sys_, x, 16, master_seed=2, threads=4)
        assert r1.eue_mean == r2.eue_mean

    def test_in_sample_uses_given_scenarios(self):
        sys_ = small_system(T=24)
        x = 0.4 * sys_.capacity_upper()
        scens = [sample_indexed(sys_, 5, i) for i in range(12)]
        rep = evaluate_in_sample(sys_, x, scens)
        rep2 = evaluate_in_sample(sys_, x, scens)
        assert rep.label == "in-sample"
        assert rep.eue_mean == rep2.eue_mean
        assert rep.n == 12

    def test_fuel_binding_counted(self):
        sys_ = tiny([10.0] * 4, [conv("g", 10, k_day=0.5)])
        rep, traces = validate(sys_, np.array([10.0]), 3, master_seed=0,
                               collect_traces=True)
        assert rep.fuel_binding_count == 3
        assert len(traces) == 3


class TestComparison:
    def test_overlapping_reports(self):
        def rep(mean, hw, label):
            return ReliabilityReport(
                label=label, n=5000, eue_mean=mean, eue_half_width=hw,
                lole_mean=1.0, lole_half_width=0.2, eue_rel_width=None,
                lole_rel_width=None, u_samples=np.array([]),
                shed_by_hour_of_day=np.zeros(24))
        out = compare_is_oos(rep(91.70, 11.14, "in-sample"),
                             rep(82.24, 9.11, "out-of-sample"))
        assert out["eue"]["overlap"] is True
        assert out["eue"]["diff_in_pooled_se"] == pytest.approx(1.2884449,
                                                                abs=1e-6)
        assert out["lole"]["overlap"] is True

    def test_disjoint_reports(self):
        def rep(mean, hw):
            return ReliabilityReport(
                label="x", n=100, eue_mean=mean, eue_half_width=hw,
                lole_mean=mean, lole_half_width=hw, eue_rel_width=None,
                lole_rel_width=None, u_samples=np.array([]),
                shed_by_hour_of_day=np.zeros(24))
        out = compare_is_oos(rep(0.0, 1.0), rep(10.0, 1.0))
        assert out["eue"]["overlap"] is False
        assert out["eue"]["diff_in_pooled_se"] > 3.0


class TestShedDistribution:
    def test_bins_by_hour_of_day(self):
        traces = [
            [{"hour": 0, "shed": 1.0}, {"hour": 25, "shed": 2.0}],
            [{"hour": 1, "shed": 4.0}],
        ]
        out = shed_distribution(traces, hours_per_day=24,
                                fuel_binding_flags=[True, False])
        assert out["shed_by_hour_of_day"][0] == 1.0
        assert out["shed_by_hour_of_day"][1] == pytest.approx(6.0)
        np.testing.assert_allclose(out["scenario_totals"], [3.0, 4.0])
        assert out["fuel_binding_count"] == 1

    def test_empty_traces(self):
        out = shed_distribution([])
        assert out["shed_by_hour_of_day"].sum() == 0.0
        assert len(out["scenario_totals"]) == 0
        assert out["fuel_binding_count"] == 0
