import numpy as np
import pytest

from pdpmf.data import SparseRatings
from pdpmf.dp import run_dp_pmf
from pdpmf.exceptions import SpecificationCoverageError, ValidationError
from pdpmf.pdp import (
    GroupSpecParams,
    PrivacySpecification,
    ThresholdPolicy,
    generate_spec,
    keep_probability,
    read_spec_csv,
    resolve_threshold,
    run_pdp_pmf,
    sample_ratings,
    write_spec_csv,
)
from pdpmf.pmf import TrainConfig

from conftest import random_instance

# (e^0.2 - 1) / (e^0.445 - 1), frozen from an independent evaluation
PI_02_0445 = 0.39501629075108613


def _uniform_data(n):
    return SparseRatings(n, 1, np.arange(n), np.zeros(n), np.full(n, 3.0))


def test_keep_probability_oracle():
    assert keep_probability([0.2], 0.445)[0] == pytest.approx(PI_02_0445, rel=1e-12)
    np.testing.assert_array_equal(keep_probability([0.5, 0.9, 0.445], 0.445), [1.0, 1.0, 1.0])


def test_keep_probability_boundary():
    t = 0.4
    assert keep_probability([t - 1e-12], t)[0] == pytest.approx(1.0, abs=1e-9)


def test_keep_probability_monotone():
    eps = np.linspace(0.01, 2.0, 60)
    ts = np.linspace(0.05, 2.0, 40)
    grid = np.array([keep_probability(eps, t) for t in ts])
    assert np.all(np.diff(grid, axis=1) >= 0)  # non-decreasing in eps
    assert np.all(np.diff(grid, axis=0) <= 0)  # non-increasing in t
    assert grid.min() > 0 and grid.max() <= 1


class TestSpec:
    def test_default_mean(self):
        p = GroupSpecParams(seed=3)
        assert p.expected_mean() == pytest.approx(0.393)
        spec = generate_spec(_uniform_data(100_000), p)
        assert abs(spec.epsilons.mean() - 0.393) <= 0.01 * 0.393

    def test_all_conservative(self):
        spec = generate_spec(_uniform_data(5000), GroupSpecParams(f_c=1.0, f_m=0.0))
        assert spec.epsilons.min() >= 0.1 and spec.epsilons.max() < 0.2

    def test_all_liberal(self):
        spec = generate_spec(_uniform_data(5000), GroupSpecParams(f_c=0.0, f_m=0.0))
        assert np.all(spec.epsilons == 1.0)

    def test_group_ranges(self):
        spec = generate_spec(_uniform_data(20_000), GroupSpecParams())
        for g, (lo, hi) in enumerate([(0.1, 0.2), (0.2, 1.0)]):
            e = spec.epsilons[spec.groups == g]
            assert e.min() >= lo and e.max() < hi
        assert np.all(spec.epsilons[spec.groups == 2] == 1.0)

    def test_params_validated(self):
        with pytest.raises(ValidationError):
            GroupSpecParams(f_c=0.7, f_m=0.4)
        with pytest.raises(ValidationError):
            GroupSpecParams(eps_c=0.3, eps_m=0.2)

    def test_nonpositive_budget_rejected(self):
        with pytest.raises(ValidationError):
            PrivacySpecification([0.1, 0.0])

    def test_csv_round_trip(self, tmp_path, rng):
        data, _ = random_instance(rng, n_users=12, n_items=9)
        spec = generate_spec(data, GroupSpecParams(seed=2))
        path = tmp_path / "spec.csv"
        write_spec_csv(data, spec, path, header_lines=["generated"])
        back = read_spec_csv(path, data)
        np.testing.assert_array_equal(back.epsilons, spec.epsilons)

    def test_csv_missing_entry(self, tmp_path):
        data = SparseRatings(2, 1, [0, 1], [0, 0], [3.0, 4.0])
        path = tmp_path / "spec.csv"
        path.write_text("user,item,epsilon\n0,0,0.5\n")
        with pytest.raises(SpecificationCoverageError):
            read_spec_csv(path, data)


class TestThreshold:
    spec = PrivacySpecification([0.1, 0.2, 0.9])

    def test_policies(self):
        assert resolve_threshold(self.spec, ThresholdPolicy("mean")) == pytest.approx(0.4)
        assert resolve_threshold(self.spec, ThresholdPolicy("max")) == 0.9
        assert resolve_threshold(self.spec, ThresholdPolicy.parse("0.5")) == 0.5

    def test_fixed_outside_range(self):
        with pytest.raises(ValidationError):
            resolve_threshold(self.spec, ThresholdPolicy("fixed", 0.05))
        with pytest.raises(ValidationError):
            resolve_threshold(self.spec, ThresholdPolicy("fixed", 1.5))

    def test_parse_and_str(self):
        assert str(ThresholdPolicy.parse("max")) == "max"
        assert str(ThresholdPolicy.parse("0.7")) == "fixed(0.7)"
        with pytest.raises(ValidationError):
            ThresholdPolicy("median")


class TestSampling:
    def test_keep_rate_within_three_sigma(self):
        n = 100_000
        for eps, t in [(0.2, 0.445), (0.1, 1.0), (0.6, 0.9)]:
            spec = PrivacySpecification(np.r_[np.full(n, eps), t])
            _, kept = sample_ratings(_uniform_data(n + 1), spec, t, seed=11)
            p = float(keep_probability([eps], t)[0])
            rate = kept[:n].mean()
            assert abs(rate - p) <= 3 * np.sqrt(p * (1 - p) / n)

    def test_above_threshold_always_kept(self):
        n = 10_000
        spec = PrivacySpecification(np.r_[np.full(n, 0.8), 0.5])
        _, kept = sample_ratings(_uniform_data(n + 1), spec, 0.5, seed=1)
        assert kept[:n].all()

    def test_sample_is_subset(self, rng):
        data, _ = random_instance(rng, n_users=25, n_items=20)
        spec = generate_spec(data, GroupSpecParams())
        sampled, kept = sample_ratings(data, spec, 0.5, seed=4)
        assert sampled.entry_set() <= data.entry_set()
        assert len(sampled) == kept.sum()
        assert sampled.shape == data.shape

    def test_coverage_mismatch(self, rng):
        data, _ = random_instance(rng)
        with pytest.raises(SpecificationCoverageError):
            sample_ratings(data, PrivacySpecification(np.ones(len(data) + 1)), 1.0, seed=0)

    def test_deterministic(self, rng):
        data, _ = random_instance(rng, n_users=25, n_items=20)
        spec = generate_spec(data, GroupSpecParams())
        a = sample_ratings(data, spec, 0.4, seed=8)[1]
        b = sample_ratings(data, spec, 0.4, seed=8)[1]
        np.testing.assert_array_equal(a, b)


class TestRunPDP:
    cfg = TrainConfig(d=3, gamma=2.0, k1=10, k2=10, seed=6)

    def test_degenerate_threshold_equals_uniform_dp(self, rng):
        data, _ = random_instance(rng, n_users=20, n_items=15)
        spec = generate_spec(data, GroupSpecParams(seed=1))
        t = float(spec.epsilons.min())
        pdp = run_pdp_pmf(data, spec, ThresholdPolicy("fixed", t), self.cfg)
        dp = run_dp_pmf(data, t, self.cfg)
        assert pdp.config["n_sampled"] == len(data)
        assert pdp.V.tobytes() == dp.V.tobytes()

    def test_all_liberal_keeps_everything(self, rng):
        data, _ = random_instance(rng, n_users=20, n_items=15)
        spec = generate_spec(data, GroupSpecParams(f_c=0.0, f_m=0.0))
        model = run_pdp_pmf(data, spec, ThresholdPolicy("mean"), self.cfg)
        assert model.config["n_sampled"] == len(data)
        assert model.config["threshold"] == 1.0

    def test_metadata(self, rng):
        data, _ = random_instance(rng, n_users=20, n_items=15)
        spec = generate_spec(data, GroupSpecParams())
        model = run_pdp_pmf(data, spec, ThresholdPolicy("max"), self.cfg)
        assert model.mode == "pdp" and model.publishable == ("V",)
        assert model.config["threshold_policy"] == "max"
        assert model.config["n_train"] == len(data)
