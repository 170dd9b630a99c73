"""Tests for correlation structures, divergences and the rank tests."""

import math

import numpy as np
import pytest

from src.data.dataset import MtsDataset
from src.errors import (
    BandwidthError,
    DegenerateVarianceError,
    EmptyInputError,
    NoSharedLabelsError,
    TooFewSamplesError,
    ZeroMatrixError,
)
from src.stats.correlation import corr_structure, corr_vector, covariance
from src.stats.distance import domain_pair_distance, sliced_wasserstein
from src.stats.divergence import coral_distance, coral_terms, linear_correlation_mmd, mmd_squared
from src.stats.hypothesis import (
    _exact_p_value,
    _normal_p_value,
    correlation_shift_test,
    mann_whitney_u,
    shift_rate,
)


def correlated_domain(rng, n, rho, n_vars=2, length=40, domain_id="domain"):
    """n samples whose variables share correlation ``rho`` across time."""
    cov = np.full((n_vars, n_vars), rho) + (1.0 - rho) * np.eye(n_vars)
    root = np.linalg.cholesky(cov)
    values = np.einsum("ij,njt->nit", root, rng.standard_normal((n, n_vars, length)))
    return MtsDataset(values, np.zeros(n, dtype=int), domain_id, 1)


class TestCovariance:
    """Population covariance and the correlation structure."""

    def test_identical_samples_have_zero_covariance(self, rng):
        x = rng.normal(size=(3, 4))
        cov, mean = covariance([x, x])
        np.testing.assert_array_equal(cov, np.zeros((3, 3)))
        np.testing.assert_array_equal(mean, x)

    def test_mirrored_pair(self, rng):
        x = rng.normal(size=(3, 5))
        cov, _ = covariance([x, -x])
        np.testing.assert_allclose(cov, x @ x.T, atol=1e-12)

    def test_monte_carlo_recovers_generator(self, rng):
        sigma = np.array([[2.0, 1.0], [1.0, 2.0]])
        draws = rng.multivariate_normal(np.zeros(2), sigma, size=10000)
        cov, _ = covariance(draws)
        assert np.max(np.abs(cov - sigma)) < 0.1

    def test_too_few_samples(self, rng):
        with pytest.raises(TooFewSamplesError):
            covariance([rng.normal(size=(2, 3))])

    def test_diagonal_covariance_gives_identity(self):
        np.testing.assert_allclose(corr_structure(np.diag([4.0, 9.0])), np.eye(2))

    def test_perfect_correlation(self):
        np.testing.assert_allclose(corr_structure(np.array([[4.0, 2.0], [2.0, 1.0]])), np.ones((2, 2)))

    def test_half_correlation(self):
        corr = corr_structure(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert corr[0, 1] == pytest.approx(0.5)

    def test_invariant_to_rescaling(self, rng):
        a = rng.normal(size=(4, 4))
        cov = a @ a.T + 0.1 * np.eye(4)
        s = np.diag(rng.uniform(0.5, 3.0, 4))
        np.testing.assert_allclose(corr_structure(s @ cov @ s), corr_structure(cov), atol=1e-10)

    def test_degenerate_variance(self):
        with pytest.raises(DegenerateVarianceError):
            corr_structure(np.diag([1.0, 0.0]))


class TestCorrVector:
    """Normalised Gram flattening."""

    def test_identity(self):
        np.testing.assert_allclose(corr_vector(np.eye(2)), [0.5, 0.0, 0.0, 0.5])

    def test_single_entry(self):
        np.testing.assert_allclose(corr_vector(np.array([[1.0, 0.0], [0.0, 0.0]])), [1.0, 0.0, 0.0, 0.0])

    def test_matches_double_loop(self, rng):
        h = rng.normal(size=(3, 5))
        norm_sq = sum(h[i, t] ** 2 for i in range(3) for t in range(5))
        expected = [sum(h[i, t] * h[j, t] for t in range(5)) / norm_sq for i in range(3) for j in range(3)]
        vec = corr_vector(h)
        np.testing.assert_allclose(vec, expected, atol=1e-12)
        assert np.trace(vec.reshape(3, 3)) == pytest.approx(1.0, abs=1e-10)

    def test_scale_invariance(self, rng):
        h = rng.normal(size=(4, 6))
        np.testing.assert_allclose(corr_vector(-3.5 * h), corr_vector(h), atol=1e-12)

    def test_zero_matrix(self):
        with pytest.raises(ZeroMatrixError):
            corr_vector(np.zeros((2, 3)))


class TestMmd:
    """Biased Gaussian-kernel MMD."""

    def test_identical_sets(self, rng):
        xs = rng.normal(size=(6, 3))
        assert mmd_squared(xs, xs.copy()) == pytest.approx(0.0, abs=1e-12)

    def test_single_zero_points(self):
        assert mmd_squared([[0.0]], [[0.0]]) == 0.0

    def test_brute_force_double_sum(self):
        xs, ys = [0.0, 1.0], [2.0]

        def k(a, b):
            return math.exp(-((a - b) ** 2) / 2.0)

        expected = (
            sum(k(a, b) for a in xs for b in xs) / 4
            + sum(k(a, b) for a in ys for b in ys) / 1
            - 2 * sum(k(a, b) for a in xs for b in ys) / 2
        )
        assert mmd_squared(np.array(xs)[:, None], np.array(ys)[:, None], bandwidth=1.0) == pytest.approx(expected)

    def test_symmetry(self, rng):
        xs, ys = rng.normal(size=(5, 2)), rng.normal(size=(4, 2)) + 1.0
        assert mmd_squared(xs, ys, 0.7) == pytest.approx(mmd_squared(ys, xs, 0.7))
        assert mmd_squared(xs, ys, 0.7) > 0

    def test_non_positive_bandwidth(self, rng):
        with pytest.raises(BandwidthError):
            mmd_squared(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), bandwidth=0.0)

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            mmd_squared(np.zeros((0, 2)), np.ones((2, 2)))


class TestCoral:
    """CORAL decomposition of the second-moment gap."""

    def test_identical_lists(self, rng):
        hs = rng.normal(size=(10, 4))
        assert coral_terms(hs, hs.copy()) == pytest.approx((0.0, 0.0), abs=1e-12)

    def test_single_vectors_same_direction(self):
        assert coral_terms([[1.0, 2.0]], [[2.0, 4.0]]) == pytest.approx((0.0, 0.0), abs=1e-12)

    @pytest.mark.parametrize("norm", ["spectral", "fro"])
    def test_triangle_bound(self, norm, rng):
        violations = 0
        for _ in range(100):
            hs = rng.normal(size=(20, 6))
            ht = rng.normal(size=(20, 6)) + rng.normal(size=6)
            l_coral, l_mean = coral_terms(hs, ht, norm)
            if linear_correlation_mmd(hs, ht, norm) > l_coral + l_mean + 1e-9:
                violations += 1
        assert violations == 0

    def test_zero_vector(self):
        with pytest.raises(ZeroMatrixError):
            coral_terms([[0.0, 0.0]], [[1.0, 0.0]])

    def test_coral_distance_zero_for_equal_covariance(self, rng):
        hs = rng.normal(size=(12, 3))
        assert coral_distance(hs, hs + 5.0) == pytest.approx(0.0, abs=1e-12)


class TestMannWhitney:
    """Two-sided rank test."""

    def test_exact_separation(self):
        result = mann_whitney_u([1, 2, 3], [4, 5, 6])
        assert result.u_statistic == 0.0
        assert result.p_value == pytest.approx(0.1)
        assert result.method == "exact"

    def test_identical_lists(self):
        result = mann_whitney_u([1.0, 2.0, 3.0, 4.0, 5.0], [1.0, 2.0, 3.0, 4.0, 5.0])
        assert result.p_value >= 0.5
        assert not result.reject

    def test_shifted_large_samples(self, rng):
        a = rng.normal(size=50)
        result = mann_whitney_u(a, rng.normal(size=50) + 10.0)
        assert result.method == "normal-approx"
        assert result.u_statistic == 0.0
        assert result.p_value < 0.001
        assert result.reject

    def test_exact_and_normal_paths_agree(self, rng):
        for _ in range(100):
            a, b = rng.normal(size=8), rng.normal(size=8)
            result = mann_whitney_u(a, b)
            ranks = np.argsort(np.argsort(np.concatenate([a, b]))) + 1.0
            normal = _normal_p_value(result.u_statistic, ranks, 8, 8)
            assert abs(_exact_p_value(result.u_statistic, 8, 8) - normal) < 0.03

    def test_p_value_in_unit_interval(self, rng):
        result = mann_whitney_u(rng.normal(size=30), rng.normal(size=12))
        assert 0.0 <= result.p_value <= 1.0
        assert result.reject == (result.p_value < 0.05)

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            mann_whitney_u([], [1.0])


class TestCorrelationShift:
    """Per-sample correlation rank test between domains."""

    def test_copy_is_not_shifted(self, rng):
        source = correlated_domain(rng, 50, 0.5)
        target = MtsDataset(source.values.copy(), source.labels, "copy", 1)
        assert not correlation_shift_test(source, target).reject

    def test_opposite_correlation_is_detected(self, rng):
        source = correlated_domain(rng, 200, 0.8, domain_id="pos")
        target = correlated_domain(rng, 200, -0.8, domain_id="neg")
        assert correlation_shift_test(source, target).reject

    @pytest.mark.slow
    def test_power_over_seeds(self):
        rejections = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            rejections += correlation_shift_test(
                correlated_domain(rng, 200, 0.8), correlated_domain(rng, 200, -0.8)
            ).reject
        assert rejections >= 18

    @pytest.mark.slow
    def test_type_one_error_is_calibrated(self):
        rng = np.random.default_rng(7)
        rejections = 0
        for _ in range(500):
            source = correlated_domain(rng, 60, 0.3, length=20)
            target = correlated_domain(rng, 60, 0.3, length=20)
            rejections += correlation_shift_test(source, target).reject
        assert 0.02 <= rejections / 500 <= 0.09

    def test_shift_rate(self, rng):
        domains = [
            correlated_domain(rng, 80, 0.8, domain_id="a"),
            correlated_domain(rng, 80, 0.8, domain_id="b"),
            correlated_domain(rng, 80, -0.8, domain_id="c"),
        ]
        result = shift_rate(domains)
        assert result["rates"]["c"] == 1.0
        assert set(result["rates"]) == {"a", "b", "c"}
        assert 0.0 <= result["average"] <= 1.0

    def test_shift_rate_needs_two_domains(self, rng):
        with pytest.raises(EmptyInputError):
            shift_rate([correlated_domain(rng, 5, 0.1)])


class TestWasserstein:
    """Sliced Wasserstein and domain pair distances."""

    def test_identical_sets(self, rng):
        xs = rng.normal(size=(30, 4))
        assert sliced_wasserstein(xs, xs.copy()) == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("projections", [1, 7, 64])
    def test_translation_in_one_dimension(self, projections):
        assert sliced_wasserstein([[0.0]], [[2.5]], projections) == pytest.approx(2.5)

    def test_matches_high_projection_reference(self, rng):
        xs = rng.normal(size=(1000, 2))
        ys = rng.normal(size=(1000, 2)) + np.array([3.0, 0.0])
        reference = sliced_wasserstein(xs, ys, 4096, seed=1)
        assert abs(sliced_wasserstein(xs, ys, 64, seed=0) - reference) < 0.2 * reference

    @pytest.fixture
    def two_class_domain(self, rng):
        values = rng.normal(size=(20, 2, 5))
        labels = np.repeat([0, 1], 10)
        return MtsDataset(values, labels, "a", 2)

    def test_copy_has_zero_distance(self, two_class_domain):
        copy = MtsDataset(two_class_domain.values.copy(), two_class_domain.labels, "b", 2)
        assert domain_pair_distance(two_class_domain, copy) == pytest.approx(0.0, abs=1e-10)

    def test_symmetry(self, two_class_domain, rng):
        other = MtsDataset(rng.normal(size=(20, 2, 5)) + 1.0, two_class_domain.labels, "b", 2)
        forward = domain_pair_distance(two_class_domain, other, 16, 3)
        backward = domain_pair_distance(other, two_class_domain, 16, 3)
        assert forward == pytest.approx(backward, abs=1e-10)

    def test_monotone_in_offset(self, rng):
        values = rng.normal(size=(15, 2, 4))
        source = MtsDataset(values, np.zeros(15, dtype=int), "s", 1)
        distances = [
            domain_pair_distance(source, MtsDataset(values + c, source.labels, f"t{c}", 1)) for c in (0.0, 1.0, 2.0)
        ]
        assert distances[0] < distances[1] < distances[2]

    def test_additive_over_classes(self, two_class_domain, rng):
        other = MtsDataset(rng.normal(size=(20, 2, 5)), two_class_domain.labels, "b", 2)
        parts = []
        for label in (0, 1):
            mask = two_class_domain.labels == label
            parts.append(
                domain_pair_distance(
                    MtsDataset(two_class_domain.values[mask], two_class_domain.labels[mask], "a", 2),
                    MtsDataset(other.values[mask], other.labels[mask], "b", 2),
                )
            )
        assert domain_pair_distance(two_class_domain, other) == pytest.approx(sum(parts), abs=1e-10)

    def test_penalty_for_unmatched_labels(self, two_class_domain):
        mask = two_class_domain.labels == 0
        only_zero = MtsDataset(two_class_domain.values[mask], two_class_domain.labels[mask], "z", 2)
        skipped = domain_pair_distance(two_class_domain, only_zero)
        penalised = domain_pair_distance(two_class_domain, only_zero, missing_label_penalty=2.0)
        assert penalised == pytest.approx(skipped + 2.0)

    def test_no_shared_labels(self, rng):
        a = MtsDataset(rng.normal(size=(3, 2, 4)), np.zeros(3, dtype=int), "a", 2)
        b = MtsDataset(rng.normal(size=(3, 2, 4)), np.ones(3, dtype=int), "b", 2)
        with pytest.raises(NoSharedLabelsError):
            domain_pair_distance(a, b)
