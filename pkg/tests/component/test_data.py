"""Tests for datasets, synthetic domains, windows, file storage and pair ranking."""

import struct

import numpy as np
import pytest

from src.data.dataset import MtsDataset, MtsSample
from src.data.ranking import rank_domain_pairs
from src.data.storage import dataset_paths, list_domains, read_dataset, write_dataset
from src.data.synthetic import SyntheticDomainSpec, generate_domain, make_templates, rotation, shift_sweep
from src.data.windows import (
    covered_columns,
    forecast_pairs,
    forecast_starts,
    sample_forecast_pairs,
    sample_windows,
    slice_windows,
    window_starts,
)
from src.errors import (
    BadMagicError,
    EmptyDatasetError,
    EmptyInputError,
    LabelRangeError,
    NonPsdTemplateError,
    SeriesTooShortError,
    ShapeMismatchError,
    TruncatedFileError,
    WindowTooLongError,
)


class TestMtsDataset:
    """Container validation."""

    def test_infers_class_count(self, rng):
        dataset = MtsDataset(rng.normal(size=(4, 2, 5)), np.array([0, 2, 1, 2]), "d")
        assert dataset.n_classes == 3
        assert dataset.label_set() == [0, 1, 2]
        assert dataset.class_values(2).shape == (2, 2, 5)

    def test_label_out_of_range(self, rng):
        with pytest.raises(LabelRangeError):
            MtsDataset(rng.normal(size=(2, 2, 5)), np.array([0, 3]), "d", n_classes=2)

    def test_wrong_rank(self):
        with pytest.raises(ShapeMismatchError):
            MtsDataset(np.zeros((2, 5)))

    def test_non_finite_values(self):
        values = np.zeros((1, 2, 3))
        values[0, 1, 2] = np.nan
        with pytest.raises(ShapeMismatchError):
            MtsDataset(values)

    def test_from_samples(self, rng):
        samples = [MtsSample(rng.normal(size=(3, 6)), label) for label in (1, 0, 1)]
        dataset = MtsDataset.from_samples(samples, "mixed")
        assert len(dataset) == 3
        assert dataset.n_vars == 3 and dataset.length == 6
        assert [s.label for s in dataset] == [1, 0, 1]

    def test_from_samples_rejects_partial_labels(self, rng):
        samples = [MtsSample(rng.normal(size=(3, 6)), 0), MtsSample(rng.normal(size=(3, 6)))]
        with pytest.raises(ShapeMismatchError):
            MtsDataset.from_samples(samples)

    def test_from_no_samples(self):
        with pytest.raises(EmptyDatasetError):
            MtsDataset.from_samples([])

    def test_unlabelled_view_is_a_copy(self, rng):
        dataset = MtsDataset(rng.normal(size=(2, 2, 3)), np.array([0, 1]))
        view = dataset.unlabelled()
        view[:] = 0.0
        assert not np.all(dataset.values == 0.0)

    def test_class_values_needs_labels(self, rng):
        with pytest.raises(LabelRangeError):
            MtsDataset(rng.normal(size=(2, 2, 3))).class_values(0)


class TestSynthetic:
    """Correlation-shifted synthetic domains."""

    @pytest.fixture
    def spec(self):
        return SyntheticDomainSpec(make_templates(3, 4, template_seed=5), theta=0.0, seed=11, series_len=40)

    def test_templates_are_correlation_matrices(self):
        templates = make_templates(4, 5, template_seed=2)
        for template in templates:
            np.testing.assert_allclose(np.diag(template), 1.0)
            np.testing.assert_allclose(template, template.T)
            assert np.linalg.eigvalsh(template)[0] > 0

    @pytest.mark.parametrize("n_vars", [2, 3, 6])
    def test_rotation_is_orthogonal(self, n_vars):
        rot = rotation(n_vars, 0.7, seed=4)
        np.testing.assert_allclose(rot @ rot.T, np.eye(n_vars), atol=1e-12)
        assert np.linalg.det(rot) == pytest.approx(1.0)

    def test_zero_angle_is_identity(self):
        np.testing.assert_allclose(rotation(5, 0.0, seed=1), np.eye(5), atol=1e-12)

    def test_generation_is_deterministic(self, spec):
        first = generate_domain(spec, 5, "a")
        second = generate_domain(spec, 5, "b")
        np.testing.assert_array_equal(first.values, second.values)
        np.testing.assert_array_equal(first.labels, second.labels)

    def test_shape_and_balance(self, spec):
        domain = generate_domain(spec, 5)
        assert domain.values.shape == (15, 4, 40)
        assert np.bincount(domain.labels).tolist() == [5, 5, 5]

    def test_values_have_float32_precision(self, spec):
        values = generate_domain(spec, 2).values
        np.testing.assert_array_equal(values, values.astype(np.float32).astype(np.float64))

    def test_sweep_at_zero_reproduces_base(self, spec):
        base = generate_domain(spec, 4)
        swept = shift_sweep(spec, [0.0, 0.5], 4)
        np.testing.assert_array_equal(swept[0].values, base.values)
        assert swept[1].domain_id == "theta-0.5000"

    def test_rotation_moves_class_correlation(self, spec):
        rotated = SyntheticDomainSpec(spec.templates, theta=1.5, seed=spec.seed)
        assert np.max(np.abs(rotated.class_covariance(0) - spec.class_covariance(0))) > 0.05
        np.testing.assert_allclose(np.trace(rotated.class_covariance(0)), 4.0)

    def test_non_unit_diagonal_template(self):
        with pytest.raises(NonPsdTemplateError):
            SyntheticDomainSpec(np.array([[[2.0, 0.0], [0.0, 1.0]]]))

    def test_indefinite_template(self):
        with pytest.raises(NonPsdTemplateError):
            SyntheticDomainSpec(np.array([[[1.0, 2.0], [2.0, 1.0]]]))


class TestWindows:
    """Window slicing and batch sampling."""

    def test_window_count(self):
        assert window_starts(10, 4, 3).tolist() == [0, 3, 6]

    def test_slice_contents(self):
        values = np.arange(12.0).reshape(2, 6)
        starts, windows = slice_windows(values, 3, 2)
        assert starts.tolist() == [0, 2]
        assert windows.shape == (2, 2, 3)
        np.testing.assert_array_equal(windows[1], values[:, 2:5])

    def test_window_longer_than_series(self):
        with pytest.raises(WindowTooLongError):
            window_starts(5, 6)

    def test_full_coverage_at_unit_stride(self):
        assert covered_columns(9, 4) == list(range(9))

    def test_forecast_pair_count(self):
        assert forecast_starts(20, 5).size == 11
        assert forecast_starts(20, 5, stride=4).tolist() == [0, 4, 8]

    def test_forecast_needs_two_windows(self):
        with pytest.raises(SeriesTooShortError):
            forecast_starts(9, 5)

    def test_series_of_exactly_two_windows(self):
        assert forecast_starts(10, 5).tolist() == [0]
        history, target = forecast_pairs(np.arange(20.0).reshape(1, 2, 10), 5)
        assert history.shape == target.shape == (1, 5, 2)
        np.testing.assert_array_equal(target[0, :, 0], np.arange(5.0, 10.0))

    def test_forecast_target_follows_history(self):
        values = np.arange(2 * 2 * 9, dtype=np.float64).reshape(2, 2, 9)
        history, target = forecast_pairs(values, 3)
        assert history.shape == target.shape == (8, 3, 2)
        np.testing.assert_array_equal(history[0], values[0, :, 0:3].T)
        np.testing.assert_array_equal(target[0], values[0, :, 3:6].T)

    def test_sampled_windows_come_from_the_series(self, rng):
        values = rng.normal(size=(3, 2, 12))
        series, windows = sample_windows(values, 4, 8, rng)
        assert windows.shape == (8, 4, 2)
        for i, window in zip(series, windows):
            source = values[i].T
            assert any(np.array_equal(source[s : s + 4], window) for s in range(9))

    def test_sampled_forecast_pairs_are_adjacent(self, rng):
        values = np.tile(np.arange(15.0), (2, 3, 1))
        history, target = sample_forecast_pairs(values, 4, 5, rng)
        np.testing.assert_array_equal(target[:, 0, 0] - history[:, 0, 0], np.full(5, 4.0))

    def test_sampling_empty_dataset(self, rng):
        with pytest.raises(EmptyDatasetError):
            sample_windows(np.zeros((0, 2, 8)), 4, 2, rng)


class TestStorage:
    """MTS1 / MTSY files."""

    def test_write_then_read(self, tmp_path, rng):
        dataset = MtsDataset(rng.normal(size=(4, 3, 7)), np.array([0, 1, 1, 0]), "ignored")
        written = write_dataset(dataset, tmp_path / "domain-a")
        assert [p.name for p in written] == ["domain-a.mts", "domain-a.mty"]
        loaded = read_dataset(tmp_path / "domain-a.mts")
        assert loaded.domain_id == "domain-a"
        np.testing.assert_array_equal(loaded.values, dataset.values.astype(np.float32))
        np.testing.assert_array_equal(loaded.labels, dataset.labels)

    def test_header_layout(self, tmp_path):
        write_dataset(MtsDataset(np.ones((2, 3, 4))), tmp_path / "x")
        payload = (tmp_path / "x.mts").read_bytes()
        assert payload[:4] == b"MTS1"
        assert struct.unpack("<III", payload[4:16]) == (2, 3, 4)
        assert len(payload) == 16 + 4 * 24
        assert not (tmp_path / "x.mty").exists()

    def test_unlabelled_read(self, tmp_path):
        write_dataset(MtsDataset(np.ones((2, 1, 3))), tmp_path / "x")
        assert read_dataset(tmp_path / "x").labels is None

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.mts").write_bytes(b"NOPE" + struct.pack("<III", 1, 1, 1) + b"\0\0\0\0")
        with pytest.raises(BadMagicError):
            read_dataset(tmp_path / "x")

    def test_truncated_values(self, tmp_path):
        (tmp_path / "x.mts").write_bytes(b"MTS1" + struct.pack("<III", 2, 2, 2) + b"\0" * 8)
        with pytest.raises(TruncatedFileError):
            read_dataset(tmp_path / "x")

    def test_truncated_header(self, tmp_path):
        (tmp_path / "x.mts").write_bytes(b"MTS1\x01\x00")
        with pytest.raises(TruncatedFileError):
            read_dataset(tmp_path / "x")

    def test_label_count_mismatch(self, tmp_path):
        write_dataset(MtsDataset(np.ones((2, 1, 3)), np.array([0, 1])), tmp_path / "x")
        (tmp_path / "x.mty").write_bytes(b"MTSY" + struct.pack("<III", 3, 0, 1))
        with pytest.raises(ShapeMismatchError):
            read_dataset(tmp_path / "x")

    def test_paths_from_either_file(self, tmp_path):
        assert dataset_paths(tmp_path / "a.mty") == (tmp_path / "a.mts", tmp_path / "a.mty")

    def test_list_domains_sorted(self, tmp_path):
        for name in ("b", "a"):
            write_dataset(MtsDataset(np.ones((1, 1, 2))), tmp_path / name)
        assert [p.name for p in list_domains(tmp_path)] == ["a.mts", "b.mts"]


class TestRanking:
    """Ordered pair ranking."""

    @pytest.fixture
    def domains(self, rng):
        labels = np.repeat([0, 1], 5)
        return [MtsDataset(rng.normal(size=(10, 2, 6)) + offset, labels, f"d{offset}", 2) for offset in range(4)]

    def test_all_ordered_pairs_in_ascending_order(self, domains):
        ranking = rank_domain_pairs(domains, projections=16)
        assert len(ranking.pairs) == 12
        distances = [pair.distance for pair in ranking.pairs]
        assert distances == sorted(distances)

    def test_groups_partition_the_pairs(self, domains):
        ranking = rank_domain_pairs(domains, projections=16)
        assert len(ranking.groups) == 10
        assert sum(len(group) for group in ranking.groups) == 12
        assert len(ranking.representatives) == 10

    def test_nearest_pairs_are_neighbours(self, domains):
        ranking = rank_domain_pairs(domains, projections=16)
        far = {("d0", "d3"), ("d3", "d0")}
        assert (ranking.pairs[-1].source, ranking.pairs[-1].target) in far

    def test_pairs_without_shared_labels_are_skipped(self, rng):
        a = MtsDataset(rng.normal(size=(3, 2, 4)), np.zeros(3, dtype=int), "a", 2)
        b = MtsDataset(rng.normal(size=(3, 2, 4)), np.ones(3, dtype=int), "b", 2)
        assert rank_domain_pairs([a, b]).pairs == []

    def test_needs_two_domains(self, domains):
        with pytest.raises(EmptyInputError):
            rank_domain_pairs(domains[:1])
