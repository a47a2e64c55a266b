"""Model, base-measure, and data-handling tests.

Expected values come from direct substitution into the likelihood
formulas, Gaussian moment identities, and CLT tolerances (3 standard
errors at the stated sample sizes).
"""

import math

import numpy as np
import pytest

from bhcoresets import (CsvSchema, Dataset, InputError, ParameterSamples, ParseError,
                        gaussian_mean_model, gaussian_measure, generate_synthetic,
                        laplace_approximation, load_dataset, log_likelihood, log_prior,
                        loglik_matrix, logistic_model, sample_base, standard_gaussian)
from bhcoresets.model_zoo import save_dataset


class TestLogLikelihood:
    def test_logistic_zero_covariate_is_log_half(self):
        """At u = 0 the score is 0 regardless of theta, so l = 1/2."""
        model = logistic_model(3)
        rng = np.random.default_rng(0)
        for _ in range(5):
            theta = rng.standard_normal(3)
            val = log_likelihood(model, (np.zeros(3), 1), theta)
            assert val == pytest.approx(math.log(0.5), abs=1e-12)

    def test_logistic_strong_positive_score(self):
        model = logistic_model(2)
        theta = np.array([10.0, 0.0])
        val = log_likelihood(model, (np.array([1.0, 0.0]), 1), theta)
        assert val == pytest.approx(-math.log1p(math.exp(-10.0)), rel=1e-12)

    def test_gaussian_mean_direct_substitution(self):
        model = gaussian_mean_model(1, obs_variance=1.0)
        val = log_likelihood(model, [0.5], [0.0])
        assert val == pytest.approx(-0.5 * 0.25 - 0.5 * math.log(2 * math.pi), rel=1e-12)

    def test_dimension_mismatch(self):
        model = gaussian_mean_model(2)
        with pytest.raises(InputError):
            log_likelihood(model, [0.5], [0.0, 0.0])
        with pytest.raises(InputError):
            log_likelihood(logistic_model(2), (np.zeros(3), 1), np.zeros(2))

    def test_logistic_never_positive(self):
        """log l <= 0 for every (x, theta) since each Bernoulli likelihood <= 1."""
        rng = np.random.default_rng(42)
        for d in (1, 2, 5):
            model = logistic_model(d)
            for _ in range(200):
                u = rng.standard_normal(d) * rng.uniform(0.1, 20)
                theta = rng.standard_normal(d) * rng.uniform(0.1, 20)
                y = int(rng.integers(0, 2))
                assert log_likelihood(model, (u, y), theta) <= 0.0

    def test_logistic_matches_naive_formula(self):
        """Stable form agrees with the textbook ratio wherever it is finite."""
        rng = np.random.default_rng(7)
        model = logistic_model(1)
        for _ in range(300):
            s = rng.uniform(-30, 30)
            y = int(rng.integers(0, 2))
            naive = math.log(y / (1 + math.exp(-s)) + (1 - y) * math.exp(-s) / (1 + math.exp(-s)))
            stable = log_likelihood(model, (np.array([s]), y), np.array([1.0]))
            assert stable == pytest.approx(naive, abs=1e-10)

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(3)
        gm = gaussian_mean_model(2, obs_variance=1.7)
        data_g = Dataset(rng.standard_normal((4, 2)), None, "t")
        thetas = rng.standard_normal((3, 2))
        mat = loglik_matrix(gm, data_g, thetas)
        for s in range(3):
            for n in range(4):
                assert mat[s, n] == pytest.approx(
                    log_likelihood(gm, data_g.points[n], thetas[s]), rel=1e-12)

        lm = logistic_model(2)
        labels = rng.integers(0, 2, size=4)
        data_l = Dataset(rng.standard_normal((4, 2)), labels, "t")
        mat = loglik_matrix(lm, data_l, thetas)
        for s in range(3):
            for n in range(4):
                expected = log_likelihood(lm, (data_l.points[n], int(labels[n])), thetas[s])
                assert mat[s, n] == pytest.approx(expected, rel=1e-12)


class TestSampleBase:
    def test_standard_gaussian_moments(self):
        s = 10 ** 5
        draws = sample_base(standard_gaussian(1), s, seed=7)
        assert abs(draws.values.mean()) < 3.0 / math.sqrt(s)
        assert abs(draws.values.var() - 1.0) < 3.0 * math.sqrt(2.0 / s)

    def test_determinism(self):
        a = sample_base(standard_gaussian(3), 1000, seed=7)
        b = sample_base(standard_gaussian(3), 1000, seed=7)
        assert np.array_equal(a.values, b.values)

    def test_shifted_gaussian_mean(self):
        base = gaussian_measure([3.0], [[1.0]])
        draws = sample_base(base, 10 ** 5, seed=5)
        assert abs(draws.values.mean() - 3.0) < 0.02

    def test_covariance_structure(self):
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        draws = sample_base(gaussian_measure([0.0, 0.0], cov), 2 * 10 ** 5, seed=9)
        emp = np.cov(draws.values.T)
        np.testing.assert_allclose(emp, cov, atol=0.03)

    def test_too_few_samples(self):
        with pytest.raises(InputError):
            sample_base(standard_gaussian(1), 1, seed=0)


class TestGenerateSynthetic:
    def test_gaussian_mean_recovers_ground_truth(self):
        data = generate_synthetic("gaussian-mean", 100, 1, seed=1, theta_star=[2.0])
        assert abs(data.points.mean() - 2.0) < 3.0 / math.sqrt(100)

    def test_logistic_labels_binary(self):
        data = generate_synthetic("logistic-regression", 50, 2, seed=1)
        assert set(np.unique(data.labels)) <= {0, 1}
        assert data.points.shape == (50, 2)

    def test_determinism(self):
        a = generate_synthetic("logistic-regression", 30, 2, seed=4)
        b = generate_synthetic("logistic-regression", 30, 2, seed=4)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.labels, b.labels)

    def test_default_ground_truth_unit_norm(self):
        # With theta* = 1/sqrt(d) in every coordinate the pooled mean is 1/sqrt(d).
        data = generate_synthetic("gaussian-mean", 4000, 4, seed=2)
        assert abs(data.points.mean() - 0.5) < 0.05

    def test_invalid_sizes(self):
        with pytest.raises(InputError):
            generate_synthetic("gaussian-mean", 0, 1, seed=0)
        with pytest.raises(InputError):
            generate_synthetic("gaussian-mean", 5, 0, seed=0)


class TestLoadDataset:
    def test_three_row_logistic_csv(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("0.1,1\n-0.2,0\n0.5,1\n")
        data = load_dataset(path, CsvSchema(d=1, has_label=True))
        assert data.n == 3
        assert list(data.labels) == [1, 0, 1]
        np.testing.assert_allclose(data.points[:, 0], [0.1, -0.2, 0.5])

    def test_nan_entry_names_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("0.1,1\nNaN,0\n")
        with pytest.raises(ParseError, match="row 1"):
            load_dataset(path, CsvSchema(d=1, has_label=True))

    def test_header_only_file_is_empty(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("x,y\n")
        with pytest.raises(InputError, match="empty dataset"):
            load_dataset(path, CsvSchema(d=1, has_label=True, header=True))

    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("0.1,0.2,1\n")
        with pytest.raises(ParseError, match="row 0"):
            load_dataset(path, CsvSchema(d=1, has_label=True))

    def test_bad_label(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("0.1,2\n")
        with pytest.raises(ParseError, match="label"):
            load_dataset(path, CsvSchema(d=1, has_label=True))

    def test_save_load_round_trip(self, tmp_path):
        data = generate_synthetic("logistic-regression", 20, 3, seed=8)
        path = tmp_path / "round.csv"
        save_dataset(path, data)
        back = load_dataset(path, CsvSchema(d=3, has_label=True))
        np.testing.assert_array_equal(back.points, data.points)
        np.testing.assert_array_equal(back.labels, data.labels)


class TestBaseMeasure:
    def test_density_integrates_to_one_1d(self):
        base = gaussian_measure([0.7], [[1.3]])
        grid = np.linspace(-12, 12, 4001)
        mass = np.trapezoid(np.exp(base.log_density(grid[:, None])), grid)
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_density_integrates_to_one_2d(self):
        base = gaussian_measure([0.0, 0.5], [[1.0, 0.3], [0.3, 0.8]])
        xs = np.linspace(-8, 8, 321)
        xx, yy = np.meshgrid(xs, xs, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        dens = np.exp(base.log_density(pts)).reshape(321, 321)
        mass = np.trapezoid(np.trapezoid(dens, xs, axis=1), xs)
        assert mass == pytest.approx(1.0, abs=1e-4)

    def test_laplace_matches_conjugate_gaussian_mean(self):
        """For the conjugate model the mode and curvature are exact."""
        model = gaussian_mean_model(1)
        data = generate_synthetic("gaussian-mean", 25, 1, seed=3)
        base = laplace_approximation(model, data)
        exact_mean = data.points.sum() / (1 + data.n)
        assert base.mean[0] == pytest.approx(exact_mean, abs=1e-10)
        assert base.cov[0, 0] == pytest.approx(1.0 / (1 + data.n), rel=1e-12)

    def test_laplace_logistic_gradient_vanishes(self):
        model = logistic_model(2)
        data = generate_synthetic("logistic-regression", 60, 2, seed=5)
        base = laplace_approximation(model, data)
        s = data.points @ base.mean
        p = 1.0 / (1.0 + np.exp(-s))
        grad = -base.mean + (data.labels - p) @ data.points
        assert np.max(np.abs(grad)) < 1e-8

    def test_log_prior_matches_standard_base(self):
        base = standard_gaussian(3)
        theta = np.array([0.3, -1.2, 0.7])
        assert log_prior(theta) == pytest.approx(float(base.log_density(theta)), rel=1e-12)


class TestContainers:
    def test_dataset_rejects_nonfinite(self):
        with pytest.raises(InputError):
            Dataset(np.array([[np.inf]]), None, "t")

    def test_dataset_rejects_bad_labels(self):
        with pytest.raises(InputError):
            Dataset(np.zeros((2, 1)), np.array([0, 2]), "t")

    def test_samples_need_two_rows(self):
        with pytest.raises(InputError):
            ParameterSamples(np.zeros((1, 1)), "t", 0)

    def test_arrays_are_read_only(self):
        data = generate_synthetic("gaussian-mean", 5, 1, seed=0)
        with pytest.raises(ValueError):
            data.points[0, 0] = 1.0
