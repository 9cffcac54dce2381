"""Rasch calibration tests: forward model, EM, MAP, normalization."""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oracles import (
    grid_argmax_by_score,
    grid_argmax_unconstrained_2items,
    marginal_loglik,
    random_nonconstant_matrix,
)
from qgforge.corpus import DifficultyLabel, DifficultyLabel3
from qgforge.irt import (
    CalibrationError,
    EmConfig,
    RaschCalibration,
    calibrate,
    estimate_abilities_map,
    estimate_difficulties_em,
    load_calibration,
    normalize_and_label,
    rasch_prob,
    save_calibration,
    simulate_fit_report,
)
from qgforge.responses import ResponseMatrix
from qgforge.simlearner import SyntheticLearner, simulate_responses


def _matrix(cells, prefix="q") -> ResponseMatrix:
    cells = np.asarray(cells, dtype=np.int8)
    return ResponseMatrix(
        tuple(f"r{i}" for i in range(cells.shape[0])),
        tuple(f"{prefix}{j}" for j in range(cells.shape[1])),
        cells,
    )


class TestRaschProb:
    def test_equal_ability_and_difficulty(self):
        assert rasch_prob(0.7, 0.7) == 0.5

    def test_saturation(self):
        assert rasch_prob(20.0, 0.0) == pytest.approx(1.0, abs=1e-6)
        assert rasch_prob(0.0, 20.0) == pytest.approx(0.0, abs=1e-6)

    @pytest.mark.parametrize("theta,b", [(0.3, -1.2), (5.0, 2.0), (-3.0, 4.0)])
    def test_antisymmetry(self, theta, b):
        assert rasch_prob(theta, b) + rasch_prob(b, theta) == pytest.approx(1.0, abs=1e-12)

    def test_extreme_arguments_do_not_overflow(self):
        assert rasch_prob(700.0, 0.0) <= 1.0
        assert rasch_prob(0.0, 700.0) >= 0.0

    def test_nonfinite_rejected(self):
        with pytest.raises(CalibrationError):
            rasch_prob(float("nan"), 0.0)

    def test_array_broadcast(self):
        theta = np.array([0.0, 1.0])
        out = rasch_prob(theta[:, None], np.array([0.0, 1.0])[None, :])
        assert out.shape == (2, 2)
        assert out[0, 0] == 0.5


class TestEstimateDifficultiesEm:
    def test_identical_columns_identical_b(self):
        matrix = _matrix([[1, 1, 0], [0, 0, 1], [1, 1, 1]])
        result = estimate_difficulties_em(matrix)
        assert result.difficulties["q0"] == result.difficulties["q1"]

    def test_equal_raw_scores_equal_b_even_for_different_columns(self):
        # columns 0 and 1 differ but share raw score 2
        matrix = _matrix([[1, 0, 1], [0, 1, 1], [1, 1, 0]])
        result = estimate_difficulties_em(matrix)
        assert result.difficulties["q0"] == result.difficulties["q1"]
        assert result.difficulties["q0"] == result.difficulties["q2"]

    def test_rawscore_order_inverse_in_b(self):
        rng = np.random.default_rng(2)
        cells = random_nonconstant_matrix(rng, 4, 6)
        matrix = _matrix(cells)
        result = estimate_difficulties_em(matrix)
        scores = cells.sum(axis=0)
        b = np.array([result.difficulties[q] for q in matrix.question_ids])
        for j in range(len(scores)):
            for k in range(len(scores)):
                if scores[j] > scores[k]:
                    assert b[j] < b[k]

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_grid_search_oracle(self, seed):
        rng = np.random.default_rng(seed)
        cells = random_nonconstant_matrix(rng, 3, 4)
        matrix = _matrix(cells)
        result = estimate_difficulties_em(matrix)
        b_em = np.array([result.difficulties[q] for q in matrix.question_ids])
        b_grid = grid_argmax_by_score(cells)
        assert np.abs(b_em - b_grid).max() <= 0.05

    @pytest.mark.parametrize("seed", range(4))
    def test_unconstrained_two_item_grid(self, seed):
        # full per-item scan; no raw-score collapse assumed in the oracle
        rng = np.random.default_rng(seed + 100)
        cells = random_nonconstant_matrix(rng, 4, 2)
        matrix = _matrix(cells)
        result = estimate_difficulties_em(matrix)
        b_em = np.array([result.difficulties[q] for q in matrix.question_ids])
        b_grid = grid_argmax_unconstrained_2items(cells)
        assert np.abs(b_em - b_grid).max() <= 0.05

    def test_equal_score_optimum_is_stationary_unconstrained(self):
        # perturbing one of two equal-score (different-column) items away
        # from the shared EM estimate must not raise the true likelihood
        matrix = _matrix([[1, 0, 1], [0, 1, 1], [1, 1, 0]])
        result = estimate_difficulties_em(matrix)
        b = np.array([result.difficulties[q] for q in matrix.question_ids])
        base = marginal_loglik(matrix.cells, b)
        for j in range(3):
            for eps in (-0.1, 0.1):
                perturbed = b.copy()
                perturbed[j] += eps
                assert marginal_loglik(matrix.cells, perturbed) <= base + 1e-9

    def test_all_correct_item_clamps_low(self):
        matrix = _matrix([[1, 1, 0], [1, 0, 1], [1, 1, 1]])
        result = estimate_difficulties_em(matrix)
        assert result.difficulties["q0"] == EmConfig().lo

    def test_all_wrong_item_clamps_high(self):
        matrix = _matrix([[0, 1, 0], [0, 0, 1], [0, 1, 1]])
        result = estimate_difficulties_em(matrix)
        assert result.difficulties["q0"] == EmConfig().hi

    def test_loglik_monotone_nondecreasing(self):
        rng = np.random.default_rng(7)
        cells = random_nonconstant_matrix(rng, 5, 30)
        result = estimate_difficulties_em(_matrix(cells))
        history = np.array(result.loglik_history)
        assert (np.diff(history) >= -1e-9).all()

    def test_rerun_reproduces_estimates(self):
        rng = np.random.default_rng(11)
        cells = random_nonconstant_matrix(rng, 4, 10)
        matrix = _matrix(cells)
        first = estimate_difficulties_em(matrix)
        second = estimate_difficulties_em(matrix)
        assert first.difficulties == second.difficulties

    def test_all_identical_columns_still_succeed(self):
        matrix = _matrix([[1, 1], [0, 0], [1, 1]])
        result = estimate_difficulties_em(matrix)
        assert result.difficulties["q0"] == result.difficulties["q1"]
        assert np.isfinite(result.difficulties["q0"])

    def test_too_small_matrix_rejected(self):
        with pytest.raises(CalibrationError, match="at least 2"):
            estimate_difficulties_em(_matrix([[1, 0]]))

    def test_nonconvergence_flagged_not_raised(self):
        rng = np.random.default_rng(3)
        cells = random_nonconstant_matrix(rng, 5, 20)
        config = EmConfig(max_iters=1, tol=1e-12)
        with pytest.warns(UserWarning, match="did not converge"):
            result = estimate_difficulties_em(_matrix(cells), config)
        assert not result.convergence.converged
        assert len(result.difficulties) == 20


class TestEstimateAbilitiesMap:
    def test_zero_items_prior_mode(self):
        matrix = ResponseMatrix(("r0", "r1"), (), np.zeros((2, 0), dtype=np.int8))
        abilities = estimate_abilities_map(matrix, {})
        assert abilities == {"r0": 0.0, "r1": 0.0}

    def test_all_correct_above_all_wrong(self):
        matrix = _matrix([[1, 1, 1, 1], [0, 0, 0, 0]])
        abilities = estimate_abilities_map(
            matrix, {f"q{j}": 0.0 for j in range(4)}
        )
        assert abilities["r0"] > abilities["r1"]

    def test_ordering_strict_in_raw_score(self):
        cells = np.array([[1, 1, 1], [1, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=np.int8)
        matrix = _matrix(cells)
        abilities = estimate_abilities_map(matrix, {f"q{j}": 0.1 for j in range(3)})
        values = [abilities[f"r{i}"] for i in range(4)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_monte_carlo_recovery(self):
        # theta* = 0.8 over 1200 items; posterior sd ~ 1/sqrt(info) ~ 0.07
        rng = np.random.default_rng(17)
        true_theta = 0.8
        b = {f"q{j:04d}": float(v) for j, v in enumerate(rng.standard_normal(1200))}
        learner = SyntheticLearner("probe", true_theta, rng_seed=17)
        matrix = simulate_responses([learner], b)
        est = estimate_abilities_map(matrix, b)["probe"]
        assert abs(est - true_theta) < 0.2

    def test_missing_difficulty_rejected(self):
        matrix = _matrix([[1, 0], [0, 1]])
        with pytest.raises(CalibrationError, match="missing"):
            estimate_abilities_map(matrix, {"q0": 0.0})

    def test_nonfinite_difficulty_rejected(self):
        matrix = _matrix([[1, 0], [0, 1]])
        with pytest.raises(CalibrationError, match="finite"):
            estimate_abilities_map(matrix, {"q0": 0.0, "q1": float("inf")})


class TestNormalizeAndLabel:
    def test_derived_minmax_fixture(self):
        difficulties = {"a": -1.2, "b": -0.3, "c": 0.0, "d": 0.6, "e": 1.8}
        normalized, labels = normalize_and_label(difficulties)
        assert_allclose(
            [normalized[k] for k in "abcde"], [0.0, 0.30, 0.40, 0.60, 1.0], atol=1e-12
        )
        assert [labels[k] for k in "abcde"] == list(DifficultyLabel)

    def test_five_distinct_ascending_labels(self):
        difficulties = {f"q{i}": float(i) for i in range(5)}
        _, labels = normalize_and_label(difficulties)
        assert [labels[f"q{i}"] for i in range(5)] == list(DifficultyLabel)

    def test_single_distinct_value_maps_to_middle(self):
        normalized, labels = normalize_and_label({"a": 0.3, "b": 0.3})
        assert normalized == {"a": 0.5, "b": 0.5}
        assert set(labels.values()) == {DifficultyLabel.MODERATE}
        _, labels3 = normalize_and_label({"a": 0.3}, DifficultyLabel3)
        assert set(labels3.values()) == {DifficultyLabel3.MEDIUM}

    def test_six_distinct_values_bucket_in_order(self):
        difficulties = {f"q{i}": float(i) for i in range(6)}
        normalized, labels = normalize_and_label(difficulties)
        indices = [labels[f"q{i}"].index for i in range(6)]
        assert indices == sorted(indices)
        assert labels["q0"] is DifficultyLabel.EASY
        assert labels["q5"] is DifficultyLabel.EXTREME

    def test_order_preserved_between_normalized_and_labels(self):
        rng = np.random.default_rng(23)
        difficulties = {f"q{i}": float(v) for i, v in enumerate(rng.normal(size=40))}
        normalized, labels = normalize_and_label(difficulties)
        items = sorted(difficulties, key=difficulties.get)
        norm_values = [normalized[q] for q in items]
        label_indices = [labels[q].index for q in items]
        assert norm_values == sorted(norm_values)
        assert label_indices == sorted(label_indices)
        assert norm_values[0] == 0.0 and norm_values[-1] == 1.0

    def test_invariant_under_increasing_transform(self):
        difficulties = {f"q{i}": float(v) for i, v in enumerate([-2.0, -0.5, 0.1, 1.4, 3.0])}
        _, labels = normalize_and_label(difficulties)
        transformed = {k: float(np.tanh(v)) for k, v in difficulties.items()}
        _, labels_t = normalize_and_label(transformed)
        assert labels == labels_t

    def test_three_level_scheme(self):
        difficulties = {"a": -1.0, "b": 0.0, "c": 1.0}
        _, labels = normalize_and_label(difficulties, DifficultyLabel3)
        assert [labels[k] for k in "abc"] == list(DifficultyLabel3)

    def test_empty_rejected(self):
        with pytest.raises(CalibrationError):
            normalize_and_label({})


class TestCalibrateAndPersistence:
    def test_full_calibration_roundtrip(self, tmp_path):
        learners = [SyntheticLearner(f"L{i}", t, 5) for i, t in enumerate((1.5, 0.5, -0.5, -1.5))]
        rng = np.random.default_rng(9)
        true_b = {f"q{j:03d}": float(v) for j, v in enumerate(rng.normal(size=60))}
        matrix = simulate_responses(learners, true_b)
        calibration = calibrate(matrix)
        path = tmp_path / "calibration.json"
        save_calibration(calibration, path)
        loaded = load_calibration(path)
        assert loaded.difficulties == calibration.difficulties
        assert loaded.abilities == calibration.abilities
        assert loaded.labels == calibration.labels
        assert loaded.convergence.iterations == calibration.convergence.iterations

    def test_fit_report_expected_counts(self):
        matrix = _matrix([[1, 1], [1, 1], [1, 1]])
        calibration = calibrate(matrix)
        report = simulate_fit_report(matrix, calibration)
        for item in report.items:
            assert item.observed_correct == 3
            # all-correct items clamp at the quadrature bound, so expected
            # counts approach but cannot reach the observed maximum
            assert item.expected_correct > 2.5
        assert report.loglik < 0

    def test_fit_report_coverage_mismatch(self):
        matrix = _matrix([[1, 0], [0, 1]])
        calibration = calibrate(matrix)
        other = _matrix([[1, 0], [0, 1]], prefix="other")
        with pytest.raises(CalibrationError, match="cover"):
            simulate_fit_report(other, calibration)

    def test_translation_invariance_of_probabilities(self):
        theta, b, shift = 0.7, -0.4, 2.3
        assert rasch_prob(theta + shift, b + shift) == pytest.approx(
            rasch_prob(theta, b), abs=1e-12
        )
