"""
Synthetic Generator Test Suite
Tests class-blob sampling, affine and projected shifts and the recovery transform
"""

import pytest
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError as PydanticValidationError

# Add repository root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.adaptation.baselines import multiclass_accuracy, predict_svm, train_svm_source, train_svm_target
from src.adaptation.transform import project_rows, transform_objective
from src.data.dataset import SplitSpec, make_split
from src.data.synthgen import (
    MAX_CONDITION_NUMBER,
    GenerateConfig,
    ShiftConfig,
    ShiftTruth,
    generate,
    invertibility_check,
    recovery_transform,
)
from src.utils.errors import ValidationError


class TestShiftConfig:
    """Test generator configuration"""

    def test_affine_needs_equal_dims(self):
        """Test an affine shift between 3-d and 2-d is rejected"""
        with pytest.raises(PydanticValidationError):
            ShiftConfig(num_classes=3, d_source=3, d_target=2, kind="affine")

    def test_single_class_rejected(self):
        """Test K = 1 is rejected"""
        with pytest.raises(PydanticValidationError):
            ShiftConfig(num_classes=1, d_source=2, d_target=2)

    def test_matrix_shape_checked(self):
        """Test a fixed matrix must be d_T x d_S"""
        with pytest.raises(PydanticValidationError):
            ShiftConfig(num_classes=2, d_source=3, d_target=2, kind="projection", matrix=((1.0, 0.0), (0.0, 1.0)))

    def test_translation_only_for_affine(self):
        """Test projections carry no translation"""
        with pytest.raises(PydanticValidationError):
            ShiftConfig(num_classes=2, d_source=3, d_target=2, kind="projection", translation=(0.0, 0.0))

    def test_holdout_normalized(self):
        """Test held-out classes are sorted and deduplicated"""
        config = GenerateConfig(num_classes=4, d_source=2, d_target=2, holdout_classes=(3, 2, 3))
        assert config.holdout_classes == (2, 3)


class TestGenerate:
    """Test dataset generation"""

    def test_deterministic(self):
        """Test the same seed gives identical datasets"""
        config = ShiftConfig(num_classes=3, d_source=4, d_target=4, seed=11)
        first_source, first_target, _ = generate(config)
        second_source, second_target, _ = generate(config)
        np.testing.assert_array_equal(first_source.features, second_source.features)
        np.testing.assert_array_equal(first_target.features, second_target.features)

    def test_seed_changes_data(self):
        """Test a different seed gives different data"""
        first, _, _ = generate(ShiftConfig(num_classes=2, d_source=2, d_target=2, seed=1))
        second, _, _ = generate(ShiftConfig(num_classes=2, d_source=2, d_target=2, seed=2))
        assert not np.array_equal(first.features, second.features)

    def test_shapes_and_grouping(self):
        """Test sample counts per class and rows grouped by class"""
        config = ShiftConfig(num_classes=3, d_source=5, d_target=5, samples_per_class=7)
        source, target, _ = generate(config)
        assert source.features.shape == (21, 5)
        np.testing.assert_array_equal(source.labels, np.repeat(np.arange(3), 7))
        np.testing.assert_array_equal(target.labels, source.labels)

    def test_projection_dimensions(self):
        """Test a 20 -> 12 projection yields 12-d target rows"""
        config = ShiftConfig(num_classes=10, d_source=20, d_target=12, kind="projection")
        source, target, truth = generate(config)
        assert source.dim == 20
        assert target.dim == 12
        assert truth.matrix.shape == (12, 20)
        assert truth.w_star is None

    def test_identity_shift_without_noise(self):
        """Test A = I, t = 0, sigma = 0 reproduces the source"""
        config = ShiftConfig(
            num_classes=3, d_source=2, d_target=2, noise=0.0,
            matrix=((1.0, 0.0), (0.0, 1.0)), translation=(0.0, 0.0),
        )
        source, target, _ = generate(config)
        np.testing.assert_array_equal(target.features, source.features)

    def test_class_means_separated(self):
        """Test noiseless class means lie on the sphere and apart"""
        config = ShiftConfig(num_classes=6, d_source=3, d_target=3, noise=0.0, samples_per_class=1, mean_scale=4.0)
        source, _, _ = generate(config)
        np.testing.assert_allclose(np.linalg.norm(source.features, axis=1), 4.0)
        for i in range(6):
            for j in range(i + 1, 6):
                assert np.linalg.norm(source.features[i] - source.features[j]) >= 2.0

    @pytest.mark.parametrize("seed", range(5))
    def test_random_affine_well_conditioned(self, seed):
        """Test sampled affine maps have condition number at most 10"""
        _, _, truth = generate(ShiftConfig(num_classes=2, d_source=6, d_target=6, seed=seed))
        assert invertibility_check(truth) <= MAX_CONDITION_NUMBER

    def test_ill_conditioned_affine_rejected(self):
        """Test a user matrix with condition number 20 is rejected"""
        config = ShiftConfig(num_classes=2, d_source=2, d_target=2, matrix=((20.0, 0.0), (0.0, 1.0)))
        with pytest.raises(ValidationError, match="condition number"):
            generate(config)

    def test_condition_within_limit_accepted(self):
        """Test a user matrix with condition number 8 is accepted"""
        config = ShiftConfig(num_classes=2, d_source=2, d_target=2, matrix=((8.0, 0.0), (0.0, 1.0)))
        _, _, truth = generate(config)
        assert invertibility_check(truth) == pytest.approx(8.0)


class TestRecoveryTransform:
    """Test the transform undoing an affine shift"""

    def test_recovers_means_without_noise(self):
        """Test W* maps noiseless target rows onto the source means"""
        config = ShiftConfig(num_classes=4, d_source=3, d_target=3, noise=0.0, seed=5)
        source, target, truth = generate(config)
        recovered = project_rows(truth.w_star, target.features)
        np.testing.assert_allclose(recovered[:, :3], source.features, atol=1e-9)
        np.testing.assert_allclose(recovered[:, 3], 1.0)

    def test_layout(self):
        """Test the block structure of W*"""
        A = np.array([[2.0, 0.0], [0.0, 4.0]])
        W = recovery_transform(A, np.array([2.0, 4.0]))
        np.testing.assert_allclose(W.w, [[0.5, 0.0, -1.0], [0.0, 0.25, -1.0], [0.0, 0.0, 1.0]])

    def test_singular(self):
        """Test a singular matrix is rejected"""
        with pytest.raises(ValidationError):
            recovery_transform(np.zeros((2, 2)), np.zeros(2))


class TestInvertibilityCheck:
    """Test condition numbers"""

    def test_identity(self):
        """Test cond(I) = 1"""
        assert invertibility_check(ShiftTruth("affine", np.eye(3))) == pytest.approx(1.0)

    def test_diagonal(self):
        """Test cond(diag(2, 1)) = 2"""
        assert invertibility_check(ShiftTruth("affine", np.diag([2.0, 1.0]))) == pytest.approx(2.0)

    def test_rotation(self):
        """Test a rotation is perfectly conditioned"""
        angle = 0.7
        rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        assert invertibility_check(ShiftTruth("affine", rotation)) == pytest.approx(1.0)

    def test_projection_rejected(self):
        """Test projections have no invertibility check"""
        with pytest.raises(ValidationError):
            invertibility_check(ShiftTruth("projection", np.ones((2, 3))))

    def test_truth_document(self):
        """Test the shift document carries the condition number"""
        truth = ShiftTruth("affine", np.diag([2.0, 1.0]), np.zeros(2), recovery_transform(np.diag([2.0, 1.0]), np.zeros(2)))
        data = truth.to_dict()
        assert data["condition_number"] == pytest.approx(2.0)
        assert data["w_star"][2] == [0.0, 0.0, 1.0]


def _rotation(degrees: float) -> np.ndarray:
    angle = np.deg2rad(degrees)
    return np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])


class TestShiftedBaselines:
    """Test how source and target classifiers behave on generated shifts"""

    def test_recovery_transform_has_source_loss(self):
        """Test W* gives target rows exactly the hinge loss of their source twins"""
        config = ShiftConfig(num_classes=3, d_source=2, d_target=2, noise=0.0, seed=3)
        source, target, truth = generate(config)
        planes = train_svm_source(source, C=1.0, solver_tol=1e-8)

        source_signs = np.where(source.labels[:, None] == np.arange(3)[None, :], 1.0, -1.0)
        source_hinge = float(np.sum(np.maximum(0.0, 1.0 - source_signs * planes.scores(source.augmented()))))
        target_hinge = (transform_objective(truth.w_star, target, planes, 1.0)
                        - 0.5 * truth.w_star.frobenius_sq())

        assert target_hinge == pytest.approx(source_hinge, abs=1e-6)
        # noiseless means are separable, so the source optimum has almost no loss
        assert target_hinge <= 1e-2

    def test_no_shift_source_matches_target(self):
        """Test svm_s and svm_t agree within 2% when target equals source"""
        config = ShiftConfig(
            num_classes=3, d_source=2, d_target=2, noise=0.0, samples_per_class=200, seed=4,
            matrix=((1.0, 0.0), (0.0, 1.0)), translation=(0.0, 0.0),
        )
        source, target, _ = generate(config)
        train, test = make_split(target, SplitSpec(train_per_class=100, seed=4))

        svm_s = train_svm_source(source, C=1.0)
        svm_t = train_svm_target(train, C=1.0)
        source_accuracy = multiclass_accuracy(predict_svm(svm_s, test.features), test.labels)
        target_accuracy = multiclass_accuracy(predict_svm(svm_t, test.features, "svm_t"), test.labels)

        assert abs(source_accuracy - target_accuracy) <= 0.02

    def test_scaled_rotation_defeats_source_classifier(self):
        """Test 2 * rotation(45 deg) drops svm_s toward chance while svm_t stays accurate"""
        matrix = tuple(tuple(row) for row in 2.0 * _rotation(45.0))
        source_accuracies, target_accuracies = [], []
        for seed in range(5):
            config = ShiftConfig(
                num_classes=6, d_source=2, d_target=2, mean_scale=10.0, noise=0.1,
                samples_per_class=30, seed=seed, matrix=matrix, translation=(0.0, 0.0),
            )
            source, target, _ = generate(config)
            train, test = make_split(target, SplitSpec(train_per_class=10, seed=seed))
            svm_s = train_svm_source(source, C=10.0)
            svm_t = train_svm_target(train, C=10.0)
            source_accuracies.append(multiclass_accuracy(predict_svm(svm_s, test.features), test.labels))
            target_accuracies.append(multiclass_accuracy(predict_svm(svm_t, test.features, "svm_t"), test.labels))

        # chance is 1/6
        assert np.mean(source_accuracies) <= 0.5
        assert min(target_accuracies) >= 0.95


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
