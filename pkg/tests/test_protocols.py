"""
Experiment Protocol Test Suite
Tests configuration checks, method sets and report structure of each protocol
"""

import json
import pytest
import sys
from pathlib import Path

from pydantic import ValidationError as PydanticValidationError

# Add repository root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.adaptation.mmdt import TrainConfig
from src.data.synthgen import ShiftConfig
from src.experiments.protocols import (
    REPORT_FORMAT_VERSION,
    ExperimentConfig,
    MethodResult,
    Protocol,
    run_experiment,
)
from src.utils.errors import ValidationError


FAST_TRAIN = TrainConfig(max_outer_iters=3, outer_tol=1e-3)


def _config(kind="affine", d_source=3, d_target=3, **overrides):
    values = dict(
        shift=ShiftConfig(
            num_classes=3, d_source=d_source, d_target=d_target, kind=kind,
            samples_per_class=6, mean_scale=4.0, noise=0.5, seed=3,
        ),
        train=FAST_TRAIN,
        target_train_per_class=2,
        repeats=2,
        timing_repeats=1,
    )
    values.update(overrides)
    return ExperimentConfig(**values)


class TestExperimentConfig:
    """Test experiment configuration"""

    def test_sweep_from_n_target(self):
        """Test n_T values become per-class counts"""
        config = _config(sweep_n_target=(3, 9))
        assert config.sweep() == [1, 3]

    def test_sweep_requires_multiples_of_k(self):
        """Test n_T must be a multiple of K"""
        with pytest.raises(PydanticValidationError):
            _config(sweep_n_target=(4,))

    def test_sweep_exclusive(self):
        """Test only one sweep form may be given"""
        with pytest.raises(PydanticValidationError):
            _config(sweep_n_target=(3,), sweep_target_per_class=(1,))

    def test_default_sweep(self):
        """Test without a sweep the single training size is used"""
        assert _config().sweep() == [2]

    def test_novel_classes_default_upper_half(self):
        """Test K = 3 holds out class 1 and 2"""
        assert _config().novel_classes() == (1, 2)
        assert _config(holdout_classes=(2, 0, 2)).novel_classes() == (0, 2)

    def test_holdout_out_of_range(self):
        """Test held-out classes must exist"""
        with pytest.raises(PydanticValidationError):
            _config(holdout_classes=(3,))

    def test_from_file_with_override(self, tmp_path):
        """Test JSON loading and a repeats override"""
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({
            "shift": {"num_classes": 2, "d_source": 2, "d_target": 2},
            "repeats": 5,
        }))
        config = ExperimentConfig.from_file(path, repeats=1)
        assert config.repeats == 1
        assert config.shift.num_classes == 2

    def test_from_file_bad_json(self, tmp_path):
        """Test invalid JSON raises a validation error"""
        path = tmp_path / "exp.json"
        path.write_text("{")
        with pytest.raises(ValidationError):
            ExperimentConfig.from_file(path)


class TestMethodResult:
    """Test per-method result bookkeeping"""

    def test_per_seed_sorted(self):
        """Test per-seed rows are sorted by seed"""
        result = MethodResult("mmdt")
        result.add(5, 0.5)
        result.add(2, 1.0)
        data = result.to_dict()
        assert [row["seed"] for row in data["per_seed"]] == [2, 5]
        assert data["mean"] == pytest.approx(0.75)
        assert data["count"] == 2


class TestProtocolChecks:
    """Test protocol / configuration compatibility"""

    def test_standard_needs_equal_dims(self):
        """Test standard refuses a heterogeneous shift"""
        config = _config(kind="projection", d_source=4, d_target=3)
        with pytest.raises(ValidationError):
            run_experiment("standard", config, show_progress=False)

    def test_heterogeneous_needs_different_dims(self):
        """Test heterogeneous refuses equal dimensions"""
        with pytest.raises(ValidationError):
            run_experiment(Protocol.HETEROGENEOUS, _config(), show_progress=False)

    def test_no_test_points(self):
        """Test samples_per_class must exceed the labeled count"""
        config = _config(target_train_per_class=6)
        with pytest.raises(ValidationError):
            run_experiment("standard", config, show_progress=False)

    def test_unknown_protocol(self):
        """Test unknown protocol names are rejected"""
        with pytest.raises(ValidationError):
            run_experiment("transductive", _config(), show_progress=False)

    def test_novel_needs_labeled_class(self):
        """Test holding out every class is rejected"""
        config = _config(holdout_classes=(0, 1, 2))
        with pytest.raises(ValidationError):
            run_experiment("novel-category", config, show_progress=False)

    def test_source_subsample_too_large(self):
        """Test source_per_class cannot exceed samples_per_class"""
        config = _config(source_per_class=7)
        with pytest.raises(ValidationError):
            run_experiment("standard", config, show_progress=False)


class TestRunExperiment:
    """Test protocol runs on small problems"""

    def test_standard_methods(self):
        """Test standard compares mmdt with all three baselines"""
        report = run_experiment("standard", _config(), show_progress=False)
        assert set(report.methods) == {"mmdt", "svm_s", "svm_t", "svm_st"}
        for result in report.methods.values():
            assert result.seeds == [0, 1]
            assert all(0.0 <= a <= 1.0 for a in result.accuracies)
        assert report.refused == {}

    def test_heterogeneous_refuses_svm_s(self):
        """Test svm_s is reported as refused for d_S != d_T"""
        config = _config(kind="projection", d_source=4, d_target=2)
        report = run_experiment("heterogeneous", config, show_progress=False)
        assert set(report.methods) == {"mmdt", "svm_t"}
        assert "heterogeneous features unsupported by svm_s" in report.refused["svm_s"]

    def test_novel_category_methods(self):
        """Test novel-category has no target-only baseline"""
        report = run_experiment("novel-category", _config(), show_progress=False)
        assert set(report.methods) == {"mmdt", "svm_s"}
        assert "svm_t" not in report.to_dict()["methods"]

    def test_scaling_sweep(self):
        """Test the sweep records constraint counts and timings per n_T"""
        config = _config(sweep_target_per_class=(1, 2))
        report = run_experiment("scaling", config, show_progress=False)

        assert [row["n_target"] for row in report.sweep] == [3, 6]
        for row in report.sweep:
            assert row["constraint_count"]["mmdt"] == 3 * row["n_target"]
            assert row["constraint_count"]["arct"] == row["n_source"] * row["n_target"]
            assert row["fit_time_ms"] >= 0.0
            assert len(row["fit_time_ms_per_seed"]) == 2
            assert row["accuracy"]["mmdt"]["count"] == 2

    def test_report_document(self, tmp_path):
        """Test the report JSON carries version, protocol and summaries"""
        report = run_experiment("standard", _config(), show_progress=False)
        path = tmp_path / "report.json"
        report.save(path)

        data = json.loads(path.read_text())
        assert data["format_version"] == REPORT_FORMAT_VERSION
        assert data["protocol"] == "standard"
        assert data["repeats"] == 2
        assert set(data["methods"]["mmdt"]) >= {"mean", "std", "stderr", "per_seed"}
        assert "sweep" not in data

    def test_deterministic(self):
        """Test identical configurations give identical accuracy reports"""
        first = run_experiment("standard", _config(), show_progress=False).to_dict()
        second = run_experiment("standard", _config(), show_progress=False).to_dict()
        assert first["methods"] == second["methods"]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
