"""
Utilities Test Suite
Tests configuration loading, structured logging and metrics instruments
"""

import io
import json
import pytest
import sys
from pathlib import Path

from prometheus_client import REGISTRY

# Add repository root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.adaptation.mmdt import TrainConfig
from src.utils.config import DEFAULT_CONFIG_PATH, Config
from src.utils.logger import setup_logger
from src.utils.metrics import record_objective, record_solve, track_step_latency


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(
        "mmdt:\n  c_source: 2.0\n"
        "solver:\n  tol: 1.0e-7\n"
        "experiments:\n  repeats: 4\n"
        "logging:\n  level: INFO\n  format: text\n"
    )
    return path


class TestConfig:
    """Test YAML configuration access"""

    def test_dot_notation(self, config_file):
        """Test nested keys and defaults"""
        config = Config(str(config_file))
        assert config.get("mmdt.c_source") == 2.0
        assert config.get("mmdt.missing", 7) == 7
        assert config.get("solver.tol.deeper") is None

    def test_sections(self, config_file):
        """Test section helpers"""
        config = Config(str(config_file))
        assert config.get_train_defaults() == {"c_source": 2.0}
        assert config.get_solver_defaults() == {"tol": 1e-7}
        assert config.get_experiment_defaults() == {"repeats": 4}

    def test_shipped_config_keys_are_read(self):
        """Test every key in configs/config.yaml has a consumer"""
        config = Config(DEFAULT_CONFIG_PATH)
        assert set(config.config_data) == {"mmdt", "solver", "experiments", "logging"}
        assert set(config.get_train_defaults()) <= set(TrainConfig.model_fields)
        assert set(config.get_solver_defaults()) <= {"tol", "max_passes"}
        assert set(config.get_experiment_defaults()) <= {"repeats", "timing_repeats", "show_progress"}
        assert set(config.get("logging")) <= {"level", "format", "file"}

    def test_missing_file(self, tmp_path):
        """Test a missing file falls back to empty sections"""
        config = Config(str(tmp_path / "absent.yaml"))
        assert config.get_train_defaults() == {}

    def test_env_overrides(self, config_file, monkeypatch):
        """Test MMDT_LOG_LEVEL and MMDT_CONFIG"""
        monkeypatch.setenv("MMDT_LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("MMDT_CONFIG", str(config_file))
        config = Config()
        assert config.config_path == str(config_file)
        assert config.get_logging_config()["level"] == "DEBUG"


class TestLogger:
    """Test logger setup"""

    def test_json_records_carry_extras(self):
        """Test JSON output includes the iteration fields"""
        stream = io.StringIO()
        logger = setup_logger("tests.json_logger", log_level="DEBUG", json_format=True, stream=stream)
        logger.debug("half-step", extra={"iteration": 2, "step": "transform", "objective": 1.5})

        record = json.loads(stream.getvalue().strip().splitlines()[-1])
        assert record["message"] == "half-step"
        assert record["level"] == "DEBUG"
        assert record["iteration"] == 2
        assert record["step"] == "transform"
        assert record["objective"] == 1.5

    def test_level_filters(self):
        """Test records below the level are dropped"""
        stream = io.StringIO()
        logger = setup_logger("tests.text_logger", log_level="WARNING", stream=stream)
        logger.info("quiet")
        logger.warning("loud")
        assert "quiet" not in stream.getvalue()
        assert "loud" in stream.getvalue()

    def test_handlers_replaced(self):
        """Test repeated setup does not stack handlers"""
        setup_logger("tests.repeat_logger", stream=io.StringIO())
        logger = setup_logger("tests.repeat_logger", stream=io.StringIO())
        assert len(logger.handlers) == 1

    def test_file_handler(self, tmp_path):
        """Test an optional log file is written"""
        path = tmp_path / "logs" / "mmdt.log"
        logger = setup_logger("tests.file_logger", log_file=str(path), stream=io.StringIO())
        logger.info("to file")
        for handler in logger.handlers:
            handler.flush()
        assert "to file" in path.read_text()
        for handler in logger.handlers:
            handler.close()
        logger.handlers = []


class TestMetrics:
    """Test prometheus instruments"""

    def test_step_latency_recorded(self):
        """Test the decorator observes one sample per call and passes results through"""
        before = REGISTRY.get_sample_value("mmdt_step_latency_seconds_count", {"step": "unit"}) or 0.0

        @track_step_latency("unit")
        def double(x):
            return 2 * x

        assert double(4) == 8
        after = REGISTRY.get_sample_value("mmdt_step_latency_seconds_count", {"step": "unit"})
        assert after == before + 1

    def test_solve_and_objective(self):
        """Test solve outcomes count by status and the gauge holds the last value"""
        before = REGISTRY.get_sample_value(
            "mmdt_solver_runs_total", {"problem": "unit", "status": "max_passes"}
        ) or 0.0
        record_solve("unit", False)
        assert REGISTRY.get_sample_value(
            "mmdt_solver_runs_total", {"problem": "unit", "status": "max_passes"}
        ) == before + 1

        record_objective("unit", 3.25)
        assert REGISTRY.get_sample_value("mmdt_objective", {"step": "unit"}) == 3.25


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
