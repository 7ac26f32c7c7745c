"""
Configuration management
Defaults for the solver, the alternating driver and the experiment harness
"""

import yaml
import os
from typing import Dict, Any, Optional
from pathlib import Path
from dotenv import load_dotenv

import logging

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = str(Path(__file__).resolve().parents[2] / "configs" / "config.yaml")


class Config:
    """Configuration manager"""

    def __init__(self, config_path: Optional[str] = None):
        self._load_env()
        self.config_path = config_path or os.getenv("MMDT_CONFIG", DEFAULT_CONFIG_PATH)
        self.config_data: Dict[str, Any] = {}
        self._load_config()

    def _load_config(self):
        """Load configuration from YAML file"""
        if os.path.exists(self.config_path):
            with open(self.config_path, 'r', encoding='utf-8') as f:
                self.config_data = yaml.safe_load(f) or {}
        else:
            logger.warning(f"Config file not found at {self.config_path}, using built-in defaults")

    def _load_env(self):
        """Load environment variables"""
        load_dotenv()

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value

        Args:
            key: Configuration key (supports dot notation, e.g., 'mmdt.c_source')
            default: Default value if key not found

        Returns:
            Configuration value
        """
        keys = key.split('.')
        value = self.config_data

        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default

        return value

    def get_env(self, key: str, default: Optional[str] = None) -> Optional[str]:
        """Get environment variable"""
        return os.getenv(key, default)

    def get_train_defaults(self) -> Dict:
        """Get alternating-minimization defaults (C_S, C_T, iteration limits)"""
        return self.get('mmdt', {})

    def get_solver_defaults(self) -> Dict:
        """Get hinge solver defaults"""
        return self.get('solver', {})

    def get_experiment_defaults(self) -> Dict:
        """Get experiment harness defaults"""
        return self.get('experiments', {})

    def get_logging_config(self) -> Dict:
        """Get logging configuration, with MMDT_LOG_LEVEL taking precedence"""
        logging_config = dict(self.get('logging', {}))
        env_level = self.get_env('MMDT_LOG_LEVEL')
        if env_level:
            logging_config['level'] = env_level
        return logging_config


# Global config instance
_config = None


def get_config(config_path: Optional[str] = None) -> Config:
    """
    Get or create global configuration instance

    Args:
        config_path: Path to configuration file

    Returns:
        Config instance
    """
    global _config
    if _config is None or (config_path is not None and config_path != _config.config_path):
        _config = Config(config_path)
    return _config
