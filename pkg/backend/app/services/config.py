"""
Service configuration

JSON file merged over built-in defaults, then environment overrides
(MOSAIC_* variables, optionally from a .env file), then command-line flags.
"""

from typing import Dict, Optional
import copy
import json
import logging
import os
from pathlib import Path

from dotenv import load_dotenv

from ..models.schemas import PipelineSpec, PoolPolicy

logger = logging.getLogger(__name__)

BASE_DIR = Path(__file__).parent.parent.parent
DEFAULT_CONFIG_PATH = BASE_DIR / "data" / "mosaic_config.json"

DEFAULTS: Dict = {
    "server": {
        "host": "0.0.0.0",
        "port": 8000,
    },
    "registry": {
        "data_dir": "data/registry",
        "default_policy": PoolPolicy().model_dump(),
        "default_pipeline": {
            "master_seed": 0,
            "stages": [{"plugin": "bilr", "config": {}},
                       {"plugin": "stack_pad", "config": {}},
                       {"plugin": "global_shuffle", "config": {}},
                       {"plugin": "heap_pad", "config": {}}],
        },
        "selection_seed": None,
    },
    "log_level": "INFO",
}

# Environment variable -> dot-notation key
ENV_KEYS = {
    "MOSAIC_DATA_DIR": "registry.data_dir",
    "MOSAIC_HOST": "server.host",
    "MOSAIC_PORT": "server.port",
    "MOSAIC_LOG_LEVEL": "log_level",
}


def _merge(base: Dict, override: Dict) -> Dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class ServiceConfig:
    """Layered configuration with dot-notation lookups"""

    def __init__(self, config_path: Optional[str] = None, overrides: Optional[Dict] = None,
                 use_env: bool = True):
        if use_env:
            load_dotenv()
        if config_path is None and use_env:
            config_path = os.getenv("MOSAIC_CONFIG")
        self.config_path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH

        self.config = _merge(DEFAULTS, self._load_file())
        if use_env:
            for var, key in ENV_KEYS.items():
                value = os.getenv(var)
                if value:
                    self.set(key, int(value) if key == "server.port" else value)
        for key, value in (overrides or {}).items():
            if value is not None:
                self.set(key, value)

        # Validate the structured sections up front
        self.default_policy = PoolPolicy.model_validate(self.get("registry.default_policy"))
        self.default_pipeline = PipelineSpec.model_validate(self.get("registry.default_pipeline"))

    def _load_file(self) -> Dict:
        """Load configuration from file; a missing file means defaults"""
        if not self.config_path.exists():
            return {}
        try:
            with open(self.config_path, "r") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"⚠ Error loading config {self.config_path}, using defaults: {e}")
            return {}

    def get(self, key: str, default=None):
        """Get configuration value by dot-notation key"""
        value = self.config
        for k in key.split("."):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value) -> None:
        keys = key.split(".")
        node = self.config
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value

    @property
    def data_dir(self) -> Path:
        path = Path(self.get("registry.data_dir"))
        return path if path.is_absolute() else BASE_DIR / path

    @property
    def log_level(self) -> str:
        return str(self.get("log_level", "INFO")).upper()

    def to_dict(self) -> Dict:
        return copy.deepcopy(self.config)
