"""
Pipeline configuration loading.

Precedence: command-line overrides > config file > environment > built-in defaults.
"""
import json
import logging
import os
import threading
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from app.errors import ConfigError
from app.models import PipelineConfig

load_dotenv()
DEFAULT_CONFIG_PATH = os.getenv("IRIS_CONFIG", os.path.join("configs", "pipeline.json"))
DEFAULT_THREADS = int(os.getenv("IRIS_THREADS", "1"))
DEFAULT_LOG_LEVEL = os.getenv("IRIS_LOG_LEVEL", "INFO")

TIKHONOV_KEYS = ("lam", "psf_variance", "psf_size")

logger = logging.getLogger(__name__)

# Cached config with file modification time checking
_config_cache: Optional[PipelineConfig] = None
_config_cache_time: float = 0
_config_cache_path: Optional[str] = None
_config_cache_lock = threading.Lock()


def _env_defaults() -> Dict[str, Any]:
    return {"threads": max(DEFAULT_THREADS, 1)}


def _read(path: str) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must be a JSON object")
    return PipelineConfig.model_validate({**_env_defaults(), **data})


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """
    Load the pipeline config, cached by path and modification time.

    Without an explicit path the default location is tried and built-in
    defaults are used when it does not exist. An explicit path must exist.
    """
    global _config_cache, _config_cache_time, _config_cache_path

    explicit = path is not None
    path = os.path.abspath(path or DEFAULT_CONFIG_PATH)
    if not os.path.exists(path):
        if explicit:
            raise ConfigError(f"Config file not found: {path}")
        logger.debug("No config at %s; using defaults", path)
        return PipelineConfig.model_validate(_env_defaults())

    mtime = os.path.getmtime(path)
    if _config_cache is None or _config_cache_path != path or mtime > _config_cache_time:
        with _config_cache_lock:
            # Double-check after acquiring lock
            if _config_cache is None or _config_cache_path != path or mtime > _config_cache_time:
                logger.debug("Loading config from %s (mtime: %s)", path, mtime)
                _config_cache = _read(path)
                _config_cache_time = mtime
                _config_cache_path = path
    return _config_cache


def apply_overrides(config: PipelineConfig, overrides: Dict[str, Any]) -> PipelineConfig:
    """New config with every non-None override applied; Tikhonov keys go to the nested params"""
    data = config.model_dump()
    for key, value in overrides.items():
        if value is None:
            continue
        if key in TIKHONOV_KEYS:
            data["tikhonov"][key] = value
        else:
            data[key] = value
    return PipelineConfig.model_validate(data)
