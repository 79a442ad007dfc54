# cxr_report_trainer/config_manager.py
import json
import os
from typing import Any, Dict, Mapping, Optional

from cxr_report_trainer.core.config import PipelineConfig, config
from cxr_report_trainer.core.errors import ConfigError


def load_settings(
    config_path: Optional[str] = config.SETTINGS_PATH,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> PipelineConfig:
    """
    Builds a PipelineConfig from defaults, then the JSON config file (if it
    exists), then the output-dir environment variable, then flag overrides.
    Later sources win.
    """
    settings: Dict[str, Any] = {}
    if config_path and os.path.isfile(config_path):
        with open(config_path, "r") as file:
            try:
                settings.update(json.load(file))
            except json.JSONDecodeError as e:
                raise ConfigError(f"Config file {config_path} is not valid JSON: {e}")

    environ = os.environ if environ is None else environ
    env_output = environ.get(config.OUTPUT_DIR_ENV)
    if env_output:
        settings["output_dir"] = env_output

    for key, value in (overrides or {}).items():
        if value is not None:
            settings[key] = value

    unknown = sorted(set(settings) - PipelineConfig.field_names())
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
    return PipelineConfig(**settings).validate()


def save_settings(settings: PipelineConfig, config_path: str = config.SETTINGS_PATH) -> None:
    """
    Saves the settings to a JSON file.
    """
    directory = os.path.dirname(config_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(config_path, "w") as file:
        json.dump(settings.to_dict(), file, indent=4, sort_keys=True)
