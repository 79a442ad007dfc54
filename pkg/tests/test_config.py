import json
import logging

import pytest

from cxr_report_trainer.config_manager import load_settings, save_settings
from cxr_report_trainer.core.config import PipelineConfig, config
from cxr_report_trainer.core.data_logger import DataLogger, iter_jsonl, read_jsonl
from cxr_report_trainer.core.errors import (
    EXIT_DATA,
    EXIT_INVARIANT,
    EXIT_USAGE,
    ConfigError,
    DataError,
    InvariantViolation,
    MissingFindings,
    StageError,
    exit_code_for,
)
from cxr_report_trainer.core.logging_config import setup_logging
from cxr_report_trainer.core.utils import derive_seed, make_rng


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def test_defaults_when_file_is_missing(tmp_path):
    settings = load_settings(str(tmp_path / "missing.json"), environ={})
    assert settings == PipelineConfig()
    assert settings.token_dim == 64
    assert settings.ce_average == "micro"


def test_precedence(tmp_path):
    path = write_json(tmp_path / "settings.json", {"token_dim": 16, "output_dir": "from-file", "global_seed": 4})
    environ = {config.OUTPUT_DIR_ENV: "from-env"}

    settings = load_settings(path, environ=environ)
    assert settings.token_dim == 16
    assert settings.output_dir == "from-env"
    assert settings.global_seed == 4

    settings = load_settings(path, {"output_dir": "from-flag", "global_seed": None}, environ=environ)
    assert settings.output_dir == "from-flag"
    assert settings.global_seed == 4


def test_unknown_keys_and_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(write_json(tmp_path / "a.json", {"token_size": 3}), environ={})
    with pytest.raises(ConfigError):
        load_settings(write_json(tmp_path / "b.json", {"ce_average": "weighted"}), environ={})
    with pytest.raises(ConfigError):
        load_settings(None, {"full_report_probability": 1.5}, environ={})
    bad = tmp_path / "c.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_settings(str(bad), environ={})


def test_save_and_reload(tmp_path):
    settings = PipelineConfig(global_seed=9, synthetic={"patient_count": 3})
    path = str(tmp_path / "nested" / "settings.json")
    save_settings(settings, path)
    assert load_settings(path, environ={}) == settings


def test_require_paths():
    with pytest.raises(ConfigError):
        PipelineConfig(projection_params_path="/no/such/file.json").require_paths("projection_params_path")


def test_exit_codes():
    assert exit_code_for(ConfigError("x")) == EXIT_USAGE
    assert exit_code_for(MissingFindings("r1")) == EXIT_DATA
    assert exit_code_for(InvariantViolation("x")) == EXIT_INVARIANT
    assert exit_code_for(RuntimeError("x")) == EXIT_INVARIANT
    wrapped = StageError("ingest", "r1", MissingFindings("r1"))
    assert exit_code_for(wrapped) == EXIT_DATA
    assert "ingest" in str(wrapped) and "r1" in str(wrapped)


def test_derive_seed():
    assert derive_seed(0, "pair") == derive_seed(0, "pair")
    assert derive_seed(0, "pair") != derive_seed(1, "pair")
    assert derive_seed(0, "a", "b") != derive_seed(0, "ab")
    assert 0 <= derive_seed(123, "x") < 2**64
    assert make_rng(5).random() == make_rng(5).random()


def test_data_logger(tmp_path):
    path = str(tmp_path / "out" / "records.jsonl")
    logger = DataLogger(path, sort_key=lambda r: r["id"])
    logger.extend([{"id": "b", "x": 2}, {"id": "a", "x": 1}])
    assert logger.save() == 2
    assert [r["id"] for r in read_jsonl(path)] == ["a", "b"]

    # a new logger starts from an empty file
    DataLogger(path)
    assert read_jsonl(path) == []


def test_iter_jsonl_errors(tmp_path):
    with pytest.raises(DataError):
        list(iter_jsonl(str(tmp_path / "missing.jsonl")))
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"a": 1}\n{oops\n')
    with pytest.raises(DataError):
        list(iter_jsonl(str(bad)))


def test_setup_logging_writes_file(tmp_path):
    log_file = tmp_path / "logs" / "pipeline.log"
    setup_logging("DEBUG", str(log_file))
    logging.info("hello from the test")
    for handler in logging.getLogger().handlers:
        handler.flush()
    assert "INFO - hello from the test" in log_file.read_text()


def test_section_header_settings(tmp_path):
    assert PipelineConfig().findings_headers == ["FINDINGS"]
    assert PipelineConfig().indication_headers == ["INDICATION", "HISTORY"]
    path = write_json(tmp_path / "settings.json", {"findings_headers": ["OBSERVATIONS"], "indication_headers": []})
    settings = load_settings(path, environ={})
    assert settings.findings_headers == ["OBSERVATIONS"]
    assert settings.indication_headers == []
    with pytest.raises(ConfigError):
        load_settings(None, {"findings_headers": []}, environ={})
    with pytest.raises(ConfigError):
        load_settings(None, {"indication_headers": ["HISTORY", " "]}, environ={})
