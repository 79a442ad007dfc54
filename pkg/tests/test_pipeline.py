import filecmp
import json
import os
import re
import shutil
import time
from dataclasses import replace

import pytest

from cxr_report_trainer.core.config import config
from cxr_report_trainer.core.data_logger import read_jsonl, write_jsonl
from cxr_report_trainer.core.errors import EXIT_DATA, EXIT_OK, EXIT_USAGE, InvariantViolation, StageError
from cxr_report_trainer.core.launcher import build_parser, main, settings_from_args
from cxr_report_trainer.pipeline import runner, stages
from cxr_report_trainer.pipeline.synth import SyntheticSpec, synth_corpus


def output(cfg, name):
    return os.path.join(cfg.output_dir, name)


def test_run_matches_ground_truth(small_config, small_corpus):
    _, sidecar = small_corpus
    manifest = runner.run_pipeline(small_config)
    counts = manifest["counts"]

    assert counts["sample"]["partial_eval_instances"] == sidecar["partial_eval_count"]
    assert counts["partition"]["subsets"] == sidecar["partial_eval_count"]
    with_findings = [e for e in sidecar["reports"].values() if e["has_findings"]]
    assert counts["ingest"]["reports"] == len(with_findings)
    assert counts["ingest"]["missing_findings"] == len(sidecar["reports"]) - len(with_findings)
    assert counts["pair"]["initial_pairs"] == sum(
        1 for e in sidecar["reports"].values() if e["is_initial"]
    )

    for record in read_jsonl(output(small_config, stages.PAIRS_OUT)):
        assert record["is_initial"] == sidecar["reports"][record["report_id"]]["is_initial"]
    for record in read_jsonl(output(small_config, stages.PARTITIONS_OUT)):
        truth = sidecar["reports"][record["report_id"]]
        assert [s["pair_indices"] for s in record["subsets"]] == [p["pair_indices"] for p in truth["partition"]]

    generated = read_jsonl(output(small_config, stages.GENERATED_OUT))
    assert len(generated) == counts["fuse"]["instances"] == counts["generate"]["generated"]
    assert [g["id"] for g in generated] == sorted(g["id"] for g in generated)
    assert {"full", "partial", "initial"} <= set(manifest["metrics"])
    assert manifest["metrics"]["full"]["count"] == counts["sample"]["full_eval_instances"]
    assert len(manifest["table"]) == 1 + len(manifest["metrics"])

    for name in (config.MANIFEST_NAME, "settings.json", stages.EVAL_OUT, stages.PROJECTION_OUT):
        assert os.path.isfile(output(small_config, name))


def test_run_is_reproducible(small_config):
    first = runner.run_pipeline(small_config)
    with open(output(small_config, stages.GENERATED_OUT), "rb") as f:
        generated = f.read()
    with open(output(small_config, stages.JOINT_OUT), "rb") as f:
        joint = f.read()

    second = runner.run_pipeline(small_config)
    assert runner.strip_timestamps(first) == runner.strip_timestamps(second)
    with open(output(small_config, stages.GENERATED_OUT), "rb") as f:
        assert f.read() == generated
    with open(output(small_config, stages.JOINT_OUT), "rb") as f:
        assert f.read() == joint
    assert runner.strip_timestamps(runner.load_manifest(small_config.output_dir)) == json.loads(
        json.dumps(runner.strip_timestamps(second))
    )


def test_corpus_without_follow_ups(tmp_path):
    corpus_dir = str(tmp_path / "corpus")
    synth_corpus(SyntheticSpec(patient_count=6, studies_per_patient=(1, 1), token_dim=4), 5, corpus_dir)
    cfg = stages.PipelineConfig(
        corpus_dir=corpus_dir, output_dir=str(tmp_path / "run"), token_dim=4, embedding_width=4
    )
    manifest = runner.run_pipeline(cfg)
    assert manifest["counts"]["pair"]["pairs_with_prior"] == 0
    assert "follow_up" not in manifest["metrics"]
    assert manifest["metrics"]["initial"]["count"] == manifest["metrics"]["full"]["count"]


def test_token_width_must_match_config(small_config):
    with pytest.raises(stages.ConfigError):
        runner.run_pipeline(replace(small_config, token_dim=16))


def test_several_seeds(small_config):
    manifest = runner.run_seeds(small_config, [1, 2])
    assert sorted(manifest["runs"]) == ["1", "2"]
    assert os.path.isfile(os.path.join(small_config.output_dir, "seed_1", config.MANIFEST_NAME))
    full_scores = [run["scores"]["full"]["BL-1"] for run in manifest["runs"].values()]
    assert manifest["mean_scores"]["full"]["BL-1"] == pytest.approx(sum(full_scores) / 2)


def test_check_stage_counts(small_config):
    counts = {
        "partition": {"reports": 2, "subsets": 5},
        "sample": {"samples": 2, "partial_eval_instances": 4},
        "fuse": {"instances": 6},
        "generate": {"generated": 6},
    }
    with pytest.raises(InvariantViolation):
        runner.check_stage_counts(small_config, counts)
    counts["sample"]["partial_eval_instances"] = 5
    runner.check_stage_counts(small_config, counts)
    counts["sample"]["samples"] = 3
    with pytest.raises(InvariantViolation):
        runner.check_stage_counts(small_config, counts)


def test_stage_errors_carry_record_id():
    with pytest.raises(StageError) as info:
        with stages.stage_errors("partition", "r7"):
            raise ValueError("boom")
    assert info.value.stage == "partition"
    assert info.value.record_id == "r7"


def test_split_records():
    generated = [
        {"id": "b#full", "split": "full", "is_initial": False, "text": "x"},
        {"id": "a#full", "split": "full", "is_initial": True, "text": "y"},
        {"id": "a#0", "split": "partial", "is_initial": True, "text": "z"},
        {"id": "loose", "text": "w"},
    ]
    references = {g["id"]: "ref" for g in generated}
    splits = stages.split_records(generated, references)
    assert splits["full"][0] == ["a#full", "b#full"]
    assert splits["initial"][0] == ["a#full"]
    assert splits["follow_up"][0] == ["b#full"]
    assert splits["partial"][0] == ["a#0"]
    assert splits["all"][0] == ["loose"]


# command line


def cli_args(command, cfg_path, corpus_dir, output_dir, *extra):
    return [command, "--config", str(cfg_path), "--corpus-dir", str(corpus_dir),
            "--output-dir", str(output_dir), *extra]


@pytest.fixture
def cli_config(tmp_path):
    path = tmp_path / "settings.json"
    path.write_text(json.dumps({"token_dim": 8, "embedding_width": 8, "synthetic": {"patient_count": 4}}))
    return path


def test_cli_stages_match_full_run(small_corpus, cli_config, tmp_path):
    corpus_dir, _ = small_corpus
    run_dir, stage_dir = tmp_path / "run", tmp_path / "stages"
    assert main(cli_args("run", cli_config, corpus_dir, run_dir)) == EXIT_OK
    for command in stages.STAGES:
        assert main(cli_args(command, cli_config, corpus_dir, stage_dir)) == EXIT_OK
    for name in (stages.GENERATED_OUT, stages.REFERENCES_OUT, stages.EVAL_OUT, stages.JOINT_OUT):
        assert filecmp.cmp(run_dir / name, stage_dir / name, shallow=False), name


def test_cli_synthesize_and_run(cli_config, tmp_path):
    corpus_dir = tmp_path / "corpus"
    assert main(cli_args("synth", cli_config, corpus_dir, tmp_path / "out", "--patients", "2")) == EXIT_OK
    assert json.loads((corpus_dir / config.SIDECAR_FILE).read_text())["patients"] == 2

    assert main(cli_args("run", cli_config, corpus_dir, tmp_path / "run", "--synthesize")) == EXIT_OK
    assert json.loads((corpus_dir / config.SIDECAR_FILE).read_text())["patients"] == 4
    assert (tmp_path / "run" / config.MANIFEST_NAME).is_file()


def test_cli_evaluate_with_label_files(small_corpus, cli_config, tmp_path):
    corpus_dir, _ = small_corpus
    run_dir = tmp_path / "run"
    assert main(cli_args("run", cli_config, corpus_dir, run_dir)) == EXIT_OK

    generated = read_jsonl(str(run_dir / stages.GENERATED_OUT))
    no_mention = {name: "no_mention" for name in stages.load_finding_vocabulary(config.LABELER_VOCAB_PATH)}
    label_file = tmp_path / "labels.jsonl"
    label_file.write_text("".join(json.dumps({"id": g["id"], "labels": no_mention}) + "\n" for g in generated))
    args = cli_args("evaluate", cli_config, corpus_dir, run_dir,
                    "--gt-labels", str(label_file), "--pred-labels", str(label_file))
    assert main(args) == EXIT_OK
    with open(run_dir / stages.EVAL_OUT) as f:
        assert json.load(f)["full"]["ce"]["zero_division"] is True


def test_cli_usage_errors(tmp_path, cli_config):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(cli_args("run", cli_config, tmp_path, tmp_path / "out", "--seeds", "1,x"))
    assert info.value.code == EXIT_USAGE
    assert main(cli_args("ingest", cli_config, tmp_path / "missing", tmp_path / "out")) == EXIT_USAGE
    assert main(cli_args("ingest", cli_config, tmp_path, tmp_path / "out", "--token-dim", "0")) == EXIT_USAGE


def test_cli_data_error(small_corpus, cli_config, tmp_path):
    corpus_dir = tmp_path / "corpus"
    shutil.copytree(small_corpus[0], corpus_dir)
    report_id = read_jsonl(str(corpus_dir / config.ANNOTATIONS_FILE))[0]["report_id"]
    with open(corpus_dir / config.ANNOTATIONS_FILE, "a") as f:
        f.write(json.dumps({"report_id": report_id, "sentence_index": 99, "text": "Elbow.",
                            "regions": ["left elbow"]}) + "\n")
    assert main(cli_args("ingest", cli_config, corpus_dir, tmp_path / "out")) == EXIT_DATA


def joint_records(cfg):
    return {r["instance_id"]: r for r in read_jsonl(output(cfg, stages.JOINT_OUT))}


def test_run_without_priors(small_config, tmp_path):
    longitudinal = runner.run_pipeline(small_config)
    blinded_cfg = replace(small_config, output_dir=str(tmp_path / "no_priors"), use_priors=False)
    blinded = runner.run_pipeline(blinded_cfg)

    assert longitudinal["config"]["use_priors"] is True
    assert blinded["config"]["use_priors"] is False
    assert blinded["counts"]["fuse"]["use_priors"] is False
    assert blinded["counts"]["fuse"]["missing_prior_tokens"] == 0

    with_priors, without = joint_records(small_config), joint_records(blinded_cfg)
    assert sorted(with_priors) == sorted(without)
    initial = {g["id"]: g["is_initial"] for g in read_jsonl(output(small_config, stages.GENERATED_OUT))}
    for instance_id, is_initial in initial.items():
        if is_initial:
            assert without[instance_id] == with_priors[instance_id], instance_id
    assert any(
        without[i] != with_priors[i] for i, is_initial in initial.items() if not is_initial
    )


def test_custom_section_headers(small_corpus, tmp_path):
    corpus_dir = tmp_path / "corpus"
    shutil.copytree(small_corpus[0], corpus_dir)
    reports = read_jsonl(str(corpus_dir / config.REPORTS_FILE))
    for report in reports:
        report["text"] = re.sub(r"(?i)\bfindings:", "OBSERVATIONS:", report["text"])
    write_jsonl(str(corpus_dir / config.REPORTS_FILE), reports)
    cfg = stages.PipelineConfig(corpus_dir=str(corpus_dir), output_dir=str(tmp_path / "run"), token_dim=8)
    vocabulary = stages.region_vocabulary(cfg)

    ingested, counts = stages.ingest(cfg, vocabulary)
    assert ingested == [] and counts["missing_findings"] == len(reports)

    cfg = replace(cfg, findings_headers=["OBSERVATIONS"])
    ingested, counts = stages.ingest(cfg, vocabulary)
    with_findings = [e for e in small_corpus[1]["reports"].values() if e["has_findings"]]
    assert counts["reports"] == len(ingested) == len(with_findings)


def test_default_synthetic_corpus_is_reproducible_and_fast(tmp_path):
    spec = SyntheticSpec()
    assert spec.patient_count == 50
    corpus_dir = str(tmp_path / "corpus")
    sidecar = synth_corpus(spec, 0, corpus_dir)
    cfg = stages.PipelineConfig(corpus_dir=corpus_dir, token_dim=spec.token_dim)

    manifests = []
    for name in ("first", "second"):
        start = time.perf_counter()
        manifests.append(runner.run_pipeline(replace(cfg, output_dir=str(tmp_path / name))))
        assert time.perf_counter() - start < 60.0

    first, second = (runner.strip_timestamps(m) for m in manifests)
    first["config"].pop("output_dir")
    second["config"].pop("output_dir")
    assert first == second
    assert manifests[0]["counts"]["sample"]["partial_eval_instances"] == sidecar["partial_eval_count"]


def test_cli_prior_and_header_flags(cli_config, tmp_path):
    parser = build_parser()
    defaults = settings_from_args(parser.parse_args(cli_args("fuse", cli_config, tmp_path, tmp_path / "out")))
    assert defaults.use_priors is True
    assert defaults.findings_headers == list(config.FINDINGS_HEADERS)

    args = parser.parse_args(cli_args(
        "fuse", cli_config, tmp_path, tmp_path / "out",
        "--no-priors", "--findings-header", "OBSERVATIONS", "--findings-header", "FINDINGS",
        "--indication-header", "REASON",
    ))
    cfg = settings_from_args(args)
    assert cfg.use_priors is False
    assert cfg.findings_headers == ["OBSERVATIONS", "FINDINGS"]
    assert cfg.indication_headers == ["REASON"]
