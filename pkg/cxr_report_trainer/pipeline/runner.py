import json
import logging
import os
import platform
from dataclasses import replace
from datetime import datetime, timezone
from typing import Any, Dict, List, Sequence

import nltk
import numpy as np
import pandas as pd
import sklearn
import torch

from cxr_report_trainer import __version__
from cxr_report_trainer.config_manager import save_settings
from cxr_report_trainer.core.config import PipelineConfig, config
from cxr_report_trainer.core.errors import InvariantViolation
from cxr_report_trainer.core.utils import derive_seed
from cxr_report_trainer.metrics.report import format_table, mean_scores, write_eval_report
from cxr_report_trainer.pipeline import stages
from cxr_report_trainer.pipeline.synth import SyntheticSpec, synth_corpus


def library_versions() -> Dict[str, str]:
    return {
        "cxr_report_trainer": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "torch": torch.__version__,
        "nltk": nltk.__version__,
        "scikit-learn": sklearn.__version__,
    }


def stage_seeds(global_seed: int) -> Dict[str, int]:
    """The derived seeds each stage uses, recorded for reproduction."""
    return {
        "global_seed": int(global_seed),
        "pair": derive_seed(global_seed, "pair"),
        "projection": derive_seed(global_seed, "projection"),
        "embeddings": derive_seed(global_seed, "embeddings"),
    }


def check_stage_counts(cfg: PipelineConfig, counts: Dict[str, Dict[str, Any]]) -> None:
    partition_counts = counts["partition"]
    sample_counts = counts["sample"]
    if sample_counts["samples"] > cfg.samples_per_report * partition_counts["reports"]:
        raise InvariantViolation(
            f"{sample_counts['samples']} samples exceed {cfg.samples_per_report} per report "
            f"over {partition_counts['reports']} reports."
        )
    if partition_counts["subsets"] != sample_counts["partial_eval_instances"]:
        raise InvariantViolation(
            f"Partition holds {partition_counts['subsets']} subsets but "
            f"{sample_counts['partial_eval_instances']} partial-report instances were built."
        )
    if counts["fuse"]["instances"] != counts["generate"]["generated"]:
        raise InvariantViolation("Generated report count differs from fused instance count.")


def synthesize(cfg: PipelineConfig) -> Dict[str, Any]:
    spec = SyntheticSpec.from_dict(dict(cfg.synthetic, token_dim=cfg.token_dim))
    return synth_corpus(spec, derive_seed(cfg.global_seed, "synth"), cfg.corpus_dir)


def run_pipeline(cfg: PipelineConfig) -> Dict[str, Any]:
    """
    ingest -> pair -> partition -> sample -> fuse -> generate -> evaluate.
    Every stage writes its records to the output directory; the manifest
    collects versions, seeds, counts and metric tables.
    """
    started = datetime.now(timezone.utc)
    os.makedirs(cfg.output_dir, exist_ok=True)
    vocabulary = stages.region_vocabulary(cfg)
    counts: Dict[str, Dict[str, Any]] = {}

    logging.info(f"Running pipeline on {cfg.corpus_dir} with seed {cfg.global_seed}")
    reports, counts["ingest"] = stages.ingest(cfg, vocabulary)

    token_store = stages.load_tokens(cfg, vocabulary)
    pairs, counts["pair"] = stages.pair(cfg, token_store)
    stages.write_pairs(cfg, pairs)
    reports, counts["ingest"]["unpaired_reports"] = stages.paired_reports(reports, pairs)
    stages.write_reports(cfg, reports)

    partitions, counts["partition"] = stages.partition(reports)
    stages.write_partitions(cfg, partitions)

    samples, instances, counts["sample"] = stages.sample(cfg, reports, partitions, pairs, vocabulary)
    stages.write_samples(cfg, samples, instances)

    joints, counts["fuse"] = stages.fuse(cfg, instances, token_store, vocabulary)
    stages.write_joint(cfg, joints)

    generated, counts["generate"] = stages.generate(cfg, instances, joints, reports)
    stages.write_generated(cfg, generated)
    check_stage_counts(cfg, counts)

    references = {g["id"]: g["reference"] for g in generated}
    eval_reports, counts["evaluate"] = stages.evaluate(cfg, generated, references)
    write_eval_report(stages.output_path(cfg, stages.EVAL_OUT), eval_reports)
    table = format_table(eval_reports)
    logging.info("Evaluation:\n" + table)

    manifest = {
        "started_at": started.isoformat(),
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "versions": library_versions(),
        "seeds": stage_seeds(cfg.global_seed),
        "config": cfg.to_dict(),
        "counts": counts,
        "metrics": {r.name: r.to_dict() for r in eval_reports},
        "table": table.splitlines(),
    }
    write_manifest(cfg.output_dir, manifest)
    save_settings(cfg, stages.output_path(cfg, "settings.json"))
    return manifest


def run_seeds(cfg: PipelineConfig, seeds: Sequence[int]) -> Dict[str, Any]:
    """Repeat the run for several global seeds, each in its own subdirectory, and average the tables."""
    started = datetime.now(timezone.utc)
    runs: Dict[str, Dict[str, Any]] = {}
    per_split: Dict[str, List[Dict[str, float]]] = {}
    for seed in seeds:
        seed_cfg = replace(cfg, global_seed=int(seed), output_dir=os.path.join(cfg.output_dir, f"seed_{seed}"))
        manifest = run_pipeline(seed_cfg)
        runs[str(seed)] = {
            "output_dir": seed_cfg.output_dir,
            "counts": manifest["counts"],
            "scores": {name: m["scores"] for name, m in manifest["metrics"].items()},
        }
        for name, metrics in manifest["metrics"].items():
            per_split.setdefault(name, []).append(metrics["scores"])

    mean = {name: mean_scores(scores) for name, scores in per_split.items()}
    manifest = {
        "started_at": started.isoformat(),
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "versions": library_versions(),
        "seeds": [int(s) for s in seeds],
        "config": cfg.to_dict(),
        "runs": runs,
        "mean_scores": mean,
    }
    write_manifest(cfg.output_dir, manifest)
    return manifest


def write_manifest(output_dir: str, manifest: Dict[str, Any]) -> str:
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, config.MANIFEST_NAME)
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    logging.info(f"Wrote run manifest to {path}")
    return path


def load_manifest(output_dir: str) -> Dict[str, Any]:
    with open(os.path.join(output_dir, config.MANIFEST_NAME), "r") as f:
        return json.load(f)


def strip_timestamps(manifest: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v for k, v in manifest.items() if k not in ("started_at", "finished_at")}
