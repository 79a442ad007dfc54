"""
Pipeline stages. Each stage takes the previous stage's records in memory,
returns its own records plus a counts dict, and has a writer and loader for
its files in the output directory so the CLI can run stages one at a time.

Per-record failures are wrapped in StageError with the stage name and the
offending record id.
"""
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple

from tqdm import tqdm

from cxr_report_trainer.anatomy_graph.dropout import (
    DropoutSample,
    build_partial_eval_set,
    check_dropout_sample,
    sample_epoch,
)
from cxr_report_trainer.anatomy_graph.valid_subsets import (
    MAPPING_TYPES,
    ValidPartition,
    find_valid_subsets,
    validate_partition,
)
from cxr_report_trainer.corpus.annotations import (
    AnnotatedReport,
    group_annotation_records,
    parse_annotations,
)
from cxr_report_trainer.corpus.sections import SectionHeaders, parse_report_sections
from cxr_report_trainer.corpus.tokens import AnatomicalTokenSet, TokenKey, load_token_store
from cxr_report_trainer.corpus.vocabulary import (
    RegionVocabulary,
    load_finding_vocabulary,
    load_region_vocabulary,
)
from cxr_report_trainer.core.config import PipelineConfig, config
from cxr_report_trainer.core.data_logger import iter_jsonl, read_jsonl, write_jsonl
from cxr_report_trainer.core.errors import (
    ConfigError,
    InvariantViolation,
    MissingFindings,
    StageError,
)
from cxr_report_trainer.core.utils import derive_seed
from cxr_report_trainer.fusion.generator import generate_report, get_generator
from cxr_report_trainer.fusion.joint import JointRepresentation, build_joint_representation
from cxr_report_trainer.fusion.multimodal_input import (
    EmbeddingTables,
    TextVocabulary,
    assemble_multimodal_input,
    encode_indication,
)
from cxr_report_trainer.fusion.projection_model import ProjectionParams, load_params, save_params
from cxr_report_trainer.longitudinal.pairing import LongitudinalPair, align_token_sets, pair_all_patients
from cxr_report_trainer.longitudinal.studies import build_study_records, read_metadata
from cxr_report_trainer.metrics.clinical import get_labeler
from cxr_report_trainer.metrics.report import EvalReport, evaluate_corpus

STAGES = ("ingest", "pair", "partition", "sample", "fuse", "generate", "evaluate")

SPLIT_FULL = "full"
SPLIT_PARTIAL = "partial"
SPLIT_INITIAL = "initial"
SPLIT_FOLLOW_UP = "follow_up"
EVAL_SPLITS = (SPLIT_FULL, SPLIT_PARTIAL, SPLIT_INITIAL, SPLIT_FOLLOW_UP)

REPORTS_OUT = "reports.jsonl"
PAIRS_OUT = "pairs.jsonl"
PARTITIONS_OUT = "partitions.jsonl"
SAMPLES_OUT = "samples.jsonl"
INSTANCES_OUT = "eval_instances.jsonl"
PROJECTION_OUT = "projection.json"
JOINT_OUT = "joint.jsonl"
INDICATION_VOCAB_OUT = "indication_vocab.txt"
GENERATED_OUT = "generated.jsonl"
REFERENCES_OUT = "references.jsonl"
EVAL_OUT = "eval.json"

_RECORD_ATTRIBUTES = ("report_id", "patient_id", "study_id", "key")


def _record_id_of(exc: BaseException) -> Optional[str]:
    for name in _RECORD_ATTRIBUTES:
        value = getattr(exc, name, None)
        if value is not None:
            return str(value)
    return None


@contextmanager
def stage_errors(stage: str, record_id: Optional[str] = None) -> Iterator[None]:
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        record_id = record_id if record_id is not None else _record_id_of(e)
        logging.error(f"Stage {stage} failed on {record_id}: {e}")
        raise StageError(stage, record_id, e) from e


def _progress(items: Sequence, stage: str):
    return tqdm(items, desc=stage, unit="rec", disable=None, leave=False)


def corpus_path(cfg: PipelineConfig, name: str) -> str:
    return os.path.join(cfg.corpus_dir, name)


def output_path(cfg: PipelineConfig, name: str) -> str:
    return os.path.join(cfg.output_dir, name)


def require_corpus(cfg: PipelineConfig, *names: str) -> None:
    for name in names:
        if not os.path.isfile(corpus_path(cfg, name)):
            raise ConfigError(f"Corpus file {corpus_path(cfg, name)} does not exist.")


def region_vocabulary(cfg: PipelineConfig) -> RegionVocabulary:
    cfg.require_paths("region_vocab_path")
    return load_region_vocabulary(cfg.region_vocab_path)


# ingest


def ingest(
    cfg: PipelineConfig, vocabulary: RegionVocabulary
) -> Tuple[List[AnnotatedReport], Dict[str, int]]:
    """Parse raw reports and attach sentence annotations. Reports without Findings are skipped."""
    require_corpus(cfg, config.REPORTS_FILE, config.ANNOTATIONS_FILE)
    cfg.require_paths("finding_vocab_path")
    findings_vocabulary = load_finding_vocabulary(cfg.finding_vocab_path)
    headers = SectionHeaders(
        findings=tuple(cfg.findings_headers), indication=tuple(cfg.indication_headers)
    )

    raw = sorted(read_jsonl(corpus_path(cfg, config.REPORTS_FILE)), key=lambda r: str(r["report_id"]))
    annotations = group_annotation_records(iter_jsonl(corpus_path(cfg, config.ANNOTATIONS_FILE)))

    reports = []
    missing_findings = 0
    unannotated = 0
    for record in _progress(raw, "ingest"):
        report_id = str(record["report_id"])
        with stage_errors("ingest", report_id):
            try:
                findings, indication = parse_report_sections(record["text"], headers, report_id)
            except MissingFindings as e:
                logging.warning(f"Skipping report: {e}")
                missing_findings += 1
                continue
            records = annotations.get(report_id)
            if not records:
                logging.warning(f"Skipping report {report_id}: no sentence annotations.")
                unannotated += 1
                continue
            reports.append(
                parse_annotations(records, vocabulary, report_id, findings, indication)
            )

    counts = {
        "raw_reports": len(raw),
        "reports": len(reports),
        "missing_findings": missing_findings,
        "unannotated": unannotated,
        "sentences": sum(r.sentence_count for r in reports),
        "unlocalized_sentences": sum(len(r.unlocalized_indices) for r in reports),
        "region_vocabulary_size": len(vocabulary),
        "finding_vocabulary_size": len(findings_vocabulary),
    }
    logging.info(
        f"Ingested {len(reports)} of {len(raw)} reports "
        f"({missing_findings} without findings, {unannotated} unannotated)."
    )
    return reports, counts


def write_reports(cfg: PipelineConfig, reports: Sequence[AnnotatedReport]) -> None:
    write_jsonl(
        output_path(cfg, REPORTS_OUT), (r.to_dict() for r in reports), sort_key=lambda r: r["report_id"]
    )


def load_reports(cfg: PipelineConfig, vocabulary: RegionVocabulary) -> List[AnnotatedReport]:
    return [AnnotatedReport.from_dict(r, vocabulary) for r in iter_jsonl(output_path(cfg, REPORTS_OUT))]


# pair


def load_tokens(
    cfg: PipelineConfig, vocabulary: RegionVocabulary
) -> Dict[TokenKey, AnatomicalTokenSet]:
    require_corpus(cfg, config.TOKENS_FILE)
    with stage_errors("pair"):
        token_store = load_token_store(corpus_path(cfg, config.TOKENS_FILE), vocabulary)
    widths = {tokens.d for tokens in token_store.values()}
    if widths and widths != {cfg.token_dim}:
        raise ConfigError(
            f"token_dim is {cfg.token_dim} but the token file holds widths {sorted(widths)}."
        )
    return token_store


def pair(
    cfg: PipelineConfig, token_store: Mapping[TokenKey, AnatomicalTokenSet]
) -> Tuple[List[LongitudinalPair], Dict[str, Any]]:
    require_corpus(cfg, config.METADATA_FILE)
    with stage_errors("pair"):
        metadata = read_metadata(corpus_path(cfg, config.METADATA_FILE))
        studies = build_study_records(metadata, token_store)
        pairs, stats = pair_all_patients(studies, derive_seed(cfg.global_seed, "pair"))
    return pairs, stats.to_dict()


def write_pairs(cfg: PipelineConfig, pairs: Sequence[LongitudinalPair]) -> None:
    write_jsonl(
        output_path(cfg, PAIRS_OUT),
        (p.to_dict() for p in pairs),
        sort_key=lambda r: (r["current"]["study_id"], r["current"]["scan_id"]),
    )


def load_pairs(cfg: PipelineConfig) -> List[LongitudinalPair]:
    return [LongitudinalPair.from_dict(r) for r in iter_jsonl(output_path(cfg, PAIRS_OUT))]


def pairs_by_report(pairs: Sequence[LongitudinalPair]) -> Dict[str, LongitudinalPair]:
    return {p.report_id: p for p in pairs if p.report_id}


def paired_reports(
    reports: Sequence[AnnotatedReport], pairs: Sequence[LongitudinalPair]
) -> Tuple[List[AnnotatedReport], int]:
    """Keep reports whose study has a usable current scan."""
    by_report = pairs_by_report(pairs)
    kept = [r for r in reports if r.report_id in by_report]
    dropped = len(reports) - len(kept)
    if dropped:
        logging.warning(f"{dropped} report(s) have no paired AP/PA scan and are left out.")
    return kept, dropped


# partition


def partition(
    reports: Sequence[AnnotatedReport],
) -> Tuple[List[ValidPartition], Dict[str, Any]]:
    partitions = []
    mapping_counts = dict.fromkeys(MAPPING_TYPES, 0)
    for report in _progress(reports, "partition"):
        with stage_errors("partition", report.report_id):
            result = find_valid_subsets(report)
            check = validate_partition(report, result)
            if not check:
                raise InvariantViolation(
                    f"Partition of {report.report_id} is invalid: {'; '.join(check.diagnostics)}"
                )
        for name, count in result.mapping_counts().items():
            mapping_counts[name] += count
        partitions.append(result)

    counts = {
        "reports": len(partitions),
        "subsets": sum(p.K for p in partitions),
        "empty_partitions": sum(1 for p in partitions if p.K == 0),
        "mapping_counts": mapping_counts,
    }
    logging.info(f"Partitioned {len(partitions)} reports into {counts['subsets']} valid subsets.")
    return partitions, counts


def write_partitions(cfg: PipelineConfig, partitions: Sequence[ValidPartition]) -> None:
    write_jsonl(
        output_path(cfg, PARTITIONS_OUT),
        (p.to_dict() for p in partitions),
        sort_key=lambda r: r["report_id"],
    )


def load_partitions(cfg: PipelineConfig) -> List[ValidPartition]:
    return [ValidPartition.from_dict(r) for r in iter_jsonl(output_path(cfg, PARTITIONS_OUT))]


# sample


@dataclass(frozen=True)
class EvalInstance:
    """One generation request: a report, the regions to describe and the expected text."""

    instance_id: str
    split: str
    report_id: str
    A_target: FrozenSet[str]
    target_text: str
    pair: LongitudinalPair

    def to_dict(self) -> Dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "split": self.split,
            "report_id": self.report_id,
            "A_target": sorted(self.A_target),
            "target_text": self.target_text,
            "pair": self.pair.to_dict(),
        }

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "EvalInstance":
        return cls(
            instance_id=record["instance_id"],
            split=record["split"],
            report_id=record["report_id"],
            A_target=frozenset(record["A_target"]),
            target_text=record["target_text"],
            pair=LongitudinalPair.from_dict(record["pair"]),
        )


def build_eval_instances(
    reports: Sequence[AnnotatedReport],
    pairs: Sequence[LongitudinalPair],
    vocabulary: RegionVocabulary,
) -> List[EvalInstance]:
    """A full-report instance (every region) per report, plus one instance per valid subset."""
    by_report = pairs_by_report(pairs)
    reports = [r for r in reports if r.report_id in by_report]
    all_regions = frozenset(vocabulary.names)
    instances = [
        EvalInstance(f"{r.report_id}#full", SPLIT_FULL, r.report_id, all_regions,
                     r.findings_text, by_report[r.report_id])
        for r in reports
    ]
    for partial in build_partial_eval_set(reports):
        instances.append(
            EvalInstance(partial.instance_id, SPLIT_PARTIAL, partial.report_id, partial.A_target,
                         partial.target_text, by_report[partial.report_id])
        )
    return instances


def sample(
    cfg: PipelineConfig,
    reports: Sequence[AnnotatedReport],
    partitions: Sequence[ValidPartition],
    pairs: Sequence[LongitudinalPair],
    vocabulary: RegionVocabulary,
) -> Tuple[List[DropoutSample], List[EvalInstance], Dict[str, Any]]:
    with stage_errors("sample"):
        samples, skipped = sample_epoch(
            partitions,
            cfg.global_seed,
            cfg.samples_per_report,
            vocabulary,
            cfg.full_report_probability,
        )
    by_id = {r.report_id: r for r in reports}
    for s in _progress(samples, "sample"):
        with stage_errors("sample", s.report_id):
            violations = check_dropout_sample(by_id[s.report_id], s)
            if violations:
                raise InvariantViolation(
                    f"Dropout sample of {s.report_id} breaks {'; '.join(violations)}"
                )
    with stage_errors("sample"):
        instances = build_eval_instances(reports, pairs, vocabulary)

    counts = {
        "samples": len(samples),
        "skipped_reports": skipped,
        "full_report_samples": sum(1 for s in samples if s.is_full_report),
        "full_eval_instances": sum(1 for i in instances if i.split == SPLIT_FULL),
        "partial_eval_instances": sum(1 for i in instances if i.split == SPLIT_PARTIAL),
    }
    logging.info(
        f"Drew {len(samples)} dropout samples; "
        f"{counts['partial_eval_instances']} partial-report evaluation instances."
    )
    return samples, instances, counts


def write_samples(
    cfg: PipelineConfig, samples: Sequence[DropoutSample], instances: Sequence[EvalInstance]
) -> None:
    write_jsonl(output_path(cfg, SAMPLES_OUT), (s.to_dict() for s in samples))
    write_jsonl(
        output_path(cfg, INSTANCES_OUT),
        (i.to_dict() for i in instances),
        sort_key=lambda r: (r["split"], r["instance_id"]),
    )


def load_samples(cfg: PipelineConfig) -> List[DropoutSample]:
    return [DropoutSample.from_dict(r) for r in iter_jsonl(output_path(cfg, SAMPLES_OUT))]


def load_instances(cfg: PipelineConfig) -> List[EvalInstance]:
    return [EvalInstance.from_dict(r) for r in iter_jsonl(output_path(cfg, INSTANCES_OUT))]


# fuse


def projection_params(cfg: PipelineConfig) -> Tuple[ProjectionParams, str]:
    """Configured parameters, or a seeded initialization saved with the run."""
    if cfg.projection_params_path:
        cfg.require_paths("projection_params_path")
        params = load_params(cfg.projection_params_path)
        source = cfg.projection_params_path
    else:
        params = ProjectionParams.random(cfg.token_dim, derive_seed(cfg.global_seed, "projection"))
        source = "seeded"
    if params.token_dim != cfg.token_dim:
        raise ConfigError(
            f"Projection parameters expect d={params.token_dim}, config has d={cfg.token_dim}."
        )
    save_params(params, output_path(cfg, PROJECTION_OUT))
    return params, source


def fuse(
    cfg: PipelineConfig,
    instances: Sequence[EvalInstance],
    token_store: Mapping[TokenKey, AnatomicalTokenSet],
    vocabulary: RegionVocabulary,
) -> Tuple[Dict[str, JointRepresentation], Dict[str, Any]]:
    params, source = projection_params(cfg)
    aligned: Dict[TokenKey, Tuple[AnatomicalTokenSet, AnatomicalTokenSet]] = {}
    joints: Dict[str, JointRepresentation] = {}
    missing_priors = 0
    for instance in _progress(instances, "fuse"):
        with stage_errors("fuse", instance.instance_id):
            key = instance.pair.current
            if key not in aligned:
                prior = instance.pair.prior
                if cfg.use_priors and prior is not None and prior not in token_store:
                    missing_priors += 1
                aligned[key] = align_token_sets(
                    instance.pair, token_store, vocabulary, use_priors=cfg.use_priors
                )
            V_current, V_prior = aligned[key]
            joints[instance.instance_id] = build_joint_representation(
                V_current, V_prior, instance.A_target, params
            )
    counts = {
        "instances": len(joints),
        "scans": len(aligned),
        "missing_prior_tokens": missing_priors,
        "projection": source,
        "joint_width": params.width,
        "use_priors": cfg.use_priors,
    }
    logging.info(f"Fused {len(joints)} joint representations over {len(aligned)} scans.")
    return joints, counts


def write_joint(cfg: PipelineConfig, joints: Mapping[str, JointRepresentation]) -> None:
    write_jsonl(
        output_path(cfg, JOINT_OUT),
        (dict(j.to_dict(), instance_id=i) for i, j in joints.items()),
        sort_key=lambda r: r["instance_id"],
    )


def load_joint(cfg: PipelineConfig, vocabulary: RegionVocabulary) -> Dict[str, JointRepresentation]:
    return {
        r["instance_id"]: JointRepresentation.from_dict(r, vocabulary)
        for r in iter_jsonl(output_path(cfg, JOINT_OUT))
    }


# generate


def generate(
    cfg: PipelineConfig,
    instances: Sequence[EvalInstance],
    joints: Mapping[str, JointRepresentation],
    reports: Sequence[AnnotatedReport],
) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
    by_id = {r.report_id: r for r in reports}
    text_vocabulary = TextVocabulary.from_texts(r.indication_text for r in reports)
    with open(output_path(cfg, INDICATION_VOCAB_OUT), "w", encoding="utf-8") as f:
        f.write("\n".join(text_vocabulary.words) + "\n")

    tables = EmbeddingTables.random(
        len(text_vocabulary),
        cfg.max_positions,
        cfg.embedding_width,
        2 * cfg.token_dim,
        seed=derive_seed(cfg.global_seed, "embeddings"),
    )
    generator = get_generator(cfg.generator)

    generated = []
    for instance in _progress(instances, "generate"):
        with stage_errors("generate", instance.instance_id):
            indication = encode_indication(by_id[instance.report_id].indication_text, text_vocabulary)
            sequence = assemble_multimodal_input(
                joints[instance.instance_id], indication, tables, cfg.include_masked_regions
            )
            text = generate_report(sequence, generator)
        generated.append(
            {
                "id": instance.instance_id,
                "split": instance.split,
                "is_initial": instance.pair.is_initial,
                "text": text,
                "reference": instance.target_text,
            }
        )
    counts = {
        "generated": len(generated),
        "generator": cfg.generator,
        "indication_vocabulary_size": len(text_vocabulary),
    }
    logging.info(f"Generated {len(generated)} reports with the {cfg.generator} generator.")
    return generated, counts


def write_generated(cfg: PipelineConfig, generated: Sequence[Mapping[str, Any]]) -> None:
    def strip(record, text_key):
        return {"id": record["id"], "split": record["split"],
                "is_initial": record["is_initial"], "text": record[text_key]}

    write_jsonl(output_path(cfg, GENERATED_OUT), (strip(g, "text") for g in generated),
                sort_key=lambda r: r["id"])
    write_jsonl(output_path(cfg, REFERENCES_OUT), (strip(g, "reference") for g in generated),
                sort_key=lambda r: r["id"])


# evaluate


def split_records(
    generated: Sequence[Mapping[str, Any]], references: Mapping[str, str]
) -> Dict[str, Tuple[List[str], List[str], List[str]]]:
    """(ids, hypotheses, references) per evaluation split, in id order."""
    splits: Dict[str, Tuple[List[str], List[str], List[str]]] = {}

    def add(name, record):
        ids, hyps, refs = splits.setdefault(name, ([], [], []))
        ids.append(record["id"])
        hyps.append(record["text"])
        refs.append(references[record["id"]])

    for record in sorted(generated, key=lambda r: r["id"]):
        split = record.get("split")
        if split is None:
            add("all", record)
            continue
        add(split, record)
        if split == SPLIT_FULL:
            add(SPLIT_INITIAL if record.get("is_initial") else SPLIT_FOLLOW_UP, record)
    return splits


def evaluate(
    cfg: PipelineConfig,
    generated: Sequence[Mapping[str, Any]],
    references: Mapping[str, str],
    gt_labels: Optional[Mapping[str, Any]] = None,
    pred_labels: Optional[Mapping[str, Any]] = None,
) -> Tuple[List[EvalReport], Dict[str, Any]]:
    """
    Score each split. ``gt_labels``/``pred_labels`` map record ids to
    FindingLabelSets; missing ones are computed with the configured labeler.
    """
    missing = sorted(g["id"] for g in generated if g["id"] not in references)
    if missing:
        raise StageError("evaluate", missing[0], KeyError("no reference text"))
    cfg.require_paths("labeler_vocab_path")
    labeler = get_labeler(cfg.labeler, load_finding_vocabulary(cfg.labeler_vocab_path))

    reports = []
    splits = split_records(generated, references)
    for name in [s for s in EVAL_SPLITS if s in splits] + [s for s in sorted(splits) if s not in EVAL_SPLITS]:
        ids, hyps, refs = splits[name]
        with stage_errors("evaluate", name):
            reports.append(
                evaluate_corpus(
                    name,
                    hyps,
                    refs,
                    gt_labels=[gt_labels[i] for i in ids] if gt_labels else None,
                    pred_labels=[pred_labels[i] for i in ids] if pred_labels else None,
                    labeler=labeler,
                    max_n=cfg.bleu_max_n,
                    rouge_beta=cfg.rouge_beta,
                    ce_average=cfg.ce_average,
                    bin_width=cfg.length_bin_width,
                    workers=cfg.workers,
                )
            )
    counts = {r.name: r.count for r in reports}
    return reports, counts
