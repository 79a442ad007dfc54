"""
Desk-scale synthetic corpus with known ground truth.

Each report is built from sentence groups whose region sets are pairwise
disjoint, so every included group is exactly one valid sentence-anatomy
subset. The default groups cover the four mapping types. The sidecar records
the true partitions, finding labels, sections and initial-exam flags so tests
can check the pipeline against them.
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timedelta
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from cxr_report_trainer.anatomy_graph.valid_subsets import MAPPING_TYPES, classify_mapping
from cxr_report_trainer.corpus.tokens import AnatomicalTokenSet, token_record
from cxr_report_trainer.corpus.vocabulary import (
    RegionVocabulary,
    default_labeler_vocabulary,
    default_region_vocabulary,
)
from cxr_report_trainer.core.config import config
from cxr_report_trainer.core.data_logger import write_jsonl
from cxr_report_trainer.core.errors import InvalidSpec, UnknownRegion
from cxr_report_trainer.core.utils import derive_seed, make_rng
from cxr_report_trainer.longitudinal.studies import write_metadata
from cxr_report_trainer.metrics.clinical import CLASS_PRIORITY, NEGATIVE, NO_MENTION, POSITIVE, UNCERTAIN

UNLOCALIZED_SENTENCE = "No change is seen."


@dataclass(frozen=True)
class SentenceTemplate:
    regions: Tuple[str, ...]
    normal: str
    abnormal: str
    normal_labels: Mapping[str, str] = field(default_factory=dict)
    abnormal_labels: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class GroupTemplate:
    name: str
    sentences: Tuple[SentenceTemplate, ...]

    @property
    def regions(self) -> frozenset:
        return frozenset().union(*(s.regions for s in self.sentences))

    @property
    def mapping_type(self) -> str:
        return classify_mapping(len(self.regions), len(self.sentences))


DEFAULT_GROUPS: Tuple[GroupTemplate, ...] = (
    GroupTemplate(
        "mediastinum",
        (
            SentenceTemplate(
                ("mediastinum",),
                "The mediastinum is normal in contour.",
                "The mediastinum is mildly enlarged.",
                {"enlarged_cardiomediastinum": NEGATIVE},
                {"enlarged_cardiomediastinum": POSITIVE},
            ),
        ),
    ),
    GroupTemplate(
        "heart",
        (
            SentenceTemplate(
                ("cardiac silhouette",),
                "The heart size is normal.",
                "The heart is moderately enlarged.",
                {"cardiomegaly": NEGATIVE},
                {"cardiomegaly": POSITIVE},
            ),
        ),
    ),
    GroupTemplate(
        "lungs",
        (
            SentenceTemplate(
                ("right lung",),
                "The right lung is clear.",
                "Small right pleural effusion.",
                {},
                {"pleural_effusion": POSITIVE},
            ),
            SentenceTemplate(
                ("left lung", "right lung"),
                "No pneumothorax.",
                "Bilateral atelectasis.",
                {"pneumothorax": NEGATIVE},
                {"atelectasis": POSITIVE},
            ),
            SentenceTemplate(
                ("left lung", "right lung"),
                "No suspicious nodules seen.",
                "Possible pneumonia in both lungs.",
                {"lung_lesion": NEGATIVE},
                {"pneumonia": UNCERTAIN},
            ),
        ),
    ),
    GroupTemplate(
        "clavicles",
        (
            SentenceTemplate(
                ("left clavicle", "right clavicle"),
                "Both clavicles are intact.",
                "Degenerative changes seen in both shoulders.",
            ),
        ),
    ),
    GroupTemplate(
        "abdomen",
        (
            SentenceTemplate(
                ("abdomen",),
                "The upper abdomen is unremarkable.",
                "NG tube tip positioned correctly in stomach.",
                {},
                {"support_devices": POSITIVE},
            ),
            SentenceTemplate(
                ("abdomen",),
                "No free air under diaphragm.",
                "Free air is present under the diaphragm.",
            ),
        ),
    ),
    GroupTemplate(
        "spine",
        (
            SentenceTemplate(
                ("spine",),
                "The spine is unremarkable.",
                "Compression fracture of a thoracic vertebra.",
                {},
                {"fracture": POSITIVE},
            ),
        ),
    ),
    GroupTemplate(
        "trachea",
        (
            SentenceTemplate(
                ("trachea",),
                "The trachea is midline.",
                "The trachea is deviated to the right.",
            ),
        ),
    ),
)

INDICATIONS = (
    "Shortness of breath.",
    "Fever and productive cough.",
    "Chest pain, evaluate for pneumonia.",
    "Post-operative check.",
    "Line placement.",
)


@dataclass
class SyntheticSpec:
    patient_count: int = 50
    studies_per_patient: Tuple[int, int] = (1, 4)
    scans_per_study: Tuple[int, int] = (1, 3)
    ap_rate: float = 0.5
    lateral_rate: float = 0.4
    lateral_only_rate: float = 0.05
    group_rate: float = 0.6
    finding_rate: float = 0.3
    unlocalized_rate: float = 0.3
    indication_rate: float = 0.8
    missing_findings_rate: float = 0.03
    detection_rate: float = 0.95
    token_dim: int = 64
    groups: Tuple[GroupTemplate, ...] = DEFAULT_GROUPS

    def validate(self, vocabulary: Optional[RegionVocabulary] = None) -> "SyntheticSpec":
        vocabulary = vocabulary or default_region_vocabulary()
        if self.patient_count < 1:
            raise InvalidSpec(f"patient_count must be at least 1, got {self.patient_count}.")
        if self.token_dim < 1:
            raise InvalidSpec(f"token_dim must be at least 1, got {self.token_dim}.")
        for name in ("studies_per_patient", "scans_per_study"):
            low, high = getattr(self, name)
            if low < 1 or low > high:
                raise InvalidSpec(f"{name} must be a range 1 <= low <= high, got ({low}, {high}).")
        for f in fields(self):
            if f.name.endswith("_rate"):
                rate = getattr(self, f.name)
                if not 0.0 <= rate <= 1.0:
                    raise InvalidSpec(f"{f.name} must lie in [0, 1], got {rate}.")
        if not self.groups:
            raise InvalidSpec("At least one sentence group is required.")
        seen = set()
        for group in self.groups:
            try:
                vocabulary.validate(group.regions)
            except UnknownRegion as e:
                raise InvalidSpec(f"Group '{group.name}': {e}")
            if seen & group.regions:
                raise InvalidSpec(f"Group '{group.name}' shares regions with another group.")
            seen |= group.regions
        return self

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record["studies_per_patient"] = list(self.studies_per_patient)
        record["scans_per_study"] = list(self.scans_per_study)
        record["groups"] = [g.name for g in self.groups]
        return record

    @classmethod
    def from_dict(cls, overrides: Mapping[str, Any]) -> "SyntheticSpec":
        allowed = {f.name for f in fields(cls)} - {"groups"}
        unknown = sorted(set(overrides) - allowed)
        if unknown:
            raise InvalidSpec(f"Unknown synthetic spec keys: {', '.join(unknown)}")
        values = dict(overrides)
        for name in ("studies_per_patient", "scans_per_study"):
            if name in values:
                values[name] = tuple(values[name])
        return cls(**values)


def _aggregate_labels(sentence_labels: List[Mapping[str, str]], has_text: bool) -> Dict[str, str]:
    labels = dict.fromkeys(default_labeler_vocabulary().names, NO_MENTION)
    for entry in sentence_labels:
        for finding, value in entry.items():
            if CLASS_PRIORITY[value] > CLASS_PRIORITY[labels[finding]]:
                labels[finding] = value
    abnormal = any(
        v in (POSITIVE, UNCERTAIN)
        for k, v in labels.items()
        if k not in ("support_devices", "no_finding")
    )
    labels["no_finding"] = POSITIVE if has_text and not abnormal else NO_MENTION
    return labels


def _compose_findings(spec: SyntheticSpec, rng: np.random.Generator) -> Dict[str, Any]:
    included = [g for g in spec.groups if rng.random() < spec.group_rate]
    if not included:
        included = [spec.groups[int(rng.integers(len(spec.groups)))]]

    sentences, regions, labels = [], [], []
    partition = []
    for group in included:
        indices = []
        for template in group.sentences:
            abnormal = rng.random() < spec.finding_rate
            indices.append(len(sentences))
            sentences.append(template.abnormal if abnormal else template.normal)
            regions.append(sorted(template.regions))
            labels.append(template.abnormal_labels if abnormal else template.normal_labels)
        partition.append(
            {
                "group": group.name,
                "pair_indices": indices,
                "regions": sorted(group.regions),
                "mapping_type": group.mapping_type,
            }
        )

    unlocalized = []
    if rng.random() < spec.unlocalized_rate:
        position = int(rng.integers(len(sentences) + 1))
        sentences.insert(position, UNLOCALIZED_SENTENCE)
        regions.insert(position, [])
        labels.insert(position, {})
        unlocalized.append(position)
        for subset in partition:
            subset["pair_indices"] = [i + 1 if i >= position else i for i in subset["pair_indices"]]
    return {
        "sentences": sentences,
        "regions": regions,
        "labels": _aggregate_labels(labels, bool(sentences)),
        "partition": partition,
        "unlocalized_indices": unlocalized,
    }


def _raw_report(
    findings: Optional[List[str]], indication: str, follow_up: bool, rng: np.random.Generator
) -> str:
    parts = ["EXAMINATION: CHEST (PA AND LAT)"]
    if indication:
        header = ("INDICATION", "HISTORY", "Indication")[int(rng.integers(3))]
        parts.append(f"{header}: {indication}")
    if follow_up:
        parts.append("COMPARISON: Prior chest radiograph.")
    if findings is not None:
        header = ("FINDINGS", "Findings", "findings")[int(rng.integers(3))]
        body = ""
        for i, sentence in enumerate(findings):
            body += sentence if i == 0 else ("\n " if rng.random() < 0.2 else " ") + sentence
        parts.append(f"{header}: {body}")
    parts.append("IMPRESSION: No acute cardiopulmonary process.")
    return "\n\n".join(parts)


def _scan_tokens(
    spec: SyntheticSpec, frontal: bool, seed: int, vocabulary: RegionVocabulary
) -> AnatomicalTokenSet:
    rng = make_rng(seed)
    rate = spec.detection_rate if frontal else spec.detection_rate * 0.6
    detected = {
        region: np.round(rng.normal(size=spec.token_dim), 6)
        for region in vocabulary
        if rng.random() < rate
    }
    return AnatomicalTokenSet.from_mapping(detected, spec.token_dim, vocabulary)


def _study_views(spec: SyntheticSpec, rng: np.random.Generator) -> List[str]:
    count = int(rng.integers(spec.scans_per_study[0], spec.scans_per_study[1] + 1))
    if rng.random() < spec.lateral_only_rate:
        return ["LATERAL"] * count
    views = ["AP" if rng.random() < spec.ap_rate else "PA"]
    for _ in range(count - 1):
        if rng.random() < spec.lateral_rate:
            views.append("LATERAL")
        else:
            views.append("AP" if rng.random() < spec.ap_rate else "PA")
    return views


def synth_corpus(
    spec: SyntheticSpec,
    seed: int,
    out_dir: str,
    vocabulary: Optional[RegionVocabulary] = None,
) -> Dict[str, Any]:
    """
    Write reports, annotations, tokens, metadata and the ground-truth sidecar
    to ``out_dir``. Output bytes depend only on (spec, seed). Returns the
    sidecar.
    """
    vocabulary = vocabulary or default_region_vocabulary()
    spec.validate(vocabulary)
    os.makedirs(out_dir, exist_ok=True)

    reports, annotations, tokens, metadata = [], [], [], []
    sidecar_reports: Dict[str, Any] = {}
    mapping_counts = dict.fromkeys(MAPPING_TYPES, 0)
    partial_eval_count = 0
    study_total = 0

    for p in range(spec.patient_count):
        patient_id = f"p{p:04d}"
        rng = make_rng(derive_seed(seed, "synth", patient_id))
        study_count = int(
            rng.integers(spec.studies_per_patient[0], spec.studies_per_patient[1] + 1)
        )
        timestamp = datetime(2150, 1, 1) + timedelta(days=int(rng.integers(0, 3650)))
        seen_frontal = False

        for s in range(study_count):
            study_total += 1
            study_id = f"s{p:04d}_{s:02d}"
            report_id = f"r{p:04d}_{s:02d}"
            if s:
                timestamp += timedelta(days=int(rng.integers(1, 400)), hours=int(rng.integers(0, 24)))
            views = _study_views(spec, rng)
            eligible = any(v != "LATERAL" for v in views)
            is_initial = eligible and not seen_frontal
            follow_up = seen_frontal

            for k, view in enumerate(views):
                scan_id = f"{study_id}_{k}"
                metadata.append(
                    {
                        "patient_id": patient_id,
                        "study_id": study_id,
                        "scan_id": scan_id,
                        "view": view,
                        "timestamp": timestamp.isoformat(),
                        "report_id": report_id,
                    }
                )
                scan_tokens = _scan_tokens(
                    spec, view != "LATERAL", derive_seed(seed, "synth", "tokens", scan_id), vocabulary
                )
                tokens.append(token_record(study_id, scan_id, scan_tokens))

            content = _compose_findings(spec, rng)
            has_findings = rng.random() >= spec.missing_findings_rate
            indication = (
                INDICATIONS[int(rng.integers(len(INDICATIONS)))]
                if rng.random() < spec.indication_rate
                else ""
            )
            raw = _raw_report(content["sentences"] if has_findings else None, indication, follow_up, rng)
            reports.append(
                {"report_id": report_id, "study_id": study_id, "patient_id": patient_id, "text": raw}
            )

            entry = {
                "patient_id": patient_id,
                "study_id": study_id,
                "has_findings": has_findings,
                "eligible": eligible,
                "is_initial": is_initial,
                "sections": {
                    "findings": " ".join(content["sentences"]) if has_findings else "",
                    "indication": indication,
                },
            }
            if has_findings:
                entry.update(
                    sentences=content["sentences"],
                    partition=content["partition"],
                    unlocalized_indices=content["unlocalized_indices"],
                    labels=content["labels"],
                    K=len(content["partition"]),
                )
                for i, (text, regions) in enumerate(zip(content["sentences"], content["regions"])):
                    annotations.append(
                        {"report_id": report_id, "sentence_index": i, "text": text, "regions": regions}
                    )
                for subset in content["partition"]:
                    mapping_counts[subset["mapping_type"]] += 1
                if eligible:
                    partial_eval_count += len(content["partition"])
            sidecar_reports[report_id] = entry
            seen_frontal = seen_frontal or eligible

    write_jsonl(os.path.join(out_dir, config.REPORTS_FILE), reports, sort_key=lambda r: r["report_id"])
    write_jsonl(
        os.path.join(out_dir, config.ANNOTATIONS_FILE),
        annotations,
        sort_key=lambda r: (r["report_id"], r["sentence_index"]),
    )
    write_jsonl(
        os.path.join(out_dir, config.TOKENS_FILE), tokens, sort_key=lambda r: (r["study_id"], r["scan_id"])
    )
    write_metadata(os.path.join(out_dir, config.METADATA_FILE), metadata)

    sidecar = {
        "seed": int(seed),
        "spec": spec.to_dict(),
        "patients": spec.patient_count,
        "studies": study_total,
        "reports": sidecar_reports,
        "mapping_counts": mapping_counts,
        "partial_eval_count": partial_eval_count,
    }
    with open(os.path.join(out_dir, config.SIDECAR_FILE), "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")

    logging.info(
        f"Synthesized {spec.patient_count} patients, {study_total} studies, "
        f"{len(tokens)} scans into {out_dir}"
    )
    return sidecar


def load_sidecar(corpus_dir: str) -> Dict[str, Any]:
    with open(os.path.join(corpus_dir, config.SIDECAR_FILE), "r") as f:
        return json.load(f)
