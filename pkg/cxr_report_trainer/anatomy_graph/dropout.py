import logging
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from cxr_report_trainer.anatomy_graph.valid_subsets import ValidPartition, find_valid_subsets
from cxr_report_trainer.corpus.annotations import AnnotatedReport
from cxr_report_trainer.corpus.vocabulary import RegionVocabulary, default_region_vocabulary
from cxr_report_trainer.core.errors import EmptyPartition
from cxr_report_trainer.core.utils import derive_seed, make_rng


@dataclass(frozen=True)
class DropoutSample:
    report_id: str
    A_target: FrozenSet[str]
    input_mask: Tuple[bool, ...]
    target_text: str
    selected_subsets: FrozenSet[int]
    target_indices: Tuple[int, ...] = ()
    is_full_report: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "report_id": self.report_id,
            "A_target": sorted(self.A_target),
            "input_mask": [int(m) for m in self.input_mask],
            "target_text": self.target_text,
            "selected_subsets": sorted(self.selected_subsets),
            "target_indices": list(self.target_indices),
            "is_full_report": self.is_full_report,
        }

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "DropoutSample":
        return cls(
            report_id=record["report_id"],
            A_target=frozenset(record["A_target"]),
            input_mask=tuple(bool(m) for m in record["input_mask"]),
            target_text=record["target_text"],
            selected_subsets=frozenset(record["selected_subsets"]),
            target_indices=tuple(record.get("target_indices", ())),
            is_full_report=bool(record.get("is_full_report", False)),
        )


@dataclass(frozen=True)
class PartialEvalInstance:
    report_id: str
    subset_index: int
    A_target: FrozenSet[str]
    target_text: str

    @property
    def instance_id(self) -> str:
        return f"{self.report_id}#{self.subset_index}"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "report_id": self.report_id,
            "subset_index": self.subset_index,
            "A_target": sorted(self.A_target),
            "target_text": self.target_text,
        }


def input_mask_for(regions: Iterable[str], vocabulary: RegionVocabulary) -> Tuple[bool, ...]:
    regions = set(regions)
    vocabulary.validate(regions)
    return tuple(name in regions for name in vocabulary)


def inclusion_probability(K: int) -> float:
    """Chance that a given subset is selected: (1/K) * sum_{m=1..K} m/K."""
    return (K + 1) / (2 * K)


def sample_dropout(
    partition: ValidPartition,
    rng_seed: int,
    vocabulary: Optional[RegionVocabulary] = None,
    full_report_probability: Optional[float] = None,
) -> DropoutSample:
    """
    Draw m uniformly from 1..K, then a uniform m-subset of the valid subsets.
    With ``full_report_probability`` set, all K subsets are taken with that
    probability first. Selecting every subset makes the sample a full report,
    whose target also keeps the unlocalized sentences.
    """
    K = partition.K
    if K == 0:
        raise EmptyPartition(partition.report_id)
    vocabulary = vocabulary or default_region_vocabulary()
    rng = make_rng(rng_seed)

    if full_report_probability is not None and rng.random() < full_report_probability:
        selected = np.arange(K)
    else:
        m = int(rng.integers(1, K + 1))
        selected = np.sort(rng.choice(K, size=m, replace=False))
    selected = frozenset(int(k) for k in selected)
    is_full = len(selected) == K

    A_target = frozenset().union(*(partition.subsets[k].regions for k in selected))
    indices = set().union(*(partition.subsets[k].pair_indices for k in selected))
    if is_full:
        indices |= set(partition.unlocalized_indices)
    target_indices = tuple(sorted(indices))

    return DropoutSample(
        report_id=partition.report_id,
        A_target=A_target,
        input_mask=input_mask_for(A_target, vocabulary),
        target_text=partition.text_for(target_indices),
        selected_subsets=selected,
        target_indices=target_indices,
        is_full_report=is_full,
    )


def check_dropout_sample(report: AnnotatedReport, sample: DropoutSample) -> List[str]:
    """Return the violated conditions of a sample; an empty list means valid."""
    violations = []
    localized_targets = {
        i for i in sample.target_indices if report.pair(i).is_localized
    }
    required = {p.sentence_index for p in report.localized_pairs if p.regions & sample.A_target}
    if localized_targets != required:
        violations.append(
            f"C1: target sentences {sorted(localized_targets)} != sentences describing "
            f"A_target {sorted(required)}"
        )
    described = frozenset().union(*(report.pair(i).regions for i in sample.target_indices))
    if described != sample.A_target:
        violations.append(
            f"C2: A_target {sorted(sample.A_target)} != described regions {sorted(described)}"
        )
    if sample.target_text != report.text_for(sample.target_indices):
        violations.append("target text is not the in-order concatenation of its sentences")
    return violations


def sample_epoch(
    partitions: Iterable[ValidPartition],
    global_seed: int,
    samples_per_report: int = 1,
    vocabulary: Optional[RegionVocabulary] = None,
    full_report_probability: Optional[float] = None,
) -> Tuple[List[DropoutSample], int]:
    """
    Draw ``samples_per_report`` samples per report. Reports without localized
    sentences are skipped; returns (samples, skipped report count).
    """
    samples = []
    skipped = 0
    for partition in partitions:
        if partition.K == 0:
            skipped += 1
            continue
        for k in range(samples_per_report):
            seed = derive_seed(global_seed, "dropout", partition.report_id, k)
            samples.append(
                sample_dropout(partition, seed, vocabulary, full_report_probability)
            )
    if skipped:
        logging.warning(f"{skipped} report(s) have no localized sentences and were not sampled.")
    return samples, skipped


def build_partial_eval_set(
    test_reports: Iterable[AnnotatedReport],
) -> List[PartialEvalInstance]:
    """One evaluation instance per valid subset of every report."""
    instances = []
    for report in test_reports:
        partition = find_valid_subsets(report)
        for k, subset in enumerate(partition.subsets):
            instances.append(
                PartialEvalInstance(report.report_id, k, subset.regions, subset.target_text)
            )
    logging.info(f"Built {len(instances)} partial-report evaluation instances.")
    return instances
