import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Protocol, Sequence, runtime_checkable

import numpy as np
from sklearn.metrics import precision_recall_fscore_support

from cxr_report_trainer.corpus.sections import split_sentences
from cxr_report_trainer.corpus.vocabulary import FindingVocabulary, default_labeler_vocabulary
from cxr_report_trainer.core.errors import (
    DataError,
    LabelerFailure,
    LengthMismatch,
    PipelineError,
    VocabularyMismatch,
)

POSITIVE = "positive"
NEGATIVE = "negative"
UNCERTAIN = "uncertain"
NO_MENTION = "no_mention"
LABEL_CLASSES = (POSITIVE, NEGATIVE, UNCERTAIN, NO_MENTION)

_COLLAPSE = {POSITIVE: POSITIVE, UNCERTAIN: POSITIVE, NEGATIVE: NEGATIVE, NO_MENTION: NEGATIVE}
# a report keeps the strongest statement made about a finding
CLASS_PRIORITY = {POSITIVE: 3, UNCERTAIN: 2, NEGATIVE: 1, NO_MENTION: 0}


@dataclass(frozen=True)
class FindingLabelSet:
    labels: Mapping[str, str]
    vocabulary: FindingVocabulary = field(default_factory=default_labeler_vocabulary, compare=False)

    def __post_init__(self):
        labels = dict(self.labels)
        if set(labels) != set(self.vocabulary.names):
            extra = sorted(set(labels) - set(self.vocabulary.names))
            missing = sorted(set(self.vocabulary.names) - set(labels))
            raise VocabularyMismatch(
                f"Label keys differ from the labeler vocabulary (extra {extra}, missing {missing})."
            )
        bad = sorted(v for v in labels.values() if v not in LABEL_CLASSES)
        if bad:
            raise DataError(f"Unknown label classes: {bad}")
        object.__setattr__(self, "labels", {n: labels[n] for n in self.vocabulary.names})

    def __getitem__(self, finding: str) -> str:
        return self.labels[finding]

    def positives(self) -> np.ndarray:
        return np.array([_COLLAPSE[self.labels[n]] == POSITIVE for n in self.vocabulary.names])

    @classmethod
    def empty(cls, vocabulary: Optional[FindingVocabulary] = None) -> "FindingLabelSet":
        vocabulary = vocabulary or default_labeler_vocabulary()
        return cls(dict.fromkeys(vocabulary.names, NO_MENTION), vocabulary)

    def to_dict(self) -> Dict[str, str]:
        return dict(self.labels)


def collapse_classes(labels: FindingLabelSet) -> FindingLabelSet:
    """positive/uncertain -> positive; negative/no_mention -> negative."""
    return FindingLabelSet(
        {k: _COLLAPSE[v] for k, v in labels.labels.items()}, labels.vocabulary
    )


@dataclass
class CEScores:
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    average: str = "micro"
    zero_division: bool = False
    per_finding: Dict[str, Dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "average": self.average,
            "zero_division": self.zero_division,
            "per_finding": self.per_finding,
        }


def ce_metrics(
    gt: Sequence[FindingLabelSet],
    pred: Sequence[FindingLabelSet],
    average: str = "micro",
) -> CEScores:
    """
    Precision, recall and F1 over the (report x finding) indicator matrices
    after collapsing both sides to binary classes. Empty denominators give 0
    and set zero_division.
    """
    if len(gt) != len(pred):
        raise LengthMismatch(f"{len(gt)} ground-truth label sets vs {len(pred)} predicted.")
    if average not in ("micro", "macro"):
        raise ValueError(f"average must be 'micro' or 'macro', got '{average}'.")
    vocabulary = gt[0].vocabulary if gt else default_labeler_vocabulary()
    for labels in list(gt) + list(pred):
        if labels.vocabulary.names != vocabulary.names:
            raise VocabularyMismatch("Label sets use different finding vocabularies.")

    n = len(vocabulary)
    truth = np.array([g.positives() for g in gt], dtype=bool).reshape(-1, n)
    guess = np.array([p.positives() for p in pred], dtype=bool).reshape(-1, n)
    tp = (truth & guess).sum(axis=0)
    fp = (~truth & guess).sum(axis=0)
    fn = (truth & ~guess).sum(axis=0)
    per_finding = {
        name: {"tp": int(tp[i]), "fp": int(fp[i]), "fn": int(fn[i])}
        for i, name in enumerate(vocabulary.names)
    }

    TP, FP, FN = int(tp.sum()), int(fp.sum()), int(fn.sum())
    if average == "micro":
        zero_division = TP + FP == 0 or TP + FN == 0
    else:
        zero_division = bool(np.any((tp + fp == 0) | (tp + fn == 0)))
    if len(gt):
        precision, recall, f1, _ = precision_recall_fscore_support(
            truth.astype(int), guess.astype(int), average=average, zero_division=0
        )
    else:
        precision = recall = f1 = 0.0
    if zero_division:
        logging.debug("CE metrics hit an empty denominator; reported as 0.")
    return CEScores(
        float(f1), float(precision), float(recall), TP, FP, FN, average, zero_division, per_finding
    )


@runtime_checkable
class FindingLabeler(Protocol):
    vocabulary: FindingVocabulary

    def label(self, report_text: str) -> FindingLabelSet: ...


_FINDING_PATTERNS = {
    "enlarged_cardiomediastinum": r"\bmediastin(?:um|al)\b|\bcardiomediastinal\b",
    "cardiomegaly": r"\bcardiomegaly\b|\bheart\b|\bcardiac silhouette\b",
    "lung_opacity": r"\bopacit(?:y|ies)\b|\bopacification\b|\binfiltrat\w*",
    "lung_lesion": r"\bnodules?\b|\bmass(?:es)?\b|\blesions?\b",
    "edema": r"\bedema\b|\bvascular congestion\b|\bheart failure\b",
    "consolidation": r"\bconsolidation\b",
    "pneumonia": r"\bpneumonia\b|\binfecti\w*",
    "atelectasis": r"\batelecta\w*",
    "pneumothorax": r"\bpneumothora\w*",
    "pleural_effusion": r"\beffusions?\b",
    "pleural_other": r"\bpleural thickening\b|\bblunting\b|\bscarring\b|\bfibrosis\b",
    "fracture": r"\bfractur\w*",
    "support_devices": r"\btubes?\b|\bcatheters?\b|\bpacemaker\b|\bpacer\b|\bwires?\b|\bstents?\b|\bpicc\b|\bports?\b",
}
_NEGATION = re.compile(
    r"\b(?:no|not|without|negative for|free of|clear of|absence of|resolved|resolution of)\b"
)
_NORMAL = re.compile(r"\b(?:normal|unremarkable|within normal limits)\b")
_UNCERTAIN = re.compile(
    r"\b(?:may|might|possible|possibly|probable|likely|suspected|questionable|"
    r"suggest\w*|versus|concern for|cannot be (?:excluded|ruled out))\b"
)
_CLAUSE = re.compile(r"[,;:]|\bbut\b|\bhowever\b")


class RuleLabeler:
    """
    Keyword and negation rules over the 14 labeler findings. A stand-in for a
    neural labeler in tests and synthetic runs; it is not a reimplementation
    of one.

    Within a clause, a negation cue before the mention or a "normal" cue
    anywhere gives negative, an uncertainty cue gives uncertain, otherwise
    positive. ``no_finding`` is positive when the text mentions nothing
    positive or uncertain other than support devices.
    """

    def __init__(self, vocabulary: Optional[FindingVocabulary] = None):
        self.vocabulary = vocabulary or default_labeler_vocabulary()
        self.patterns = {
            name: re.compile(pattern)
            for name, pattern in _FINDING_PATTERNS.items()
            if name in self.vocabulary
        }

    def _classify(self, clause: str, start: int) -> str:
        if _NEGATION.search(clause[:start]) or _NORMAL.search(clause):
            return NEGATIVE
        if _UNCERTAIN.search(clause):
            return UNCERTAIN
        return POSITIVE

    def label(self, report_text: str) -> FindingLabelSet:
        labels = dict.fromkeys(self.vocabulary.names, NO_MENTION)
        for sentence in split_sentences(report_text.lower()):
            for clause in _CLAUSE.split(sentence):
                for name, pattern in self.patterns.items():
                    match = pattern.search(clause)
                    if match is None:
                        continue
                    found = self._classify(clause, match.start())
                    if CLASS_PRIORITY[found] > CLASS_PRIORITY[labels[name]]:
                        labels[name] = found
        if "no_finding" in labels:
            abnormal = any(
                labels[n] in (POSITIVE, UNCERTAIN)
                for n in self.patterns
                if n != "support_devices"
            )
            labels["no_finding"] = POSITIVE if report_text.strip() and not abnormal else NO_MENTION
        return FindingLabelSet(labels, self.vocabulary)


LABELERS: Dict[str, Callable[[Optional[FindingVocabulary]], FindingLabeler]] = {"rules": RuleLabeler}


def register_labeler(
    name: str, factory: Callable[[Optional[FindingVocabulary]], FindingLabeler]
) -> None:
    LABELERS[name] = factory


def get_labeler(name: str, vocabulary: Optional[FindingVocabulary] = None) -> FindingLabeler:
    try:
        factory = LABELERS[name]
    except KeyError:
        raise LabelerFailure(
            f"No labeler registered as '{name}'. Known: {', '.join(sorted(LABELERS))}"
        )
    return factory(vocabulary)


def label_findings(report_text: str, labeler: FindingLabeler) -> FindingLabelSet:
    try:
        labels = labeler.label(report_text)
    except PipelineError:
        raise
    except Exception as e:
        logging.error(f"Labeler {type(labeler).__name__} failed: {e}")
        raise LabelerFailure(f"{type(labeler).__name__} failed: {e}") from e
    if not isinstance(labels, FindingLabelSet):
        raise LabelerFailure(
            f"{type(labeler).__name__} returned {type(labels).__name__}, expected FindingLabelSet."
        )
    return labels


def label_corpus(texts: Sequence[str], labeler: FindingLabeler) -> List[FindingLabelSet]:
    return [label_findings(text, labeler) for text in texts]
