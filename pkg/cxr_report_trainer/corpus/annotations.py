import logging
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from cxr_report_trainer.corpus.sections import normalize_whitespace
from cxr_report_trainer.corpus.vocabulary import RegionVocabulary, default_region_vocabulary
from cxr_report_trainer.core.errors import DataError, DuplicateSentenceIndex


@dataclass(frozen=True)
class SentenceAnatomyPair:
    sentence_index: int
    text: str
    regions: FrozenSet[str] = frozenset()

    @property
    def is_localized(self) -> bool:
        """Sentences such as "No change is seen." describe no region."""
        return bool(self.regions)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sentence_index": self.sentence_index,
            "text": self.text,
            "regions": sorted(self.regions),
        }


@dataclass(frozen=True)
class AnnotatedReport:
    report_id: str
    findings_text: str
    indication_text: str = ""
    pairs: Tuple[SentenceAnatomyPair, ...] = field(default_factory=tuple)

    @property
    def sentence_count(self) -> int:
        return len(self.pairs)

    @property
    def regions(self) -> FrozenSet[str]:
        return frozenset().union(*(p.regions for p in self.pairs))

    @property
    def localized_pairs(self) -> Tuple[SentenceAnatomyPair, ...]:
        return tuple(p for p in self.pairs if p.is_localized)

    @property
    def unlocalized_indices(self) -> Tuple[int, ...]:
        return tuple(p.sentence_index for p in self.pairs if not p.is_localized)

    def pair(self, sentence_index: int) -> SentenceAnatomyPair:
        for p in self.pairs:
            if p.sentence_index == sentence_index:
                return p
        raise KeyError(sentence_index)

    def text_for(self, sentence_indices: Iterable[int]) -> str:
        """Concatenate the selected sentences in report order."""
        wanted = set(sentence_indices)
        return " ".join(p.text for p in self.pairs if p.sentence_index in wanted)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "report_id": self.report_id,
            "findings_text": self.findings_text,
            "indication_text": self.indication_text,
            "pairs": [p.to_dict() for p in self.pairs],
        }

    @classmethod
    def from_dict(
        cls, record: Mapping[str, Any], vocabulary: Optional[RegionVocabulary] = None
    ) -> "AnnotatedReport":
        annotation_records = [
            dict(pair, report_id=record["report_id"]) for pair in record.get("pairs", [])
        ]
        return parse_annotations(
            annotation_records,
            vocabulary=vocabulary,
            report_id=record["report_id"],
            findings_text=record.get("findings_text"),
            indication_text=record.get("indication_text", ""),
        )


def parse_annotations(
    annotation_records: Iterable[Mapping[str, Any]],
    vocabulary: Optional[RegionVocabulary] = None,
    report_id: Optional[str] = None,
    findings_text: Optional[str] = None,
    indication_text: str = "",
) -> AnnotatedReport:
    """
    Build an AnnotatedReport from sentence-level annotation records, each a
    mapping with ``report_id``, ``sentence_index``, ``text`` and ``regions``.

    Pairs come out ordered by sentence index. When ``findings_text`` is given,
    the annotated sentences must reconstruct it up to whitespace.
    """
    vocabulary = vocabulary or default_region_vocabulary()
    records = list(annotation_records)
    if not records:
        return AnnotatedReport(report_id or "", findings_text or "", indication_text or "", ())

    report_ids = {str(r["report_id"]) for r in records if "report_id" in r}
    if report_id is None:
        if len(report_ids) != 1:
            raise DataError(
                "Annotation records must reference exactly one report_id, "
                f"got {sorted(report_ids) or 'none'}."
            )
        report_id = report_ids.pop()
    elif report_ids - {report_id}:
        raise DataError(
            f"Annotation records for '{report_id}' reference other reports: "
            f"{sorted(report_ids - {report_id})}"
        )

    pairs: Dict[int, SentenceAnatomyPair] = {}
    for record in records:
        index = int(record["sentence_index"])
        if index in pairs:
            raise DuplicateSentenceIndex(report_id, index)
        regions = frozenset(record.get("regions") or ())
        vocabulary.validate(regions)
        pairs[index] = SentenceAnatomyPair(index, str(record["text"]).strip(), regions)

    ordered = tuple(pairs[i] for i in sorted(pairs))
    joined = " ".join(p.text for p in ordered)
    if findings_text is None:
        findings_text = joined
    elif ordered and normalize_whitespace(findings_text) != normalize_whitespace(joined):
        raise DataError(
            f"Annotated sentences of report '{report_id}' do not reconstruct its findings."
        )

    unlocalized = sum(1 for p in ordered if not p.is_localized)
    if unlocalized:
        logging.debug(f"Report {report_id}: {unlocalized} unlocalized sentence(s).")
    return AnnotatedReport(report_id, findings_text, indication_text or "", ordered)


def group_annotation_records(
    records: Iterable[Mapping[str, Any]],
) -> Dict[str, List[Mapping[str, Any]]]:
    grouped: Dict[str, List[Mapping[str, Any]]] = {}
    for record in records:
        grouped.setdefault(str(record["report_id"]), []).append(record)
    return grouped
