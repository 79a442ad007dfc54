from cxr_report_trainer.corpus.annotations import (
    AnnotatedReport,
    SentenceAnatomyPair,
    parse_annotations,
)
from cxr_report_trainer.corpus.sections import (
    SectionHeaders,
    parse_report_sections,
    split_sentences,
)
from cxr_report_trainer.corpus.tokens import AnatomicalTokenSet, load_token_store
from cxr_report_trainer.corpus.vocabulary import (
    FindingVocabulary,
    RegionVocabulary,
    default_finding_vocabulary,
    default_labeler_vocabulary,
    default_region_vocabulary,
)

__all__ = [
    "AnatomicalTokenSet",
    "AnnotatedReport",
    "FindingVocabulary",
    "RegionVocabulary",
    "SectionHeaders",
    "SentenceAnatomyPair",
    "default_finding_vocabulary",
    "default_labeler_vocabulary",
    "default_region_vocabulary",
    "load_token_store",
    "parse_annotations",
    "parse_report_sections",
    "split_sentences",
]
