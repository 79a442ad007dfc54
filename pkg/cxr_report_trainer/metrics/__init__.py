from cxr_report_trainer.metrics.clinical import (
    FindingLabelSet,
    RuleLabeler,
    ce_metrics,
    collapse_classes,
    get_labeler,
    label_findings,
)
from cxr_report_trainer.metrics.length import LengthHistogram, length_distribution
from cxr_report_trainer.metrics.nlg import bleu, corpus_bleu, meteor_like, rouge_l
from cxr_report_trainer.metrics.report import EvalReport, evaluate_corpus, format_table
from cxr_report_trainer.metrics.text import TokenizedText, tokenize

__all__ = [
    "EvalReport",
    "FindingLabelSet",
    "LengthHistogram",
    "RuleLabeler",
    "TokenizedText",
    "bleu",
    "ce_metrics",
    "collapse_classes",
    "corpus_bleu",
    "evaluate_corpus",
    "format_table",
    "get_labeler",
    "label_findings",
    "length_distribution",
    "meteor_like",
    "rouge_l",
    "tokenize",
]
