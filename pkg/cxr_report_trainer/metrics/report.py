"""
Corpus-level evaluation: NLG scores, CE scores and length histograms bundled
into an EvalReport, plus the plain-text table the CLI prints.
"""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

from cxr_report_trainer.core.config import config
from cxr_report_trainer.core.errors import LengthMismatch
from cxr_report_trainer.metrics.clinical import (
    CEScores,
    FindingLabeler,
    FindingLabelSet,
    ce_metrics,
    label_corpus,
)
from cxr_report_trainer.metrics.length import LengthHistogram, length_distribution
from cxr_report_trainer.metrics.nlg import corpus_bleu, meteor_like, rouge_l
from cxr_report_trainer.metrics.text import tokenize

TABLE_COLUMNS = ("BL-1", "BL-2", "BL-3", "BL-4", "MTR", "RG-L", "F1", "P", "R")


@dataclass
class EvalReport:
    name: str
    count: int
    scores: Dict[str, float]
    ce: CEScores
    generated_lengths: LengthHistogram
    reference_lengths: LengthHistogram
    meteor_params: Dict[str, float] = field(
        default_factory=lambda: {
            "alpha": config.METEOR_ALPHA,
            "beta": config.METEOR_BETA,
            "gamma": config.METEOR_GAMMA,
        }
    )

    def row(self) -> List[float]:
        return [self.scores[c] for c in TABLE_COLUMNS]

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "count": self.count,
            "scores": dict(self.scores),
            "ce": self.ce.to_dict(),
            "generated_lengths": self.generated_lengths.to_dict(),
            "reference_lengths": self.reference_lengths.to_dict(),
            "meteor_params": dict(self.meteor_params),
        }


def _sentence_scores(pair, rouge_beta, meteor_params):
    hyp, ref = pair
    return (
        meteor_like(hyp, ref, meteor_params["alpha"], meteor_params["beta"], meteor_params["gamma"]),
        rouge_l(hyp, ref, rouge_beta),
    )


def evaluate_corpus(
    name: str,
    hypotheses: Sequence[str],
    references: Sequence[str],
    gt_labels: Optional[Sequence[FindingLabelSet]] = None,
    pred_labels: Optional[Sequence[FindingLabelSet]] = None,
    labeler: Optional[FindingLabeler] = None,
    max_n: int = 4,
    rouge_beta: float = 1.0,
    ce_average: str = "micro",
    bin_width: int = 10,
    workers: int = 1,
) -> EvalReport:
    """
    Score generated reports against references.

    :param gt_labels: finding labels of the references; computed with ``labeler`` when absent
    :param pred_labels: finding labels of the hypotheses; computed with ``labeler`` when absent
    :param workers: threads used for the per-report METEOR/ROUGE-L pass
    """
    if len(hypotheses) != len(references):
        raise LengthMismatch(f"{len(hypotheses)} generated reports vs {len(references)} references.")
    if (gt_labels is None or pred_labels is None) and labeler is None:
        raise ValueError("A labeler is required when label sets are not supplied.")
    if gt_labels is None:
        gt_labels = label_corpus(references, labeler)
    if pred_labels is None:
        pred_labels = label_corpus(hypotheses, labeler)

    hyp_tokens = [list(tokenize(h)) for h in hypotheses]
    ref_tokens = [list(tokenize(r)) for r in references]
    meteor_params = {"alpha": config.METEOR_ALPHA, "beta": config.METEOR_BETA, "gamma": config.METEOR_GAMMA}

    pairs = list(zip(hyp_tokens, ref_tokens))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_report = list(pool.map(lambda p: _sentence_scores(p, rouge_beta, meteor_params), pairs))
    else:
        per_report = [_sentence_scores(p, rouge_beta, meteor_params) for p in pairs]

    scores: Dict[str, float] = {}
    for n in range(1, max_n + 1):
        scores[f"BL-{n}"] = corpus_bleu(hyp_tokens, ref_tokens, max_n=n)
    for n in range(max_n + 1, 5):
        scores[f"BL-{n}"] = 0.0
    count = len(pairs)
    # fsum keeps the mean independent of report order
    scores["MTR"] = math.fsum(m for m, _ in per_report) / count if count else 0.0
    scores["RG-L"] = math.fsum(r for _, r in per_report) / count if count else 0.0

    ce = ce_metrics(gt_labels, pred_labels, average=ce_average)
    scores["F1"], scores["P"], scores["R"] = ce.f1, ce.precision, ce.recall

    logging.info(
        f"Evaluated {count} {name} reports: BL-4 {scores['BL-4']:.3f}, F1 {ce.f1:.3f}"
    )
    return EvalReport(
        name=name,
        count=count,
        scores=scores,
        ce=ce,
        generated_lengths=length_distribution(hypotheses, bin_width),
        reference_lengths=length_distribution(references, bin_width),
        meteor_params=meteor_params,
    )


def format_table(reports: Sequence[EvalReport]) -> str:
    header = ["Split", "N"] + list(TABLE_COLUMNS)
    rows = [[r.name, str(r.count)] + [f"{v:.3f}" for v in r.row()] for r in reports]
    widths = [max(len(line[i]) for line in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(line, widths)) for line in [header] + rows]
    return "\n".join(lines)


def mean_scores(score_rows: Sequence[Mapping[str, float]]) -> Dict[str, float]:
    """Column-wise mean of the scores of several runs of the same split."""
    if not score_rows:
        return {}
    return {c: math.fsum(s[c] for s in score_rows) / len(score_rows) for c in TABLE_COLUMNS}


def write_eval_report(path: str, reports: Sequence[EvalReport]) -> None:
    with open(path, "w") as f:
        json.dump({r.name: r.to_dict() for r in reports}, f, indent=2, sort_keys=True)
        f.write("\n")
