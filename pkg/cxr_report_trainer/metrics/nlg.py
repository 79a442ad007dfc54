"""
BLEU, ROUGE-L and a METEOR-style score over tokenized text.

Inputs may be raw strings (tokenized with ``metrics.text.tokenize``) or token
sequences. Scores lie in [0, 1].
"""
import warnings
from functools import lru_cache
from typing import List, Sequence, Tuple

from nltk.stem.porter import PorterStemmer
from nltk.translate import bleu_score

from cxr_report_trainer.core.config import config
from cxr_report_trainer.metrics.text import as_tokens

_stemmer = PorterStemmer()


def bleu_weights(max_n: int) -> Tuple[float, ...]:
    if max_n < 1:
        raise ValueError(f"max_n must be at least 1, got {max_n}.")
    return (1.0 / max_n,) * max_n


def _unsmoothed(score_fn, *args, max_n: int) -> float:
    # nltk warns on every zero n-gram overlap; short texts hit that constantly
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return float(score_fn(*args, weights=bleu_weights(max_n)))


def bleu(hypothesis, reference, max_n: int = 4) -> float:
    """Sentence-level BLEU-max_n (no smoothing)."""
    return _unsmoothed(
        bleu_score.sentence_bleu, [as_tokens(reference)], as_tokens(hypothesis), max_n=max_n
    )


def corpus_bleu(hypotheses, references, max_n: int = 4) -> float:
    """Corpus BLEU: n-gram counts are summed over pairs before the geometric mean."""
    if len(hypotheses) != len(references):
        raise ValueError("hypotheses and references must have equal length.")
    return _unsmoothed(
        bleu_score.corpus_bleu,
        [[as_tokens(r)] for r in references],
        [as_tokens(h) for h in hypotheses],
        max_n=max_n,
    )


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            current.append(previous[j - 1] + 1 if x == y else max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(hypothesis, reference, beta: float = 1.0) -> float:
    """LCS-based F-measure; beta > 1 weights recall more."""
    hyp, ref = as_tokens(hypothesis), as_tokens(reference)
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(hyp)
    recall = lcs / len(ref)
    return (1 + beta**2) * precision * recall / (recall + beta**2 * precision)


@lru_cache(maxsize=65536)
def stem(token: str) -> str:
    return _stemmer.stem(token)


def align(hypothesis: Sequence[str], reference: Sequence[str]) -> List[Tuple[int, int]]:
    """
    Greedy one-to-one unigram alignment: exact matches first, then Porter-stem
    matches among the leftovers. Each hypothesis token takes the leftmost
    free reference token. Returns (hyp_index, ref_index) pairs sorted by
    hypothesis position.
    """
    used_ref = set()
    aligned = {}
    for key in (lambda t: t, stem):
        ref_keys = [key(t) for t in reference]
        for i, token in enumerate(hypothesis):
            if i in aligned:
                continue
            k = key(token)
            for j, ref_key in enumerate(ref_keys):
                if j not in used_ref and ref_key == k:
                    aligned[i] = j
                    used_ref.add(j)
                    break
    return sorted(aligned.items())


def count_chunks(alignment: Sequence[Tuple[int, int]]) -> int:
    chunks = 0
    previous = None
    for i, j in alignment:
        if previous is None or (i, j) != (previous[0] + 1, previous[1] + 1):
            chunks += 1
        previous = (i, j)
    return chunks


def meteor_like(
    hypothesis,
    reference,
    alpha: float = config.METEOR_ALPHA,
    beta: float = config.METEOR_BETA,
    gamma: float = config.METEOR_GAMMA,
) -> float:
    """
    Fmean = P*R / (alpha*P + (1-alpha)*R), times (1 - gamma*(chunks/m)**beta).
    No synonym stage.
    """
    hyp, ref = as_tokens(hypothesis), as_tokens(reference)
    alignment = align(hyp, ref)
    m = len(alignment)
    if m == 0:
        return 0.0
    precision = m / len(hyp)
    recall = m / len(ref)
    fmean = precision * recall / (alpha * precision + (1 - alpha) * recall)
    penalty = gamma * (count_chunks(alignment) / m) ** beta
    return fmean * (1 - penalty)
