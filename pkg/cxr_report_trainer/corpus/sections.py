"""
Rule-based extraction of the Findings and Indication sections of a free-text
radiology report, and a deterministic sentence splitter.

Headers are matched case-insensitively and must be followed by a colon. Any
known header terminates the section before it, so the configurable list also
carries headers we do not extract (IMPRESSION, COMPARISON, ...).
"""
import logging
import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

from cxr_report_trainer.core.config import config
from cxr_report_trainer.core.errors import MissingFindings

DEFAULT_TERMINATOR_HEADERS = (
    "IMPRESSION",
    "CONCLUSION",
    "COMPARISON",
    "TECHNIQUE",
    "EXAMINATION",
    "EXAM",
    "REASON FOR EXAM",
    "RECOMMENDATION",
    "RECOMMENDATIONS",
    "NOTIFICATION",
    "WET READ",
)

ABBREVIATIONS = frozenset(
    {"dr", "mr", "mrs", "ms", "vs", "e.g", "i.e", "approx", "etc", "fig", "st"}
)

_WHITESPACE = re.compile(r"\s+")
_SENTENCE_END = re.compile(r"[.?!]+(?=\s|$)")


@dataclass(frozen=True)
class SectionHeaders:
    findings: Tuple[str, ...] = config.FINDINGS_HEADERS
    indication: Tuple[str, ...] = config.INDICATION_HEADERS
    terminators: Tuple[str, ...] = DEFAULT_TERMINATOR_HEADERS

    def pattern(self) -> "re.Pattern":
        names = sorted(
            {h.upper() for h in self.findings + self.indication + self.terminators},
            key=len,
            reverse=True,
        )
        alternation = "|".join(re.escape(n).replace(r"\ ", r"\s+") for n in names)
        return re.compile(rf"\b(?P<title>{alternation})\s*:", re.IGNORECASE)

    def kind(self, title: str) -> Optional[str]:
        title = _WHITESPACE.sub(" ", title).upper()
        if title in (h.upper() for h in self.findings):
            return "findings"
        if title in (h.upper() for h in self.indication):
            return "indication"
        return None


DEFAULT_HEADERS = SectionHeaders()


def normalize_whitespace(text: str) -> str:
    return _WHITESPACE.sub(" ", text).strip()


def parse_report_sections(
    raw_report: str,
    header_config: SectionHeaders = DEFAULT_HEADERS,
    report_id: Optional[str] = None,
) -> Tuple[str, str]:
    """
    Return (findings_text, indication_text) from a raw report.

    The first non-empty section under a Findings header is used; indication
    text may be empty. Raises MissingFindings if no non-empty Findings
    section exists.
    """
    if not raw_report or not raw_report.strip():
        raise MissingFindings(report_id)

    matches = list(header_config.pattern().finditer(raw_report))
    sections = {"findings": "", "indication": ""}
    for match, next_match in zip(matches, matches[1:] + [None]):
        kind = header_config.kind(match.group("title"))
        if kind is None or sections[kind]:
            continue
        end = next_match.start() if next_match else len(raw_report)
        sections[kind] = normalize_whitespace(raw_report[match.end():end])

    if not sections["findings"]:
        logging.debug(f"Report {report_id or '<unnamed>'} has no usable FINDINGS section.")
        raise MissingFindings(report_id)
    return sections["findings"], sections["indication"]


def split_sentences(findings_text: str) -> List[str]:
    """
    Split on '.', '?' or '!' followed by whitespace or end of text, unless the
    word before the period is a known abbreviation. Joining the result with
    single spaces reproduces the whitespace-normalized input.
    """
    text = normalize_whitespace(findings_text)
    if not text:
        return []

    sentences = []
    start = 0
    for match in _SENTENCE_END.finditer(text):
        words = text[start:match.start()].split()
        last_word = words[-1].lower() if words else ""
        if match.group() == "." and last_word in ABBREVIATIONS:
            continue
        sentences.append(text[start:match.end()].strip())
        start = match.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences
