import os
import re

import pytest

from cxr_report_trainer.corpus.sections import (
    SectionHeaders,
    normalize_whitespace,
    parse_report_sections,
    split_sentences,
)
from cxr_report_trainer.core.config import config
from cxr_report_trainer.core.data_logger import read_jsonl
from cxr_report_trainer.core.errors import MissingFindings

RAW = """EXAMINATION: CHEST (PA AND LAT)

INDICATION: Cough and fever.

FINDINGS: The lungs are clear.
 No pleural effusion.

IMPRESSION: No acute process."""


def test_parse_findings_and_indication():
    findings, indication = parse_report_sections(RAW)
    assert findings == "The lungs are clear. No pleural effusion."
    assert indication == "Cough and fever."


def test_headers_are_case_insensitive_and_history_is_an_alias():
    raw = "History: Chest pain.\nfindings: Heart size is normal.\nImpression: Normal."
    assert parse_report_sections(raw) == ("Heart size is normal.", "Chest pain.")


def test_indication_may_be_missing():
    assert parse_report_sections("FINDINGS: No pneumothorax.") == ("No pneumothorax.", "")


def test_first_non_empty_findings_section_wins():
    raw = "FINDINGS:\n\nCOMPARISON: None.\nFINDINGS: Stable cardiomegaly.\nFINDINGS: Ignored."
    assert parse_report_sections(raw)[0] == "Stable cardiomegaly."


@pytest.mark.parametrize(
    "raw",
    ["", "   ", "IMPRESSION: Normal chest.", "FINDINGS:\n\nIMPRESSION: Normal chest."],
)
def test_missing_findings(raw):
    with pytest.raises(MissingFindings):
        parse_report_sections(raw, report_id="r1")


def test_custom_headers():
    headers = SectionHeaders(findings=("OBSERVATIONS",), indication=("REASON",))
    raw = "REASON: Trauma.\nOBSERVATIONS: No fracture.\nIMPRESSION: Normal."
    assert parse_report_sections(raw, headers) == ("No fracture.", "Trauma.")


def test_split_sentences_keeps_abbreviations():
    text = "The lungs are clear. Dr. Smith was notified. Is there an effusion? No."
    assert split_sentences(text) == [
        "The lungs are clear.",
        "Dr. Smith was notified.",
        "Is there an effusion?",
        "No.",
    ]


def test_split_sentences_reconstructs_normalized_text():
    text = "  Heart size normal.\n\nNo   effusion. Trailing words without a period"
    sentences = split_sentences(text)
    assert sentences[-1] == "Trailing words without a period"
    assert " ".join(sentences) == normalize_whitespace(text)


def test_split_sentences_ignores_decimal_points():
    assert split_sentences("A 1.5 cm nodule. Stable.") == ["A 1.5 cm nodule.", "Stable."]


def test_split_empty():
    assert split_sentences("") == []
    assert split_sentences(" \n ") == []


# synthetic corpus ground truth


def raw_reports(corpus_dir):
    return {r["report_id"]: r["text"] for r in read_jsonl(os.path.join(corpus_dir, config.REPORTS_FILE))}


def test_sections_match_synthetic_ground_truth(small_corpus):
    corpus_dir, sidecar = small_corpus
    raw = raw_reports(corpus_dir)
    assert sorted(raw) == sorted(sidecar["reports"])
    for report_id, entry in sidecar["reports"].items():
        if not entry["has_findings"]:
            with pytest.raises(MissingFindings):
                parse_report_sections(raw[report_id], report_id=report_id)
            continue
        expected = (entry["sections"]["findings"], entry["sections"]["indication"])
        assert parse_report_sections(raw[report_id], report_id=report_id) == expected, report_id


@pytest.mark.parametrize(
    "findings_header, indication_header",
    [("FINDINGS", "INDICATION"), ("Findings", "History"), ("findings", "indication"), ("FiNdInGs", "HISTORY")],
)
def test_header_casing_over_synthetic_reports(small_corpus, findings_header, indication_header):
    corpus_dir, sidecar = small_corpus
    raw = raw_reports(corpus_dir)
    for report_id, entry in sidecar["reports"].items():
        if not entry["has_findings"]:
            continue
        text = re.sub(r"(?i)\bfindings:", f"{findings_header}:", raw[report_id])
        text = re.sub(r"(?i)\b(indication|history):", f"{indication_header}:", text)
        expected = (entry["sections"]["findings"], entry["sections"]["indication"])
        assert parse_report_sections(text) == expected, report_id


def test_split_sentences_matches_synthetic_ground_truth(small_corpus):
    _, sidecar = small_corpus
    with_findings = [e for e in sidecar["reports"].values() if e["has_findings"]]
    assert with_findings
    for entry in with_findings:
        assert split_sentences(entry["sections"]["findings"]) == entry["sentences"]
