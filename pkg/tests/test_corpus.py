import numpy as np
import pytest

from conftest import SAMPLE_SENTENCES, annotation_records
from cxr_report_trainer.corpus.annotations import (
    AnnotatedReport,
    group_annotation_records,
    parse_annotations,
)
from cxr_report_trainer.corpus.tokens import AnatomicalTokenSet, load_token_store, token_record
from cxr_report_trainer.corpus.vocabulary import (
    FindingVocabulary,
    RegionVocabulary,
    default_finding_vocabulary,
    default_labeler_vocabulary,
    default_region_vocabulary,
)
from cxr_report_trainer.core.config import config
from cxr_report_trainer.core.data_logger import write_jsonl
from cxr_report_trainer.core.errors import (
    DataError,
    DuplicateSentenceIndex,
    ShapeMismatch,
    UnknownRegion,
)


def test_shipped_vocabularies():
    regions = default_region_vocabulary()
    assert len(regions) == config.FULL_SCALE_REGION_COUNT == 36
    assert len(default_finding_vocabulary()) == config.FULL_SCALE_FINDING_COUNT == 71
    assert len(default_labeler_vocabulary()) == config.LABELER_FINDING_COUNT == 14
    assert "right lung" in regions
    assert regions.ordered(["right lung", "abdomen", "left lung"]) == (
        "abdomen",
        "left lung",
        "right lung",
    )


def test_vocabulary_rejects_duplicates_and_unknown_names():
    with pytest.raises(DataError):
        FindingVocabulary(("a", "b", "a"))
    with pytest.raises(UnknownRegion):
        default_region_vocabulary().index("left elbow")


def test_parse_sample_report(sample_report):
    assert sample_report.report_id == "r-sample"
    assert sample_report.sentence_count == 8
    assert sample_report.unlocalized_indices == ()
    assert sample_report.regions == {
        "mediastinum",
        "right lung",
        "left lung",
        "left clavicle",
        "right clavicle",
        "abdomen",
    }
    assert sample_report.text_for([7, 6]) == (
        "NG tube tip positioned correctly in stomach. No free air under diaphragm."
    )


def test_pairs_are_ordered_by_sentence_index():
    records = list(reversed(annotation_records("r1", SAMPLE_SENTENCES[:3])))
    report = parse_annotations(records)
    assert [p.sentence_index for p in report.pairs] == [0, 1, 2]
    assert report.findings_text.startswith("The mediastinum is mildly enlarged.")


def test_unlocalized_sentences():
    sentences = SAMPLE_SENTENCES[:2] + [("No change is seen.", [])]
    report = parse_annotations(annotation_records("r1", sentences))
    assert report.unlocalized_indices == (2,)
    assert not report.pair(2).is_localized


def test_duplicate_sentence_index():
    records = annotation_records("r1", SAMPLE_SENTENCES[:2])
    records[1]["sentence_index"] = 0
    with pytest.raises(DuplicateSentenceIndex):
        parse_annotations(records)


def test_unknown_region():
    records = annotation_records("r1", [("Elbow is fine.", ["left elbow"])])
    with pytest.raises(UnknownRegion):
        parse_annotations(records)


def test_sentences_must_reconstruct_findings():
    records = annotation_records("r1", SAMPLE_SENTENCES[:2])
    parse_annotations(records, findings_text="The mediastinum is mildly enlarged.\n  "
                      "Blunting of right costophrenic angle noted.")
    with pytest.raises(DataError):
        parse_annotations(records, findings_text="Something else entirely.")


def test_empty_record_list():
    report = parse_annotations([])
    assert report == AnnotatedReport("", "", "", ())
    assert report.sentence_count == 0
    assert report.regions == frozenset()

    report = parse_annotations([], report_id="r9", findings_text="Lungs are clear.", indication_text="Cough.")
    assert (report.report_id, report.findings_text, report.indication_text) == ("r9", "Lungs are clear.", "Cough.")
    assert report.pairs == ()


def test_records_from_several_reports():
    records = annotation_records("r1", SAMPLE_SENTENCES[:1]) + annotation_records("r2", SAMPLE_SENTENCES[1:2])
    with pytest.raises(DataError):
        parse_annotations(records)
    assert sorted(group_annotation_records(records)) == ["r1", "r2"]


def test_report_dict_round_trip(sample_report):
    restored = AnnotatedReport.from_dict(sample_report.to_dict())
    assert restored == sample_report


def test_token_set_from_mapping():
    tokens = AnatomicalTokenSet.from_mapping({"right lung": [1.0, 2.0], "abdomen": [3.0, 0.0]}, d=2)
    assert tokens.d == 2
    assert len(tokens) == 36
    assert tokens.count_present() == 2
    present, vector = tokens["right lung"]
    assert present and vector.tolist() == [1.0, 2.0]
    present, vector = tokens["trachea"]
    assert not present and vector.tolist() == [0.0, 0.0]


def test_token_set_is_read_only():
    tokens = AnatomicalTokenSet.from_mapping({"abdomen": [1.0]}, d=1)
    with pytest.raises(ValueError):
        tokens.vectors[0, 0] = 5.0


def test_token_set_rejects_bad_input():
    vocabulary = default_region_vocabulary()
    present = np.zeros(len(vocabulary), dtype=bool)
    vectors = np.zeros((len(vocabulary), 3))
    vectors[4, 1] = 0.5
    with pytest.raises(DataError):
        AnatomicalTokenSet(vocabulary, present, vectors)
    with pytest.raises(ShapeMismatch):
        AnatomicalTokenSet(vocabulary, present[:-1], vectors[:-1])
    with pytest.raises(ShapeMismatch):
        AnatomicalTokenSet.from_mapping({"abdomen": [1.0, 2.0]}, d=3)
    with pytest.raises(UnknownRegion):
        AnatomicalTokenSet.from_mapping({"left elbow": [1.0]}, d=1)


def test_reorder_to_smaller_vocabulary():
    tokens = AnatomicalTokenSet.from_mapping({"abdomen": [1.0], "spine": [2.0]}, d=1)
    small = RegionVocabulary(("spine", "trachea"))
    reordered = tokens.reorder(small)
    assert reordered.present.tolist() == [True, False]
    assert reordered.vectors[:, 0].tolist() == [2.0, 0.0]


def test_token_store(tmp_path):
    tokens = AnatomicalTokenSet.from_mapping({"spine": [0.25, -1.5]}, d=2)
    path = str(tmp_path / "tokens.jsonl")
    write_jsonl(path, [token_record("s1", "s1_0", tokens)])
    store = load_token_store(path)
    assert list(store) == [("s1", "s1_0")]
    assert store[("s1", "s1_0")].equals(tokens)

    write_jsonl(path, [token_record("s1", "s1_0", tokens)] * 2)
    with pytest.raises(DataError):
        load_token_store(path)
