from datetime import datetime, timedelta

import numpy as np
import pandas as pd
import pytest

from cxr_report_trainer.corpus.tokens import AnatomicalTokenSet
from cxr_report_trainer.corpus.vocabulary import default_region_vocabulary
from cxr_report_trainer.core.errors import DataError, DuplicateTimestamp, MissingTokens, NoFrontalScan
from cxr_report_trainer.longitudinal.pairing import (
    LongitudinalPair,
    align_token_sets,
    build_longitudinal_pairs,
    pair_all_patients,
    scan_seed,
    select_scan_within_study,
)
from cxr_report_trainer.longitudinal.studies import (
    ScanRecord,
    StudyRecord,
    View,
    build_study_records,
    read_metadata,
    write_metadata,
)

REGIONS = default_region_vocabulary().names
START = datetime(2150, 1, 1)


def tokens_with(count, d=2):
    return AnatomicalTokenSet.from_mapping({r: [1.0] * d for r in REGIONS[:count]}, d=d)


def random_history(rng, patient_id="p1"):
    studies = []
    day_offsets = rng.choice(1000, size=int(rng.integers(1, 7)), replace=False)
    for s, offset in enumerate(day_offsets):
        scans = []
        for k in range(int(rng.integers(1, 4))):
            view = [View.AP, View.PA, View.LATERAL][int(rng.integers(3))]
            scans.append(ScanRecord(f"{patient_id}_s{s}_{k}", view, tokens_with(int(rng.integers(0, 5)))))
        studies.append(
            StudyRecord(f"{patient_id}_s{s}", patient_id, START + timedelta(days=int(offset)), tuple(scans))
        )
    return studies


def expected_prior(studies, study):
    """Latest earlier study with a frontal scan, by exhaustive search."""
    earlier = [s for s in studies if s.timestamp < study.timestamp and s.has_frontal_scan]
    return max(earlier, key=lambda s: s.timestamp) if earlier else None


def test_pairs_match_exhaustive_search():
    rng = np.random.default_rng(11)
    for h in range(200):
        studies = random_history(rng)
        pairs = build_longitudinal_pairs(list(reversed(studies)), rng_seed=h)
        by_study = {p.current[0]: p for p in pairs}

        eligible = [s for s in studies if s.has_frontal_scan]
        assert sorted(by_study) == sorted(s.study_id for s in eligible)
        for study in eligible:
            pair = by_study[study.study_id]
            best = max(s.count_present_tokens() for s in study.frontal_scans)
            chosen = study.scan(pair.current[1])
            assert chosen.is_frontal
            assert chosen.count_present_tokens() == best

            prior = expected_prior(studies, study)
            if prior is None:
                assert pair.is_initial
            else:
                assert pair.prior == by_study[prior.study_id].current


def test_initial_flag_and_lateral_only_exclusion():
    lateral = StudyRecord("s0", "p1", START, (ScanRecord("s0_0", View.LATERAL, tokens_with(3)),))
    first = StudyRecord("s1", "p1", START + timedelta(days=1), (ScanRecord("s1_0", View.PA, tokens_with(3)),))
    second = StudyRecord(
        "s2", "p1", START + timedelta(days=9),
        (ScanRecord("s2_0", View.LATERAL, tokens_with(5)), ScanRecord("s2_1", View.AP, tokens_with(2))),
    )
    pairs, stats = pair_all_patients([second, lateral, first], rng_seed=0)
    assert [p.current for p in pairs] == [("s1", "s1_0"), ("s2", "s2_1")]
    assert pairs[0].is_initial
    assert pairs[1].prior == ("s1", "s1_0")
    assert stats.excluded_studies == 1
    assert stats.to_dict()["pairs_with_prior"] == 1


def test_tie_break_is_uniform():
    study = StudyRecord(
        "s1", "p1", START,
        (ScanRecord("a", View.AP, tokens_with(4)), ScanRecord("b", View.PA, tokens_with(4))),
    )
    picks = [select_scan_within_study(study, seed) for seed in range(400)]
    assert 0.4 <= picks.count("a") / len(picks) <= 0.6
    assert select_scan_within_study(study, 5) == select_scan_within_study(study, 5)


def test_scan_with_most_tokens_wins():
    study = StudyRecord(
        "s1", "p1", START,
        (ScanRecord("a", View.AP, tokens_with(4)), ScanRecord("b", View.PA, tokens_with(6))),
    )
    assert {select_scan_within_study(study, seed) for seed in range(20)} == {"b"}


def test_no_frontal_scan():
    study = StudyRecord("s1", "p1", START, (ScanRecord("a", View.LATERAL, tokens_with(4)),))
    with pytest.raises(NoFrontalScan):
        select_scan_within_study(study, 0)


def test_duplicate_timestamp():
    scans = (ScanRecord("a", View.AP, tokens_with(1)),)
    studies = [StudyRecord("s1", "p1", START, scans), StudyRecord("s2", "p1", START, scans)]
    with pytest.raises(DuplicateTimestamp):
        build_longitudinal_pairs(studies, rng_seed=0)


def test_studies_of_several_patients_are_rejected():
    scans = (ScanRecord("a", View.AP, tokens_with(1)),)
    studies = [StudyRecord("s1", "p1", START, scans), StudyRecord("s2", "p2", START, scans)]
    with pytest.raises(DataError):
        build_longitudinal_pairs(studies, rng_seed=0)


def test_scan_seed_depends_on_study():
    a = StudyRecord("s1", "p1", START, (ScanRecord("a", View.AP),))
    b = StudyRecord("s2", "p1", START, (ScanRecord("a", View.AP),))
    assert scan_seed(0, a) != scan_seed(0, b)


def test_align_token_sets():
    current = tokens_with(3)
    store = {("s2", "x"): current, ("s1", "y"): tokens_with(5)}

    v_current, v_prior = align_token_sets(LongitudinalPair(("s2", "x")), store)
    assert v_current.equals(current)
    assert not v_prior.present.any() and not v_prior.vectors.any()

    v_current, v_prior = align_token_sets(LongitudinalPair(("s2", "x"), ("s1", "y")), store)
    assert v_prior.count_present() == 5

    # a prior without tokens falls back to zeros
    _, v_prior = align_token_sets(LongitudinalPair(("s2", "x"), ("s0", "z")), store)
    assert v_prior.count_present() == 0

    with pytest.raises(MissingTokens):
        align_token_sets(LongitudinalPair(("s9", "q")), store)

    # priors switched off: every pair looks like an initial exam
    v_current, v_prior = align_token_sets(LongitudinalPair(("s2", "x"), ("s1", "y")), store, use_priors=False)
    assert v_current.equals(current)
    assert v_prior.equals(AnatomicalTokenSet.zeros(2))


def test_pair_dict_round_trip():
    pair = LongitudinalPair(("s2", "x"), ("s1", "y"), "p1", "r2")
    assert LongitudinalPair.from_dict(pair.to_dict()) == pair
    record = pair.to_dict()
    record["is_initial"] = True
    with pytest.raises(DataError):
        LongitudinalPair.from_dict(record)


def test_metadata_round_trip(tmp_path):
    path = str(tmp_path / "metadata.csv")
    write_metadata(
        path,
        [
            {"patient_id": "p1", "study_id": "s1", "scan_id": "s1_0", "view": "PA",
             "timestamp": "2150-01-01T00:00:00", "report_id": "r1"},
            {"patient_id": "p1", "study_id": "s1", "scan_id": "s1_1", "view": "LL",
             "timestamp": "2150-01-01T00:00:00", "report_id": "r1"},
            {"patient_id": "p1", "study_id": "s2", "scan_id": "s2_0", "view": "AP",
             "timestamp": "2150-03-01T08:30:00", "report_id": "r2"},
        ],
    )
    frame = read_metadata(path)
    assert pd.api.types.is_datetime64_any_dtype(frame["timestamp"])

    studies = build_study_records(frame)
    assert [s.study_id for s in studies] == ["s1", "s2"]
    assert [scan.view for scan in studies[0].scans] == [View.PA, View.LATERAL]
    assert studies[1].report_id == "r2"
    assert studies[1].timestamp == datetime(2150, 3, 1, 8, 30)


def test_metadata_requires_columns(tmp_path):
    path = tmp_path / "metadata.csv"
    path.write_text("patient_id,study_id\np1,s1\n")
    with pytest.raises(DataError):
        read_metadata(str(path))
