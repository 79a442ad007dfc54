import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

from cxr_report_trainer.corpus.tokens import AnatomicalTokenSet, TokenKey
from cxr_report_trainer.corpus.vocabulary import RegionVocabulary
from cxr_report_trainer.core.errors import (
    DataError,
    DuplicateTimestamp,
    MissingTokens,
    NoFrontalScan,
)
from cxr_report_trainer.core.utils import derive_seed, make_rng
from cxr_report_trainer.longitudinal.studies import StudyRecord, group_by_patient


@dataclass(frozen=True)
class LongitudinalPair:
    current: TokenKey
    prior: Optional[TokenKey] = None
    patient_id: Optional[str] = None
    report_id: Optional[str] = None

    @property
    def is_initial(self) -> bool:
        return self.prior is None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "patient_id": self.patient_id,
            "report_id": self.report_id,
            "current": {"study_id": self.current[0], "scan_id": self.current[1]},
            "prior": (
                {"study_id": self.prior[0], "scan_id": self.prior[1]} if self.prior else None
            ),
            "is_initial": self.is_initial,
        }

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "LongitudinalPair":
        prior = record.get("prior")
        pair = cls(
            current=(record["current"]["study_id"], record["current"]["scan_id"]),
            prior=(prior["study_id"], prior["scan_id"]) if prior else None,
            patient_id=record.get("patient_id"),
            report_id=record.get("report_id"),
        )
        if "is_initial" in record and bool(record["is_initial"]) != pair.is_initial:
            raise DataError(f"Pair for {pair.current} has an inconsistent is_initial flag.")
        return pair


@dataclass
class PairingStats:
    patients: int = 0
    studies: int = 0
    pairs: int = 0
    pairs_with_prior: int = 0
    excluded_studies: int = 0
    present_tokens: Counter = field(default_factory=Counter)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "patients": self.patients,
            "studies": self.studies,
            "pairs": self.pairs,
            "pairs_with_prior": self.pairs_with_prior,
            "initial_pairs": self.pairs - self.pairs_with_prior,
            "excluded_studies": self.excluded_studies,
            "selected_scan_present_tokens": dict(sorted(self.present_tokens.items())),
        }


def select_scan_within_study(study: StudyRecord, rng_seed: int) -> str:
    """
    Among AP/PA scans, pick the one with the most detected regions; ties are
    broken uniformly at random with a generator seeded by ``rng_seed``.
    """
    frontal = study.frontal_scans
    if not frontal:
        raise NoFrontalScan(study.study_id)
    if len(frontal) == 1:
        return frontal[0].scan_id

    counts = [scan.count_present_tokens() for scan in frontal]
    best = max(counts)
    tied = [scan.scan_id for scan, count in zip(frontal, counts) if count == best]
    if len(tied) == 1:
        return tied[0]
    return tied[int(make_rng(rng_seed).integers(len(tied)))]


def scan_seed(rng_seed: int, study: StudyRecord) -> int:
    return derive_seed(rng_seed, "scan", study.patient_id, study.study_id)


def build_longitudinal_pairs(
    studies: Iterable[StudyRecord],
    rng_seed: int,
    stats: Optional[PairingStats] = None,
) -> List[LongitudinalPair]:
    """
    Pair every study of one patient that has a frontal scan with the most
    recent earlier study that also has one. Lateral-only studies are neither
    currents nor priors.
    """
    studies = sorted(studies, key=lambda s: s.timestamp)
    if not studies:
        return []

    patient_ids = {s.patient_id for s in studies}
    if len(patient_ids) != 1:
        raise DataError(f"Studies from several patients passed together: {sorted(patient_ids)}")
    patient_id = patient_ids.pop()

    for earlier, later in zip(studies, studies[1:]):
        if earlier.timestamp == later.timestamp:
            same = [s.study_id for s in studies if s.timestamp == earlier.timestamp]
            raise DuplicateTimestamp(patient_id, earlier.timestamp, same)

    pairs = []
    prior: Optional[TokenKey] = None
    excluded = 0
    for study in studies:
        if not study.has_frontal_scan:
            excluded += 1
            logging.debug(f"Study {study.study_id} excluded: no AP/PA scan.")
            continue
        scan_id = select_scan_within_study(study, scan_seed(rng_seed, study))
        current = (study.study_id, scan_id)
        pairs.append(LongitudinalPair(current, prior, patient_id, study.report_id))
        prior = current

        if stats is not None:
            stats.present_tokens[study.scan(scan_id).count_present_tokens()] += 1

    if stats is not None:
        stats.patients += 1
        stats.studies += len(studies)
        stats.pairs += len(pairs)
        stats.pairs_with_prior += sum(1 for p in pairs if not p.is_initial)
        stats.excluded_studies += excluded
    return pairs


def pair_all_patients(
    studies: Iterable[StudyRecord], rng_seed: int
) -> Tuple[List[LongitudinalPair], PairingStats]:
    stats = PairingStats()
    pairs = []
    for patient_studies in group_by_patient(studies).values():
        pairs.extend(build_longitudinal_pairs(patient_studies, rng_seed, stats))
    if stats.excluded_studies:
        logging.warning(
            f"{stats.excluded_studies} lateral-only study/studies excluded from pairing."
        )
    logging.info(
        f"Paired {stats.pairs} studies of {stats.patients} patients "
        f"({stats.pairs_with_prior} with a prior)."
    )
    return pairs, stats


def align_token_sets(
    pair: LongitudinalPair,
    token_store: Mapping[TokenKey, AnatomicalTokenSet],
    vocabulary: Optional[RegionVocabulary] = None,
    use_priors: bool = True,
) -> Tuple[AnatomicalTokenSet, AnatomicalTokenSet]:
    """
    Return (V_current, V_prior) keyed by the same region order. Initial exams
    get an all-zeros prior; a prior missing from the store is treated the same
    way, with a warning. With ``use_priors`` off every pair gets the zero prior,
    which turns the model into a single-scan baseline.
    """
    current = token_store.get(pair.current)
    if current is None:
        raise MissingTokens(*pair.current)
    vocabulary = vocabulary or current.vocabulary
    current = current.reorder(vocabulary)

    if not use_priors:
        return current, AnatomicalTokenSet.zeros(current.d, vocabulary)

    prior = token_store.get(pair.prior) if pair.prior is not None else None
    if pair.prior is not None and prior is None:
        logging.warning(
            f"No tokens for prior scan {pair.prior} of {pair.current}; using zero vectors."
        )
    if prior is None:
        return current, AnatomicalTokenSet.zeros(current.d, vocabulary)

    prior = prior.reorder(vocabulary)
    if prior.d != current.d:
        raise DataError(
            f"Token width differs between current {pair.current} ({current.d}) "
            f"and prior {pair.prior} ({prior.d})."
        )
    return current, prior
