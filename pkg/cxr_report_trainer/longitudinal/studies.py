import logging
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import pandas as pd

from cxr_report_trainer.corpus.tokens import AnatomicalTokenSet, TokenKey
from cxr_report_trainer.core.errors import DataError

METADATA_COLUMNS = ["patient_id", "study_id", "scan_id", "view", "timestamp", "report_id"]


class View(str, Enum):
    AP = "AP"
    PA = "PA"
    LATERAL = "LATERAL"
    OTHER = "OTHER"

    @property
    def is_frontal(self) -> bool:
        return self in (View.AP, View.PA)

    @classmethod
    def parse(cls, value: str) -> "View":
        value = str(value).strip().upper()
        if value in ("LL", "LAT", "LATERAL"):
            return cls.LATERAL
        try:
            return cls(value)
        except ValueError:
            return cls.OTHER


@dataclass(frozen=True)
class ScanRecord:
    scan_id: str
    view: View
    tokens: Optional[AnatomicalTokenSet] = None

    @property
    def is_frontal(self) -> bool:
        return self.view.is_frontal

    def count_present_tokens(self) -> int:
        return self.tokens.count_present() if self.tokens is not None else 0


@dataclass(frozen=True)
class StudyRecord:
    study_id: str
    patient_id: str
    timestamp: datetime
    scans: Tuple[ScanRecord, ...]
    report_id: Optional[str] = None

    def __post_init__(self):
        if not self.scans:
            raise DataError(f"Study '{self.study_id}' has no scans.")

    @property
    def frontal_scans(self) -> Tuple[ScanRecord, ...]:
        return tuple(s for s in self.scans if s.is_frontal)

    @property
    def has_frontal_scan(self) -> bool:
        return bool(self.frontal_scans)

    def scan(self, scan_id: str) -> ScanRecord:
        for s in self.scans:
            if s.scan_id == scan_id:
                return s
        raise KeyError(scan_id)


def read_metadata(path: str) -> pd.DataFrame:
    """Study metadata CSV: patient_id, study_id, scan_id, view, timestamp (ISO-8601), report_id."""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in METADATA_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"Metadata file {path} lacks columns: {', '.join(missing)}")
    try:
        frame["timestamp"] = pd.to_datetime(frame["timestamp"], format="ISO8601")
    except (ValueError, TypeError) as e:
        raise DataError(f"Metadata file {path} has an unparseable timestamp: {e}")
    return frame


def write_metadata(path: str, rows: Iterable[Mapping[str, object]]) -> None:
    frame = pd.DataFrame(list(rows), columns=METADATA_COLUMNS)
    frame.to_csv(path, index=False)


def build_study_records(
    metadata: pd.DataFrame,
    token_store: Optional[Mapping[TokenKey, AnatomicalTokenSet]] = None,
) -> List[StudyRecord]:
    """Group metadata rows into StudyRecords, attaching tokens where available."""
    token_store = token_store or {}
    studies = []
    missing_tokens = 0
    for (patient_id, study_id), rows in metadata.groupby(["patient_id", "study_id"], sort=True):
        timestamps = rows["timestamp"].unique()
        if len(timestamps) != 1:
            raise DataError(f"Study '{study_id}' has rows with different timestamps.")
        report_ids = {r for r in rows["report_id"] if r}
        if len(report_ids) > 1:
            raise DataError(f"Study '{study_id}' references several reports: {sorted(report_ids)}")
        scans = []
        for row in rows.sort_values("scan_id").itertuples(index=False):
            tokens = token_store.get((study_id, row.scan_id))
            if tokens is None:
                missing_tokens += 1
            scans.append(ScanRecord(row.scan_id, View.parse(row.view), tokens))
        studies.append(
            StudyRecord(
                study_id=study_id,
                patient_id=patient_id,
                timestamp=pd.Timestamp(timestamps[0]).to_pydatetime(),
                scans=tuple(scans),
                report_id=report_ids.pop() if report_ids else None,
            )
        )
    if token_store and missing_tokens:
        logging.warning(f"{missing_tokens} scan(s) in the metadata have no anatomical tokens.")
    return studies


def group_by_patient(studies: Iterable[StudyRecord]) -> Dict[str, List[StudyRecord]]:
    patients: Dict[str, List[StudyRecord]] = {}
    for study in studies:
        patients.setdefault(study.patient_id, []).append(study)
    return {pid: patients[pid] for pid in sorted(patients)}
