from cxr_report_trainer.longitudinal.pairing import (
    LongitudinalPair,
    PairingStats,
    align_token_sets,
    build_longitudinal_pairs,
    pair_all_patients,
    select_scan_within_study,
)
from cxr_report_trainer.longitudinal.studies import ScanRecord, StudyRecord, View

__all__ = [
    "LongitudinalPair",
    "PairingStats",
    "ScanRecord",
    "StudyRecord",
    "View",
    "align_token_sets",
    "build_longitudinal_pairs",
    "pair_all_patients",
    "select_scan_within_study",
]
