from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INVARIANT = 3


class PipelineError(Exception):
    """Base class for every error raised by cxr_report_trainer."""

    exit_code = EXIT_DATA


class ConfigError(PipelineError):
    exit_code = EXIT_USAGE


class InvariantViolation(PipelineError):
    exit_code = EXIT_INVARIANT


class DataError(PipelineError):
    exit_code = EXIT_DATA


class MissingFindings(DataError):
    def __init__(self, report_id: Optional[str] = None):
        self.report_id = report_id
        where = f" in report '{report_id}'" if report_id else ""
        super().__init__(f"No usable FINDINGS section{where}.")


class UnknownRegion(DataError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Unknown anatomical region '{name}'.")


class DuplicateSentenceIndex(DataError):
    def __init__(self, report_id: str, sentence_index: int):
        self.report_id = report_id
        self.sentence_index = sentence_index
        super().__init__(
            f"Report '{report_id}' has sentence index {sentence_index} more than once."
        )


class NoFrontalScan(DataError):
    def __init__(self, study_id: str):
        self.study_id = study_id
        super().__init__(f"Study '{study_id}' has no AP or PA scan.")


class DuplicateTimestamp(DataError):
    def __init__(self, patient_id: str, timestamp, study_ids):
        self.patient_id = patient_id
        self.timestamp = timestamp
        self.study_ids = tuple(study_ids)
        super().__init__(
            f"Patient '{patient_id}' has studies {', '.join(self.study_ids)} "
            f"sharing timestamp {timestamp}."
        )


class MissingTokens(DataError):
    def __init__(self, study_id: str, scan_id: str):
        self.key = (study_id, scan_id)
        super().__init__(f"No anatomical tokens for scan '{scan_id}' of study '{study_id}'.")


class EmptyPartition(DataError):
    def __init__(self, report_id: str):
        self.report_id = report_id
        super().__init__(f"Report '{report_id}' has no valid sentence-anatomy subsets.")


class ShapeMismatch(DataError):
    pass


class PositionOverflow(DataError):
    def __init__(self, length: int, max_positions: int):
        self.length = length
        self.max_positions = max_positions
        super().__init__(
            f"Sequence of length {length} exceeds the {max_positions} available positions."
        )


class GeneratorFailure(DataError):
    pass


class LabelerFailure(DataError):
    pass


class LengthMismatch(DataError):
    pass


class VocabularyMismatch(DataError):
    pass


class InvalidSpec(DataError):
    pass


class StageError(PipelineError):
    """Wraps a failure inside a pipeline stage with the stage name and record id."""

    def __init__(self, stage: str, record_id: Optional[str], cause: BaseException):
        self.stage = stage
        self.record_id = record_id
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", EXIT_INVARIANT)
        record = f" (record '{record_id}')" if record_id is not None else ""
        super().__init__(f"Stage '{stage}' failed{record}: {cause}")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PipelineError):
        return exc.exit_code
    return EXIT_INVARIANT
