from cxr_report_trainer.anatomy_graph.dropout import (
    DropoutSample,
    PartialEvalInstance,
    build_partial_eval_set,
    check_dropout_sample,
    sample_dropout,
    sample_epoch,
)
from cxr_report_trainer.anatomy_graph.valid_subsets import (
    SubsetEntry,
    ValidPartition,
    classify_mapping,
    find_valid_subsets,
    validate_partition,
)

__all__ = [
    "DropoutSample",
    "PartialEvalInstance",
    "SubsetEntry",
    "ValidPartition",
    "build_partial_eval_set",
    "check_dropout_sample",
    "classify_mapping",
    "find_valid_subsets",
    "sample_dropout",
    "sample_epoch",
    "validate_partition",
]
