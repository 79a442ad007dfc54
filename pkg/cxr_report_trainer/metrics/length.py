from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from cxr_report_trainer.metrics.text import word_count


@dataclass
class LengthHistogram:
    """
    Word-count histogram. Bin i covers [i*bin_width, (i+1)*bin_width).
    """

    bin_width: int
    counts: List[int] = field(default_factory=list)
    total: int = 0
    mean: float = 0.0
    median: float = 0.0
    stddev: float = 0.0
    lengths: List[int] = field(default_factory=list, repr=False)

    @property
    def is_empty(self) -> bool:
        return self.total == 0

    def bin_edges(self) -> List[int]:
        return [i * self.bin_width for i in range(len(self.counts) + 1)]

    def to_dict(self) -> Dict[str, object]:
        return {
            "bin_width": self.bin_width,
            "bin_edges": self.bin_edges(),
            "counts": list(self.counts),
            "total": self.total,
            "mean": self.mean,
            "median": self.median,
            "stddev": self.stddev,
        }


def length_distribution(reports: Sequence[str], bin_width: int = 10) -> LengthHistogram:
    if bin_width < 1:
        raise ValueError(f"bin_width must be at least 1, got {bin_width}.")
    lengths = [word_count(r) for r in reports]
    if not lengths:
        return LengthHistogram(bin_width)
    values = np.asarray(lengths)
    counts = np.bincount(values // bin_width)
    return LengthHistogram(
        bin_width=bin_width,
        counts=[int(c) for c in counts],
        total=len(lengths),
        mean=float(values.mean()),
        median=float(np.median(values)),
        stddev=float(values.std()),
        lengths=lengths,
    )
