from dataclasses import dataclass
from typing import Any, Dict, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np

from cxr_report_trainer.corpus.vocabulary import RegionVocabulary, default_region_vocabulary
from cxr_report_trainer.core.data_logger import iter_jsonl
from cxr_report_trainer.core.errors import DataError, ShapeMismatch

TokenKey = Tuple[str, str]


@dataclass(frozen=True, eq=False)
class AnatomicalTokenSet:
    """
    One d-dimensional token per region, in vocabulary order. Undetected
    regions have ``present`` False and an all-zeros vector.
    """

    vocabulary: RegionVocabulary
    present: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        present = np.array(self.present, dtype=bool)
        vectors = np.array(self.vectors, dtype=np.float64)
        n = len(self.vocabulary)
        if present.shape != (n,) or vectors.ndim != 2 or vectors.shape[0] != n:
            raise ShapeMismatch(
                f"Expected {n} regions, got present {present.shape} and vectors {vectors.shape}."
            )
        if np.any(vectors[~present] != 0.0):
            raise DataError("Undetected regions must carry the all-zeros vector.")
        present.setflags(write=False)
        vectors.setflags(write=False)
        object.__setattr__(self, "present", present)
        object.__setattr__(self, "vectors", vectors)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.vocabulary)

    def __getitem__(self, region: str) -> Tuple[bool, np.ndarray]:
        i = self.vocabulary.index(region)
        return bool(self.present[i]), self.vectors[i]

    def items(self) -> Iterator[Tuple[str, Tuple[bool, np.ndarray]]]:
        for i, region in enumerate(self.vocabulary):
            yield region, (bool(self.present[i]), self.vectors[i])

    def count_present(self) -> int:
        return int(self.present.sum())

    def reorder(self, vocabulary: RegionVocabulary) -> "AnatomicalTokenSet":
        """Re-key to another vocabulary; regions missing here become absent."""
        if vocabulary.names == self.vocabulary.names:
            return self
        present = np.zeros(len(vocabulary), dtype=bool)
        vectors = np.zeros((len(vocabulary), self.d))
        for i, region in enumerate(vocabulary):
            if region in self.vocabulary:
                j = self.vocabulary.index(region)
                present[i] = self.present[j]
                vectors[i] = self.vectors[j]
        return AnatomicalTokenSet(vocabulary, present, vectors)

    def equals(self, other: "AnatomicalTokenSet") -> bool:
        return (
            self.vocabulary.names == other.vocabulary.names
            and np.array_equal(self.present, other.present)
            and np.array_equal(self.vectors, other.vectors)
        )

    @classmethod
    def zeros(cls, d: int, vocabulary: Optional[RegionVocabulary] = None) -> "AnatomicalTokenSet":
        vocabulary = vocabulary or default_region_vocabulary()
        return cls(vocabulary, np.zeros(len(vocabulary), dtype=bool), np.zeros((len(vocabulary), d)))

    @classmethod
    def from_mapping(
        cls,
        detected: Mapping[str, Sequence[float]],
        d: int,
        vocabulary: Optional[RegionVocabulary] = None,
    ) -> "AnatomicalTokenSet":
        """Build from {region: vector} for detected regions only."""
        vocabulary = vocabulary or default_region_vocabulary()
        vocabulary.validate(detected)
        present = np.zeros(len(vocabulary), dtype=bool)
        vectors = np.zeros((len(vocabulary), d))
        for region, vector in detected.items():
            vector = np.asarray(vector, dtype=np.float64)
            if vector.shape != (d,):
                raise ShapeMismatch(f"Token for '{region}' has shape {vector.shape}, expected ({d},).")
            i = vocabulary.index(region)
            present[i] = True
            vectors[i] = vector
        return cls(vocabulary, present, vectors)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "regions": list(self.vocabulary.names),
            "present": self.present.tolist(),
            "vectors": self.vectors.tolist(),
        }

    @classmethod
    def from_dict(
        cls, record: Mapping[str, Any], vocabulary: Optional[RegionVocabulary] = None
    ) -> "AnatomicalTokenSet":
        stored = RegionVocabulary(tuple(record["regions"]))
        vectors = np.asarray(record["vectors"], dtype=np.float64)
        tokens = cls(stored, record["present"], vectors.reshape(len(stored), -1))
        return tokens.reorder(vocabulary) if vocabulary is not None else tokens


def load_token_store(
    path: str, vocabulary: Optional[RegionVocabulary] = None
) -> Dict[TokenKey, AnatomicalTokenSet]:
    """Token file: JSON Lines of {study_id, scan_id, regions, present, vectors}."""
    store: Dict[TokenKey, AnatomicalTokenSet] = {}
    for record in iter_jsonl(path):
        key = (str(record["study_id"]), str(record["scan_id"]))
        if key in store:
            raise DataError(f"Duplicate token record for study/scan {key}.")
        store[key] = AnatomicalTokenSet.from_dict(record, vocabulary)
    return store


def token_record(study_id: str, scan_id: str, tokens: AnatomicalTokenSet) -> Dict[str, Any]:
    return dict(tokens.to_dict(), study_id=study_id, scan_id=scan_id)
