from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Iterator, Tuple

from cxr_report_trainer.core.config import config
from cxr_report_trainer.core.errors import DataError, UnknownRegion


@dataclass(frozen=True)
class Vocabulary:
    """Ordered, duplicate-free list of identifiers."""

    names: Tuple[str, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        if not names:
            raise DataError(f"{type(self).__name__} must not be empty.")
        index = {}
        for i, name in enumerate(names):
            if name in index:
                raise DataError(f"Duplicate identifier '{name}' in {type(self).__name__}.")
            index[name] = i
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise self._unknown(name)

    def validate(self, names: Iterable[str]) -> None:
        for name in names:
            if name not in self._index:
                raise self._unknown(name)

    def ordered(self, names: Iterable[str]) -> Tuple[str, ...]:
        """Return the given names sorted by vocabulary position."""
        names = set(names)
        self.validate(names)
        return tuple(n for n in self.names if n in names)

    def _unknown(self, name: str) -> Exception:
        return DataError(f"Unknown identifier '{name}' for {type(self).__name__}.")


class RegionVocabulary(Vocabulary):
    def _unknown(self, name: str) -> Exception:
        return UnknownRegion(name)


class FindingVocabulary(Vocabulary):
    pass


def read_vocabulary_file(path: str) -> Tuple[str, ...]:
    """One identifier per line; blank lines and '#' comments are ignored."""
    with open(path, "r", encoding="utf-8") as f:
        names = [line.strip() for line in f]
    return tuple(n for n in names if n and not n.startswith("#"))


def load_region_vocabulary(path: str = config.REGION_VOCAB_PATH) -> RegionVocabulary:
    return RegionVocabulary(read_vocabulary_file(path))


def load_finding_vocabulary(path: str = config.FINDING_VOCAB_PATH) -> FindingVocabulary:
    return FindingVocabulary(read_vocabulary_file(path))


@lru_cache(maxsize=None)
def default_region_vocabulary() -> RegionVocabulary:
    return load_region_vocabulary(config.REGION_VOCAB_PATH)


@lru_cache(maxsize=None)
def default_finding_vocabulary() -> FindingVocabulary:
    return load_finding_vocabulary(config.FINDING_VOCAB_PATH)


@lru_cache(maxsize=None)
def default_labeler_vocabulary() -> FindingVocabulary:
    return load_finding_vocabulary(config.LABELER_VOCAB_PATH)
