"""
Valid sentence-anatomy subsets.

Sentences are nodes of a graph, joined by an edge when their region sets
overlap. Each connected component is a valid subset: its sentences are all the
sentences describing its regions, and its regions are exactly the regions its
sentences describe. Components are found with union-find over the
region -> sentence incidence instead of a repeated fixed-point sweep.
"""
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Tuple

from cxr_report_trainer.corpus.annotations import AnnotatedReport

ONE_TO_ONE = "one-to-one"
ONE_TO_MANY = "one-to-many"
MANY_TO_ONE = "many-to-one"
MANY_TO_MANY = "many-to-many"
MAPPING_TYPES = (ONE_TO_ONE, ONE_TO_MANY, MANY_TO_ONE, MANY_TO_MANY)


class ComponentFinder:
    """
    Union-find over hashable values. The representative of a set is always
    its smallest value, so component order follows sentence order.
    """

    def __init__(self, values: Iterable[int]):
        self.parent = {x: x for x in values}

    def merge(self, x: int, y: int) -> None:
        x_root = self.find(x)
        y_root = self.find(y)
        if x_root == y_root:
            return
        if x_root < y_root:
            self.parent[y_root] = x_root
        else:
            self.parent[x_root] = y_root

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        # path compression
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def components(self) -> List[Tuple[int, ...]]:
        groups: Dict[int, List[int]] = {}
        for x in sorted(self.parent):
            groups.setdefault(self.find(x), []).append(x)
        return [tuple(groups[root]) for root in sorted(groups)]


@dataclass(frozen=True)
class SubsetEntry:
    pair_indices: FrozenSet[int]
    regions: FrozenSet[str]
    target_text: str

    @property
    def mapping_type(self) -> str:
        return classify_mapping(len(self.regions), len(self.pair_indices))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pair_indices": sorted(self.pair_indices),
            "regions": sorted(self.regions),
            "target_text": self.target_text,
            "mapping_type": self.mapping_type,
        }

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "SubsetEntry":
        return cls(
            frozenset(int(i) for i in record["pair_indices"]),
            frozenset(record["regions"]),
            record["target_text"],
        )


@dataclass(frozen=True)
class ValidPartition:
    report_id: str
    subsets: Tuple[SubsetEntry, ...]
    unlocalized_indices: Tuple[int, ...] = ()
    sentence_texts: Mapping[int, str] = field(default_factory=dict, compare=False)

    @property
    def K(self) -> int:
        return len(self.subsets)

    @property
    def regions(self) -> FrozenSet[str]:
        return frozenset().union(*(s.regions for s in self.subsets))

    def text_for(self, sentence_indices: Iterable[int]) -> str:
        wanted = set(sentence_indices)
        return " ".join(self.sentence_texts[i] for i in sorted(self.sentence_texts) if i in wanted)

    def mapping_counts(self) -> Dict[str, int]:
        counts = dict.fromkeys(MAPPING_TYPES, 0)
        for subset in self.subsets:
            counts[subset.mapping_type] += 1
        return counts

    def to_dict(self) -> Dict[str, Any]:
        return {
            "report_id": self.report_id,
            "subsets": [s.to_dict() for s in self.subsets],
            "unlocalized_indices": list(self.unlocalized_indices),
            "sentences": [[i, self.sentence_texts[i]] for i in sorted(self.sentence_texts)],
        }

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "ValidPartition":
        return cls(
            report_id=record["report_id"],
            subsets=tuple(SubsetEntry.from_dict(s) for s in record["subsets"]),
            unlocalized_indices=tuple(record.get("unlocalized_indices", ())),
            sentence_texts={int(i): text for i, text in record.get("sentences", [])},
        )


def classify_mapping(region_count: int, sentence_count: int) -> str:
    if region_count == 1:
        return ONE_TO_ONE if sentence_count == 1 else ONE_TO_MANY
    return MANY_TO_ONE if sentence_count == 1 else MANY_TO_MANY


def find_valid_subsets(report: AnnotatedReport) -> ValidPartition:
    """Connected components of the sentence overlap graph of one report."""
    localized = report.localized_pairs
    finder = ComponentFinder(p.sentence_index for p in localized)

    first_sentence: Dict[str, int] = {}
    for pair in localized:
        for region in pair.regions:
            if region in first_sentence:
                finder.merge(first_sentence[region], pair.sentence_index)
            else:
                first_sentence[region] = pair.sentence_index

    regions_of = {p.sentence_index: p.regions for p in localized}
    subsets = tuple(
        SubsetEntry(
            pair_indices=frozenset(component),
            regions=frozenset().union(*(regions_of[i] for i in component)),
            target_text=report.text_for(component),
        )
        for component in finder.components()
    )
    return ValidPartition(
        report_id=report.report_id,
        subsets=subsets,
        unlocalized_indices=report.unlocalized_indices,
        sentence_texts={p.sentence_index: p.text for p in report.pairs},
    )


@dataclass
class PartitionCheck:
    valid: bool
    diagnostics: List[str]

    def __bool__(self) -> bool:
        return self.valid


def _is_connected(indices: FrozenSet[int], regions_of: Mapping[int, FrozenSet[str]]) -> bool:
    if not indices:
        return True
    start = min(indices)
    seen = {start}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in indices:
            if j not in seen and regions_of[i] & regions_of[j]:
                seen.add(j)
                queue.append(j)
    return seen == set(indices)


def validate_partition(report: AnnotatedReport, partition: ValidPartition) -> PartitionCheck:
    """
    Check a partition against the report. C1: every sentence describing a
    region of a subset is inside that subset. C2: a subset's regions are
    exactly the regions its sentences describe. Also checks disjointness,
    coverage of localized sentences and connectedness of each subset.
    """
    diagnostics = []
    regions_of = {p.sentence_index: p.regions for p in report.pairs}
    localized = {p.sentence_index for p in report.localized_pairs}

    seen_sentences: Dict[int, int] = {}
    seen_regions: Dict[str, int] = {}
    for k, subset in enumerate(partition.subsets):
        unknown = sorted(i for i in subset.pair_indices if i not in regions_of)
        if unknown:
            diagnostics.append(f"subset {k}: sentence indices {unknown} are not in the report")
            continue

        for i in sorted(subset.pair_indices):
            if i not in localized:
                diagnostics.append(f"subset {k}: sentence {i} is unlocalized")
            if i in seen_sentences:
                diagnostics.append(
                    f"disjointness: sentence {i} is in subsets {seen_sentences[i]} and {k}"
                )
            seen_sentences.setdefault(i, k)
        for region in sorted(subset.regions):
            if region in seen_regions:
                diagnostics.append(
                    f"disjointness: region '{region}' is in subsets {seen_regions[region]} and {k}"
                )
            seen_regions.setdefault(region, k)

        described = frozenset().union(*(regions_of[i] for i in subset.pair_indices))
        if described != subset.regions:
            diagnostics.append(
                f"C2 violated in subset {k}: regions {sorted(subset.regions)} != "
                f"described regions {sorted(described)}"
            )
        for i in sorted(localized - subset.pair_indices):
            if regions_of[i] & subset.regions:
                diagnostics.append(
                    f"C1 violated in subset {k}: sentence {i} describes "
                    f"{sorted(regions_of[i] & subset.regions)} but is outside the subset"
                )
        if not _is_connected(subset.pair_indices, regions_of):
            diagnostics.append(f"minimality: subset {k} is not connected")
        if subset.target_text != report.text_for(subset.pair_indices):
            diagnostics.append(f"subset {k}: target text does not match its sentences")

    uncovered = sorted(localized - set(seen_sentences))
    if uncovered:
        diagnostics.append(f"coverage: localized sentences {uncovered} are in no subset")
    return PartitionCheck(not diagnostics, diagnostics)
