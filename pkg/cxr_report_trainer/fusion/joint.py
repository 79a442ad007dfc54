from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, Iterable, Mapping, Optional, Tuple

import numpy as np

from cxr_report_trainer.corpus.tokens import AnatomicalTokenSet
from cxr_report_trainer.corpus.vocabulary import RegionVocabulary, default_region_vocabulary
from cxr_report_trainer.core.errors import ShapeMismatch
from cxr_report_trainer.fusion.projection_model import ProjectionParams


@dataclass(frozen=True, eq=False)
class JointRepresentation:
    """Per-region fused vectors of width 2d, in vocabulary order."""

    vocabulary: RegionVocabulary
    vectors: np.ndarray
    in_target: Tuple[bool, ...]

    @property
    def A_target(self) -> FrozenSet[str]:
        return frozenset(r for r, keep in zip(self.vocabulary, self.in_target) if keep)

    def __getitem__(self, region: str) -> np.ndarray:
        return self.vectors[self.vocabulary.index(region)]

    def masked_regions(self) -> Tuple[str, ...]:
        return tuple(r for r, keep in zip(self.vocabulary, self.in_target) if not keep)

    def to_dict(self) -> Dict[str, Any]:
        """Masked rows share one value, so only it and the target rows are stored."""
        keep = np.array(self.in_target, dtype=bool)
        masked = self.vectors[~keep]
        return {
            "regions": list(self.vocabulary.names),
            "in_target": [int(k) for k in self.in_target],
            "masked_value": masked[0].tolist() if len(masked) else None,
            "vectors": self.vectors[keep].tolist(),
        }

    @classmethod
    def from_dict(
        cls, record: Mapping[str, Any], vocabulary: Optional[RegionVocabulary] = None
    ) -> "JointRepresentation":
        vocabulary = vocabulary or default_region_vocabulary()
        if tuple(record["regions"]) != vocabulary.names:
            raise ShapeMismatch("Stored joint representation uses a different region order.")
        keep = np.array(record["in_target"], dtype=bool)
        rows = np.asarray(record["vectors"], dtype=np.float64)
        width = rows.shape[1] if rows.size else len(record["masked_value"])
        vectors = np.empty((len(vocabulary), width))
        if record.get("masked_value") is not None:
            vectors[~keep] = np.asarray(record["masked_value"], dtype=np.float64)
        vectors[keep] = rows.reshape(-1, width)
        vectors.setflags(write=False)
        return cls(vocabulary, vectors, tuple(bool(k) for k in keep))


def build_joint_representation(
    V_current: AnatomicalTokenSet,
    V_prior: AnatomicalTokenSet,
    A_target: Iterable[str],
    params: ProjectionParams,
) -> JointRepresentation:
    """
    v_joint,n = f([v_c,n, v_p,n]) for regions in A_target, and the shared
    constant f([0, 0]) for every other region.
    """
    vocabulary = V_current.vocabulary
    if V_prior.vocabulary.names != vocabulary.names:
        raise ShapeMismatch("Current and prior token sets are keyed by different vocabularies.")
    if V_current.d != V_prior.d:
        raise ShapeMismatch(f"Token widths differ: current {V_current.d}, prior {V_prior.d}.")
    if 2 * V_current.d != params.width:
        raise ShapeMismatch(
            f"Projection expects tokens of width {params.token_dim}, got {V_current.d}."
        )

    A_target = frozenset(A_target)
    vocabulary.validate(A_target)
    in_target = np.array([name in A_target for name in vocabulary], dtype=bool)

    masked_value = params.project(np.zeros((1, params.width)))[0]
    vectors = np.empty((len(vocabulary), params.width))
    vectors[:] = masked_value
    if in_target.any():
        joint_input = np.concatenate(
            [V_current.vectors[in_target], V_prior.vectors[in_target]], axis=1
        )
        vectors[in_target] = params.project(joint_input)
    vectors.setflags(write=False)
    return JointRepresentation(vocabulary, vectors, tuple(bool(k) for k in in_target))
