"""
Multimodal input assembly: each position's vector is the sum of a content
embedding, a positional embedding and a segment (vision/text) embedding.
Visual content comes from the joint representation through a bias-free linear
adapter of width 2d -> embedding width.
"""
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn

from cxr_report_trainer.core.errors import PositionOverflow, ShapeMismatch
from cxr_report_trainer.core.utils import make_rng
from cxr_report_trainer.fusion.joint import JointRepresentation
from cxr_report_trainer.metrics.text import tokenize

SEGMENT_VISION = 0
SEGMENT_TEXT = 1
SEGMENT_NAMES = {SEGMENT_VISION: "vision", SEGMENT_TEXT: "text"}

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"


class TextVocabulary:
    """Word -> id map for the indication field. Ids 0 and 1 are [PAD] and [UNK]."""

    def __init__(self, words: Iterable[str] = ()):
        self.words: List[str] = [PAD_TOKEN, UNK_TOKEN]
        self.ids: Dict[str, int] = {PAD_TOKEN: 0, UNK_TOKEN: 1}
        for word in words:
            self.add(word)

    def add(self, word: str) -> int:
        if word not in self.ids:
            self.ids[word] = len(self.words)
            self.words.append(word)
        return self.ids[word]

    def __len__(self) -> int:
        return len(self.words)

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "TextVocabulary":
        """Deterministic: words sorted, independent of text order."""
        words = set()
        for text in texts:
            words.update(tokenize(text))
        return cls(sorted(words))

    def encode(self, text: str) -> List[int]:
        return [self.ids.get(t, self.ids[UNK_TOKEN]) for t in tokenize(text)]


class EmbeddingTables(nn.Module):
    def __init__(self, vocab_size: int, max_positions: int, width: int, joint_width: int):
        super(EmbeddingTables, self).__init__()
        self.token_embeddings = nn.Embedding(vocab_size, width)
        self.position_embeddings = nn.Embedding(max_positions, width)
        self.segment_embeddings = nn.Embedding(2, width)
        self.adapter = nn.Linear(joint_width, width, bias=False)
        self.double()
        self.eval()

    @property
    def width(self) -> int:
        return self.token_embeddings.embedding_dim

    @property
    def max_positions(self) -> int:
        return self.position_embeddings.num_embeddings

    @classmethod
    def from_arrays(
        cls,
        token: np.ndarray,
        position: np.ndarray,
        segment: np.ndarray,
        adapter: np.ndarray,
    ) -> "EmbeddingTables":
        """``adapter`` has shape (width, 2d), as nn.Linear stores it."""
        token, position, segment, adapter = (
            np.asarray(a, dtype=np.float64) for a in (token, position, segment, adapter)
        )
        width = token.shape[1]
        if position.shape[1] != width or segment.shape != (2, width) or adapter.shape[0] != width:
            raise ShapeMismatch("Embedding tables disagree on the embedding width.")
        tables = cls(token.shape[0], position.shape[0], width, adapter.shape[1])
        with torch.no_grad():
            tables.token_embeddings.weight.copy_(torch.from_numpy(token))
            tables.position_embeddings.weight.copy_(torch.from_numpy(position))
            tables.segment_embeddings.weight.copy_(torch.from_numpy(segment))
            tables.adapter.weight.copy_(torch.from_numpy(adapter))
        return tables

    @classmethod
    def zeros(cls, vocab_size: int, max_positions: int, width: int, joint_width: int):
        return cls.from_arrays(
            np.zeros((vocab_size, width)),
            np.zeros((max_positions, width)),
            np.zeros((2, width)),
            np.zeros((width, joint_width)),
        )

    @classmethod
    def random(cls, vocab_size: int, max_positions: int, width: int, joint_width: int, seed: int):
        rng = make_rng(seed)
        return cls.from_arrays(
            rng.normal(0.0, 0.02, size=(vocab_size, width)),
            rng.normal(0.0, 0.02, size=(max_positions, width)),
            rng.normal(0.0, 0.02, size=(2, width)),
            rng.uniform(-1.0, 1.0, size=(width, joint_width)) / np.sqrt(joint_width),
        )


@dataclass(frozen=True, eq=False)
class MultimodalSequence:
    vectors: np.ndarray
    segments: Tuple[int, ...]
    positions: Tuple[int, ...]
    visual_regions: Tuple[Tuple[str, bool], ...] = ()
    token_ids: Tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def unmasked_regions(self) -> Tuple[str, ...]:
        return tuple(region for region, in_target in self.visual_regions if in_target)


def assemble_multimodal_input(
    V_joint: JointRepresentation,
    indication_tokens: Sequence[int],
    embed_tables: EmbeddingTables,
    include_masked: bool = True,
) -> MultimodalSequence:
    """
    [adapted visual vectors in vocabulary order] ++ [indication token
    embeddings], each summed with its positional and segment embedding.
    With ``include_masked`` False, masked regions are left out.
    """
    keep = [i for i, in_target in enumerate(V_joint.in_target) if include_masked or in_target]
    token_ids = [int(t) for t in indication_tokens]
    length = len(keep) + len(token_ids)
    if length > embed_tables.max_positions:
        raise PositionOverflow(length, embed_tables.max_positions)
    if V_joint.vectors.shape[1] != embed_tables.adapter.in_features:
        raise ShapeMismatch(
            f"Adapter expects width {embed_tables.adapter.in_features}, "
            f"got {V_joint.vectors.shape[1]}."
        )
    vocab_size = embed_tables.token_embeddings.num_embeddings
    if any(t < 0 or t >= vocab_size for t in token_ids):
        raise ShapeMismatch(f"Indication token id outside the table of size {vocab_size}.")

    segments = [SEGMENT_VISION] * len(keep) + [SEGMENT_TEXT] * len(token_ids)
    with torch.no_grad():
        visual = embed_tables.adapter(torch.from_numpy(V_joint.vectors[keep].copy()))
        text = embed_tables.token_embeddings(torch.tensor(token_ids, dtype=torch.long))
        content = torch.cat([visual, text.reshape(-1, embed_tables.width)], dim=0)
        positions = torch.arange(length, dtype=torch.long)
        vectors = (
            content
            + embed_tables.position_embeddings(positions)
            + embed_tables.segment_embeddings(torch.tensor(segments, dtype=torch.long))
        )

    regions = V_joint.vocabulary.names
    return MultimodalSequence(
        vectors=vectors.numpy(),
        segments=tuple(segments),
        positions=tuple(range(length)),
        visual_regions=tuple((regions[i], V_joint.in_target[i]) for i in keep),
        token_ids=tuple(token_ids),
    )


def encode_indication(text: str, vocabulary: Optional[TextVocabulary]) -> List[int]:
    if vocabulary is None or not text:
        return []
    return vocabulary.encode(text)
