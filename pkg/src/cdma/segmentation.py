"""Fixed-length overlapping segments of feature sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .errors import EmptySegmentSet, TooShortForSegment
from .features import FeatureSequence

SEGMENT_LEN = 128


@dataclass(frozen=True)
class Segment:
    vectors: np.ndarray
    source_recording_id: str
    offset: int
    padded: bool = False


@dataclass
class SegmentSet:
    segments: List[Segment]
    speaker_id: str
    condition: str
    label: str | None = None

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def count(self) -> int:
        return len(self.segments)

    def array(self) -> np.ndarray:
        return np.stack([s.vectors for s in self.segments])


def segment_offsets(T: int, M: int = SEGMENT_LEN, stride: int | None = None) -> List[int]:
    stride = M // 2 if stride is None else stride
    if T < M:
        return []
    return list(range(0, T - M + 1, stride))


def _segment_one(seq: FeatureSequence, M: int, stride: int | None, pad: bool) -> List[Segment]:
    frames = seq.frames
    T = len(frames)
    if T < M:
        if not pad:
            raise TooShortForSegment(f"{seq.recording_id}: {T} frames < segment length {M}")
        padded = np.zeros((M, frames.shape[1]))
        padded[:T] = frames
        return [Segment(padded, seq.recording_id, 0, padded=True)]
    return [Segment(frames[o:o + M].copy(), seq.recording_id, o)
            for o in segment_offsets(T, M, stride)]


def segment_sequence(seq: FeatureSequence, M: int = SEGMENT_LEN, stride: int | None = None,
                     pad: bool = False) -> SegmentSet:
    """Cut one recording into windows of ``M`` frames; the tail remainder is dropped."""
    segs = _segment_one(seq, M, stride, pad)
    return SegmentSet(segs, seq.speaker_id, seq.condition, seq.label)


def segment_responses(responses: Sequence[FeatureSequence], M: int = SEGMENT_LEN,
                      stride: int | None = None, pad: bool = True) -> SegmentSet:
    """Segment each response separately so no window crosses a response boundary."""
    segs: List[Segment] = []
    for seq in responses:
        try:
            segs.extend(_segment_one(seq, M, stride, pad))
        except TooShortForSegment:
            continue
    if not segs:
        raise EmptySegmentSet("no response long enough to yield a segment")
    first = responses[0]
    return SegmentSet(segs, first.speaker_id, first.condition, first.label)
