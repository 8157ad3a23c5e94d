"""Speaker grouping, input preparation and the RMSProp training loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from . import model, nn
from .config import SPONTANEOUS, RunConfig
from .errors import DataError, EmptySegmentSet, TooShortForSegment
from .features import FeatureSequence
from .segmentation import segment_responses

LABEL_CODE = {"control": 0, "depressed": 1}


@dataclass
class SpeakerRecord:
    speaker_id: str
    label: int
    read: List[FeatureSequence] = field(default_factory=list)
    responses: Dict[str, List[FeatureSequence]] = field(default_factory=dict)


def group_speakers(seqs: Sequence[FeatureSequence]) -> Dict[str, SpeakerRecord]:
    out: Dict[str, SpeakerRecord] = {}
    for s in seqs:
        rec = out.get(s.speaker_id)
        if rec is None:
            rec = out[s.speaker_id] = SpeakerRecord(s.speaker_id, LABEL_CODE[s.label])
        elif rec.label != LABEL_CODE[s.label]:
            raise DataError(f"speaker {s.speaker_id}: inconsistent labels across recordings")
        if s.condition == "read":
            rec.read.append(s)
        else:
            rec.responses.setdefault(s.condition, []).append(s)
    return dict(sorted(out.items()))


def check_speaker(rec: SpeakerRecord, conditions: Sequence[str]) -> None:
    if not rec.read:
        raise DataError(f"speaker {rec.speaker_id}: no read-speech recording")
    for c in conditions:
        if not rec.responses.get(c):
            raise DataError(f"speaker {rec.speaker_id}: no {c} responses")


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, records: Sequence[SpeakerRecord], condition: str) -> "Standardizer":
        frames = [s.frames for r in records for s in r.read + r.responses.get(condition, [])]
        X = np.concatenate(frames)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


def _segments(seqs, cfg: RunConfig, pad: bool, scaler) -> np.ndarray:
    if scaler is not None:
        seqs = [FeatureSequence(scaler(s.frames), s.speaker_id, s.recording_id, s.condition, s.label)
                for s in seqs]
    return segment_responses(seqs, cfg.segment_len, cfg.stride, pad=pad).array()


def speaker_input(rec: SpeakerRecord, condition: str, cfg: RunConfig,
                  scaler: Standardizer | None = None) -> model.SpeakerInput:
    check_speaker(rec, [condition])
    try:
        read = _segments(rec.read, cfg, cfg.pad_read, scaler)
        spont = _segments(rec.responses[condition], cfg, cfg.pad_spontaneous, scaler)
    except (EmptySegmentSet, TooShortForSegment) as exc:
        raise DataError(f"speaker {rec.speaker_id}: {exc}") from None
    return model.SpeakerInput(rec.speaker_id, read, spont, rec.label)


def train_model(inputs: Sequence[model.SpeakerInput], cfg: RunConfig, rng: np.random.Generator,
                input_dim: int | None = None):
    """Fit one model; returns ``(params, per-epoch mean loss)``."""
    if not inputs:
        raise DataError("no training speakers")
    D = input_dim or inputs[0].read.shape[-1]
    params = model.init_params(rng, D, cfg.hidden)
    state = nn.OptimizerState(learning_rate=cfg.learning_rate)
    bs = min(cfg.batch_size, len(inputs))
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(inputs))
        losses = []
        for start in range(0, len(order), bs):
            batch = [inputs[i] for i in order[start:start + bs]]
            labels = [b.label for b in batch]
            res = model.forward(params, batch)
            losses.append(model.cdma_loss_batch(res.probs, labels))
            grads = model.backward(params, res, labels)
            nn.rmsprop_step(params, grads, state)
        history.append(float(np.mean(losses)))
    return params, history


def fit_condition(train: Sequence[SpeakerRecord], condition: str, cfg: RunConfig,
                  rng: np.random.Generator):
    """Standardize on the training speakers, build inputs and train; returns ``(params, scaler, history)``."""
    scaler = Standardizer.fit(train, condition) if cfg.standardize else None
    inputs = [speaker_input(r, condition, cfg, scaler) for r in train]
    params, history = train_model(inputs, cfg, rng)
    return params, scaler, history


def condition_seed(seed: int, fold: int, condition: str) -> np.random.Generator:
    idx = SPONTANEOUS.index(condition)
    return np.random.default_rng(np.random.SeedSequence([seed, fold, idx]))
