"""Deterministic synthetic corpora for exercising the pipelines end to end.

Speech: Gaussian frames whose mean moves by ``shift * multiplier[condition]``
for depressed speakers. EEG: pink noise plus a band-limited oscillation whose
amplitude steps at stimulus onset, with a larger alpha decrease for MDD.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np

from .features import FEATURE_DIM, FeatureSequence, export_feature_csv


@dataclass
class SpeechSynthSpec:
    n_per_class: int = 20
    read_frames: int = 256
    response_frames: int = 128
    responses_per_condition: int = 6
    shift: float | List[float] = 1.0
    noise_sd: float = 1.0
    speaker_sd: float = 0.0
    multipliers: Dict[str, float] = field(default_factory=lambda: {
        "read": 1.0, "positive": 1.5, "neutral": 1.0, "negative": 1.5})
    seed: int = 0

    def __post_init__(self):
        if self.noise_sd <= 0:
            raise ValueError("noise_sd must be positive")
        if min(self.read_frames, self.response_frames) < 1:
            raise ValueError("recordings need at least one frame")

    def shift_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.shift, dtype=float), (FEATURE_DIM,)).copy()

    @property
    def snr(self) -> float:
        """RMS class shift (neutral multiplier) over the frame noise SD."""
        return float(np.sqrt(np.mean(self.shift_vector() ** 2)) / self.noise_sd)


def gen_speech_corpus(spec: SpeechSynthSpec) -> List[FeatureSequence]:
    rng = np.random.default_rng(spec.seed)
    shift = spec.shift_vector()
    baseline = rng.normal(0.0, 1.0, FEATURE_DIM)
    out = []
    for n in range(2 * spec.n_per_class):
        label = "depressed" if n % 2 else "control"
        sid = f"spk{n:03d}"
        offset = rng.normal(0.0, spec.speaker_sd, FEATURE_DIM) if spec.speaker_sd > 0 else 0.0
        y = 1.0 if label == "depressed" else 0.0

        def draw(T, cond):
            mean = baseline + offset + y * spec.multipliers[cond] * shift
            return mean + rng.normal(0.0, spec.noise_sd, (T, FEATURE_DIM))

        out.append(FeatureSequence(draw(spec.read_frames, "read"), sid, f"{sid}_read",
                                   "read", label))
        for cond in ("positive", "neutral", "negative"):
            for j in range(spec.responses_per_condition):
                out.append(FeatureSequence(draw(spec.response_frames, cond), sid,
                                           f"{sid}_{cond}{j}", cond, label))
    return out


def write_speech_corpus(out_dir, seqs: List[FeatureSequence]) -> Path:
    """Feature CSVs plus ``manifest.json`` in the corpus-manifest format."""
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in seqs:
        rel = f"features/{s.recording_id}.csv"
        export_feature_csv(out_dir / rel, s)
        entries.append({"speaker_id": s.speaker_id, "recording_id": s.recording_id,
                        "condition": s.condition, "label": s.label, "sample_rate": 16000,
                        "path": rel})
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps({"recordings": entries}, indent=1))
    return manifest


# --------------------------------------------------------------------------- EEG

@dataclass
class Oscillation:
    center_hz: float
    pre_amp: float
    post_amp: float
    onset_ms: float = 0.0


def _default_channels() -> List[str]:
    from .config import FRONTAL, PARIETO_OCCIPITAL
    return list(FRONTAL) + list(PARIETO_OCCIPITAL)


@dataclass
class EegSynthSpec:
    """Alpha (8-12 Hz) oscillations have their post/pre amplitude ratio drawn per
    participant: ``20*log10(ratio) ~ N(20*log10(group_ratio), participant_sd_db)``."""

    n_mdd: int = 13
    n_hc: int = 20
    channels: List[str] = field(default_factory=_default_channels)
    epochs_per_participant: int = 20
    sample_rate: float = 250.0
    oscillations: List[Oscillation] = field(
        default_factory=lambda: [Oscillation(10.0, 5.0, 5.0), Oscillation(5.0, 2.0, 2.0)])
    noise_sd: float = 2.0
    hc_alpha_ratio: float = 1.0
    mdd_alpha_ratio: float = 1.0
    participant_sd_db: float = 0.0
    condition: str = "fear"
    seed: int = 0

    def __post_init__(self):
        for osc in self.oscillations:
            if not 1.0 <= osc.center_hz <= 30.0:
                raise ValueError(f"oscillation at {osc.center_hz} Hz outside 1-30 Hz")

    @property
    def effect_size(self) -> float:
        """Planted HC-minus-MDD difference in alpha dB over the participant SD."""
        diff = 20 * np.log10(self.hc_alpha_ratio) - 20 * np.log10(self.mdd_alpha_ratio)
        return float(diff / self.participant_sd_db) if self.participant_sd_db > 0 else float("inf")


@dataclass
class EegCorpus:
    sets: list
    alpha_db: Dict[str, float]          # planted per-participant post/pre alpha change
    groups: Dict[str, str]


def pink_noise(rng: np.random.Generator, shape, sd: float) -> np.ndarray:
    n = shape[-1]
    spec = rng.normal(size=shape[:-1] + (n // 2 + 1,)) + 1j * rng.normal(size=shape[:-1] + (n // 2 + 1,))
    f = np.arange(n // 2 + 1)
    f[0] = 1
    x = np.fft.irfft(spec / np.sqrt(f), n=n, axis=-1)
    x -= x.mean(axis=-1, keepdims=True)
    return x * (sd / x.std(axis=-1, keepdims=True))


def gen_eeg_epochs(spec: EegSynthSpec) -> EegCorpus:
    from .eeg import EpochSet

    rng = np.random.default_rng(spec.seed)
    sr = spec.sample_rate
    n_t = int(round(3.0 * sr))
    t0 = int(round(1.0 * sr))
    t = (np.arange(n_t) - t0) / sr
    n_ch = len(spec.channels)
    shape = (spec.epochs_per_participant, n_ch, n_t)
    sets, latent, groups = [], {}, {}
    plan = [("MDD", i) for i in range(spec.n_mdd)] + [("HC", i) for i in range(spec.n_hc)]
    for group, i in plan:
        pid = f"{group.lower()}{i:02d}"
        ratio = spec.mdd_alpha_ratio if group == "MDD" else spec.hc_alpha_ratio
        db = 20 * np.log10(ratio) + (rng.normal(0.0, spec.participant_sd_db)
                                     if spec.participant_sd_db > 0 else 0.0)
        x = pink_noise(rng, shape, spec.noise_sd)
        for osc in spec.oscillations:
            post = osc.post_amp
            if 8.0 <= osc.center_hz <= 12.0:
                post = osc.post_amp * 10 ** (db / 20.0)
            amp = np.where(t * 1000.0 >= osc.onset_ms, post, osc.pre_amp)
            phase = rng.uniform(0, 2 * np.pi, size=shape[:2] + (1,))
            x += amp * np.sin(2 * np.pi * osc.center_hz * t + phase)
        sets.append(EpochSet(pid, group, spec.condition, x, list(spec.channels), sr, t0))
        latent[pid] = float(db)
        groups[pid] = group
    return EegCorpus(sets, latent, groups)


def logits_from_latent(alpha_db: Dict[str, float], rng: np.random.Generator,
                       scale: float = 3.0, noise_sd: float = 0.05) -> Dict[str, float]:
    """Depression-like scores that fall monotonically as planted alpha power rises."""
    ids = sorted(alpha_db)
    v = np.array([alpha_db[p] for p in ids])
    p = 1.0 / (1.0 + np.exp((v - v.mean()) / scale)) + rng.normal(0.0, noise_sd, len(v))
    return dict(zip(ids, np.clip(p, 0.0, 1.0).tolist()))


def write_eeg_corpus(out_dir, corpus: EegCorpus) -> List[Path]:
    from .eeg import write_epoch_dir

    out_dir = Path(out_dir)
    return [write_epoch_dir(out_dir / f"{es.participant_id}_{es.condition}", es)
            for es in corpus.sets]
