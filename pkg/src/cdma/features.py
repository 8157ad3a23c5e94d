"""Frame-level acoustic descriptors.

Each 25 ms frame (10 ms hop) yields 16 descriptors

    [log-energy, MFCC 1..12, F0, zero-crossing rate, voicing probability]

and the sequence is extended with first-order deltas to 32 columns.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence

import numpy as np
from scipy.fft import dct, rfft
from scipy.io import wavfile

from .errors import DataError, EmptySignal, FormatError, TooShort

N_DESCRIPTORS = 16
FEATURE_DIM = 32
N_MFCC = 12
N_MEL = 26
ENERGY_FLOOR = 1e-10
F0_MIN, F0_MAX = 60.0, 400.0
VOICING_THRESHOLD = 0.45

CONDITIONS = ("read", "positive", "neutral", "negative")
LABELS = ("control", "depressed")

DESCRIPTOR_NAMES = (
    ["log_energy"] + [f"mfcc{i}" for i in range(1, N_MFCC + 1)] + ["f0", "zcr", "voicing"]
)
FEATURE_NAMES = DESCRIPTOR_NAMES + [f"d_{n}" for n in DESCRIPTOR_NAMES]


@dataclass(frozen=True)
class SampleBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate < 8000:
            raise DataError(f"sample rate {self.sample_rate} Hz is below 8000 Hz")
        if len(self.samples) == 0:
            raise EmptySignal("empty sample buffer")


@dataclass
class FeatureSequence:
    frames: np.ndarray          # (T, 32)
    speaker_id: str = ""
    recording_id: str = ""
    condition: str = "read"
    label: str = "control"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 2 or self.frames.shape[1] != FEATURE_DIM:
            raise FormatError(f"{self.recording_id}: frames must be (T, {FEATURE_DIM}), "
                              f"got {self.frames.shape}")
        if len(self.frames) < 1:
            raise DataError(f"{self.recording_id}: empty feature sequence")
        if not np.all(np.isfinite(self.frames)):
            raise DataError(f"{self.recording_id}: non-finite feature value")
        if self.condition not in CONDITIONS:
            raise DataError(f"{self.recording_id}: unknown condition {self.condition!r}")
        if self.label not in LABELS:
            raise DataError(f"{self.recording_id}: unknown label {self.label!r}")

    def __len__(self) -> int:
        return len(self.frames)


# --------------------------------------------------------------------------- framing

def frame_params(sr: int, window_ms: float = 25.0, shift_ms: float = 10.0):
    return int(round(sr * window_ms / 1000.0)), int(round(sr * shift_ms / 1000.0))


def frame_count(n: int, window: int, shift: int) -> int:
    return (n - window) // shift + 1 if n >= window else 0


def frame_signal(buf: SampleBuffer, window_ms: float = 25.0, shift_ms: float = 10.0) -> np.ndarray:
    """Raw ``(n_frames, window)`` blocks; tapering is left to the descriptors."""
    window, shift = frame_params(buf.sample_rate, window_ms, shift_ms)
    x = np.asarray(buf.samples, dtype=float)
    n = frame_count(len(x), window, shift)
    if n == 0:
        raise EmptySignal(f"{len(x)} samples is shorter than one {window}-sample window")
    idx = np.arange(window)[None, :] + shift * np.arange(n)[:, None]
    return x[idx]


# --------------------------------------------------------------------------- descriptors

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(sr: int, nfft: int, n_filters: int = N_MEL) -> np.ndarray:
    """Triangular filters, equally spaced on the mel scale over 0..sr/2; shape (n_filters, nfft//2+1)."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sr / 2.0), n_filters + 2))
    freqs = np.arange(nfft // 2 + 1) * sr / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def _nfft(n: int) -> int:
    return 1 << (n - 1).bit_length()


def power_spectrum(block: np.ndarray) -> np.ndarray:
    w = np.hamming(len(block))
    return np.abs(rfft(block * w, n=_nfft(len(block)))) ** 2


def mel_energies(block: np.ndarray, sr: int) -> np.ndarray:
    spec = power_spectrum(block)
    fb = mel_filterbank(sr, _nfft(len(block)))
    return fb @ spec


def mfcc(block: np.ndarray, sr: int, n_coeffs: int = N_MFCC) -> np.ndarray:
    logmel = np.log(np.maximum(mel_energies(block, sr), ENERGY_FLOOR))
    return dct(logmel, type=2, norm="ortho")[1:n_coeffs + 1]


def zero_crossing_rate(block: np.ndarray) -> float:
    s = np.signbit(block)
    return float(np.count_nonzero(s[1:] != s[:-1]) / (len(block) - 1))


def normalized_autocorr(block: np.ndarray, lags: np.ndarray) -> np.ndarray:
    x = block - block.mean()
    out = np.zeros(len(lags))
    for j, lag in enumerate(lags):
        a, b = x[:-lag], x[lag:]
        denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
        if denom > 0:
            out[j] = np.dot(a, b) / denom
    return out


def pitch(block: np.ndarray, sr: int):
    """Autocorrelation pitch over 60-400 Hz; returns ``(f0, voicing)``, f0 = 0 if unvoiced."""
    lo = max(1, int(np.floor(sr / F0_MAX)))
    hi = min(len(block) - 2, int(np.ceil(sr / F0_MIN)))
    if hi <= lo:
        return 0.0, 0.0
    lags = np.arange(lo, hi + 1)
    r = normalized_autocorr(block, lags)
    k = int(np.argmax(r))
    voicing = float(np.clip(r[k], 0.0, 1.0))
    if voicing < VOICING_THRESHOLD:
        return 0.0, voicing
    lag = float(lags[k])
    if 0 < k < len(r) - 1:
        denom = r[k - 1] - 2 * r[k] + r[k + 1]
        if denom < 0:
            lag += 0.5 * (r[k - 1] - r[k + 1]) / denom
    return sr / lag, voicing


def compute_descriptors(block: np.ndarray, sr: int) -> np.ndarray:
    block = np.asarray(block, dtype=float)
    energy = np.log(max(float(np.dot(block, block)), ENERGY_FLOOR))
    f0, voicing = pitch(block, sr)
    out = np.empty(N_DESCRIPTORS)
    out[0] = energy
    out[1:1 + N_MFCC] = mfcc(block, sr)
    out[13] = f0
    out[14] = zero_crossing_rate(block)
    out[15] = voicing
    return out


def append_deltas(desc: np.ndarray) -> np.ndarray:
    """Concatenate central differences ``(d[t+1] - d[t-1]) / 2`` with replicated edges."""
    desc = np.asarray(desc, dtype=float)
    if len(desc) < 2:
        raise TooShort(f"need at least 2 frames for deltas, got {len(desc)}")
    padded = np.concatenate([desc[:1], desc, desc[-1:]])
    delta = (padded[2:] - padded[:-2]) / 2.0
    return np.hstack([desc, delta])


def extract_features(buf: SampleBuffer, **meta) -> FeatureSequence:
    blocks = frame_signal(buf)
    desc = np.stack([compute_descriptors(b, buf.sample_rate) for b in blocks])
    return FeatureSequence(append_deltas(desc), **meta)


# --------------------------------------------------------------------------- I/O

def read_wav(path) -> SampleBuffer:
    sr, data = wavfile.read(path)
    data = np.asarray(data)
    if data.dtype == np.int16:
        x = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(float) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(float) - 128.0) / 128.0
    else:
        x = data.astype(float)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return SampleBuffer(x, int(sr))


def write_wav(path, buf: SampleBuffer) -> None:
    pcm = np.clip(np.round(np.asarray(buf.samples) * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, buf.sample_rate, pcm)


MANIFEST_KEYS = ("speaker_id", "recording_id", "condition", "label")


def check_manifest(entry: dict) -> dict:
    missing = [k for k in MANIFEST_KEYS if k not in entry]
    if missing:
        raise FormatError(f"manifest entry missing {missing}: {entry}")
    return entry


def import_feature_csv(path, manifest: dict) -> FeatureSequence:
    """Load a 32-column feature CSV (optional ``f00..f31`` header) and attach metadata."""
    check_manifest(manifest)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows and rows[0] and rows[0][0].strip().lower().startswith("f"):
        header = [c.strip() for c in rows[0]]
        if header != [f"f{i:02d}" for i in range(FEATURE_DIM)]:
            raise FormatError(f"{path}: unexpected header {header[:3]}...")
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no feature rows")
    for n, r in enumerate(rows):
        if len(r) != FEATURE_DIM:
            raise FormatError(f"{path}: row {n} has {len(r)} columns, expected {FEATURE_DIM}")
    try:
        frames = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(frames)):
        raise DataError(f"{path}: non-finite value")
    return FeatureSequence(
        frames,
        speaker_id=str(manifest["speaker_id"]),
        recording_id=str(manifest["recording_id"]),
        condition=manifest["condition"],
        label=manifest["label"],
        meta={k: v for k, v in manifest.items() if k not in MANIFEST_KEYS},
    )


def export_feature_csv(path, seq: FeatureSequence, header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"f{i:02d}" for i in range(FEATURE_DIM)])
        for row in seq.frames:
            w.writerow([repr(float(v)) for v in row])


def load_corpus_manifest(path) -> List[dict]:
    """Corpus manifest: ``{"recordings": [{..., "path": "rel/file.csv|wav"}]}``."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    entries = doc["recordings"] if isinstance(doc, dict) else doc
    return [check_manifest(e) for e in entries]


def load_corpus(path) -> List[FeatureSequence]:
    """Load every recording listed in a corpus manifest (CSV or WAV entries)."""
    path = Path(path)
    out = []
    for e in load_corpus_manifest(path):
        f = path.parent / e["path"]
        if not f.exists():
            raise DataError(f"recording file not found: {f}")
        if f.suffix.lower() == ".wav":
            meta = {k: e[k] for k in MANIFEST_KEYS}
            out.append(extract_features(read_wav(f), **meta))
        else:
            out.append(import_feature_csv(f, e))
    return out
