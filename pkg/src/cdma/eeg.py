"""EEG epoch conditioning, STFT-based ERSP, ROI band power and group statistics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Mapping, Sequence

import numpy as np
from scipy import signal

from . import stats
from .config import BANDS, WINDOWS
from .errors import DataError, FormatError, InsufficientData, MontageError, NoData

GROUPS = ("MDD", "HC")
FACE_CONDITIONS = ("fear", "sad", "happy")
MONTAGE = frozenset([f"E{i}" for i in range(1, 129)] + ["Cz"])

TARGET_SR = 250
EPOCH_SPAN = (-1.0, 2.0)
REJECT_SPAN = (-0.5, 1.5)
BASELINE_MS = (-300.0, -100.0)
FREQS = np.arange(1.0, 30.0 + 1e-9, 1.25)


@dataclass
class EpochSet:
    participant_id: str
    group: str
    condition: str
    epochs: np.ndarray              # (n_epochs, n_channels, n_times), microvolts
    channels: List[str]
    sample_rate: float
    t0_index: int
    valid: bool = True
    n_raw: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.epochs = np.asarray(self.epochs, dtype=float)
        if self.epochs.ndim == 2:
            self.epochs = self.epochs[None]
        if self.epochs.ndim != 3:
            raise FormatError(f"{self.participant_id}: epochs must be (n, channels, times)")
        if self.epochs.shape[1] != len(self.channels):
            raise FormatError(f"{self.participant_id}: {self.epochs.shape[1]} channels in data, "
                              f"{len(self.channels)} names")
        if self.group not in GROUPS:
            raise DataError(f"{self.participant_id}: unknown group {self.group!r}")
        if self.n_raw is None:
            self.n_raw = len(self.epochs)

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.epochs.shape[-1]) - self.t0_index) / self.sample_rate

    def channel_index(self, names: Sequence[str]) -> List[int]:
        missing = [c for c in names if c not in self.channels]
        if missing:
            raise MontageError(f"{self.participant_id}: channels not present: {missing}")
        return [self.channels.index(c) for c in names]


# --------------------------------------------------------------------------- conditioning

def check_montage(channels: Sequence[str]) -> None:
    unknown = [c for c in channels if c not in MONTAGE]
    if unknown:
        raise MontageError(f"unknown channels: {unknown}")


def reject_mask(epochs: np.ndarray, times: np.ndarray, threshold_uv: float = 100.0,
                span=REJECT_SPAN) -> np.ndarray:
    """True for epochs that stay within +/-threshold over the detection span."""
    sel = (times >= span[0]) & (times <= span[1])
    return np.abs(epochs[..., sel]).max(axis=(-2, -1)) <= threshold_uv


def zero_phase(sos: np.ndarray, x: np.ndarray, sr: float, settle_s: float = 10.0) -> np.ndarray:
    """Forward-backward filtering of short epochs along the last axis.

    A 0.1 Hz high-pass rings for seconds, far longer than an epoch, so the
    default odd-extension padding leaks edge transients into the data. Each
    epoch is instead mirrored at both ends, the mirror images tapered to zero
    with a Hann ramp, and the result surrounded by ``settle_s`` seconds of
    zeros. Residual edge error stays within the first and last ~0.3 s.
    """
    n = x.shape[-1]
    k = n - 1
    ramp = np.hanning(2 * k)[:k]
    left = x[..., k:0:-1] * ramp
    right = x[..., -2:-k - 2:-1] * ramp[::-1]
    zeros = np.zeros(x.shape[:-1] + (int(settle_s * sr),))
    y = np.concatenate([zeros, left, x, right, zeros], axis=-1)
    y = signal.sosfiltfilt(sos, y, axis=-1, padtype=None)
    start = zeros.shape[-1] + k
    return y[..., start:start + n]


def condition_epochs(raw: EpochSet, threshold_uv: float = 100.0,
                     target_sr: int = TARGET_SR, min_keep: float = 0.5) -> EpochSet:
    """Average reference, 0.1-30 Hz band-pass, 48-52 Hz band-stop, resample, reject.

    Both filters are 4th-order Butterworth run forward and backward (zero phase).
    """
    check_montage(raw.channels)
    sr = float(raw.sample_rate)
    if sr < target_sr:
        raise DataError(f"{raw.participant_id}: sample rate {sr} below {target_sr} Hz")
    x = raw.epochs - raw.epochs.mean(axis=1, keepdims=True)
    x = x - x.mean(axis=-1, keepdims=True)
    sos = signal.butter(4, [0.1, 30.0], btype="bandpass", fs=sr, output="sos")
    x = zero_phase(sos, x, sr)
    if sr / 2.0 > 52.0:
        sos = signal.butter(4, [48.0, 52.0], btype="bandstop", fs=sr, output="sos")
        x = zero_phase(sos, x, sr)
    t0 = raw.t0_index
    if sr != target_sr:
        ratio = Fraction(target_sr) / Fraction(sr).limit_denominator(10000)
        x = signal.resample_poly(x, ratio.numerator, ratio.denominator, axis=-1, padtype="line")
        t0 = int(round(raw.t0_index * target_sr / sr))
    times = (np.arange(x.shape[-1]) - t0) / target_sr
    keep = reject_mask(x, times, threshold_uv)
    valid = bool(keep.sum() >= min_keep * len(keep))
    return replace(raw, epochs=x[keep], sample_rate=float(target_sr), t0_index=t0,
                   valid=valid, n_raw=len(keep))


# --------------------------------------------------------------------------- ERSP

@dataclass
class ErspMatrix:
    power: np.ndarray     # (n_freqs, n_times) dB relative to baseline
    freqs: np.ndarray
    times: np.ndarray     # ms
    channel: str

    def select(self, band, window) -> np.ndarray:
        fsel = (self.freqs >= band[0]) & (self.freqs <= band[1])
        tsel = (self.times >= window[0]) & (self.times <= window[1])
        if not fsel.any() or not tsel.any():
            raise NoData(f"{self.channel}: empty band/window selection {band} {window}")
        return self.power[np.ix_(fsel, tsel)]


def stft_power(x: np.ndarray, sr: float, t0_index: int, window: int = 64,
               overlap: float = 0.9, freqs: np.ndarray = FREQS):
    """Hann-windowed power at ``freqs`` for windows that fit entirely in the epoch.

    The DFT is evaluated directly at the requested frequencies, which is the
    same as zero-padding each window until those frequencies fall on bins.
    Returns ``(power (..., n_freqs, n_windows), centre times in ms)``.
    """
    n = x.shape[-1]
    if n < window:
        raise NoData(f"epoch of {n} samples shorter than the {window}-sample window")
    hop = max(1, int(round(window * (1.0 - overlap))))
    starts = np.arange(0, n - window + 1, hop)
    idx = starts[:, None] + np.arange(window)[None, :]
    frames = x[..., idx] * np.hanning(window)            # (..., n_windows, window)
    k = np.arange(window)
    basis = np.exp(-2j * np.pi * np.outer(k, freqs) / sr)  # (window, n_freqs)
    spec = frames @ basis                                  # (..., n_windows, n_freqs)
    power = np.swapaxes(np.abs(spec) ** 2, -1, -2)
    centres = (starts + (window - 1) / 2.0 - t0_index) / sr * 1000.0
    return power, centres


def ersp_db(power: np.ndarray, times_ms: np.ndarray, baseline=BASELINE_MS) -> np.ndarray:
    sel = (times_ms >= baseline[0]) & (times_ms <= baseline[1])
    if not sel.any():
        raise NoData(f"no window centres inside baseline {baseline} ms")
    base = power[..., sel].mean(axis=-1, keepdims=True)
    return 10.0 * np.log10(power / base)


def baseline_level(m: ErspMatrix, baseline=BASELINE_MS) -> np.ndarray:
    """Per-frequency mean baseline power in dB relative to itself; 0 up to roundoff."""
    sel = (m.times >= baseline[0]) & (m.times <= baseline[1])
    return 10.0 * np.log10(np.mean(10.0 ** (m.power[:, sel] / 10.0), axis=1))


def compute_ersp_all(epochs: EpochSet, channels: Sequence[str] | None = None,
                     window: int = 64) -> Dict[str, ErspMatrix]:
    """ERSP for several channels at once (epoch-averaged power, dB baseline)."""
    if len(epochs.epochs) == 0:
        raise NoData(f"{epochs.participant_id}: no surviving epochs")
    channels = list(epochs.channels if channels is None else channels)
    idx = epochs.channel_index(channels)
    power, times = stft_power(epochs.epochs[:, idx], epochs.sample_rate, epochs.t0_index, window)
    db = ersp_db(power.mean(axis=0), times)
    return {c: ErspMatrix(db[j], FREQS.copy(), times, c) for j, c in enumerate(channels)}


def compute_ersp(epochs: EpochSet, channel: str, window: int = 64) -> ErspMatrix:
    return compute_ersp_all(epochs, [channel], window)[channel]


# --------------------------------------------------------------------------- ROI statistics

def band_power(ersps: Mapping[str, ErspMatrix], roi: Sequence[str], band="alpha",
               window="early") -> float:
    """Mean dB over ROI channels x band frequencies x window times."""
    band = BANDS[band] if isinstance(band, str) else band
    window = WINDOWS[window] if isinstance(window, str) else window
    missing = [c for c in roi if c not in ersps]
    if missing:
        raise MontageError(f"ERSP missing for ROI channels {missing}")
    vals = np.concatenate([ersps[c].select(band, window).ravel() for c in roi])
    ref = vals[0]
    return float(ref + np.mean(vals - ref))  # exact for constant input


def time_course(ersps: Mapping[str, ErspMatrix], roi: Sequence[str], band="alpha") -> np.ndarray:
    band = BANDS[band] if isinstance(band, str) else band
    return np.mean([ersps[c].power[(ersps[c].freqs >= band[0]) & (ersps[c].freqs <= band[1])]
                    .mean(axis=0) for c in roi], axis=0)


def group_compare(mdd: Sequence[float], hc: Sequence[float]) -> stats.TestResult:
    """Pooled-variance t-test; positive t means HC power above MDD."""
    return stats.t_independent_pooled(hc, mdd)


def pointwise_group_test(mdd_traces: np.ndarray, hc_traces: np.ndarray):
    """Uncorrected per-timepoint t-tests over ``(participants, times)`` traces."""
    mdd_traces = np.asarray(mdd_traces)
    hc_traces = np.asarray(hc_traces)
    res = [group_compare(mdd_traces[:, j], hc_traces[:, j]) for j in range(mdd_traces.shape[1])]
    return np.array([r.statistic for r in res]), np.array([r.p for r in res])


def exclude_outliers(values: Mapping[str, float], groups: Mapping[str, str], k: float = 3.0):
    """Drop participants more than ``k`` SD from their group mean."""
    keep = {}
    for g in set(groups.values()):
        ids = [p for p in values if groups[p] == g]
        v = np.array([values[p] for p in ids])
        if len(v) < 3:
            keep.update({p: values[p] for p in ids})
            continue
        m, sd = v.mean(), v.std(ddof=1)
        keep.update({p: values[p] for p in ids if sd == 0 or abs(values[p] - m) <= k * sd})
    return keep


def delta_logits(logits: Mapping[str, Sequence[float]]):
    """``(positive - neutral, negative - neutral)``, elementwise."""
    missing = [c for c in ("positive", "neutral", "negative") if c not in logits]
    if missing:
        raise DataError(f"logits missing for conditions {missing}")
    neu = np.asarray(logits["neutral"], dtype=float)
    return (np.asarray(logits["positive"], dtype=float) - neu,
            np.asarray(logits["negative"], dtype=float) - neu)


def correlate_power_logits(powers, logits, groups=None, scope: str = "all") -> stats.SpearmanResult:
    """Spearman rho between ERSP power and logits, optionally within one group."""
    powers = np.asarray(powers, dtype=float)
    logits = np.asarray(logits, dtype=float)
    if scope != "all":
        if groups is None:
            raise DataError("group labels required for a per-group correlation")
        sel = np.asarray(groups) == scope
        powers, logits = powers[sel], logits[sel]
    if len(powers) < 5:
        raise InsufficientData(f"{len(powers)} participants in scope {scope!r}; need >= 5")
    return stats.spearman(powers, logits)


# --------------------------------------------------------------------------- I/O

def load_epoch_dir(path) -> EpochSet:
    """Participant directory: ``manifest.json`` plus one CSV (time x channel) per epoch."""
    path = Path(path)
    mf = path / "manifest.json"
    if not mf.exists():
        raise DataError(f"epoch manifest not found: {mf}")
    try:
        m = json.loads(mf.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mf}: {exc}") from None
    for key in ("participant_id", "group", "condition", "sample_rate", "channels",
                "t0_index", "epoch_files"):
        if key not in m:
            raise FormatError(f"{mf}: missing {key!r}")
    epochs = []
    for name in m["epoch_files"]:
        f = path / name
        if not f.exists():
            raise DataError(f"epoch file not found: {f}")
        with open(f, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows and rows[0] and not _is_number(rows[0][0]):
            if rows[0] != list(m["channels"]):
                raise FormatError(f"{f}: header does not match manifest channels")
            rows = rows[1:]
        arr = np.array([[float(v) for v in r] for r in rows if r])
        if arr.ndim != 2 or arr.shape[1] != len(m["channels"]):
            raise FormatError(f"{f}: expected {len(m['channels'])} columns")
        if not np.all(np.isfinite(arr)):
            raise DataError(f"{f}: non-finite sample")
        epochs.append(arr.T)
    if len({e.shape for e in epochs}) > 1:
        raise FormatError(f"{path}: epochs differ in shape")
    return EpochSet(str(m["participant_id"]), m["group"], m["condition"],
                    np.stack(epochs) if epochs else np.zeros((0, len(m["channels"]), 0)),
                    list(m["channels"]), float(m["sample_rate"]), int(m["t0_index"]))


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_epoch_dir(path, es: EpochSet) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    files = []
    for i, ep in enumerate(es.epochs):
        name = f"epoch{i:03d}.csv"
        with open(path / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(es.channels)
            for row in ep.T:
                w.writerow([f"{v:.6g}" for v in row])
        files.append(name)
    manifest = {"participant_id": es.participant_id, "group": es.group,
                "condition": es.condition, "sample_rate": es.sample_rate,
                "channels": es.channels, "t0_index": es.t0_index, "epoch_files": files}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return path


def write_ersp_csv(path, ersp: ErspMatrix) -> None:
    """Rows are frequencies, columns are window-centre times (ms)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz"] + [f"{t:.1f}" for t in ersp.times])
        for f, row in zip(ersp.freqs, ersp.power):
            w.writerow([f"{f:.2f}"] + [repr(float(v)) for v in row])


def read_ersp_csv(path, channel: str = "") -> ErspMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    times = np.array([float(t) for t in rows[0][1:]])
    freqs = np.array([float(r[0]) for r in rows[1:]])
    power = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return ErspMatrix(power, freqs, times, channel)
