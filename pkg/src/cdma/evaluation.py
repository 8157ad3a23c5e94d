"""Person-independent k-fold cross-validation and the repetition harness."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Sequence

import numpy as np

from . import model, stats
from .config import RunConfig
from .errors import ConfigError, LeakageError, ShapeError
from .training import SpeakerRecord, check_speaker, condition_seed, fit_condition, speaker_input

STREAM_COMBINED = "combination"


@dataclass
class FoldAssignment:
    folds: Dict[str, int]
    k: int
    seed: int

    def members(self, fold: int) -> List[str]:
        return [s for s, f in self.folds.items() if f == fold]

    def sizes(self) -> List[int]:
        return [len(self.members(f)) for f in range(self.k)]


def make_folds(labels: Mapping[str, int], k: int = 5, seed: int = 0) -> FoldAssignment:
    """Stratified assignment: shuffle each class, then deal speakers round-robin.

    Dealing the concatenated class lists in one pass keeps the overall fold
    sizes within one of each other and spreads each class evenly.
    """
    if len(labels) < k:
        raise ConfigError(f"{len(labels)} speakers cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    ordered = []
    for cls in sorted(set(labels.values())):
        members = sorted(s for s, y in labels.items() if y == cls)
        ordered.extend(members[i] for i in rng.permutation(len(members)))
    return FoldAssignment({s: i % k for i, s in enumerate(ordered)}, k, seed)


def split_fold(assignment: FoldAssignment, fold: int):
    test = assignment.members(fold)
    train = [s for s, f in assignment.folds.items() if f != fold]
    return train, test


def check_no_leakage(train: Sequence[str], test: Sequence[str]) -> None:
    shared = set(train) & set(test)
    if shared:
        raise LeakageError(f"speakers in both train and test: {sorted(shared)}")


# --------------------------------------------------------------------------- metrics

@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_confusion(cls, tp: int, fp: int, tn: int, fn: int) -> "MetricsReport":
        n = tp + fp + tn + fn
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        return cls(100.0 * (tp + tn) / n, 100.0 * prec, 100.0 * rec, 100.0 * f1, tp, fp, tn, fn)

    def confusion(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def compute_metrics(preds: Sequence[int], labels: Sequence[int]) -> MetricsReport:
    """Depressed (1) is the positive class."""
    p = np.asarray(preds, dtype=int)
    y = np.asarray(labels, dtype=int)
    if p.shape != y.shape:
        raise ShapeError(f"{len(p)} predictions vs {len(y)} labels")
    if len(p) == 0:
        raise ShapeError("no predictions")
    tp = int(np.sum((p == 1) & (y == 1)))
    fp = int(np.sum((p == 1) & (y == 0)))
    tn = int(np.sum((p == 0) & (y == 0)))
    fn = int(np.sum((p == 0) & (y == 1)))
    return MetricsReport.from_confusion(tp, fp, tn, fn)


# --------------------------------------------------------------------------- cross-validation

@dataclass
class CvResult:
    seed: int
    streams: Dict[str, List[dict]] = field(default_factory=dict)

    def metrics(self, stream: str) -> MetricsReport:
        rows = self.streams[stream]
        return compute_metrics([r["pred"] for r in rows], [r["true"] for r in rows])


def run_cv(cfg: RunConfig, records: Mapping[str, SpeakerRecord], seed: int,
           fold_seed: int | None = None) -> CvResult:
    """Predict every speaker once, with models trained on the other folds.

    Emits one stream per configured condition plus the majority-vote
    combination when all three conditions are present.
    """
    for rec in records.values():
        check_speaker(rec, cfg.conditions)
    labels = {s: r.label for s, r in records.items()}
    assignment = make_folds(labels, cfg.folds, seed if fold_seed is None else fold_seed)
    result = CvResult(seed=seed, streams={c: [] for c in cfg.conditions})
    for fold in range(cfg.folds):
        train_ids, test_ids = split_fold(assignment, fold)
        check_no_leakage(train_ids, test_ids)
        train = [records[s] for s in train_ids]
        for cond in cfg.conditions:
            params, scaler, _ = fit_condition(train, cond, cfg, condition_seed(seed, fold, cond))
            inputs = [speaker_input(records[s], cond, cfg, scaler) for s in test_ids]
            for row in model.predict(params, inputs):
                row.update(condition=cond, fold=fold, true=labels[row["speaker_id"]],
                           pred=row["label"])
                result.streams[cond].append(row)
    for cond in cfg.conditions:
        result.streams[cond].sort(key=lambda r: r["speaker_id"])
        ids = [r["speaker_id"] for r in result.streams[cond]]
        if len(ids) != len(set(ids)) or set(ids) != set(records):
            raise LeakageError(f"{cond}: speakers not predicted exactly once")
    if len(cfg.conditions) == 3:
        combined = []
        by_cond = [result.streams[c] for c in cfg.conditions]
        for rows in zip(*by_cond):
            votes = [r["pred"] for r in rows]
            combined.append({"speaker_id": rows[0]["speaker_id"], "true": rows[0]["true"],
                             "votes": votes, "pred": model.majority_vote(votes),
                             "fold": rows[0]["fold"]})
        result.streams[STREAM_COMBINED] = combined
    return result


def _one_iteration(args):
    cfg, records, i = args
    seed = cfg.seed + i
    return run_cv(cfg, records, seed, fold_seed=None if cfg.reshuffle_folds else cfg.seed)


@dataclass
class RepetitionSummary:
    config_hash: str
    runs: List[CvResult]

    def streams(self) -> List[str]:
        return list(self.runs[0].streams)

    def f1_vector(self, stream: str) -> np.ndarray:
        return np.array([r.metrics(stream).f1 for r in self.runs])

    def summary(self, stream: str) -> dict:
        reps = [r.metrics(stream) for r in self.runs]
        out = {}
        for key in ("accuracy", "precision", "recall", "f1"):
            vals = [getattr(m, key) for m in reps]
            if len(vals) >= 2:
                mean, sd = stats.mean_std(vals)
            else:
                mean, sd = float(vals[0]), 0.0
            out[key] = {"mean": mean, "std": sd}
        return out

    def results_doc(self, stream: str) -> dict:
        iterations = []
        for r in self.runs:
            m = r.metrics(stream)
            iterations.append({"seed": r.seed, "acc": m.accuracy, "prec": m.precision,
                               "rec": m.recall, "f1": m.f1, "confusion": m.confusion()})
        return {"config_hash": self.config_hash, "condition": stream,
                "iterations": iterations, "summary": self.summary(stream)}

    def write(self, out_dir) -> List[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for stream in self.streams():
            p = out_dir / f"results_{stream}.json"
            p.write_text(json.dumps(self.results_doc(stream), indent=2, sort_keys=True))
            written.append(p)
            c = out_dir / f"f1_{stream}.csv"
            with open(c, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["iteration", "seed", "f1"])
                for i, (r, f1) in enumerate(zip(self.runs, self.f1_vector(stream))):
                    w.writerow([i, r.seed, repr(float(f1))])
            written.append(c)
        preds = {str(r.seed): r.streams for r in self.runs}
        p = out_dir / "predictions.json"
        p.write_text(json.dumps(preds, indent=1, sort_keys=True))
        written.append(p)
        return written


def run_repetitions(cfg: RunConfig, records: Mapping[str, SpeakerRecord],
                    n: int | None = None) -> RepetitionSummary:
    """Repeat cross-validation with seeds ``cfg.seed + i``."""
    n = cfg.iterations if n is None else n
    if n < 1:
        raise ConfigError("need at least one iteration")
    jobs = [(cfg, records, i) for i in range(n)]
    if cfg.jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            runs = list(ex.map(_one_iteration, jobs))
    else:
        runs = [_one_iteration(j) for j in jobs]
    return RepetitionSummary(cfg.config_hash(), runs)


def compare_f1(f1_a, f1_b, welch: bool = False) -> dict:
    """Two-tailed t-test on per-iteration F1 vectors, with significance flags."""
    res = stats.t_independent_pooled(f1_a, f1_b, welch=welch)
    return {"t": res.statistic, "df": res.df, "p": res.p_two_tailed, "flag": res.flag,
            "sig_05": res.p_two_tailed < 0.05, "sig_001": res.p_two_tailed < 0.001}
