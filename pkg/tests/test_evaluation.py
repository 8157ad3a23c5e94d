import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cdma import evaluation as ev
from cdma import synth, training
from cdma.config import RunConfig
from cdma.errors import ConfigError, DataError, LeakageError, ShapeError


@pytest.fixture(scope="module")
def tiny_records():
    spec = synth.SpeechSynthSpec(n_per_class=5, read_frames=128, response_frames=128,
                                 responses_per_condition=1, shift=2.0, seed=4)
    return training.group_speakers(synth.gen_speech_corpus(spec))


TINY = dict(epochs=2, hidden=4, iterations=2)


# folds ---------------------------------------------------------------------------------

def test_fold_sizes_52():
    labels = {f"s{i}": int(i < 23) for i in range(52)}
    fa = ev.make_folds(labels, 5, seed=0)
    assert sorted(fa.sizes(), reverse=True) == [11, 11, 10, 10, 10]


def test_fold_edge_cases():
    fa = ev.make_folds({f"s{i}": i % 2 for i in range(5)}, 5, 0)
    assert fa.sizes() == [1] * 5
    with pytest.raises(ConfigError):
        ev.make_folds({"a": 0, "b": 1}, 5, 0)


@given(st.integers(0, 40), st.integers(0, 40), st.integers(2, 8), st.integers(0, 1000))
def test_fold_invariants(n0, n1, k, seed):
    labels = {f"s{i}": int(i >= n0) for i in range(n0 + n1)}
    if len(labels) < k:
        with pytest.raises(ConfigError):
            ev.make_folds(labels, k, seed)
        return
    fa = ev.make_folds(labels, k, seed)
    assert set(fa.folds) == set(labels)
    sizes = fa.sizes()
    assert max(sizes) - min(sizes) <= 1
    for cls, n in ((0, n0), (1, n1)):
        per = [sum(labels[s] == cls for s in fa.members(f)) for f in range(k)]
        assert max(per) - min(per) <= 1 and sum(per) == n
    assert fa.folds == ev.make_folds(labels, k, seed).folds
    for f in range(k):
        train, test = ev.split_fold(fa, f)
        assert not set(train) & set(test) and len(train) + len(test) == len(labels)


def test_leakage_check():
    ev.check_no_leakage(["a", "b"], ["c"])
    with pytest.raises(LeakageError):
        ev.check_no_leakage(["a", "b"], ["b"])


# metrics -------------------------------------------------------------------------------

def test_metrics_examples():
    preds = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
    labels = [1, 1, 1, 0, 1, 0, 0, 0, 0, 0]
    m = ev.compute_metrics(preds, labels)
    assert (m.tp, m.fp, m.fn, m.tn) == (3, 1, 1, 5)
    assert (m.precision, m.recall, m.f1, m.accuracy) == (75.0, 75.0, 75.0, 80.0)
    assert ev.compute_metrics([1, 0], [1, 0]).f1 == 100.0
    m = ev.compute_metrics([0, 0, 0], [1, 1, 0])
    assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
    with pytest.raises(ShapeError):
        ev.compute_metrics([1], [1, 0])


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
def test_metrics_consistent_with_confusion(pairs):
    p, y = zip(*pairs)
    m = ev.compute_metrics(p, y)
    again = ev.MetricsReport.from_confusion(**m.confusion())
    assert again == m
    n = m.tp + m.fp + m.tn + m.fn
    assert abs(m.accuracy - 100 * (m.tp + m.tn) / n) <= 1e-9


# significance --------------------------------------------------------------------------

def test_compare_f1():
    r = ev.compare_f1([80.0, 81.0, 79.0], [80.0, 81.0, 79.0])
    assert r["t"] == 0 and r["p"] == 1.0 and not r["sig_05"]
    r = ev.compare_f1([1, 2, 3], [2, 3, 4])
    assert r["df"] == 4 and r["t"] == pytest.approx(-1.2247449, abs=1e-6)
    r = ev.compare_f1([90, 91, 92, 90.5, 91.5], [60, 61, 62, 60.5, 61.5])
    assert r["p"] < 0.001 and r["sig_001"]
    flat = ev.compare_f1([85.0, 85.0], [85.0, 85.0])
    assert flat["p"] == 1.0 and flat["flag"]


# cross-validation --------------------------------------------------------------------------

def test_run_cv_streams(tiny_records):
    cfg = RunConfig(**TINY)
    res = ev.run_cv(cfg, tiny_records, seed=0)
    assert set(res.streams) == {"positive", "neutral", "negative", "combination"}
    for rows in res.streams.values():
        assert sorted(r["speaker_id"] for r in rows) == sorted(tiny_records)
    for row in res.streams["combination"]:
        assert row["pred"] == int(sum(row["votes"]) >= 2)
    again = ev.run_cv(cfg, tiny_records, seed=0)
    assert json.dumps(again.streams, sort_keys=True) == json.dumps(res.streams, sort_keys=True)


def test_run_cv_single_condition_no_combination(tiny_records):
    res = ev.run_cv(RunConfig(conditions=["neutral"], **TINY), tiny_records, seed=1)
    assert set(res.streams) == {"neutral"}


def test_missing_condition_names_speaker(tiny_records):
    recs = dict(tiny_records)
    sid = next(iter(recs))
    broken = training.SpeakerRecord(sid, recs[sid].label, recs[sid].read,
                                    {"positive": recs[sid].responses["positive"]})
    recs[sid] = broken
    with pytest.raises(DataError, match=sid):
        ev.run_cv(RunConfig(**TINY), recs, seed=0)


def test_leak_trips_invariant(tiny_records, monkeypatch):
    real = ev.split_fold

    def leaky(assignment, fold):
        train, test = real(assignment, fold)
        return train + test[:1], test

    monkeypatch.setattr(ev, "split_fold", leaky)
    with pytest.raises(LeakageError):
        ev.run_cv(RunConfig(**TINY), tiny_records, seed=0)


def test_repetitions_and_persistence(tiny_records, tmp_path):
    cfg = RunConfig(conditions=["neutral"], **TINY)
    summary = ev.run_repetitions(cfg, tiny_records)
    assert [r.seed for r in summary.runs] == [0, 1]
    assert summary.f1_vector("neutral").shape == (2,)
    summary.write(tmp_path)
    doc = json.loads((tmp_path / "results_neutral.json").read_text())
    assert doc["config_hash"] == cfg.config_hash() and len(doc["iterations"]) == 2
    for it in doc["iterations"]:
        m = ev.MetricsReport.from_confusion(**it["confusion"])
        assert (m.accuracy, m.precision, m.recall, m.f1) == (it["acc"], it["prec"], it["rec"], it["f1"])
    f1s = [it["f1"] for it in doc["iterations"]]
    assert doc["summary"]["f1"]["mean"] == pytest.approx(np.mean(f1s))
    assert (tmp_path / "f1_neutral.csv").read_text().count("\n") == 3


def test_identical_seeds_identical_metrics(tiny_records):
    cfg = RunConfig(conditions=["negative"], **TINY)
    a = ev.run_cv(cfg, tiny_records, seed=5).metrics("negative")
    b = ev.run_cv(cfg, tiny_records, seed=5).metrics("negative")
    assert a == b


def test_metric_summary_constant_std():
    run = ev.CvResult(seed=0, streams={"neutral": [{"pred": 1, "true": 1}, {"pred": 0, "true": 0}]})
    s = ev.RepetitionSummary("h", [run, run]).summary("neutral")
    assert s["f1"] == {"mean": 100.0, "std": 0.0}
