"""End-to-end acceptance criteria.

Each test records one PASS/FAIL line via ``verdict``; conftest prints them in the
terminal summary. Slow criteria (synthetic cross-validation, EEG power) are marked
``slow`` so ``pytest -m "not slow"`` gives a quick loop.
"""

import itertools
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.stats as sps

from cdma import cli, eeg, evaluation, model, stats, synth, training
from cdma.config import PARIETO_OCCIPITAL, RunConfig
from helpers import ACCEPTANCE, avg_ranks, cdma_gradcheck, pearson_oracle, t_oracle


def verdict(n, ok, detail):
    ACCEPTANCE.append(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def speech_records(**kw):
    spec = synth.SpeechSynthSpec(read_frames=128, response_frames=128,
                                 responses_per_condition=1, **kw)
    return training.group_speakers(synth.gen_speech_corpus(spec))


def cv_config(**kw):
    return RunConfig(epochs=30, jobs=os.cpu_count() or 1, **kw)


# 1 -------------------------------------------------------------------------------------

def test_c1_gradient_check():
    t = time.perf_counter()
    errs = [cdma_gradcheck(seed, hidden=4, M=8, D=8) for seed in range(20)]
    dt = time.perf_counter() - t
    verdict(1, max(errs) < 1e-4 and dt < 60,
            f"max rel err {max(errs):.2e} over 20 seeds in {dt:.1f}s")


# 2 -------------------------------------------------------------------------------------

def test_c2_attention_invariants():
    rng = np.random.default_rng(2024)
    bad = 0
    for _ in range(1000):
        M, D = int(rng.integers(1, 33)), int(rng.integers(1, 33))
        x = rng.normal(size=(M, D)) * 10 ** rng.uniform(-3, 3)
        for y, w in (model.itmla_enhance(x), model.ctga_enhance(x, rng.normal(size=D))):
            ok = (np.all(w > 0) and abs(w.sum() - 1) <= 1e-9
                  and np.array_equal(y, (1 + w)[:, None] * x))
            bad += not ok
    uniform = True
    for M in (1, 2, 7, 128):
        x = np.tile(rng.normal(size=32), (M, 1))
        for y, w in (model.itmla_enhance(x), model.ctga_enhance(x, x[0] * 3.0)):
            uniform &= bool(np.all(w == 1 / M) and np.array_equal(y, (1 + 1 / M) * x))
    verdict(2, bad == 0 and uniform, f"{bad} violations in 2000 fuzzed calls, uniform={uniform}")


# 3 -------------------------------------------------------------------------------------

def test_c3_aggregation_loss_vote():
    p, lab = model.aggregate(model.ProbSet(0.9, 0.8, 0.7, 0.6, 0.5, 0.4))
    p_half, lab_half = model.aggregate(model.ProbSet(*[0.5] * 6))
    ok = abs(p - 0.65) <= 1e-12 and lab == 1 and p_half == 0.5 and lab_half == 0
    ok &= abs(model.cdma_loss([model.ProbSet(*[1.0] * 6)], [1])) <= 1e-10
    ok &= abs(model.cdma_loss([model.ProbSet(*[0.5] * 6)], [1]) - 6 * math.log(2)) <= 1e-12
    votes = all(model.majority_vote(v) == int(sum(v) >= 2)
                for v in itertools.product((0, 1), repeat=3))
    verdict(3, bool(ok and votes), f"examples ok={bool(ok)}, 8 vote triples ok={votes}")


# 4 -------------------------------------------------------------------------------------

@pytest.mark.slow
def test_c4_synthetic_separability():
    t = time.perf_counter()
    cfg = cv_config(iterations=3)
    sep = evaluation.run_repetitions(cfg, speech_records(n_per_class=20, shift=2.0, seed=1))
    null = evaluation.run_repetitions(cfg, speech_records(n_per_class=20, shift=0.0, seed=1))
    dt = time.perf_counter() - t
    f1_sep = {s: sep.f1_vector(s).mean() for s in sep.streams()}
    f1_null = {s: null.f1_vector(s).mean() for s in null.streams()}
    pooled_null = float(np.mean(list(f1_null.values())))
    ok = min(f1_sep.values()) >= 95 and abs(pooled_null - 50) <= 10 and dt < 300
    verdict(4, ok, f"SNR 2 min stream F1 {min(f1_sep.values()):.1f}; "
                   f"null F1 {pooled_null:.1f} ({', '.join(f'{k} {v:.1f}' for k, v in f1_null.items())}); "
                   f"{dt:.0f}s")


# 5 -------------------------------------------------------------------------------------

@pytest.mark.slow
def test_c5_emotional_beats_neutral():
    recs = speech_records(n_per_class=20, shift=0.25, speaker_sd=1.0, seed=7,
                          multipliers={"read": 1.0, "positive": 1.5, "neutral": 1.0,
                                       "negative": 1.5})
    cfg = cv_config(iterations=20, conditions=["neutral", "negative"])
    summ = evaluation.run_repetitions(cfg, recs)
    cmp = evaluation.compare_f1(summ.f1_vector("negative"), summ.f1_vector("neutral"))
    verdict(5, cmp["t"] > 0 and cmp["p"] < 0.05,
            f"negative {summ.f1_vector('negative').mean():.1f} vs neutral "
            f"{summ.f1_vector('neutral').mean():.1f}: t={cmp['t']:.2f} p={cmp['p']:.2g}")


# 6 -------------------------------------------------------------------------------------

def _alpha_set(post, seed=0, n=30, sr=250):
    rng = np.random.default_rng(seed)
    t = (np.arange(3 * sr) - sr) / sr
    x = np.where(t >= 0, post, 10.0) * np.sin(2 * np.pi * 10 * t + rng.uniform(0, 2 * np.pi, (n, 1)))
    return eeg.EpochSet("p", "HC", "fear", x[:, None, :], ["E1"], float(sr), sr)


def test_c6_ersp_analytics():
    late = (300.0, 1500.0)
    up = eeg.compute_ersp(_alpha_set(20.0), "E1").select(eeg.BANDS["alpha"], late).mean()
    flat = eeg.compute_ersp(_alpha_set(10.0), "E1").select(eeg.BANDS["alpha"], late).mean()
    rng = np.random.default_rng(6)
    noisy = _alpha_set(20.0)
    noisy.epochs = noisy.epochs + rng.normal(0, 5, noisy.epochs.shape)
    base = np.abs(eeg.baseline_level(eeg.compute_ersp(noisy, "E1"))).max()
    ok = abs(up - 20 * math.log10(2)) <= 0.3 and abs(flat) <= 0.1 and base < 1e-6
    verdict(6, bool(ok), f"doubling {up:+.3f} dB, stationary {flat:+.4f} dB, baseline {base:.1e} dB")


# 7 -------------------------------------------------------------------------------------

def test_c7_statistics_oracles():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(10_000):
        n1, n2 = rng.integers(2, 21, size=2)
        a = rng.normal(size=n1).tolist()
        b = (rng.normal(size=n2) + rng.normal()).tolist()
        t, df, sp = t_oracle(a, b)
        r = stats.t_independent_pooled(a, b)
        worst = max(worst, abs(r.statistic - t) / max(1, abs(t)),
                    abs(r.p - 2 * sps.t.sf(abs(t), df)),
                    abs(stats.cohens_d(a, b) - (np.mean(a) - np.mean(b)) / sp) / max(1, abs(t)))
        m, s = stats.mean_std(a)
        mo = sum(a) / n1
        worst = max(worst, abs(m - mo), abs(s - math.sqrt(sum((v - mo) ** 2 for v in a) / (n1 - 1))))
        n = int(rng.integers(5, 21))
        x, y = rng.normal(size=n).tolist(), rng.normal(size=n).tolist()
        worst = max(worst, abs(stats.spearman(x, y).rho - pearson_oracle(avg_ranks(x), avg_ranks(y))))
    hand_t = stats.t_independent_pooled([1, 2, 3], [2, 3, 4])
    hand = (abs(hand_t.statistic + 1.224744871391589) < 1e-12 and hand_t.df == 4
            and abs(stats.spearman([1, 2, 3, 4, 5], [2, 1, 4, 3, 5]).rho - 0.8) < 1e-12
            and abs(stats.cohens_d([1, 2, 3], [2, 3, 4]) + 1.0) < 1e-12)
    verdict(7, worst < 1e-10 and hand, f"worst deviation {worst:.1e} over 10,000 cases, hand={hand}")


# 8 -------------------------------------------------------------------------------------

EEG_EFFECT_D = 1.1


@pytest.mark.slow
def test_c8_synthetic_eeg_group_effect():
    sd = 20 * math.log10(2.0) / EEG_EFFECT_D
    sig = strong = 0
    for seed in range(50):
        spec = synth.EegSynthSpec(channels=list(PARIETO_OCCIPITAL), mdd_alpha_ratio=0.5,
                                  participant_sd_db=sd, seed=seed)
        corpus = synth.gen_eeg_epochs(spec)
        power = {}
        for es in corpus.sets:
            ce = eeg.condition_epochs(es)
            if ce.valid:
                power[es.participant_id] = eeg.band_power(
                    eeg.compute_ersp_all(ce), PARIETO_OCCIPITAL, "alpha", "late")
        mdd = [v for p, v in power.items() if corpus.groups[p] == "MDD"]
        hc = [v for p, v in power.items() if corpus.groups[p] == "HC"]
        sig += eeg.group_compare(mdd, hc).p < 0.05
        logits = synth.logits_from_latent(corpus.alpha_db, np.random.default_rng(seed))
        ids = sorted(power)
        rho = eeg.correlate_power_logits([power[i] for i in ids], [logits[i] for i in ids]).rho
        strong += abs(rho) >= 0.5
    verdict(8, sig >= 40 and strong >= 40,
            f"d={spec.effect_size:.2f}: p<0.05 in {sig}/50 seeds, |rho|>=0.5 in {strong}/50")


# 9 -------------------------------------------------------------------------------------

REPORTED_F1 = {"positive": 84.4, "neutral": 82.1, "negative": 85.0}

# (condition, roi, band, window, logits stream, sign)
REPORTED_SIGNS = [
    ("fear", "frontal", "alpha", "early", "negative", -1),
    ("fear", "frontal", "alpha", "early", "neutral", -1),
    ("fear", "frontal", "alpha", "early", "positive", -1),
    ("fear", "parieto-occipital", "alpha", "early", "negative", -1),
    ("fear", "parieto-occipital", "alpha", "early", "neutral", -1),
    ("fear", "parieto-occipital", "alpha", "early", "positive", -1),
    ("fear", "parieto-occipital", "theta", "early", "neutral", -1),
    ("sad", "parieto-occipital", "alpha", "early", "positive", -1),
    ("happy", "parieto-occipital", "alpha", "late", "negative", +1),
]

SPEECH = os.environ.get("CDMA_MODMA_SPEECH")   # path to a feature manifest.json
EEG = os.environ.get("CDMA_MODMA_EEG")         # directory of <participant>_<condition> epoch dirs


@pytest.mark.slow
@pytest.mark.skipif(not SPEECH, reason="MODMA speech features not supplied (CDMA_MODMA_SPEECH)")
def test_c9_modma_speech(tmp_path):
    cfg = RunConfig(iterations=50, jobs=os.cpu_count() or 1)
    summ = evaluation.run_repetitions(cfg, cli._records(type("A", (), {"manifest": SPEECH}), cfg))
    got = {c: float(summ.f1_vector(c).mean()) for c in REPORTED_F1}
    (tmp_path / "logits.json").write_text(json.dumps(cli.mean_logits(summ)))
    best = max(summ.f1_vector("combination"))
    verdict(9, all(abs(got[c] - REPORTED_F1[c]) <= 3.0 for c in REPORTED_F1),
            "speech F1 " + ", ".join(f"{c} {got[c]:.1f}" for c in REPORTED_F1)
            + f"; best combination F1 {best:.1f}")


@pytest.mark.slow
@pytest.mark.skipif(not (EEG and os.environ.get("CDMA_MODMA_LOGITS")),
                    reason="MODMA EEG epochs and model logits not supplied "
                           "(CDMA_MODMA_EEG, CDMA_MODMA_LOGITS)")
def test_c9_modma_eeg(tmp_path):
    assert cli.main(["eeg", "ersp", "--input", EEG, "--condition-raw",
                     "--out", str(tmp_path / "ersp")]) == 0
    powers = json.loads((tmp_path / "ersp" / "powers.json").read_text())
    logits = json.loads(Path(os.environ["CDMA_MODMA_LOGITS"]).read_text())
    cells = cli._power_cells(powers)
    mismatched = []
    dfs = set()
    for cond, roi, band, win, stream, sign in REPORTED_SIGNS:
        rows = cells[(roi, band, win, cond)]
        mdd = [r["power"] for r in rows.values() if r["group"] == "MDD"]
        hc = [r["power"] for r in rows.values() if r["group"] == "HC"]
        dfs.add(eeg.group_compare(mdd, hc).df)
        ids = sorted(p for p in rows if p in logits)
        rho = eeg.correlate_power_logits([rows[p]["power"] for p in ids],
                                         [logits[p][stream] for p in ids]).rho
        if np.sign(rho) != sign:
            mismatched.append(f"{cond}/{roi}/{band}/{win}/{stream} rho={rho:+.3f}")
    verdict(9, dfs == {31} and not mismatched,
            f"EEG df {sorted(dfs)}; sign mismatches: {mismatched or 'none'}")


# 10 ------------------------------------------------------------------------------------

def test_c10_leakage_guard(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 1, "hidden": 4, "output_root": str(tmp_path / "out")}))
    assert cli.main(["synth", "speech", "--config", str(cfg), "--n-per-class", "5",
                     "--responses", "1", "--out", str(tmp_path / "corpus")]) == 0
    real = evaluation.split_fold

    def leaky(assignment, fold):
        train, test = real(assignment, fold)
        return train + test[:1], test

    monkeypatch.setattr(evaluation, "split_fold", leaky)
    code = cli.main(["crossval", "--config", str(cfg), "--iterations", "1",
                     "--manifest", str(tmp_path / "corpus" / "manifest.json")])
    err = capsys.readouterr().err
    verdict(10, code == 3 and "LeakageError" in err, f"exit code {code}")
