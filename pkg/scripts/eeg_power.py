"""Power of the HC-vs-MDD alpha comparison on synthetic EEG, over seeds.

    python3 scripts/eeg_power.py --effect 1.1 --seeds 50 --window late
"""

import argparse
import math

import numpy as np

from cdma import eeg, synth
from cdma.config import PARIETO_OCCIPITAL


def one_seed(seed, sd_db, window, mdd_ratio):
    spec = synth.EegSynthSpec(channels=list(PARIETO_OCCIPITAL), mdd_alpha_ratio=mdd_ratio,
                              participant_sd_db=sd_db, seed=seed)
    corpus = synth.gen_eeg_epochs(spec)
    power = {}
    for es in corpus.sets:
        ce = eeg.condition_epochs(es)
        if ce.valid:
            power[es.participant_id] = eeg.band_power(eeg.compute_ersp_all(ce),
                                                      PARIETO_OCCIPITAL, "alpha", window)
    mdd = [v for p, v in power.items() if corpus.groups[p] == "MDD"]
    hc = [v for p, v in power.items() if corpus.groups[p] == "HC"]
    res = eeg.group_compare(mdd, hc)
    logits = synth.logits_from_latent(corpus.alpha_db, np.random.default_rng(seed))
    ids = sorted(power)
    rho = eeg.correlate_power_logits([power[i] for i in ids], [logits[i] for i in ids]).rho
    return res, rho


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--effect", type=float, default=1.1, help="planted Cohen's d")
    ap.add_argument("--mdd-ratio", type=float, default=0.5, help="MDD post/pre alpha amplitude")
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--window", choices=["early", "late"], default="late")
    args = ap.parse_args()

    sd_db = abs(20 * math.log10(args.mdd_ratio)) / args.effect
    hits = strong = 0
    for seed in range(args.seeds):
        res, rho = one_seed(seed, sd_db, args.window, args.mdd_ratio)
        hits += res.p < 0.05
        strong += abs(rho) >= 0.5
        print(f"seed {seed:3d}  t={res.statistic:6.2f} df={res.df} p={res.p:.4f} "
              f"d={res.effect_size:5.2f} rho={rho:+.3f}", flush=True)
    print(f"power {hits / args.seeds:.2f}   |rho|>=0.5 in {strong / args.seeds:.2f}")


if __name__ == "__main__":
    main()
