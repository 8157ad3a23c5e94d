"""Repeated cross-validation on a synthetic speech corpus.

    python3 scripts/synth_crossval.py --shift 2 --iterations 3
    python3 scripts/synth_crossval.py --shift 0.25 --speaker-sd 1 --emotional 1.5 \
        --conditions neutral negative --iterations 20
"""

import argparse
import os
import time

from cdma import evaluation, synth, training
from cdma.config import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--shift", type=float, default=2.0)
    ap.add_argument("--speaker-sd", type=float, default=0.0)
    ap.add_argument("--emotional", type=float, default=1.0, help="multiplier for positive/negative")
    ap.add_argument("--n-per-class", type=int, default=20)
    ap.add_argument("--conditions", nargs="+", default=["positive", "neutral", "negative"])
    ap.add_argument("--iterations", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", help="write results JSON/CSV here")
    args = ap.parse_args()

    spec = synth.SpeechSynthSpec(n_per_class=args.n_per_class, read_frames=128,
                                 response_frames=128, responses_per_condition=1,
                                 shift=args.shift, speaker_sd=args.speaker_sd, seed=args.seed,
                                 multipliers={"read": 1.0, "positive": args.emotional,
                                              "neutral": 1.0, "negative": args.emotional})
    records = training.group_speakers(synth.gen_speech_corpus(spec))
    cfg = RunConfig(epochs=args.epochs, iterations=args.iterations, conditions=args.conditions,
                    jobs=os.cpu_count() or 1)
    t = time.perf_counter()
    summary = evaluation.run_repetitions(cfg, records)
    for stream in summary.streams():
        s = summary.summary(stream)
        print(f"{stream:12s} F1 {s['f1']['mean']:5.1f} +/- {s['f1']['std']:4.1f}  "
              f"acc {s['accuracy']['mean']:5.1f}")
    if "neutral" in args.conditions and args.iterations >= 2:
        for cond in args.conditions:
            if cond != "neutral":
                c = evaluation.compare_f1(summary.f1_vector(cond), summary.f1_vector("neutral"))
                print(f"{cond} vs neutral: t={c['t']:.2f} df={c['df']} p={c['p']:.3g}")
    print(f"{time.perf_counter() - t:.0f}s")
    if args.out:
        summary.write(args.out)


if __name__ == "__main__":
    main()
