"""``cdma`` command-line entry point.

Every subcommand reads a JSON run config (``--config``) whose keys can be
overridden by ``--seed`` and ``--jobs``. Outputs land under
``<output_root>/<subcommand>/<config_hash>/`` unless ``--out`` names a path.

Exit codes: 0 ok, 1 usage, 2 data/format, 3 internal invariant violated.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Dict, List

import numpy as np

from . import eeg, evaluation, features, model, nn, synth, training
from .config import SPONTANEOUS, RunConfig
from .errors import CdmaError, DataError, FormatError, InvariantError, UsageError
from .segmentation import segment_responses

EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dump(path: Path, doc) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _config(args) -> RunConfig:
    overrides = {"seed": args.seed, "jobs": args.jobs}
    if args.config:
        return RunConfig.load(args.config, **overrides)
    return RunConfig(**{k: v for k, v in overrides.items() if v is not None})


def _out_dir(args, cfg: RunConfig, stage: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(cfg.output_root) / stage / cfg.config_hash()


def _manifest(args, cfg: RunConfig) -> Path:
    return Path(args.manifest) if args.manifest else Path(cfg.data_root) / "manifest.json"


def _records(args, cfg):
    return training.group_speakers(features.load_corpus(_manifest(args, cfg)))


# --------------------------------------------------------------------------- speech

def cmd_features(args, cfg):
    seqs = features.load_corpus(_manifest(args, cfg))
    out = _out_dir(args, cfg, "features")
    manifest = synth.write_speech_corpus(out, seqs)
    print(f"{len(seqs)} feature sequences -> {manifest}")


def cmd_segment(args, cfg):
    records = _records(args, cfg)
    counts: Dict[str, dict] = {}
    for sid, rec in records.items():
        row = {"read": segment_responses(rec.read, cfg.segment_len, cfg.stride,
                                         pad=cfg.pad_read).count if rec.read else 0}
        for cond, seqs in rec.responses.items():
            row[cond] = segment_responses(seqs, cfg.segment_len, cfg.stride,
                                          pad=cfg.pad_spontaneous).count
        counts[sid] = row
    path = _dump(_out_dir(args, cfg, "segment") / "segments.json", counts)
    print(path)


def cmd_train(args, cfg):
    records = list(_records(args, cfg).values())
    rng = training.condition_seed(cfg.seed, 0, args.condition)
    params, scaler, history = training.fit_condition(records, args.condition, cfg, rng)
    out = _out_dir(args, cfg, "train")
    out.mkdir(parents=True, exist_ok=True)
    meta = {"condition": args.condition, "config": cfg.to_dict(), "loss": history,
            "scaler": None if scaler is None else
            {"mean": scaler.mean.tolist(), "std": scaler.std.tolist()}}
    path = out / f"model_{args.condition}.json"
    nn.save_params(path, params, meta)
    print(path)


def cmd_evaluate(args, cfg):
    params, meta = nn.load_params(args.checkpoint)
    cond = meta.get("condition", args.condition)
    sc = meta.get("scaler")
    scaler = None if sc is None else training.Standardizer(np.array(sc["mean"]), np.array(sc["std"]))
    records = _records(args, cfg)
    inputs = [training.speaker_input(r, cond, cfg, scaler) for r in records.values()]
    rows = model.predict(params, inputs)
    m = evaluation.compute_metrics([r["label"] for r in rows], [records[r["speaker_id"]].label
                                                                for r in rows])
    out = _out_dir(args, cfg, "evaluate")
    _dump(out / f"predictions_{cond}.json", rows)
    path = _dump(out / f"metrics_{cond}.json", m.__dict__)
    print(path)


def mean_logits(summary: evaluation.RepetitionSummary) -> Dict[str, Dict[str, float]]:
    """Per speaker, per condition p-hat averaged over iterations."""
    acc: Dict[str, Dict[str, List[float]]] = {}
    for run in summary.runs:
        for cond in SPONTANEOUS:
            for row in run.streams.get(cond, []):
                acc.setdefault(row["speaker_id"], {}).setdefault(cond, []).append(row["logit"])
    return {s: {c: float(np.mean(v)) for c, v in d.items()} for s, d in sorted(acc.items())}


def cmd_crossval(args, cfg):
    records = _records(args, cfg)
    n = args.iterations or cfg.iterations
    summary = evaluation.run_repetitions(cfg, records, n)
    out = _out_dir(args, cfg, "crossval")
    summary.write(out)
    _dump(out / "logits.json", mean_logits(summary))
    comparisons = {}
    if "neutral" in cfg.conditions and n >= 2:
        for cond in cfg.conditions:
            if cond != "neutral":
                comparisons[f"{cond}_vs_neutral"] = evaluation.compare_f1(
                    summary.f1_vector(cond), summary.f1_vector("neutral"), welch=cfg.welch)
    _dump(out / "comparisons.json", comparisons)
    _dump(out / "config.json", {**cfg.to_dict(), "config_hash": cfg.config_hash()})
    for stream in summary.streams():
        f1 = summary.summary(stream)["f1"]
        print(f"{stream:12s} F1 {f1['mean']:.1f} +/- {f1['std']:.1f}")
    print(out)


# --------------------------------------------------------------------------- EEG

def _participant_dirs(root) -> List[Path]:
    root = Path(root)
    if (root / "manifest.json").exists():
        return [root]
    if not root.is_dir():
        raise DataError(f"epoch directory not found: {root}")
    dirs = sorted(p for p in root.iterdir() if (p / "manifest.json").exists())
    if not dirs:
        raise DataError(f"no participant manifests under {root}")
    return dirs


def cmd_eeg_condition(args, cfg):
    out = _out_dir(args, cfg, "eeg-condition")
    report = {}
    for d in _participant_dirs(args.input):
        es = eeg.condition_epochs(eeg.load_epoch_dir(d), threshold_uv=cfg.reject_uv)
        eeg.write_epoch_dir(out / d.name, es)
        report[d.name] = {"kept": len(es.epochs), "raw": es.n_raw, "valid": es.valid}
    _dump(out / "rejection.json", report)
    print(out)


def cmd_eeg_ersp(args, cfg):
    """ERSP per ROI channel plus ROI x band x window power table."""
    out = _out_dir(args, cfg, "eeg-ersp")
    rois = {name: cfg.roi_channels(name) for name in cfg.rois}
    table = []
    for d in _participant_dirs(args.input):
        es = eeg.load_epoch_dir(d)
        if args.condition_raw:
            es = eeg.condition_epochs(es, threshold_uv=cfg.reject_uv)
        if not es.valid:
            continue
        chans = sorted({c for ch in rois.values() for c in ch})
        ersps = eeg.compute_ersp_all(es, chans, cfg.ersp_window)
        if args.write_matrices:
            for c, m in ersps.items():
                (out / d.name).mkdir(parents=True, exist_ok=True)
                eeg.write_ersp_csv(out / d.name / f"{c}.csv", m)
        for roi, chs in rois.items():
            for band in eeg.BANDS:
                for win in eeg.WINDOWS:
                    table.append({"participant_id": es.participant_id, "group": es.group,
                                  "condition": es.condition, "roi": roi, "band": band,
                                  "window": win, "power": eeg.band_power(ersps, chs, band, win)})
    if not table:
        raise DataError("no valid participants")
    path = _dump(out / "powers.json", table)
    print(path)


def _power_cells(table):
    cells: Dict[tuple, Dict[str, dict]] = {}
    for r in table:
        key = (r["roi"], r["band"], r["window"], r["condition"])
        cells.setdefault(key, {})[r["participant_id"]] = r
    return cells


def cmd_eeg_stats(args, cfg):
    table = _read_json(args.powers)
    out = []
    for (roi, band, win, cond), rows in sorted(_power_cells(table).items()):
        mdd = [r["power"] for r in rows.values() if r["group"] == "MDD"]
        hc = [r["power"] for r in rows.values() if r["group"] == "HC"]
        if len(mdd) < 2 or len(hc) < 2:
            continue
        res = eeg.group_compare(mdd, hc)
        out.append({"roi": roi, "band": band, "window": win, "condition": cond,
                    "t": res.statistic, "df": res.df, "p": res.p, "d": res.effect_size,
                    "flag": res.flag, "n_mdd": len(mdd), "n_hc": len(hc)})
    path = _dump(_out_dir(args, cfg, "eeg-stats") / "stats.json", out)
    print(path)


def cmd_correlate(args, cfg):
    """Spearman tables of ROI power against logits and the delta-logit contrasts."""
    table = _read_json(args.powers)
    logits = _read_json(args.logits)
    out = []
    for (roi, band, win, cond), rows in sorted(_power_cells(table).items()):
        ids = sorted(p for p in rows if p in logits
                     and all(c in logits[p] for c in SPONTANEOUS))
        if len(ids) < 5:
            continue
        power = [rows[p]["power"] for p in ids]
        groups = [rows[p]["group"] for p in ids]
        per_cond = {c: [logits[p][c] for p in ids] for c in SPONTANEOUS}
        d_pos, d_neg = eeg.delta_logits(per_cond)
        targets = {**per_cond, "delta_positive": d_pos, "delta_negative": d_neg}
        for scope in ("all", "MDD", "HC"):
            for name, vec in targets.items():
                try:
                    r = eeg.correlate_power_logits(power, vec, groups, scope)
                except DataError:
                    continue
                out.append({"roi": roi, "band": band, "window": win, "condition": cond,
                            "logits": name, "scope": scope, "rho": r.rho, "p": r.p,
                            "n": r.n, "flag": r.flag})
    path = _dump(_out_dir(args, cfg, "correlate") / "correlations.json", out)
    print(path)


# --------------------------------------------------------------------------- synth / report

def cmd_synth_speech(args, cfg):
    spec = synth.SpeechSynthSpec(n_per_class=args.n_per_class, shift=args.shift,
                                 noise_sd=args.noise_sd, speaker_sd=args.speaker_sd,
                                 responses_per_condition=args.responses,
                                 seed=cfg.seed)
    out = _out_dir(args, cfg, "synth-speech")
    print(synth.write_speech_corpus(out, synth.gen_speech_corpus(spec)))


def cmd_synth_eeg(args, cfg):
    spec = synth.EegSynthSpec(n_mdd=args.n_mdd, n_hc=args.n_hc,
                              epochs_per_participant=args.epochs,
                              mdd_alpha_ratio=args.mdd_ratio, hc_alpha_ratio=args.hc_ratio,
                              participant_sd_db=args.participant_sd_db, seed=cfg.seed)
    corpus = synth.gen_eeg_epochs(spec)
    out = _out_dir(args, cfg, "synth-eeg")
    synth.write_eeg_corpus(out, corpus)
    rng = np.random.default_rng(cfg.seed)
    logits = {}
    base = synth.logits_from_latent(corpus.alpha_db, rng)
    for pid, v in base.items():
        logits[pid] = {"neutral": v, "positive": v, "negative": v}
    _dump(out / "planted_logits.json", logits)
    _dump(out / "planted_alpha_db.json", corpus.alpha_db)
    print(out)


TABLE_COLUMNS = ["Condition", "Acc.(%)", "Prec.(%)", "Rec.(%)", "F1(%)"]


def cmd_report(args, cfg):
    """Collect results_*.json (and correlations.json) into CSV tables."""
    root = Path(args.results)
    files = sorted(root.glob("results_*.json"))
    if not files:
        raise DataError(f"no results_*.json under {root}")
    out = Path(args.out) if args.out else root
    out.mkdir(parents=True, exist_ok=True)
    order = {c: i for i, c in enumerate(list(SPONTANEOUS) + [evaluation.STREAM_COMBINED])}
    docs = sorted((_read_json(f) for f in files), key=lambda d: order.get(d["condition"], 99))
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for d in docs:
            s = d["summary"]
            w.writerow([d["condition"]] + [f"{s[k]['mean']:.1f}±{s[k]['std']:.1f}"
                                           for k in ("accuracy", "precision", "recall", "f1")])
    corr = root / "correlations.json"
    if args.correlations:
        corr = Path(args.correlations)
    if corr.exists():
        rows = _read_json(corr)
        with open(out / "correlations.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            keys = ["roi", "band", "window", "condition", "logits", "scope", "rho", "p", "n"]
            w.writerow(keys)
            for r in rows:
                w.writerow([r[k] for k in keys])
    print(out / "table.csv")


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="run config JSON")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--out", help="output path (default: output_root/<stage>/<hash>)")

    p = _Parser(prog="cdma", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def add(parent, name, fn, help_):
        sp = parent.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    feat = sub.add_parser("features", help="feature extraction / import")
    fsub = feat.add_subparsers(dest="action", parser_class=_Parser, required=True)
    for name, help_ in (("extract", "WAV recordings -> 32-dim feature CSVs"),
                        ("import", "validate and copy externally computed feature CSVs")):
        add(fsub, name, cmd_features, help_).add_argument("--manifest")

    add(sub, "segment", cmd_segment, "segment counts per speaker").add_argument("--manifest")

    sp = add(sub, "train", cmd_train, "fit one condition model on all speakers")
    sp.add_argument("--manifest")
    sp.add_argument("--condition", choices=SPONTANEOUS, required=True)

    sp = add(sub, "crossval", cmd_crossval, "repeated person-independent cross-validation")
    sp.add_argument("--manifest")
    sp.add_argument("--iterations", type=int)

    sp = add(sub, "evaluate", cmd_evaluate, "score a checkpoint on a corpus")
    sp.add_argument("--manifest")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--condition", choices=SPONTANEOUS, default="neutral")

    e = sub.add_parser("eeg", help="EEG conditioning, ERSP and group statistics")
    esub = e.add_subparsers(dest="action", parser_class=_Parser, required=True)
    add(esub, "condition", cmd_eeg_condition, "filter, resample, reject").add_argument(
        "--input", required=True)
    sp = add(esub, "ersp", cmd_eeg_ersp, "ERSP and ROI band power")
    sp.add_argument("--input", required=True)
    sp.add_argument("--condition-raw", action="store_true", help="condition epochs first")
    sp.add_argument("--write-matrices", action="store_true")
    add(esub, "stats", cmd_eeg_stats, "HC vs MDD t-tests").add_argument("--powers", required=True)

    sp = add(sub, "correlate", cmd_correlate, "Spearman power vs logits")
    sp.add_argument("--powers", required=True)
    sp.add_argument("--logits", required=True)

    s = sub.add_parser("synth", help="synthetic corpora")
    ssub = s.add_subparsers(dest="action", parser_class=_Parser, required=True)
    sp = add(ssub, "speech", cmd_synth_speech, "Gaussian feature corpus")
    sp.add_argument("--n-per-class", type=int, default=20)
    sp.add_argument("--shift", type=float, default=2.0)
    sp.add_argument("--noise-sd", type=float, default=1.0)
    sp.add_argument("--speaker-sd", type=float, default=0.0)
    sp.add_argument("--responses", type=int, default=2)
    sp = add(ssub, "eeg", cmd_synth_eeg, "epoch directories with planted alpha ERD")
    sp.add_argument("--n-mdd", type=int, default=13)
    sp.add_argument("--n-hc", type=int, default=20)
    sp.add_argument("--epochs", type=int, default=20)
    sp.add_argument("--mdd-ratio", type=float, default=0.5)
    sp.add_argument("--hc-ratio", type=float, default=1.0)
    sp.add_argument("--participant-sd-db", type=float, default=6.0)

    sp = add(sub, "report", cmd_report, "Table-style CSV from results JSON")
    sp.add_argument("--results", required=True)
    sp.add_argument("--correlations")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _config(args)
        args.func(args, cfg)
        return 0
    except InvariantError as exc:
        print(f"invariant violated: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CdmaError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
