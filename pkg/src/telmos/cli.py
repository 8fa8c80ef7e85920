"""Command-line interface.

Subcommands: prepare (manifest + labels from a WAV directory and ratings
CSV), train, predict, eval, experiment. Exit codes: 0 success, 1 usage
error, 2 data error, 3 numeric divergence. All randomness derives from
--seed (or the experiment config's base_seed), so identical invocations
reproduce bit-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataprep
from .audio import read_wav, resample_to_8k
from .dsp import DEFAULT_FRONTEND, clip_to_segments
from .errors import DivergenceError, TelmosError, UsageError
from .evaluation import EvalReport, evaluate
from .harness import ExperimentConfig, SweepResult, run_experiment
from .nn.checkpoint import read_checkpoint, write_checkpoint
from .nn.model import model_forward, predict_batch
from .nn.train import TrainConfig, train_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="telmos", description="Narrowband no-reference speech quality toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    prep = sub.add_parser("prepare", help="build manifest and label CSVs from audio + ratings")
    prep.add_argument("--audio-dir", required=True, help="directory of .wav files")
    prep.add_argument("--ratings", required=True, help="ratings CSV (clip_id,rating)")
    prep.add_argument("--out-manifest", required=True)
    prep.add_argument("--out-labels", required=True)
    prep.add_argument("--val-speakers", type=int, default=0)
    prep.add_argument("--seed", type=int, default=0)

    tr = sub.add_parser("train", help="train a model from a manifest")
    tr.add_argument("--manifest", required=True)
    tr.add_argument("--labels", required=True)
    tr.add_argument("--out-checkpoint", required=True)
    tr.add_argument("--lr", type=float, default=0.001)
    tr.add_argument("--batch", type=int, default=200)
    tr.add_argument("--epochs", type=int, default=60)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--dropout", type=float, default=0.2)
    tr.add_argument("--patience", type=int, default=10)
    tr.add_argument("--log", help="training log CSV (default: <checkpoint>.log.csv)")

    pr = sub.add_parser("predict", help="print the MOS of one WAV file")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--wav", required=True)

    ev = sub.add_parser("eval", help="score a manifest and write an EvalReport")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--labels", required=True)
    ev.add_argument("--report", required=True, help="output JSON path")
    ev.add_argument("--per-clip", help="per-clip CSV (default: <report stem>.csv)")
    ev.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    ev.add_argument("--uniform-subset", action="store_true")
    ev.add_argument("--repeats", type=int, default=1000)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--skip-bad", action="store_true")

    ex = sub.add_parser("experiment", help="run a sweep/study described by a JSON config")
    ex.add_argument("--config", required=True)
    ex.add_argument("--out", required=True, help="CSV for sweeps, JSON for the cropping study")
    return p


def _load_split_features(manifest, labels, split, frontend=DEFAULT_FRONTEND):
    """Features and targets for one manifest split, in manifest order."""
    label_map = {lab.clip_id: lab.mos for lab in labels}
    entries = manifest.entries if split == "all" else manifest.subset(split)
    ids, feats, targets = [], [], []
    for e in entries:
        if e.clip_id not in label_map:
            raise TelmosError(f"no label for clip {e.clip_id!r}")
        if not Path(e.file_path).is_file():
            raise FileNotFoundError(f"missing audio file {e.file_path}")
        clip = resample_to_8k(read_wav(e.file_path))
        feats.append(clip_to_segments(clip, frontend).data)
        targets.append(label_map[e.clip_id])
        ids.append(e.clip_id)
    seg_counts = {f.shape[0] for f in feats}
    if len(seg_counts) > 1:
        raise TelmosError(f"clips disagree on segment count: {sorted(seg_counts)}")
    return ids, np.stack(feats), np.array(targets)


def _cmd_prepare(args) -> int:
    audio_dir = Path(args.audio_dir)
    wavs = sorted(audio_dir.glob("*.wav"))
    if not wavs:
        raise TelmosError(f"no .wav files in {audio_dir}")
    records = dataprep.read_ratings(args.ratings)
    by_id = {r.clip_id: r for r in records}
    entries = []
    for path in wavs:
        stem = path.stem
        parts = stem.split("_")
        speaker = parts[0]
        sentence = parts[1] if len(parts) > 1 else stem
        entries.append(
            dataprep.ManifestEntry(
                clip_id=stem,
                file_path=str(path),
                speaker_id=speaker,
                sentence_id=sentence,
            )
        )
    manifest = dataprep.Manifest(entries=entries)
    if args.val_speakers:
        manifest = dataprep.split_by_speaker(manifest, args.val_speakers, args.seed)
    labels = []
    for e in manifest.entries:
        if e.clip_id not in by_id:
            raise TelmosError(f"no ratings for clip {e.clip_id!r}")
        labels.append(dataprep.aggregate_mos(by_id[e.clip_id]))
    dataprep.write_manifest(manifest, args.out_manifest)
    dataprep.write_labels(labels, args.out_labels)
    print(f"wrote {len(manifest.entries)} entries, {len(labels)} labels")
    return EXIT_OK


def _cmd_train(args) -> int:
    manifest = dataprep.read_manifest(args.manifest)
    labels = dataprep.read_labels(args.labels)
    ids, train_x, train_y = _load_split_features(manifest, labels, "train")
    val_x = val_y = None
    if manifest.subset("val"):
        _, val_x, val_y = _load_split_features(manifest, labels, "val")
    cfg = TrainConfig(
        lr=args.lr,
        batch_size=args.batch,
        max_epochs=args.epochs,
        seed=args.seed,
        dropout_rate=args.dropout,
        patience=args.patience,
    )
    log_path = args.log or f"{args.out_checkpoint}.log.csv"
    params, log = train_model(train_x, train_y, val_x, val_y, cfg=cfg, log_path=log_path)
    write_checkpoint(args.out_checkpoint, params)
    last = log.rows[-1]
    print(f"trained {last[0]} epochs on {len(ids)} clips, final train MSE {last[1]:.4f}")
    return EXIT_OK


def _cmd_predict(args) -> int:
    params, _ = read_checkpoint(args.checkpoint)
    clip = resample_to_8k(read_wav(args.wav))
    mos = model_forward(params, clip_to_segments(clip))
    print(f"{mos:.2f}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    params, _ = read_checkpoint(args.checkpoint)
    manifest = dataprep.read_manifest(args.manifest)
    labels = dataprep.read_labels(args.labels)
    entries = manifest.entries if args.split == "all" else manifest.subset(args.split)
    per_clip = args.per_clip or str(Path(args.report).with_suffix(".csv"))
    report = evaluate(
        params,
        entries,
        labels,
        dataset_name=args.split,
        skip_bad=args.skip_bad,
        uniform_repeats=args.repeats if args.uniform_subset else None,
        rng_seed=args.seed,
        per_clip_csv=per_clip,
    )
    Path(args.report).write_text(report.to_json(), encoding="utf-8")
    pcc = "n/a" if report.pcc is None else f"{report.pcc:.4f}"
    print(f"n={report.n} pcc={pcc} rmse={report.rmse:.4f}")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    result = run_experiment(cfg)
    if isinstance(result, SweepResult):
        result.write_csv(args.out)
        print(f"wrote {len(result.rows)} rows to {args.out}")
    else:
        payload = {
            "t": result.t,
            "df": result.df,
            "p_two_tailed": result.p_two_tailed,
            "mean_diff": result.mean_diff,
        }
        Path(args.out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
        print(f"p={result.p_two_tailed:.4f} (t={result.t:.4f}, df={result.df})")
    return EXIT_OK


_COMMANDS = {
    "prepare": _cmd_prepare,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"telmos: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help paths
        return EXIT_OK if not e.code else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except DivergenceError as e:
        print(f"telmos: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (TelmosError, OSError, ValueError, TypeError, KeyError, json.JSONDecodeError) as e:
        print(f"telmos: {e}", file=sys.stderr)
        return EXIT_DATA


def run():
    sys.exit(main())
