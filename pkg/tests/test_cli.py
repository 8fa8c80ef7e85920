import json
import re

import numpy as np
import pytest

from telmos.audio import AudioClip, write_wav
from telmos.cli import main
from telmos.dataprep import (
    Manifest,
    ManifestEntry,
    MosLabel,
    RatingRecord,
    write_labels,
    write_manifest,
    write_ratings,
)
from telmos.nn.checkpoint import write_checkpoint
from telmos.nn.model import ModelArch, init_params
from telmos.synth import synth_speech


def _scored_params(seed=0):
    """Untrained weights with an amplified head so outputs vary in [1, 5]."""
    params = init_params(seed=seed)
    params.tensors["head.weight"][:] *= 40.0
    params.tensors["head.bias"][:] = 3.0
    return params


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A small on-disk dataset: wavs + manifest + labels + ratings."""
    root = tmp_path_factory.mktemp("ws")
    entries = []
    labels = []
    records = []
    rng = np.random.default_rng(1)
    for s in range(6):
        for i in range(2):
            cid = f"spk{s}_{i}"
            clip = synth_speech(1.2, speaker_seed=s, clip_seed=10 * s + i)
            path = root / f"{cid}.wav"
            write_wav(path, clip)
            entries.append(ManifestEntry(cid, str(path), f"spk{s}", f"sent{i}"))
            ratings = [int(r) for r in np.clip(rng.integers(1, 6, size=8), 1, 5)]
            records.append(RatingRecord(cid, ratings))
            labels.append(MosLabel(cid, float(np.mean(ratings)), 0.2, len(ratings)))
    manifest = Manifest(entries=entries)
    write_manifest(manifest, root / "manifest.csv")
    write_labels(labels, root / "labels.csv")
    write_ratings(records, root / "ratings.csv")
    return root


class TestUsage:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 1

    def test_unknown_flag(self, capsys):
        assert main(["predict", "--nope", "x"]) == 1

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0


class TestPredict:
    def test_prints_mos_in_range(self, workspace, tmp_path, capsys):
        ckpt = tmp_path / "m.pqm"
        write_checkpoint(ckpt, _scored_params())
        wav = next(workspace.glob("*.wav"))
        rc = main(["predict", "--checkpoint", str(ckpt), "--wav", str(wav)])
        out = capsys.readouterr().out.strip()
        assert rc == 0
        assert re.fullmatch(r"\d\.\d\d", out)
        assert 1.0 <= float(out) <= 5.0

    def test_missing_wav_is_data_error(self, tmp_path, capsys):
        ckpt = tmp_path / "m.pqm"
        write_checkpoint(ckpt, _scored_params())
        rc = main(["predict", "--checkpoint", str(ckpt), "--wav", "/nope/missing.wav"])
        assert rc == 2

    def test_bad_checkpoint_is_data_error(self, workspace, tmp_path, capsys):
        bad = tmp_path / "bad.pqm"
        bad.write_bytes(b"garbage")
        wav = next(workspace.glob("*.wav"))
        rc = main(["predict", "--checkpoint", str(bad), "--wav", str(wav)])
        assert rc == 2
        assert "telmos:" in capsys.readouterr().err


class TestPrepare:
    def test_builds_manifest_and_labels(self, workspace, tmp_path, capsys):
        out_m = tmp_path / "m.csv"
        out_l = tmp_path / "l.csv"
        rc = main([
            "prepare",
            "--audio-dir", str(workspace),
            "--ratings", str(workspace / "ratings.csv"),
            "--out-manifest", str(out_m),
            "--out-labels", str(out_l),
            "--val-speakers", "2",
            "--seed", "3",
        ])
        assert rc == 0
        from telmos.dataprep import read_labels, read_manifest

        manifest = read_manifest(out_m)
        labels = read_labels(out_l)
        assert len(manifest.entries) == 12
        assert len(labels) == 12
        val_speakers = {e.speaker_id for e in manifest.entries if e.split == "val"}
        assert len(val_speakers) == 2


class TestTrainEvalRoundtrip:
    def test_train_then_eval(self, workspace, tmp_path, capsys):
        ckpt = tmp_path / "model.pqm"
        args = [
            "train",
            "--manifest", str(workspace / "manifest.csv"),
            "--labels", str(workspace / "labels.csv"),
            "--out-checkpoint", str(ckpt),
            "--batch", "6",
            "--epochs", "2",
            "--seed", "11",
        ]
        assert main(args) == 0
        assert ckpt.is_file()
        log = ckpt.parent / (ckpt.name + ".log.csv")
        assert log.read_text().splitlines()[0] == "epoch,train_mse,val_rmse,val_pcc"

        report_path = tmp_path / "report.json"
        rc = main([
            "eval",
            "--checkpoint", str(ckpt),
            "--manifest", str(workspace / "manifest.csv"),
            "--labels", str(workspace / "labels.csv"),
            "--report", str(report_path),
            "--split", "all",
        ])
        assert rc == 0
        report = json.loads(report_path.read_text())
        assert report["n"] == 12
        assert sum(report["mos_histogram"]) == 12
        per_clip = report_path.with_suffix(".csv")
        assert per_clip.read_text().splitlines()[0] == "clip_id,mos,prediction"

    def test_same_seed_gives_byte_identical_checkpoints(self, workspace, tmp_path):
        outs = []
        for name in ("a.pqm", "b.pqm"):
            path = tmp_path / name
            rc = main([
                "train",
                "--manifest", str(workspace / "manifest.csv"),
                "--labels", str(workspace / "labels.csv"),
                "--out-checkpoint", str(path),
                "--batch", "6",
                "--epochs", "2",
                "--seed", "42",
            ])
            assert rc == 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_missing_audio_file_names_path(self, workspace, tmp_path, capsys):
        manifest = Manifest(entries=[
            ManifestEntry("ghost", "/nowhere/ghost.wav", "spkx", "s1"),
        ])
        mpath = tmp_path / "m.csv"
        write_manifest(manifest, mpath)
        write_labels([MosLabel("ghost", 3.0, 0.1, 5)], tmp_path / "l.csv")
        rc = main([
            "train",
            "--manifest", str(mpath),
            "--labels", str(tmp_path / "l.csv"),
            "--out-checkpoint", str(tmp_path / "x.pqm"),
        ])
        assert rc == 2
        assert "/nowhere/ghost.wav" in capsys.readouterr().err


class TestExperimentCommand:
    def test_sweep_config_runs_and_writes_csv(self, tmp_path, capsys):
        cfg = {
            "kind": "size_sweep",
            "repeats": 1,
            "size_grid": [6, 10],
            "base_seed": 5,
            "train": {"lr": 0.001, "batch_size": 8, "max_epochs": 1,
                       "dropout_rate": 0.2, "patience": 0},
            "data": {"n_clips": 16, "n_speakers": 8, "n_val_speakers": 2,
                      "clip_seconds": 1.0, "n_ratings": 3},
        }
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "sweep.csv"
        assert main(["experiment", "--config", str(cfg_path), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "x,run,val_pcc,val_rmse"
        assert len(lines) == 3

    def test_identical_invocations_identical_outputs(self, tmp_path):
        cfg = {
            "kind": "cropping",
            "repeats": 1,
            "base_seed": 9,
            "cropping": {"n_pairs": 10, "mos_delta": 0.0, "rater_sd": 0.7, "n_ratings": 12},
        }
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps(cfg))
        texts = []
        for name in ("r1.json", "r2.json"):
            out = tmp_path / name
            assert main(["experiment", "--config", str(cfg_path), "--out", str(out)]) == 0
            texts.append(out.read_text())
        assert texts[0] == texts[1]
        payload = json.loads(texts[0])
        assert 0.0 <= payload["p_two_tailed"] <= 1.0

    def test_bad_config_is_data_error(self, tmp_path, capsys):
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text("{not json")
        assert main(["experiment", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 2
