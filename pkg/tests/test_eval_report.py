import json

import numpy as np
import pytest

from telmos.audio import AudioClip, write_wav
from telmos.dataprep import ManifestEntry, MosLabel
from telmos.errors import InsufficientBinError, MissingLabelError, TelmosError
from telmos.evaluation import evaluate, pearson, uniform_subset_eval
from telmos.rng import mix_seed
from telmos.dataprep import sample_uniform_subset

from conftest import sine


def make_labels(per_bin=20, spread=True):
    labels = []
    for b, center in enumerate((2.0, 3.0, 4.0)):
        for i in range(per_bin):
            mos = center + ((i % 9 - 4) * 0.05 if spread else 0.0)
            labels.append(MosLabel(f"b{b}_{i:03d}", mos, 0.1, 5))
    return labels


class TestUniformSubsetEval:
    def test_perfect_predictor_is_exactly_one(self):
        labels = make_labels()
        preds = {lab.clip_id: lab.mos for lab in labels}
        out = uniform_subset_eval(preds, labels, repeats=50, rng_seed=3)
        assert out["mean_pcc"] == 1.0
        assert out["sd_pcc"] == 0.0

    def test_reflected_predictor_is_minus_one(self):
        labels = make_labels()
        preds = {lab.clip_id: 5.0 - lab.mos for lab in labels}
        out = uniform_subset_eval(preds, labels, repeats=20, rng_seed=4)
        assert out["mean_pcc"] == pytest.approx(-1.0, abs=1e-12)

    def test_single_repeat_equals_pearson_on_that_subset(self):
        labels = make_labels()
        rng = np.random.default_rng(5)
        preds = {lab.clip_id: lab.mos + rng.normal(0, 0.3) for lab in labels}
        seed = 77
        out = uniform_subset_eval(preds, labels, repeats=1, rng_seed=seed)
        ids = sample_uniform_subset(labels, mix_seed(seed, 0))
        by_id = {lab.clip_id: lab.mos for lab in labels}
        expect = pearson([by_id[c] for c in ids], [preds[c] for c in ids])
        assert out["mean_pcc"] == pytest.approx(expect, abs=1e-15)
        assert out["sd_pcc"] == 0.0

    def test_noisy_predictor_tracks_full_set_pcc(self):
        rng = np.random.default_rng(6)
        labels = [MosLabel(f"c{i:04d}", float(rng.uniform(1.5, 4.5)), 0.1, 5) for i in range(600)]
        preds = {lab.clip_id: lab.mos + rng.normal(0, 0.5) for lab in labels}
        full = pearson([l.mos for l in labels], [preds[l.clip_id] for l in labels])
        out = uniform_subset_eval(preds, labels, repeats=400, rng_seed=8)
        assert out["mean_pcc"] == pytest.approx(full, abs=0.05)

    def test_underpopulated_bin_propagates(self):
        labels = [MosLabel(f"x{i}", 2.0, 0.1, 5) for i in range(30)]  # one bin only
        preds = {lab.clip_id: 2.0 for lab in labels}
        with pytest.raises(InsufficientBinError):
            uniform_subset_eval(preds, labels, repeats=2, rng_seed=0)


def _write_clips(tmp_path, specs):
    """specs: list of (clip_id, freq). Returns manifest entries."""
    entries = []
    for cid, freq in specs:
        path = tmp_path / f"{cid}.wav"
        write_wav(path, AudioClip(sine(freq, 1.0, amplitude=0.4)))
        entries.append(ManifestEntry(cid, str(path), f"spk_{cid}", cid, split="test"))
    return entries


class TestEvaluate:
    def test_stub_scorer_delegation(self, tmp_path):
        entries = _write_clips(tmp_path, [("a", 300), ("b", 600)])
        labels = [MosLabel("a", 2.0, 0.1, 5), MosLabel("b", 4.0, 0.1, 5)]
        stub = {"a": 2.5, "b": 3.5}
        report = evaluate(None, entries, labels, scorer=lambda clip: stub[clip.clip_id],
                          dataset_name="stub")
        assert report.n == 2
        assert report.pcc == pytest.approx(1.0)
        assert report.rmse == pytest.approx(0.5)
        assert sum(report.mos_histogram) == report.n

    def test_constant_predictions_surface_null_pcc(self, tmp_path):
        entries = _write_clips(tmp_path, [("a", 300), ("b", 600), ("c", 900)])
        labels = [MosLabel(c, 2.0 + i, 0.1, 5) for i, c in enumerate("abc")]
        report = evaluate(None, entries, labels, scorer=lambda clip: 3.0)
        assert report.pcc is None
        assert report.pcc_reason
        assert report.rmse >= 0.0
        parsed = json.loads(report.to_json())
        assert parsed["pcc"] is None

    def test_missing_label_named(self, tmp_path):
        entries = _write_clips(tmp_path, [("a", 300), ("b", 600)])
        labels = [MosLabel("a", 2.0, 0.1, 5)]
        with pytest.raises(MissingLabelError) as exc:
            evaluate(None, entries, labels, scorer=lambda clip: 3.0)
        assert "b" in str(exc.value)

    def test_per_clip_csv_recomputes_to_report_pcc(self, tmp_path):
        rng = np.random.default_rng(9)
        specs = [(f"c{i:03d}", 200 + 17 * i) for i in range(40)]
        entries = _write_clips(tmp_path, specs)
        labels = [MosLabel(cid, float(rng.uniform(1, 5)), 0.1, 5) for cid, _ in specs]
        label_map = {l.clip_id: l.mos for l in labels}
        csv_path = tmp_path / "per_clip.csv"
        report = evaluate(
            None, entries, labels,
            scorer=lambda clip: np.clip(label_map[clip.clip_id] + rng.normal(0, 0.4), 1, 5),
            per_clip_csv=csv_path,
        )
        rows = csv_path.read_text().splitlines()
        assert rows[0] == "clip_id,mos,prediction"
        mos, preds = [], []
        for line in rows[1:]:
            _, m, p = line.split(",")
            mos.append(float(m))
            preds.append(float(p))
        assert report.pcc == pytest.approx(pearson(mos, preds), abs=1e-12)
        assert report.n == 40

    def test_bad_audio_raises_unless_skipped(self, tmp_path):
        entries = _write_clips(tmp_path, [("a", 300)])
        bad = tmp_path / "bad.wav"
        bad.write_bytes(b"not a wav at all")
        entries.append(ManifestEntry("bad", str(bad), "spk_bad", "bad", split="test"))
        labels = [MosLabel("a", 2.0, 0.1, 5), MosLabel("bad", 3.0, 0.1, 5)]
        with pytest.raises(TelmosError):
            evaluate(None, entries, labels, scorer=lambda clip: 3.0)
        report = evaluate(None, entries, labels, scorer=lambda clip: 3.0, skip_bad=True)
        assert report.n == 1
        assert len(report.skipped) == 1 and "bad" in report.skipped[0]

    def test_histogram_buckets(self, tmp_path):
        entries = _write_clips(tmp_path, [("a", 300), ("b", 500), ("c", 700), ("d", 900)])
        labels = [
            MosLabel("a", 1.0, 0, 5),
            MosLabel("b", 1.49, 0, 5),
            MosLabel("c", 3.2, 0, 5),
            MosLabel("d", 5.0, 0, 5),
        ]
        report = evaluate(None, entries, labels, scorer=lambda clip: 3.0)
        assert report.mos_histogram == [2, 0, 0, 0, 1, 0, 0, 1]
        assert sum(report.mos_histogram) == 4

    def test_uniform_block_included(self, tmp_path):
        rng = np.random.default_rng(10)
        specs = [(f"c{i:03d}", 150 + 11 * i) for i in range(45)]
        entries = _write_clips(tmp_path, specs)
        mos_vals = np.concatenate([
            rng.uniform(1.6, 2.4, 15), rng.uniform(2.6, 3.4, 15), rng.uniform(3.6, 4.4, 15)
        ])
        labels = [MosLabel(cid, float(m), 0.1, 5) for (cid, _), m in zip(specs, mos_vals)]
        label_map = {l.clip_id: l.mos for l in labels}
        report = evaluate(
            None, entries, labels,
            scorer=lambda clip: label_map[clip.clip_id],
            uniform_repeats=25, rng_seed=1,
        )
        assert report.uniform_subset["repeats"] == 25
        assert report.uniform_subset["mean_pcc"] == 1.0
