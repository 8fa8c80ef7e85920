"""Train a small model on synthetic data and inspect it.

Builds a labeled synthetic dataset (tones + shaped noise at random SNR,
quality a fixed monotone map of SNR), trains for a few epochs, scores the
held-out speakers, and round-trips the checkpoint.

Takes a couple of minutes on a laptop-class CPU.
"""

import time

from telmos.evaluation import pearson, rmse
from telmos.nn.checkpoint import load_checkpoint, save_checkpoint
from telmos.nn.model import predict_batch
from telmos.nn.train import TrainConfig, train_model
from telmos.synth import SynthSpec, build_dataset

spec = SynthSpec(n_clips=120, n_speakers=24, n_val_speakers=4, clip_seconds=2.0,
                 n_ratings=5, rater_sd=0.5)
print("generating dataset...")
ds = build_dataset(spec, base_seed=42)
print(f"  train {ds.train_x.shape[0]} clips, val {ds.val_x.shape[0]} clips "
      f"({ds.train_x.shape[1]} segments each)")

cfg = TrainConfig(lr=1e-3, batch_size=32, max_epochs=10, seed=1, dropout_rate=0.2, patience=10)
t0 = time.time()
params, log = train_model(ds.train_x, ds.train_mos, ds.val_x, ds.val_mos, cfg=cfg)
print(f"trained {len(log.rows)} epochs in {time.time() - t0:.0f}s")
for epoch, mse, val_rmse, val_pcc in log.rows:
    print(f"  epoch {epoch:2d}: train MSE {mse:6.3f}  val RMSE {val_rmse:5.3f}  val PCC {val_pcc:6.3f}")

preds = predict_batch(params, ds.val_x)
print(f"held-out speakers: PCC {pearson(preds, ds.val_mos):.3f}, "
      f"RMSE {rmse(preds, ds.val_mos):.3f}")

blob = save_checkpoint(params)
reloaded, _ = load_checkpoint(blob)
again = predict_batch(reloaded, ds.val_x)
print(f"checkpoint: {len(blob)} bytes, predictions identical after reload: "
      f"{bool((preds == again).all())}")
