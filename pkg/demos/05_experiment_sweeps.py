"""Desk-scale experiment sweeps.

Runs a miniature ratings-count sweep, a training-size sweep, and the
cropping study on synthetic data, then prints the aggregate curves. Uses
deliberately tiny grids; real runs scale the same configs up.

Takes several minutes on a laptop-class CPU.
"""

from telmos.harness import (
    ExperimentConfig,
    run_cropping_study,
    run_experiment,
)
from telmos.nn.train import TrainConfig
from telmos.synth import SynthSpec

train = TrainConfig(lr=1e-3, batch_size=32, max_epochs=6, dropout_rate=0.2, patience=0)
data = SynthSpec(n_clips=100, n_speakers=20, n_val_speakers=4, clip_seconds=1.5,
                 n_ratings=8, rater_sd=0.5)

print("ratings-count sweep (k = 1 vs 8, two repeats):")
cfg = ExperimentConfig(kind="ratings_sweep", repeats=2, ratings_grid=[1, 8],
                       base_seed=11, train=train, data=data)
res = run_experiment(cfg)
for x, mean in sorted(res.mean_pcc_by_x().items()):
    print(f"  k={x}: mean val PCC {mean:.3f}")

print("\ntraining-size sweep (20 vs 80 files, two repeats):")
cfg = ExperimentConfig(kind="size_sweep", repeats=2, size_grid=[20, 80],
                       base_seed=12, train=train, data=data)
res = run_experiment(cfg)
for x, mean in sorted(res.mean_pcc_by_x().items()):
    print(f"  {x} files: mean val PCC {mean:.3f}")

print("\ncropping study (no true effect, 15 pairs):")
cfg = ExperimentConfig(kind="cropping", base_seed=13,
                       cropping={"n_pairs": 15, "mos_delta": 0.0,
                                 "rater_sd": 0.8, "n_ratings": 20})
res = run_experiment(cfg)
print(f"  t={res.t:+.3f}, df={res.df}, p={res.p_two_tailed:.3f} "
      f"(no significant difference expected)")

print("\ncropping study (true -1.0 MOS effect):")
cfg = ExperimentConfig(kind="cropping", base_seed=13,
                       cropping={"n_pairs": 15, "mos_delta": -1.0,
                                 "rater_sd": 0.3, "n_ratings": 20})
res = run_experiment(cfg)
print(f"  t={res.t:+.3f}, df={res.df}, p={res.p_two_tailed:.2e} "
      f"(strong effect expected)")
