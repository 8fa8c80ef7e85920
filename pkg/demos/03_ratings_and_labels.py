"""Rating panels and MOS labels.

Simulates rater panels of varying size, aggregates them into MOS labels
with confidence intervals, subsamples rating counts, and draws a
bin-uniform subset the way the resampled evaluation does.
"""

import numpy as np

from telmos.dataprep import (
    MosLabel,
    aggregate_mos,
    sample_uniform_subset,
    simulate_ratings,
    subsample_ratings,
)

print("panel size vs confidence interval (true MOS 3.2, rater sd 0.8):")
for n in (1, 2, 5, 10, 30):
    labels = []
    for seed in range(200):
        rec = simulate_ratings(3.2, n, 0.8, seed)
        labels.append(aggregate_mos(rec))
    mos = np.mean([l.mos for l in labels])
    ci = np.mean([l.ci95 for l in labels])
    print(f"  n={n:2d}: mean MOS {mos:.3f}, mean ci95 {ci:.3f}")

print("\nsubsampling ratings from one 8-vote panel:")
rec = simulate_ratings(2.8, 8, 0.8, 123)
rec.clip_id = "demo"
print(f"  full panel {rec.ratings} -> MOS {aggregate_mos(rec).mos:.3f}")
for k in (1, 3, 5, 8):
    draws = [subsample_ratings(rec, k, seed).mos for seed in range(400)]
    print(f"  k={k}: subsampled MOS mean {np.mean(draws):.3f}, sd {np.std(draws):.3f}")

print("\nbin-uniform subset draw (13 per MOS bin):")
rng = np.random.default_rng(9)
labels = [MosLabel(f"clip{i:03d}", float(rng.uniform(1.0, 5.0)), 0.1, 5) for i in range(300)]
ids = sample_uniform_subset(labels, rng_seed=17)
by_id = {l.clip_id: l.mos for l in labels}
chosen = np.array([by_id[c] for c in ids])
for lo, hi in ((1.5, 2.5), (2.5, 3.5), (3.5, 4.5)):
    inside = ((chosen >= lo) & (chosen < hi + (0.001 if hi == 4.5 else 0))).sum()
    print(f"  [{lo}, {hi}): {inside} files")
print(f"  total {len(ids)} files")
