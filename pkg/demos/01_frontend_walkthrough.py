"""Walk a clip through the narrowband front-end.

Builds a 10 s synthetic speech clip, computes the log-mel spectrogram and
the standardized segment tensors the model consumes, and prints every
shape along the way.
"""

import numpy as np

from telmos.dsp import DEFAULT_FRONTEND, clip_to_segments, mel_spectrogram, speech_activity
from telmos.synth import synth_speech

clip = synth_speech(seconds=10.0, speaker_seed=1, clip_seed=2)
print(f"clip: {len(clip.samples)} samples @ {clip.sample_rate_hz} Hz "
      f"({clip.duration_s:.1f} s)")

activity = speech_activity(clip)
print(f"active speech level: {activity.active_speech_level_db:+.2f} dBov, "
      f"activity factor {activity.activity_factor:.3f}")

mel = mel_spectrogram(clip)
print(f"mel spectrogram: {mel.shape[0]} frames x {mel.shape[1]} bands "
      f"(window {DEFAULT_FRONTEND.fft_window_ms:.0f} ms, hop {DEFAULT_FRONTEND.hop_ms:.0f} ms)")
print(f"  value range: [{mel.min():.2f}, {mel.max():.2f}] log10 power")

segments = clip_to_segments(clip)
print(f"segments: {segments.n_seg} patches of shape {segments.data.shape[1:]} "
      f"(width {DEFAULT_FRONTEND.segment_width} frames, hop {DEFAULT_FRONTEND.segment_hop})")
print(f"  per-patch mean ~0: {np.abs(segments.data.mean(axis=(1, 2, 3))).max():.2e}")
print(f"  per-patch sd  ~1: {segments.data.std(axis=(1, 2, 3)).mean():.4f}")
