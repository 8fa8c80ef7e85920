"""Mix noise into speech at controlled SNRs and verify the calibration.

For each noise type and target SNR, the script re-measures the achieved
ratio between active speech power and scaled noise power.
"""

import numpy as np

from telmos.audio import AudioClip
from telmos.dataprep import mix_noise
from telmos.dsp import speech_activity
from telmos.synth import NOISE_KINDS, synth_noise, synth_speech

speech = synth_speech(seconds=3.0, speaker_seed=4, clip_seed=5)

print(f"{'noise':>6} {'target':>7} {'measured':>9} {'peak scale':>11}")
for kind in NOISE_KINDS:
    noise = synth_noise(kind, seconds=2.0, seed=7)
    for snr in (0.0, 10.0, 20.0, 30.0, 40.0):
        mixed = mix_noise(speech, noise, snr, rng_seed=11)
        g = mixed.meta["noise_gain"] * mixed.meta["peak_scale"]
        idx = (mixed.meta["noise_offset"] + np.arange(len(speech.samples))) % len(noise.samples)
        scaled_noise = noise.samples[idx] * g
        scaled_speech = speech.samples * mixed.meta["peak_scale"]
        level = speech_activity(AudioClip(scaled_speech)).active_speech_level_db
        measured = level - 10.0 * np.log10(np.mean(scaled_noise**2))
        print(f"{kind:>6} {snr:6.1f}dB {measured:8.3f}dB {mixed.meta['peak_scale']:11.4f}")
