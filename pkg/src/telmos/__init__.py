"""telmos: no-reference narrowband speech quality estimation.

Predicts the mean opinion score (MOS) of degraded 8 kHz call audio from
log-mel spectrogram segments with a small convolutional + bidirectional
recurrent network implemented on plain numpy, and ships the data
preparation, metrics, and experiment harness around it.
"""

from . import audio, dataprep, dsp, errors, evaluation, harness, nn, synth
from .audio import AudioClip, crop_clip, decode_wav, encode_wav, read_wav, resample_to_8k, write_wav
from .dataprep import (
    Manifest,
    ManifestEntry,
    MosLabel,
    RatingRecord,
    aggregate_mos,
    extract_clip,
    mix_noise,
    sample_uniform_subset,
    simulate_ratings,
    split_by_speaker,
    subsample_ratings,
)
from .dsp import (
    ActivityResult,
    FrontendConfig,
    MelSegments,
    clip_to_segments,
    mel_spectrogram,
    segment,
    speech_activity,
)
from .evaluation import (
    EvalReport,
    TTestResult,
    evaluate,
    paired_ttest,
    pearson,
    rmse,
    uniform_subset_eval,
)
from .harness import (
    CroppingPair,
    ExperimentConfig,
    SweepResult,
    run_cropping_study,
    run_experiment,
    run_group_matrix,
    run_ratings_sweep,
    run_size_sweep,
)
from .nn import (
    ModelArch,
    ModelParams,
    TrainConfig,
    init_params,
    load_checkpoint,
    model_forward,
    save_checkpoint,
    train_model,
)
from .rng import make_rng, mix_seed
from .synth import SynthSpec, build_dataset, synth_noise, synth_speech, true_mos_from_snr

__version__ = "0.1.0"
