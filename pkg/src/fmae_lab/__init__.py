"""Auditory-model emulation with a frequency-and-level-dependent training loss."""
from .audmodel import (
    Audiogram,
    CorpusAdapter,
    HearingProfile,
    InnerRepresentation,
    SurrogateCochlea,
    audiogram_to_profile,
    energy_distribution,
    model_forward,
    standard_audiogram,
)
from .emulator import AuditoryEmulator, run_network
from .evaluation import (
    ExcitationPattern,
    SerMatrix,
    delta_ser,
    excitation_pattern,
    export_report,
    log_mae_curve,
    ser,
    ser_matrix,
)
from .loss import fmae, mae, mse, normalize_target, recover_estimate
from .signals import (
    LevelGrid,
    Waveform,
    WindowSpec,
    build_level_dataset,
    measure_spl,
    normalize_to_spl,
    synth_speech_shaped_noise,
    window_with_context,
)
from .train import TrainingConfig, TrainingRun, compare_objectives, prepare_pairs, train_emulator
from .weights import WeightEstimator, WeightTable, estimate_weights, interp_alpha

__version__ = "0.1.0"
