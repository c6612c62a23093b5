"""Synchronous base-band CDMA uplink simulator.

Implements the conventional matched-filter detector, the multistage NLMS
partial parallel interference canceller, and its parallel step-size-bank
variant, together with balanced, unbalanced, and time-varying Rayleigh channel
models and a Monte-Carlo BER harness.
"""

from .channels import (
    DEFAULT_NUM_SINUSOIDS,
    DEFAULT_TAP_DELAYS_S,
    DEFAULT_TAP_GAINS_DB,
    ChannelRealization,
    FadingState,
    balanced_realization,
    db_to_linear,
    fading_step,
    make_fading_state,
    unbalanced_realization,
)
from .detectors import (
    DEFAULT_STEP_FACTORS,
    DetectorResult,
    RegressorFrame,
    StageOutput,
    StepSizeSet,
    WeightVector,
    build_regressor_frame,
    cancel_residual,
    conventional_detect,
    nlms_iteration,
    plms_iteration,
    run_detector,
    run_stage,
    scaled_step_set,
    stage_decide,
    step_size_bound,
    uniform_step_grid,
    unit_deviation,
)
from .harness import (
    BerRecord,
    ConfigError,
    ExperimentConfig,
    dump_weight_trajectories,
    example_preset,
    parse_config_file,
    run_experiment,
    run_selftest,
    write_results_csv,
)
from .signals import (
    PnCode,
    ReceivedFrame,
    UserSignature,
    generate_pn_codes,
    make_signature,
    signature_matrix,
    snr_to_noise_variance,
    synthesize_received,
)

__version__ = "0.1.0"
