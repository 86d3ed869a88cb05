"""Sampler-agnostic step skipping for diffusion ODE trajectories.

Skipped steps substitute a finite-difference extrapolation of recent noise
residuals for the model call, leaving each sampler's update rule unchanged.
"""

from .errors import (
    ConfigError,
    EpskipError,
    HistoryError,
    NumericDivergenceError,
    ScheduleError,
    SkipParseError,
    UndefinedLogSnrError,
)
from .extrapolation import (
    PREDICTOR_ORDERS,
    REQUIRED_HISTORY,
    EpsilonHistory,
    EpsilonRecord,
    predict_h2,
    predict_h3,
    predict_h4,
    predict_with_fallback,
)
from .harness import (
    MatrixConfig,
    build_model,
    build_schedule,
    load_matrix_config,
    matrix_from_dict,
    run_experiment_matrix,
    write_step_csv,
)
from .metrics import (
    RunComparison,
    gaussian_window,
    mae,
    nfe_reduction,
    rmse,
    ssim,
    time_saved,
)
from .models import (
    DEFAULT_LATENT_SHAPE,
    CountingDenoiser,
    Denoiser,
    GaussianMixtureDenoiser,
    ScriptedDenoiser,
    gm_exact_solution,
    initial_latent,
)
from .samplers import (
    SAMPLER_KINDS,
    Res2mCoefficients,
    SamplerMemory,
    ab2_step,
    ab2_step_eps,
    apply_step,
    ddim_step,
    ddim_step_eps,
    euler_step,
    euler_step_eps,
    phi1,
    phi2,
    preview_skip_state,
    res2m_coefficients,
    res2m_step,
    res2m_step_eps,
)
from .schedules import (
    DEFAULT_SIGMA_MAX,
    DEFAULT_SIGMA_MIN,
    Schedule,
    compose_two_stage,
    log_snr_step,
    make_karras_schedule,
    make_simple_schedule,
)
from .skip import (
    GATES,
    SKIP_MODES,
    GuardState,
    SkipConfig,
    StepDecision,
    adaptive_skip_decision,
    adaptive_state_space_gate,
    decide_step,
    fixed_skip_decision,
    parse_explicit_skips,
    rms,
    update_guard,
)
from .stabilize import (
    STABILIZER_MODES,
    LearningState,
    StabilizerConfig,
    ValidationOutcome,
    grad_est_correction,
    learning_apply,
    learning_observe,
    res_magnitude_guard,
    validate_epsilon,
)
from .trajectory import RunConfig, RunReport, StepLog, latent_digest, run_trajectory

__version__ = "0.1.0"
