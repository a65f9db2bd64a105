"""Kernel-based leading prediction strategies via defensive forecasting,
with a harness that certifies every stated identity and regret bound on
every run."""

from .protocol import (
    BINARY,
    INTERVAL,
    OutcomeSpace,
    PredictionStrategy,
    FunctionStrategy,
    ProtocolError,
    Reality,
    Situation,
    Trace,
    binary_space,
    interval_space,
    make_situation,
    markov_lift,
    replay_predictions,
    run_protocol,
    window,
)
from .kernels import (
    KernelError,
    KernelExpansion,
    SituationKernel,
    embedding_constant_estimate,
    expansion_eval,
    expansion_norm,
    gram,
    linear_window_kernel,
    rbf_window_kernel,
    scaled_to_norm,
    truncated_universal_kernel,
    window_vector,
)
from .losses import (
    BregmanLoss,
    LossError,
    LOGIT_WEIGHT_BOUND,
    ScoringRule,
    bregman_div,
    brier,
    decompose_ab,
    exposure,
    exposure_sup,
    extend,
    law_of_cosines_residual,
    log_loss,
    logit_weight_grid_max,
    negative_entropy_loss,
    quadratic_loss,
    rule_divergence,
    validate_bregman,
    validate_scoring,
)
from .engine import (
    EngineError,
    EngineState,
    ForecastFeatureMap,
    K29,
    K29_STAR,
    RoundDecision,
    brute_force_potential_sq,
    crossing_coefficients,
    crossing_function,
    k29_round,
    k29star_round,
    potential_update,
)
from .leaders import (
    FAMILY_BREGMAN,
    FAMILY_LOGLOSS,
    FAMILY_QUADRATIC,
    FAMILY_SCORING,
    Benchmark,
    Leader,
    LeaderError,
    LeaderSpec,
    bregman_leader,
    declared_benchmark,
    direct_benchmark,
    linked_benchmark,
    logloss_leader,
    make_leader,
    quadratic_leader,
    scoring_leader,
)
from .generators import (
    ADVERSARIAL_SIGN,
    AR1_CLIPPED,
    GENERATOR_KINDS,
    IID_UNIFORM,
    SINUSOID,
    STOCHASTIC_TRUTH,
    Generator,
    make_generator,
    random_situations,
)
from .bench import (
    BenchError,
    BoundReport,
    GapSeries,
    JeffreysResult,
    MonteCarloResult,
    ProximityReport,
    bound_rhs,
    check_bound,
    hoeffding_check,
    hoeffding_rhs,
    jeffreys_experiment,
    jeffreys_rhs,
    mixing_identity_check,
    mixing_identity_residual,
    pure_jeffreys_check,
    quadratic_dual_reports,
    random_benchmarks,
    random_expansion,
    run_and_report,
    three_term_gap,
)
from .config import ConfigError, Experiment, assemble, load_config, parse_config_text

__all__ = [name for name in dir() if not name.startswith("_")]

