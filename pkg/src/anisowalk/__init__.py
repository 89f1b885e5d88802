"""Monte Carlo simulation and statistical verification of two anisotropic
random walks on the square lattice: fixed periodic column profiles and
random column environments."""

from .environment import (
    ColumnField,
    ColumnProfile,
    EnvironmentLaw,
    c_at,
    column_prob,
    gamma_of,
    make_env_law,
    make_profile,
    sample_field,
)
from .harness import (
    ExperimentConfig,
    SummaryReport,
    checkpoint_indices,
    cli,
    config_to_dict,
    emit_report,
    load_config,
    main,
    parse_config,
    run_experiment,
)
from .rng import CounterStream, derive_keys, fmix64, u01, zig
from .statistics import (
    TestReport,
    TheoryTargets,
    anisotropy_ratio,
    brownian_max_test,
    cross_independence_test,
    ellipse_cloud,
    ks_critical,
    ks_statistic,
    lil_envelope,
    marginal_clt_test,
    msd,
    normal_cdf,
    normal_quantile,
    range_curve,
    residual_decay,
    return_probability,
    step_fractions,
    targets_of,
    time_integral_test,
)
from .walk import (
    Ensemble,
    Model,
    Skeleton,
    TrajectorySummary,
    WalkState,
    env_step,
    extract_skeletons,
    heyde_step,
    parse_model,
    run_ensemble,
    simulate,
    steps_from_moves,
)

__version__ = "0.1.0"
