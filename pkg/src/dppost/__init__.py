"""Constrained Bayesian post-processing of differentially private noisy tabulations."""

from ._kernels import backend_name
from .constraints import (
    coordinate_interval,
    find_feasible_start,
    is_feasible,
    load_constraints,
    ph5_system,
)
from .mechanisms import (
    add_noise,
    derive_seed,
    gaussian_sigma_from_moe,
    kl_matched_gaussian_variance,
    laplace_lambda_from_moe,
    log_kernel,
    spec_from_moe,
)
from .metrics import (
    IntervalEstimate,
    MetricsRow,
    evaluate,
    fieller_interval,
    posterior_ratio_summary,
    ratio_triple,
)
from .model import (
    ConstraintSystem,
    MechanismFamily,
    MechanismSpec,
    NoisyMeasurement,
    PosteriorDraws,
    RatioTriple,
    Tabulation,
    validate_dimensions,
)
from .samplers import (
    ChainConfig,
    KernelStream,
    effective_sample_size,
    gibbs_tmvn,
    mh_laplace,
    rejection_sample,
    sample_truncated_normal_1d,
)

__version__ = "0.1.0"
