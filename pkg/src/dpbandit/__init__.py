"""Differentially private K-armed bandits under three trust models.

A library and CLI for batch-based successive elimination behind pluggable
discrete-noise privacy protocols (distributed, local, central), exact
privacy accountants, and a reproducible regret experiment harness.
"""

from .accountant import (
    PrivacyReport,
    RdpCurve,
    advanced_composition,
    cdp_discrete_gaussian,
    pure_dp_to_rdp,
    rdp_skellam,
    rdp_skellam_batch,
    rdp_to_approx_dp,
    report_privacy,
    returning_users_variance,
    skellam_rdp_curve,
)
from .bandit import (
    BanditInstance,
    BernoulliExact,
    NoiseScale,
    RegretTrace,
    TruncatedGaussian,
    confidence_radius,
    noise_scale_constants,
    pseudo_regret,
    run_batched_se,
    run_dp_se_baseline,
)
from .errors import (
    ConfigError,
    DpBanditError,
    HorizonTooSmall,
    InvalidParams,
    SchemaError,
    UnsupportedCombination,
)
from .experiments import (
    AlgorithmSpec,
    ExperimentConfig,
    ResultRow,
    generate_instance,
    read_csv,
    run_experiment,
    write_csv,
)
from .noise import (
    DiscreteGaussianParams,
    DiscreteLaplaceParams,
    PolyaParams,
    SkellamParams,
    discrete_laplace_tail,
    sample_discrete_gaussian,
    sample_discrete_laplace,
    sample_polya,
    sample_skellam,
    skellam_tail_radius,
)
from .protocol import (
    AggregateView,
    Mechanism,
    ProtocolParams,
    TrustModel,
    analyze,
    audit_llr,
    derive_protocol_params,
    encode_reward,
    end_to_end_batch_sum,
    randomize,
    relaxed_secagg,
    secagg,
)
from .rng import RngStream

__version__ = "0.1.0"
