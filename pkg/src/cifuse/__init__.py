"""Multi-sensor target tracking and covariance-intersection data fusion.

Monitoring nodes run Rao-Blackwellized particle trackers (one-target or
unknown target count) over cluttered scans; processing nodes fuse the
resulting Gaussian estimates with covariance intersection, including the
detection-probability-aware modified variants for non-homogeneous networks.
"""

from .config import (
    ConfigError,
    NetworkTopology,
    NodeSpec,
    ProcessorSpec,
    ScenarioConfig,
    TargetSpec,
    builtin_config_path,
    load_config,
    save_config,
)
from .fusion import (
    MixingWeights,
    NodeProfile,
    bci_fuse,
    ci_fuse,
    detection_scale_factors,
    expected_payoff,
    mbci_fuse,
    modified_ci_fuse,
    modified_precisions,
    optimize_omega_pair,
    optimize_omega_simplex,
)
from .gaussian import (
    ContinuousMotionModel,
    GaussianEstimate,
    MeasurementModel,
    MotionModel,
    coordinated_turn_model,
    discretize_ct_model,
    kf_likelihood,
    kf_predict,
    kf_update,
)
from .metrics import TrackRecord, count_accuracy, mncm, mse, sum_mse
from .network import (
    GroundTruth,
    RunRecord,
    ScanData,
    associate_estimates,
    generate_measurements,
    load_run,
    run_many,
    run_monitoring_node,
    run_network,
    run_processing_node,
    save_run,
    simulate_truth,
)
from .rbmcda import (
    BirthDeathModel,
    MultiTargetParticle,
    MultiTargetParticleSet,
    apply_deaths,
    birth_assoc_prior,
    death_probability,
    extract_tracks,
    initial_multi_target_set,
    rbmcda_step,
)
from .rbpf import (
    AssociationPrior,
    ClutterModel,
    Particle,
    ParticleSet,
    association_posterior,
    effective_sample_size,
    initial_particle_set,
    point_estimate,
    resample,
    rbpf_step,
)

__version__ = "0.1.0"
