"""Random walks among random conductances in Z^d, conditioned to keep a
positive first coordinate, and verification of their scaling limit: a
Brownian meander times an independent (d-1)-dimensional Brownian motion.

Layers: `environment` (quenched conductances and manifests), `walk`
(simulation and exact kernels), `conditioning` (rejection and exact
conditioned samplers, survival asymptotics), `meander` (limit-law
analytics and reference samplers), `scaling` (rescaling and whitening),
`verify` (statistical checks), `report` (results and table export), and
`cli` (command-line entry points).
"""

from .conditioning import (
    ConditionedSampleSet,
    HittingStats,
    SurvivalRatio,
    backward_sample,
    conditional_hitting_stats,
    exact_conditioned_endpoint,
    exact_survival,
    exact_survival_series,
    rejection_sample,
    survival_curve,
    survival_ratio_check,
    survival_slope,
)
from .environment import (
    Constant,
    EdgeId,
    Environment,
    EnvironmentManifest,
    IidTwoPoint,
    IidUniform,
    Periodic,
    canonical_edge,
    conductance,
    conductance_batch,
    environment,
    incident_conductances,
    load_manifest,
    make_generator,
    pi,
    read_manifest,
    save_manifest,
    shift,
    write_manifest,
)
from .errors import (
    BudgetExhaustedError,
    ConfigError,
    DataError,
    DomainError,
    FactorizationError,
    IllConditionedError,
    InvalidEdgeError,
    ManifestError,
    MeanderWalkError,
    ParameterError,
    QuadratureError,
    ResourceLimitError,
    SingularQueryError,
    TableNotFoundError,
    UnsupportedOrderError,
)
from .meander import (
    FddQuery,
    endpoint_survival,
    fdd_probability,
    g_kernel,
    meander_cdf_from_origin,
    meander_density,
    meander_density_from_origin,
    rayleigh_cdf,
    sample_meander,
    sample_meander_batch,
    sample_product_law,
    single_time_box_probability,
    tilde_N,
)
from .quadrature import cumulative_simpson, integrate
from .report import CheckResult, ExperimentReport, matrix_block
from .scaling import (
    DiffusivityEstimate,
    ScaledPath,
    WhiteningMap,
    build_whitening,
    estimate_sigma,
    evaluate_scaled,
    rescale,
)
from .verify import (
    KsResult,
    dither_lattice,
    fdd_check,
    heatkernel_envelope,
    ks_test,
    lemma_probe,
    main_theorem_check,
    null_calibration,
    tightness_check,
    uclt_check,
)
from .walk import (
    BallComplement,
    Hyperplane,
    HyperplaneUnion,
    KernelTable,
    PointSet,
    TargetSet,
    WalkPath,
    exact_kernel,
    first_hit_competition,
    hitting_time,
    simulate,
    simulate_endpoints,
    simulate_paths,
    simulate_surviving_paths,
    step_distribution,
)

__version__ = "0.1.0"
