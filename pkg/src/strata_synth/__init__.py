"""
Synthetic control estimation of direct, total and spillover effects under
neighbourhood interference.

Units are stratified by their own treatment and their neighbours' exposure;
each estimand gets its own donor pool and a ridge-augmented synthetic
control. Conformal test inversion gives per-period p-values and intervals,
and a Monte Carlo harness checks bias and coverage on simulated panels.
"""

from types import ModuleType as _ModuleType

from .conformal import ConformalConfig, ConformalResult, conformal_interval, conformal_pvalue, pvalue_from_residuals
from .effects import (
    EffectSeries,
    EstimationConfig,
    EstimationFailure,
    EstimationReport,
    estimate_all,
    estimate_direct,
    estimate_naive,
    estimate_spillover,
    estimate_total,
)
from .errors import (
    AsymmetricAdjacency,
    EmptyDonorPool,
    GridEndpointWarning,
    MismatchedSeries,
    NoAcceptedPoint,
    NonFiniteInput,
    PanelFormatError,
    ScalingWarning,
    SingularGram,
    SmallDonorPool,
    StrataSynthError,
    StratumMismatch,
)
from .io import load_panel, write_adjacency, write_panel, write_treatment
from .panel import (
    AdjacencyGraph,
    DonorPool,
    ExposureTable,
    PanelData,
    PoolKind,
    Stratum,
    TreatmentSchedule,
    build_donor_pool,
    compute_exposure,
)
from ._parallel import worker_count
from .simulation import (
    DgpConfig,
    StudyConfig,
    StudyReport,
    estimation_config,
    generate,
    make_graph,
    run_replication,
    run_study,
    scenario_name,
)
from .solver import (
    FeatureBlock,
    FitDiagnostics,
    RidgeFit,
    WeightVector,
    assemble_features,
    augmented_weights,
    diagnostics,
    imbalance_term,
    ridge_fit,
    scm_weights,
    select_lambda,
    simplex_project,
)

__version__ = "0.1.0"

__all__ = [n for n, v in list(globals().items()) if not n.startswith("_") and not isinstance(v, _ModuleType)]
