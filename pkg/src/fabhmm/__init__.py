"""Factorized asymptotic Bayesian inference for hidden Markov models."""
from ._debug import check_invariants
from .baselines import SweepResult, bic_score, fit_em, sweep_bic
from .core import (
    CATEGORICAL,
    GAUSSIAN,
    EmissionModel,
    HmmParams,
    Posterior,
    SequenceSet,
    brute_force_posterior,
    forward_backward,
    log_emission,
    loglik,
    sample,
)
from .data import GROUND_TRUTH, GroundTruthSpec, gen_synthetic, ingest_text
from .estimators import BICHMM, FABHMM, MLHMM
from .evaluation import ExperimentPlan, ExperimentReport, predictive_loglik, run_experiment
from .exceptions import DomainError, FabHmmError, InstanceTooLargeError, NumericalDegeneracyError
from .fab import (
    DeltaRegularizer,
    FitConfig,
    FitReport,
    OccupancyStats,
    compute_delta,
    compute_fic_lb,
    fab_m_step,
    fab_v_step,
    fit_fab,
    shrink,
)

__version__ = "0.1.0"
