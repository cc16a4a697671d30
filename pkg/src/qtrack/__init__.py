"""Adaptive tracking control of a two-tap stochastic regression plant observed
through a multi-threshold quantizer.

The closed loop is: weighted sensor levels drive a projected
stochastic-approximation identifier, whose estimate feeds a
certainty-equivalence inverse controller.
"""
__version__ = "0.1.0"

from .analysis import ProblemConstants, check_reference_excitation, derive_constants, f_star, lambda_min_2x2
from .backend import BACKEND
from .controller import ControllerState, adaptive_control, closed_loop_step, oracle_control
from .errors import QtrackError, TrialDiverged, ValidationError
from .estimator import EstimatorState, estimation_error, predicted_weight, update
from .harness import (
    ExperimentConfig,
    MonteCarloSummary,
    TrialRecord,
    empirical_excitation_trace,
    fit_loglog_slope,
    paper_config,
    run_montecarlo,
    run_trial,
)
from .model import (
    NoiseModel,
    OmegaSet,
    ParamVec,
    QuantizerSpec,
    ReferenceSignal,
    Regressor,
    min_phase_margin,
    project,
    validate_quantizer,
)
from .plant import PlantState, output, quantize, weighted_observation
