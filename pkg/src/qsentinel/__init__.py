"""Task-relevant trajectory-prediction failure monitoring.

A rank test flags a planning cycle when the observed cost reaches the
(M-n)-th smallest of M sampled predicted costs; exact binomial tails bound
its false-positive and false-negative rates and calibrate n without data.
The package adds a motion-primitive planner, a synthetic multi-modal
predictor, baseline detectors, a closed-loop scenario engine, and an ROC
evaluation harness.
"""

from .core import (
    AgentState,
    ControlInput,
    DetectionEvent,
    DetectorConfig,
    GaussianMixture,
    PredictionSet,
    Trajectory,
    normalize_heading,
    unicycle_step,
)
from .costs import CostBreakdown, CostContext, CostParams, proxy_cost, time_to_collision, total_cost
from .detector import (
    CostSampleSet,
    InfeasibleCalibrationError,
    QuantileOracleResult,
    calibrate,
    detect_step,
    fnr_bound,
    fpr_bound,
    qad_run,
    quantile_oracle,
)
from .planner import MotionPrimitive, PlannerConfig, PlanResult, enumerate_primitives, plan
from .predictor import ManeuverMode, gmm_log_density, sample_predictions, standard_mode
from .scenario import AnomalyInjection, Scenario, ScriptedAgent, StaticObstacle, load_suite, save_suite
from .simulate import ScenarioLog, SimConfig, run_scenario, run_suite
from .suite import generate_suite
from .evaluate import RocCurve, adaptive_replan_study, best_point, empirical_rates, roc

__version__ = "0.1.0"
