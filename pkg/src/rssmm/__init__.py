"""Trajectory reconstruction on road networks from RSS measurements.

Pipeline: simulate (or ingest) per-slot RSS readings, roughly localize
with a speed-constrained recovery, then alternate closed-form model
fitting with two-stage graph decoding; evaluate with RMSE (QLE) and route
mismatch (TME) metrics.
"""

from .core import (
    BaseStation,
    DomainError,
    InfeasibleEta,
    RssmmError,
    RssObservation,
    RssObservationSequence,
    SolverConfig,
    Trajectory,
    index_stations,
    lambert_w_minus1,
    speed_variance_from_eta,
)
from .decoder import (
    DecodedPath,
    DecodeProblem,
    NoFeasiblePath,
    TwoStageSpec,
    decode_single_stage,
    decode_two_stage,
)
from .evaluation import EvaluationReport, baseline_mar, baseline_wcl, evaluate, qle, tme
from .mobility import (
    AdaptiveMobilityModel,
    FixedMobilityModel,
    fit_mobility,
    group_time_slots,
    normalized_signal_differences,
    transition_log_prob_adaptive,
    transition_log_prob_fixed,
)
from .msr import (
    MsrProblem,
    MsrSolution,
    anchor_estimates_nearest,
    anchor_estimates_weighted,
)
from .msr import solve as msr_solve
from .optimizer import HreaResult, HreResult, joint_log_likelihood, run_hre, run_hrea
from .propagation import (
    LabeledRssSet,
    PathLossParams,
    PropagationModel,
    fit_propagation,
    label_observations,
    observation_log_prob,
    predict_rss,
)
from .road_graph import (
    Corridor,
    RoadGraph,
    RoadNetwork,
    build_corridor,
    build_nodes,
    build_transition_edges,
    routine_distance,
)
from .simulator import Scenario, apply_missing, gen_drive, gen_network, gen_scenario, \
    sample_rss

__version__ = "0.1.0"
