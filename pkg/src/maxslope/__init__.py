"""Curves of maximal slope in metric spaces and changes of their exponent."""

from .analysis import (
    DiagnosticsReport,
    PositivityHorizon,
    TimeMap,
    annotate,
    arc_length_reparametrize,
    check_convexity_along_curve,
    check_energy_identity,
    check_lipschitz,
    check_regularizing_bounds,
    check_slope_monotone,
    detect_positivity_horizon,
    metric_derivative,
)
from .errors import (
    ConfigError,
    HypothesisError,
    InvalidPointError,
    MaxSlopeError,
    ProximalError,
    SpaceMismatchError,
    UnregisteredOracleError,
    WellPosednessError,
)
from .flow import SampledCurve, SolverConfig, oracle_flow, refine_until, solve_minimizing_movements
from .functional import (
    ConvexityProfile,
    DistanceToPoint,
    NegativeQuadratic,
    NormLike,
    Quadratic,
    moreau_envelope,
    proximal,
    slope_global_formula,
)
from .metric import Euclidean, EuclideanPoint, Tripod, TripodPoint, distance, geodesic_point, validate_point
from .transform import TransformResult, alpha, forward_time_map, invert_time_map, transform_curve, verify_duality

__version__ = "0.1.0"
