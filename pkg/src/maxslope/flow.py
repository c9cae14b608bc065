"""Sampled curves and two ways of producing p-curves of maximal slope.

``solve_minimizing_movements`` iterates the proximal map on a uniform time
grid; ``oracle_flow`` samples a closed-form flow on an arbitrary grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import UnregisteredOracleError, WellPosednessError
from .functional import (
    DistanceToPoint,
    Functional,
    NegativeQuadratic,
    NormLike,
    Quadratic,
    check_step,
    proximal,
)
from .metric import EuclideanPoint, MetricSpace, Point

EPS_CRIT = 1e-8
BLOW_UP_RADIUS = 1e6


@dataclass(frozen=True, eq=False)
class SampledCurve:
    """A curve known at a strictly increasing grid of times starting at 0.

    ``f_values``, ``slopes`` and ``metric_derivatives`` are optional caches
    aligned with ``times``; see :func:`maxslope.analysis.annotate`.
    """

    space: MetricSpace
    times: np.ndarray
    points: tuple
    p: float
    functional: str | None = None
    tau: float | None = None
    flags: dict = field(default_factory=dict)
    f_values: np.ndarray | None = None
    slopes: np.ndarray | None = None
    metric_derivatives: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", tuple(self.points))
        if t.ndim != 1 or len(t) == 0:
            raise ValueError("times must be a non-empty 1-d array")
        if t[0] != 0.0:
            raise ValueError(f"times must start at 0, got {t[0]}")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        if len(self.points) != len(t):
            raise ValueError(f"{len(self.points)} points for {len(t)} times")
        for name in ("f_values", "slopes", "metric_derivatives"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                object.__setattr__(self, name, arr)
                if arr.shape != t.shape:
                    raise ValueError(f"{name} has length {len(arr)}, expected {len(t)}")

    def __len__(self):
        return len(self.times)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def at(self, t: float) -> Point:
        """Point at time ``t`` by geodesic interpolation between samples."""
        times = self.times
        if t < 0.0 or t > times[-1] * (1 + 1e-12) + 1e-300:
            raise ValueError(f"t={t} outside [0, {times[-1]}]")
        i = int(np.searchsorted(times, t, side="right")) - 1
        if i >= len(times) - 1:
            return self.points[-1]
        t0, t1 = times[i], times[i + 1]
        if t == t0:
            return self.points[i]
        theta = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        return self.space.geodesic_point(self.points[i], self.points[i + 1], theta)

    def sample(self, ts) -> list:
        return [self.at(float(t)) for t in ts]

    def coords(self) -> np.ndarray:
        """``(N, n)`` array of coordinates (Euclidean curves only)."""
        return np.array([pt.coords for pt in self.points], dtype=float)

    def with_flags(self, **flags) -> "SampledCurve":
        return replace(self, flags={**self.flags, **flags})


@dataclass(frozen=True)
class SolverConfig:
    tau: float
    horizon: float
    max_steps: int = 1_000_000
    stop_on_critical: bool = False
    blow_up_radius: float = BLOW_UP_RADIUS
    eps_crit: float = EPS_CRIT

    def __post_init__(self):
        if not self.tau > 0 or not self.horizon > 0:
            raise ValueError("tau and horizon must be positive")
        if not self.blow_up_radius > 0:
            raise ValueError("blow_up_radius must be positive")
        if self.n_steps > self.max_steps:
            raise ValueError(f"horizon/tau = {self.n_steps} exceeds max_steps = {self.max_steps}")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.horizon / self.tau + 1e-9))


def solve_minimizing_movements(f: Functional, p: float, u0: Point, cfg: SolverConfig) -> SampledCurve:
    """Minimizing-movements scheme ``v_{k+1} = prox_{tau}(v_k)`` on ``t_k = k tau``.

    Stops early when the iterate leaves the ball of radius
    ``cfg.blow_up_radius`` around ``u0`` (flag ``blow_up``) or, if
    ``cfg.stop_on_critical``, when the slope drops below ``cfg.eps_crit``.
    """
    check_step(f, p, cfg.tau)
    f.check(u0)
    pts = [u0]
    fvals = [f.value(u0)]
    slopes = [f.slope(u0)]
    blow_up = critical = False
    if cfg.stop_on_critical and slopes[0] < cfg.eps_crit:
        critical = True
    else:
        v = u0
        for _ in range(cfg.n_steps):
            v = proximal(f, p, cfg.tau, v)
            pts.append(v)
            fvals.append(f.value(v))
            slopes.append(f.slope(v))
            if f.space.distance(u0, v) > cfg.blow_up_radius:
                blow_up = True
                break
            if cfg.stop_on_critical and slopes[-1] < cfg.eps_crit:
                critical = True
                break
    times = cfg.tau * np.arange(len(pts))
    return SampledCurve(
        f.space,
        times,
        pts,
        p,
        functional=f.tag,
        tau=cfg.tau,
        flags={"source": "minimizing_movements", "blow_up": blow_up, "critical_stop": critical},
        f_values=np.array(fvals),
        slopes=np.array(slopes),
    )


# ---------------------------------------------------------------------------
# closed-form flows
#
# Every built-in below is radial, so the flow moves along a fixed ray and the
# energy identity |u'|^p = |d^- f|^q reduces to a scalar ODE for the distance
# rho(t) to the centre, with r = 1/(p-1):
#   quadratic (scale c):   rho' = -(c rho)^r
#   negative quadratic:    rho' =  rho^r
#   norm-like, distance:   rho' = -1   (until the minimiser is reached)
# ---------------------------------------------------------------------------


def _quadratic_radius(rho0, t, p, c):
    r = 1.0 / (p - 1.0)
    if rho0 == 0.0:
        return np.zeros_like(t)
    if p == 2.0:
        return rho0 * np.exp(-c * t)
    k = c**r
    if r < 1.0:  # p > 2: extinction in finite time
        base = rho0 ** (1.0 - r) - (1.0 - r) * k * t
        return np.maximum(base, 0.0) ** (1.0 / (1.0 - r))
    return (rho0 ** (1.0 - r) + (r - 1.0) * k * t) ** (-1.0 / (r - 1.0))


def _negative_quadratic_radius(rho0, t, p):
    r = 1.0 / (p - 1.0)
    if p == 2.0:
        return rho0 * np.exp(t)
    if r < 1.0:  # p > 2: also defined from rho0 = 0
        return (rho0 ** (1.0 - r) + (1.0 - r) * t) ** (1.0 / (1.0 - r))
    if rho0 == 0.0:
        return np.zeros_like(t)
    t_blow = rho0 ** (1.0 - r) / (r - 1.0)
    if np.max(t) >= t_blow:
        raise ValueError(f"grid reaches the blow-up time {t_blow:.6g} of this flow")
    return (rho0 ** (1.0 - r) - (r - 1.0) * t) ** (-1.0 / (r - 1.0))


def _direction(x: np.ndarray, theta: float | None, direction) -> np.ndarray | None:
    n = float(np.linalg.norm(x))
    if n > 0.0:
        return x / n
    if direction is not None:
        d = np.asarray(direction, float)
        return d / np.linalg.norm(d)
    if theta is None:
        return None
    if len(x) == 1:
        return np.array([1.0 if math.cos(theta) >= 0 else -1.0])
    e = np.zeros(len(x))
    e[0], e[1] = math.cos(theta), math.sin(theta)
    return e


def _radial_points(centre: np.ndarray, e: np.ndarray | None, rho: np.ndarray) -> list:
    if e is None:
        return [EuclideanPoint(tuple(centre))] * len(rho)
    return [EuclideanPoint(tuple(centre + r * e)) for r in rho]


def oracle_flow(
    f: Functional,
    p: float,
    u0: Point,
    grid,
    theta: float | None = None,
    direction=None,
) -> SampledCurve:
    """Sample the closed-form p-curve of maximal slope of ``f`` from ``u0``.

    Registered: quadratic (any p), negative quadratic (p = 2 from any
    point; p > 2 from any point, with ``theta``/``direction`` choosing the
    ray when starting at the origin; p < 2 before blow-up), norm-like and
    tripod distance (any p, unit speed until the minimiser).
    """
    if not p > 1:
        raise ValueError(f"exponent p must be > 1, got {p}")
    f.check(u0)
    t = np.asarray(grid, dtype=float)
    if isinstance(f, Quadratic):
        x = u0.as_array() - f.center
        rho = _quadratic_radius(float(np.linalg.norm(x)), t, p, f.scale)
        pts = _radial_points(f.center, _direction(x, None, None), rho)
    elif isinstance(f, NegativeQuadratic):
        x = u0.as_array()
        rho0 = float(np.linalg.norm(x))
        e = _direction(x, theta if p > 2.0 else None, direction if p > 2.0 else None)
        if rho0 == 0.0 and p > 2.0 and e is None:
            e = _direction(x, 0.0, None)
        rho = _negative_quadratic_radius(rho0, t, p)
        pts = _radial_points(np.zeros(len(x)), e, rho)
    elif isinstance(f, NormLike):
        x = u0.as_array()
        rho = np.maximum(float(np.linalg.norm(x)) - t, 0.0)
        pts = _radial_points(np.zeros(len(x)), _direction(x, None, None), rho)
    elif isinstance(f, DistanceToPoint):
        D = f.space.distance(u0, f.anchor)
        if D == 0.0:
            pts = [u0] * len(t)
        else:
            pts = [f.space.geodesic_point(u0, f.anchor, min(s / D, 1.0)) for s in t]
    else:
        raise UnregisteredOracleError(f"no closed-form flow registered for {f.tag}")
    flags = {"source": "oracle"}
    if theta is not None:
        flags["theta"] = float(theta)
    return SampledCurve(f.space, t, pts, p, functional=f.tag, flags=flags)


def refine_until(
    f: Functional,
    p: float,
    u0: Point,
    cfg: SolverConfig,
    target_residual: float,
    tau_floor: float = 1e-7,
    max_halvings: int = 30,
) -> SampledCurve:
    """Halve ``tau`` until the energy-identity residual drops below the target.

    The finest curve is returned with flags ``refine_residual``,
    ``refine_converged`` and ``refine_history`` (list of ``(tau, residual)``).
    A blow-up stops the refinement immediately.
    """
    from .analysis import check_energy_identity

    history = []
    tau = cfg.tau
    for _ in range(max_halvings + 1):
        n_steps = int(math.floor(cfg.horizon / tau + 1e-9))
        step_cfg = replace(cfg, tau=tau, max_steps=max(cfg.max_steps, n_steps))
        curve = solve_minimizing_movements(f, p, u0, step_cfg)
        if curve.flags.get("blow_up"):
            return curve.with_flags(refine_residual=math.inf, refine_converged=False, refine_history=history)
        if len(curve) < 3:
            return curve.with_flags(refine_residual=0.0, refine_converged=True, refine_history=history)
        residual = check_energy_identity(curve, f, p).max_residual
        history.append((tau, residual))
        if residual < target_residual:
            return curve.with_flags(refine_residual=residual, refine_converged=True, refine_history=history)
        if tau / 2.0 < tau_floor:
            break
        tau /= 2.0
    return curve.with_flags(refine_residual=residual, refine_converged=False, refine_history=history)


__all__ = [
    "EPS_CRIT",
    "SampledCurve",
    "SolverConfig",
    "WellPosednessError",
    "oracle_flow",
    "refine_until",
    "solve_minimizing_movements",
]
