"""Diagnostics over sampled curves.

Metric derivatives, slopes, the positivity horizon ``t*``, arc-length
reparametrization and a set of grid-pointwise checkers.  Every checker is a
pure function returning a :class:`DiagnosticsReport`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import HypothesisError
from .flow import EPS_CRIT, SampledCurve
from .functional import ConvexityProfile, Functional, moreau_envelope, slope_global_formula


@dataclass
class DiagnosticsReport:
    name: str
    tolerance: float
    max_residual: float
    mean_residual: float
    violated_indices: list = field(default_factory=list)
    passed: bool = True
    details: dict = field(default_factory=dict)
    skipped: bool = False

    @classmethod
    def from_residuals(cls, name, residuals, tolerance, indices=None, details=None) -> "DiagnosticsReport":
        """Build a report; ``indices[i]`` is the curve node behind ``residuals[i]``."""
        if tolerance <= 0:
            raise ValueError("tolerance must be positive")
        r = np.asarray(residuals, dtype=float).ravel()
        if indices is None:
            indices = np.arange(len(r))
        indices = np.asarray(indices)
        if len(r) == 0:
            mx = mean = 0.0
            bad = []
        else:
            # NaN residuals count as violations
            r = np.where(np.isnan(r), np.inf, r)
            mx = float(np.max(r))
            mean = float(np.mean(r)) if np.all(np.isfinite(r)) else math.inf
            bad = sorted({int(i) for i in indices[r > tolerance]})
        return cls(name, float(tolerance), mx, mean, bad, mx <= tolerance, dict(details or {}))

    @classmethod
    def skip(cls, name, tolerance, reason) -> "DiagnosticsReport":
        return cls(name, float(tolerance), 0.0, 0.0, [], True, {"reason": reason}, skipped=True)

    @property
    def status(self) -> str:
        if self.skipped:
            return "skipped"
        return "passed" if self.passed else "failed"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "tolerance": self.tolerance,
            "max_residual": _json_float(self.max_residual),
            "mean_residual": _json_float(self.mean_residual),
            "passed": self.passed,
            "status": self.status,
            "violated_indices": list(self.violated_indices),
            "details": _jsonable(self.details),
        }


def _json_float(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _json_float(obj)
    return obj


@dataclass(frozen=True)
class PositivityHorizon:
    """Where the slope along a curve stops being positive.

    ``t_star`` is ``inf`` when the slope is still above ``eps`` at the final
    node.  Otherwise it is the first grid time after the last node with
    positive slope, and ``index`` is that node.
    """

    t_star: float
    stationary_tail: bool
    index: int | None
    last_positive: int

    @property
    def infinite(self) -> bool:
        return math.isinf(self.t_star)


@dataclass(frozen=True, eq=False)
class TimeMap:
    """Increasing piecewise-linear map between two time variables.

    ``knots_t`` are times of the source curve, ``knots_s`` their images.
    ``total_S`` is the image of ``total_t`` (the source horizon); either may
    be ``inf``.  ``alpha`` is the exponent of the time change, ``None`` for
    plain arc length.
    """

    knots_t: np.ndarray
    knots_s: np.ndarray
    total_S: float
    total_t: float
    alpha: float | None

    def __post_init__(self):
        t = np.asarray(self.knots_t, dtype=float)
        s = np.asarray(self.knots_s, dtype=float)
        object.__setattr__(self, "knots_t", t)
        object.__setattr__(self, "knots_s", s)
        if t.shape != s.shape or t.ndim != 1 or len(t) == 0:
            raise ValueError("knot arrays must be 1-d, non-empty and of equal length")
        if t[0] != 0.0 or s[0] != 0.0:
            raise ValueError("time maps start at 0")
        if len(t) > 1 and not (np.all(np.diff(t) > 0) and np.all(np.diff(s) > 0)):
            raise ValueError("time-map knots must be strictly increasing")
        if self.alpha is not None and not self.alpha < 1:
            raise ValueError(f"alpha must be < 1, got {self.alpha}")

    @property
    def degenerate(self) -> bool:
        return len(self.knots_t) == 1

    def __call__(self, t):
        """Forward map, linear between knots, clamped to the last knot."""
        return np.interp(t, self.knots_t, self.knots_s)

    def inverse(self, s):
        return np.interp(s, self.knots_s, self.knots_t)

    def invert(self) -> "TimeMap":
        a = self.alpha
        beta = None if a is None else -a / (1.0 - a)
        return TimeMap(self.knots_s, self.knots_t, self.total_t, self.total_S, beta)

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "total_S": _json_float(self.total_S),
            "total_t": _json_float(self.total_t),
            "n_knots": len(self.knots_t),
            "last_knot_t": float(self.knots_t[-1]),
            "last_knot_s": float(self.knots_s[-1]),
        }


# ---------------------------------------------------------------------------
# pointwise quantities
# ---------------------------------------------------------------------------


def _step_distances(curve: SampledCurve, gap: int = 1) -> np.ndarray:
    d = curve.space.distance
    pts = curve.points
    return np.array([d(pts[i], pts[i + gap]) for i in range(len(pts) - gap)])


def _endpoint_speed(d1: float, d2: float, h1: float, h2: float) -> float:
    """Second-order one-sided speed from distances ``d1``, ``d2`` at offsets ``h1 < h2``.

    Fits ``D(h) = a h + b h^2`` through both distances and returns ``a``,
    clipped at 0.
    """
    return max(0.0, (d1 * h2 * h2 - d2 * h1 * h1) / (h1 * h2 * (h2 - h1)))


def metric_derivative(curve: SampledCurve) -> np.ndarray:
    """Finite-difference metric derivative on the grid.

    Central differences ``d(u_{i-1}, u_{i+1}) / (t_{i+1} - t_{i-1})`` at
    interior nodes.  At the endpoints a second-order one-sided estimate from
    the distances to the two nearest nodes (first order for 2-point curves).
    """
    n = len(curve)
    if n < 2:
        raise ValueError("metric derivative needs at least 2 points")
    t = curve.times
    d1 = _step_distances(curve, 1)
    out = np.empty(n)
    if n == 2:
        out[:] = d1[0] / (t[1] - t[0])
        return out
    d2 = _step_distances(curve, 2)
    out[1:-1] = d2 / (t[2:] - t[:-2])
    out[0] = _endpoint_speed(d1[0], d2[0], t[1] - t[0], t[2] - t[0])
    out[-1] = _endpoint_speed(d1[-1], d2[-1], t[-1] - t[-2], t[-1] - t[-3])
    return out


def slopes_along(curve: SampledCurve, f: Functional) -> np.ndarray:
    if curve.slopes is not None:
        return curve.slopes
    try:
        return np.array([f.slope(pt) for pt in curve.points])
    except NotImplementedError:
        return np.array([slope_global_formula(f, pt) for pt in curve.points])


def annotate(curve: SampledCurve, f: Functional) -> SampledCurve:
    """Fill the cached ``f_values``, ``slopes`` and ``metric_derivatives``."""
    fv = curve.f_values if curve.f_values is not None else np.array([f.value(pt) for pt in curve.points])
    sl = slopes_along(curve, f)
    md = curve.metric_derivatives
    if md is None:
        md = metric_derivative(curve) if len(curve) >= 2 else np.zeros(1)
    return replace(curve, f_values=fv, slopes=sl, metric_derivatives=md)


def detect_positivity_horizon(curve: SampledCurve, f: Functional, eps: float = EPS_CRIT) -> PositivityHorizon:
    """Locate ``t*``, the end of the positive-slope phase of the curve."""
    slopes = slopes_along(curve, f)
    pos = slopes > eps
    n = len(curve)
    if pos[-1]:
        return PositivityHorizon(math.inf, False, None, n - 1)
    k = int(np.flatnonzero(pos)[-1]) if pos.any() else -1
    idx = k + 1
    anchor = curve.points[idx]
    d = curve.space.distance
    tail = all(d(curve.points[j], anchor) <= 1e-10 for j in range(idx + 1, n))
    return PositivityHorizon(float(curve.times[idx]), tail, idx, k)


def arc_length_reparametrize(
    curve: SampledCurve, f: Functional, n_points: int | None = None, eps: float = EPS_CRIT
) -> tuple[TimeMap, SampledCurve]:
    """Arc-length map ``s(t) = int_0^t |u'|`` and ``u`` resampled on a uniform s-grid.

    Only the positive-slope phase ``[0, t*)`` is used.  For a curve with
    ``t* = 0`` the map and the curve consist of the single point ``u(0)``.
    """
    curve = annotate(curve, f)
    hz = detect_positivity_horizon(curve, f, eps)
    k = hz.last_positive
    if k < 1:
        tm = TimeMap([0.0], [0.0], 0.0, float(curve.times[hz.index or 0]), None)
        flat = SampledCurve(curve.space, [0.0], curve.points[:1], curve.p, curve.functional,
                            flags={"reparametrized": "arc_length", "degenerate": True})
        return tm, flat
    t = curve.times[: k + 1]
    speed = curve.metric_derivatives[: k + 1]
    s = cumulative_trapezoid(speed, t, initial=0.0)
    if not np.all(np.diff(s) > 0):
        raise ValueError("arc length is not strictly increasing on the positive-slope phase")
    tm = TimeMap(t, s, float(s[-1]), float(t[-1]), None)
    n = n_points or (k + 1)
    s_grid = np.linspace(0.0, s[-1], n)
    t_grid = np.interp(s_grid, s, t)
    t_grid[-1] = t[-1]
    pts = curve.sample(t_grid)
    flat = SampledCurve(curve.space, s_grid, pts, curve.p, curve.functional,
                        flags={"reparametrized": "arc_length"})
    return tm, flat


# ---------------------------------------------------------------------------
# checkers
# ---------------------------------------------------------------------------


def check_lipschitz(curve: SampledCurve, tolerance: float = 1e-8, max_nodes: int = 400) -> DiagnosticsReport:
    """Discrete 1-Lipschitz check ``d(u_i, u_j) <= |t_i - t_j| + tol`` over node pairs."""
    n = len(curve)
    idx = np.unique(np.linspace(0, n - 1, min(n, max_nodes)).round().astype(int))
    d = curve.space.distance
    res, where = [], []
    for a in range(len(idx)):
        i = idx[a]
        for j in idx[a + 1:]:
            res.append(max(0.0, d(curve.points[i], curve.points[j]) - (curve.times[j] - curve.times[i])))
            where.append(j)
    return DiagnosticsReport.from_residuals("lipschitz", res, tolerance, where, {"nodes_checked": len(idx)})


def check_energy_identity(
    curve: SampledCurve,
    f: Functional,
    p: float,
    tolerance: float = 1e-2,
    eps: float = EPS_CRIT,
    relative: bool = False,
) -> DiagnosticsReport:
    """Energy identity residuals at interior nodes.

    At node ``i`` the residual is the larger of
    ``|D(f o u) + |u'|^p / p + |d^- f|^q / q|`` (central difference) and
    ``||u'|^p - |d^- f|^q|``.  Nodes whose stencil straddles the switch
    between positive and zero slope are skipped: the identity holds almost
    everywhere only, and the switch is where it may fail.  With
    ``relative=True`` residuals are divided by ``max(1, |u'|^p, |d^- f|^q)``.
    """
    if not p > 1:
        raise ValueError("p must be > 1")
    curve = annotate(curve, f)
    n = len(curve)
    if n < 3:
        return DiagnosticsReport.from_residuals("energy_identity", [], tolerance, details={"p": p})
    q = p / (p - 1.0)
    t, F = curve.times, curve.f_values
    speed_p = curve.metric_derivatives[1:-1] ** p
    slope_q = curve.slopes[1:-1] ** q
    dF = (F[2:] - F[:-2]) / (t[2:] - t[:-2])
    r_dissip = np.abs(dF + speed_p / p + slope_q / q)
    r_ident = np.abs(speed_p - slope_q)
    if relative:
        scale = np.maximum(1.0, np.maximum(speed_p, slope_q))
        r_dissip, r_ident = r_dissip / scale, r_ident / scale
    pos = curve.slopes > eps
    keep = (pos[:-2] == pos[1:-1]) & (pos[1:-1] == pos[2:])
    nodes = np.arange(1, n - 1)[keep]
    res = np.maximum(r_dissip, r_ident)[keep]
    details = {
        "p": p,
        "relative": relative,
        "max_dissipation_residual": float(r_dissip[keep].max()) if keep.any() else 0.0,
        "max_identity_residual": float(r_ident[keep].max()) if keep.any() else 0.0,
        "skipped_nodes": int((~keep).sum()),
    }
    return DiagnosticsReport.from_residuals("energy_identity", res, tolerance, nodes, details)


def check_convexity_along_curve(
    curve: SampledCurve,
    f: Functional,
    profile: ConvexityProfile | None = None,
    tolerance: float = 1e-6,
    max_width: float = 1.0,
    chunk: int = 4_000_000,
) -> DiagnosticsReport:
    """Convexity of ``f o u`` on a uniform grid, over every triple within ``max_width``.

    For grid triples ``s0 < s_theta < s1`` with ``s1 - s0 <= max_width`` the
    residual is ``f(s_theta) - (1-theta) f(s0) - theta f(s1) -
    lambda^- theta (1-theta) (s1 - s0)^2``, clipped at 0 and attributed to the
    left node ``s0``.
    """
    profile = profile or f.profile
    n = len(curve)
    name = "convexity_along_curve"
    if n < 3:
        return DiagnosticsReport.from_residuals(name, [], tolerance, details={"triples": 0})
    s = curve.times
    ds = np.diff(s)
    h = float(ds.mean())
    if np.max(np.abs(ds - h)) > 1e-9 * max(1.0, h):
        raise ValueError("convexity check needs a uniform grid")
    g = curve.f_values if curve.f_values is not None else np.array([f.value(pt) for pt in curve.points])
    lam_minus = profile.lambda_minus
    K = min(int(math.floor(max_width / h + 1e-9)), n - 1)
    worst = np.zeros(n)
    triples = 0
    for k in range(2, K + 1):
        L = k * h
        m = n - k  # number of left endpoints
        j = np.arange(1, k)
        theta = j / k
        left, right = g[:m], g[k:]
        step = max(1, chunk // max(m, 1))
        for a in range(0, k - 1, step):
            jj, th = j[a:a + step], theta[a:a + step]
            mid = g[jj[:, None] + np.arange(m)[None, :]]
            r = mid - (1 - th)[:, None] * left[None, :] - th[:, None] * right[None, :]
            r -= (lam_minus * th * (1 - th) * L * L)[:, None]
            np.maximum(worst[:m], r.max(axis=0), out=worst[:m])
        triples += (k - 1) * m
    worst = np.maximum(worst, 0.0)
    return DiagnosticsReport.from_residuals(
        name, worst, tolerance, details={"triples": triples, "lambda_minus": lam_minus, "max_width": max_width}
    )


def check_regularizing_bounds(
    curve: SampledCurve,
    f: Functional,
    p: float,
    profile: ConvexityProfile | None = None,
    tolerance: float = 1e-6,
    max_nodes: int = 120,
) -> DiagnosticsReport:
    """Regularizing estimates for flows of convex functionals.

    For ``lambda >= 0`` and grid pairs ``t0 < t`` with ``d = t - t0``:

    * ``|d^- f|^q(u(t)) <= (f(u(t0)) - inf f) / d``
    * ``|d^- f|^q(u(t)) / q <= (f(u(t0)) - f_d(u(t0))) / d`` with ``f_d`` the
      Moreau envelope at exponent ``p``.

    For ``lambda > 0`` with a known minimiser ``m``, at every node:
    ``lambda d^{p0}(u, m) <= f(u) - f(m) <= |d^- f|^{q0}(u) / (q0 lambda^{q0/p0})``.

    Items that do not apply are listed under ``details["skipped"]``.
    """
    profile = profile or f.profile
    lam, p0 = profile.lam, profile.p0
    curve = annotate(curve, f)
    n = len(curve)
    q = p / (p - 1.0)
    residuals, where, skipped = [], [], []
    details = {}
    if lam < 0:
        return DiagnosticsReport.skip("regularizing_bounds", tolerance, "lambda < 0")
    inf_f = f.infimum()
    idx = np.unique(np.linspace(0, n - 1, min(n, max_nodes)).round().astype(int))
    if inf_f is None or not math.isfinite(inf_f):
        skipped.append("iii: infimum unknown")
    else:
        margin_a = margin_b = math.inf
        F, sl, t = curve.f_values, curve.slopes, curve.times
        for a in range(len(idx) - 1):
            i0 = idx[a]
            for i in idx[a + 1:]:
                delta = t[i] - t[i0]
                lhs = sl[i] ** q
                gap_a = (F[i0] - inf_f) / delta - lhs
                env = moreau_envelope(f, p, delta, curve.points[i0])
                gap_b = (F[i0] - env) / delta - lhs / q
                margin_a, margin_b = min(margin_a, gap_a), min(margin_b, gap_b)
                residuals += [max(0.0, -gap_a), max(0.0, -gap_b)]
                where += [int(i), int(i)]
        details["iii_margin_infimum"] = margin_a
        details["iii_margin_envelope"] = margin_b
        details["pairs"] = len(residuals) // 2
    m = f.minimizer()
    if lam <= 0 or m is None:
        skipped.append("iv: needs lambda > 0 and a known minimiser")
    else:
        q0 = p0 / (p0 - 1.0)
        fm = f.value(m)
        lower_gap = math.inf
        upper_gap = math.inf
        for i, pt in enumerate(curve.points):
            drop = curve.f_values[i] - fm
            lo = lam * curve.space.distance(pt, m) ** p0
            hi = curve.slopes[i] ** q0 / (q0 * lam ** (q0 / p0))
            lower_gap, upper_gap = min(lower_gap, drop - lo), min(upper_gap, hi - drop)
            residuals += [max(0.0, lo - drop), max(0.0, drop - hi)]
            where += [i, i]
        details["iv_lower_gap"] = lower_gap
        details["iv_upper_gap"] = upper_gap
    details["skipped"] = skipped
    if len(skipped) == 2:
        return DiagnosticsReport.skip("regularizing_bounds", tolerance, "; ".join(skipped))
    return DiagnosticsReport.from_residuals("regularizing_bounds", residuals, tolerance, where, details)


def check_slope_monotone(
    curve: SampledCurve, f: Functional, profile: ConvexityProfile | None = None, tolerance: float = 1e-8
) -> DiagnosticsReport:
    """Largest upward jump of the slope between consecutive nodes (``lambda >= 0`` only)."""
    profile = profile or f.profile
    if profile.lam < 0:
        raise HypothesisError("slope monotonicity along flows is only claimed for lambda >= 0")
    sl = slopes_along(curve, f)
    jumps = np.maximum(np.diff(sl), 0.0)
    return DiagnosticsReport.from_residuals("slope_monotone", jumps, tolerance, np.arange(1, len(sl)))


__all__ = [
    "DiagnosticsReport",
    "PositivityHorizon",
    "TimeMap",
    "annotate",
    "arc_length_reparametrize",
    "check_convexity_along_curve",
    "check_energy_identity",
    "check_lipschitz",
    "check_regularizing_bounds",
    "check_slope_monotone",
    "detect_positivity_horizon",
    "metric_derivative",
    "slopes_along",
]
