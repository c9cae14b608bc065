"""Change of exponent for curves of maximal slope.

A p-curve ``u`` is turned into a p'-curve by the time change

    s(t) = int_0^t |u'|^alpha,    alpha = 1 - (p/q)(q'/p'),

i.e. ``u_{p'} = u o t`` with ``t`` the inverse of ``s``.  The total
transformed time ``S* = s(t*)`` and the positivity horizon ``t*`` decide how
the new curve continues past the end of its natural domain:

====  =========  =========  ==============================================
case  S*         t*         continuation
====  =========  =========  ==============================================
A     infinite   infinite   none needed
B     infinite   finite     none needed
C     finite     finite     constant ``u(t*)``
D     finite     infinite   constant limit of ``u``, if the limit exists
====  =========  =========  ==============================================

Finiteness of ``S*`` and ``t*`` is decided numerically; see
:func:`forward_time_map`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .analysis import (
    DiagnosticsReport,
    TimeMap,
    _json_float,
    annotate,
    check_energy_identity,
    detect_positivity_horizon,
)
from .errors import HypothesisError
from .flow import EPS_CRIT, SampledCurve
from .functional import ConvexityProfile, Functional

TAIL_WINDOW = 0.1
TAIL_MARGIN = 0.1
LIMIT_TOL = 1e-6


def alpha(p: float, p_prime: float) -> float:
    """Exponent of the time change from exponent ``p`` to ``p_prime``.

    ``1 - (p/q)(q'/p')`` simplifies to ``1 - (p-1)/(p'-1)``, which is the
    form evaluated, so that ``alpha(p, p) == 0`` exactly.

    Examples
    --------
    >>> alpha(2, 4)
    0.6666666666666667
    >>> alpha(2, 1.5)
    -1.0
    """
    if not (p > 1 and p_prime > 1):
        raise ValueError(f"exponents must be > 1, got p={p}, p'={p_prime}")
    return 1.0 - (p - 1.0) / (p_prime - 1.0)


def _fit(x, y):
    coef = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((np.polyval(coef, x) - y) ** 2)))
    return coef, rms


def _tail_integral(t, g, window=TAIL_WINDOW, margin=TAIL_MARGIN):
    """Estimate ``int_T^inf g`` from the last ``window`` fraction of the grid.

    Returns ``(finite, tail, exponent)``.  The tail is declared finite only
    when a log-log fit gives a decay exponent below ``-1 - margin``; its value
    then comes from whichever of the power or exponential fits matches the
    data better.
    """
    T = t[-1]
    sel = (t >= T - window * (T - t[0])) & (t > 0) & (g > 0)
    if sel.sum() < 4:
        return False, math.inf, math.nan
    tt, lg = t[sel], np.log(g[sel])
    (beta, c), rms_pow = _fit(np.log(tt), lg)
    if not beta < -1.0 - margin:
        return False, math.inf, float(beta)
    tail = math.exp(c) * T ** (beta + 1.0) / (-beta - 1.0)
    (k, c2), rms_exp = _fit(tt, lg)
    if k < 0 and rms_exp <= rms_pow:
        tail = math.exp(c2 + k * T) / (-k)
    return True, float(tail), float(beta)


def _singular_at_end(t, g, t_end, window=TAIL_WINDOW, margin=TAIL_MARGIN) -> bool:
    """Whether ``g`` blows up non-integrably as ``t -> t_end``."""
    x = t_end - t
    sel = (t >= t_end - window * t_end) & (x > 0) & (g > 0)
    if sel.sum() < 4:
        return False
    (beta, _), _ = _fit(np.log(x[sel]), np.log(g[sel]))
    return bool(beta <= -1.0 + margin)


def forward_time_map(
    curve: SampledCurve,
    p: float,
    p_prime: float,
    f: Functional | None = None,
    eps: float = EPS_CRIT,
    window: float = TAIL_WINDOW,
    margin: float = TAIL_MARGIN,
) -> TimeMap:
    """Time map ``s(t) = int_0^t |u'|^alpha`` on ``[0, t*]``.

    Trapezoid quadrature on the grid nodes with positive slope.  When ``t*``
    is a grid node the last cell ``[t_k, t*]`` is added with the integrand
    frozen at ``t_k``, unless the integrand is found to blow up non-integrably
    there (then ``total_S = inf``).  When ``t* = inf`` the integral past the
    grid is extrapolated by :func:`_tail_integral`.

    ``curve`` must carry cached slopes and metric derivatives, or ``f`` must
    be given.
    """
    a = alpha(p, p_prime)
    if f is not None:
        curve = annotate(curve, f)
    elif curve.slopes is None or curve.metric_derivatives is None:
        raise ValueError("curve has no cached slopes; pass the functional")
    hz = detect_positivity_horizon(curve, f, eps)
    if hz.index == 0:
        return TimeMap([0.0], [0.0], 0.0, 0.0, a)
    k = hz.last_positive
    t = curve.times[: k + 1]
    finite_t = not hz.infinite
    if a == 0.0:
        knots = np.append(t, hz.t_star) if finite_t else t.copy()
        return TimeMap(knots, knots.copy(), hz.t_star, hz.t_star, a)
    speed = curve.metric_derivatives[: k + 1].copy()
    if a < 0:
        # speeds are positive wherever the slope is, so zeros are grid artefacts
        zeros = np.flatnonzero(speed == 0.0)
        if len(zeros):
            raise ValueError(
                f"zero speed estimate at t={t[zeros[0]]:.6g} before t*; alpha={a:.6g} < 0 makes the integrand singular"
            )
    g = speed**a
    if finite_t:
        s = cumulative_trapezoid(np.append(g, g[-1]), np.append(t, hz.t_star), initial=0.0)
        if a < 0 and _singular_at_end(t, g, hz.t_star, window, margin):
            return TimeMap(t, s[:-1], math.inf, hz.t_star, a)
        return TimeMap(np.append(t, hz.t_star), s, float(s[-1]), hz.t_star, a)
    s = cumulative_trapezoid(g, t, initial=0.0)
    finite_S, tail, _ = _tail_integral(t, g, window, margin)
    return TimeMap(t, s, float(s[-1] + tail) if finite_S else math.inf, math.inf, a)


def invert_time_map(m: TimeMap) -> TimeMap:
    """Inverse map; the exponent becomes ``-alpha / (1 - alpha)``."""
    return m.invert()


@dataclass
class TransformResult:
    transformed: SampledCurve
    time_map: TimeMap
    case: str
    condition: str | None
    alpha: float
    p: float
    p_prime: float
    S_star: float
    t_star: float
    limit_point: object = None
    limit_slope: float | None = None
    diagnostics: list = field(default_factory=list)

    @property
    def blocked(self) -> bool:
        return self.condition == "blocked"

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "p_prime": self.p_prime,
            "alpha": self.alpha,
            "case": self.case,
            "condition": self.condition,
            "S_star": _json_float(self.S_star),
            "t_star": _json_float(self.t_star),
            "limit_point": None if self.limit_point is None else self.limit_point.to_json(),
            "limit_slope": self.limit_slope,
            "time_map": self.time_map.to_json(),
            "n_nodes": len(self.transformed),
            "diagnostics": [d.to_json() for d in self.diagnostics],
        }


def check_hypotheses(profile: ConvexityProfile, p: float, p_prime: float) -> None:
    """Refuse exponent pairs outside the range where the transform is known to work."""
    if not (p > 1 and p_prime > 1):
        raise ValueError(f"exponents must be > 1, got p={p}, p'={p_prime}")
    if profile.lam < 0:
        if profile.p0 < 2:
            raise HypothesisError(f"lambda = {profile.lam} < 0 needs p0 >= 2, got p0 = {profile.p0}")
        if p > profile.p0 or p_prime > profile.p0:
            raise HypothesisError(
                f"lambda = {profile.lam} < 0 needs p, p' in (1, p0] with p0 = {profile.p0}; got p={p}, p'={p_prime}"
            )


def _classify(S_finite: bool, t_finite: bool) -> str:
    return {(False, False): "A", (False, True): "B", (True, True): "C", (True, False): "D"}[(S_finite, t_finite)]


def transform_curve(
    curve: SampledCurve,
    f: Functional,
    p: float,
    p_prime: float,
    profile: ConvexityProfile | None = None,
    eps: float = EPS_CRIT,
    extension_nodes: int = 200,
    limit_tol: float = LIMIT_TOL,
    tolerance: float = 1e-2,
) -> TransformResult:
    """Transform a p-curve of maximal slope of ``f`` into a p'-curve.

    The new curve has knots ``s_i = s(t_i)`` and points ``u(t_i)``.  In cases
    C and D it is continued by a constant over ``[S*, 2 S*]``; in case D only
    if the tail of ``u`` is Cauchy within ``limit_tol`` over the last tenth of
    the grid, otherwise ``condition`` is ``"blocked"`` and the curve stops at
    the last knot below ``S*``.

    ``condition`` reports which of the admissible situations for
    ``lambda < 0`` occurred: ``"a"`` (S* infinite), ``"b"`` (both finite),
    ``"c"`` (S* finite, t* infinite, limit exists) or ``"blocked"``.  For
    ``lambda >= 0`` it is ``None`` unless blocked.
    """
    profile = profile or f.profile
    check_hypotheses(profile, p, p_prime)
    a = alpha(p, p_prime)
    curve = annotate(curve, f)
    hz = detect_positivity_horizon(curve, f, eps)
    tm = forward_time_map(curve, p, p_prime, f, eps)
    space = curve.space
    base_flags = {"source": "transform", "from_p": p}

    if tm.degenerate:
        flat = SampledCurve(space, curve.times, [curve.points[0]] * len(curve), p_prime, f.tag,
                            flags={**base_flags, "degenerate": True})
        flat = annotate(flat, f)
        cond = "b" if profile.lam < 0 else None
        return TransformResult(flat, tm, "C", cond, a, p, p_prime, 0.0, 0.0,
                               diagnostics=[check_energy_identity(flat, f, p_prime, tolerance, eps, relative=True)])

    S_finite, t_finite = math.isfinite(tm.total_S), not hz.infinite
    case = _classify(S_finite, t_finite)
    m = len(tm.knots_s)
    knots = list(tm.knots_s)
    pts = list(curve.points[:m])
    limit = None
    limit_slope = None
    extend_with = None
    if case == "C":
        extend_with = curve.points[hz.index]
    elif case == "D":
        T = curve.times[-1]
        window = [j for j in range(len(curve)) if curve.times[j] >= 0.9 * T]
        last = curve.points[-1]
        spread = max(space.distance(curve.points[j], last) for j in window)
        if spread < limit_tol:
            limit = last
            limit_slope = float(f.slope(limit))
            extend_with = limit
            if tm.total_S > knots[-1]:
                knots.append(tm.total_S)
                pts.append(limit)
    if extend_with is not None:
        S = tm.total_S
        length = S if S > 0 else 1.0
        ext = S + np.linspace(0.0, length, extension_nodes + 1)[1:]
        knots += list(ext)
        pts += [extend_with] * len(ext)

    if profile.lam < 0:
        condition = {"A": "a", "B": "a", "C": "b", "D": "c" if limit is not None else "blocked"}[case]
    else:
        condition = "blocked" if (case == "D" and limit is None) else None

    new = SampledCurve(space, np.array(knots), pts, p_prime, f.tag,
                       flags={**base_flags, "case": case, "condition": condition})
    if limit is not None:
        # slope is lower semicontinuous and tends to 0 along the flow, so the
        # limit is critical; the measured value is kept in ``limit_slope``
        slopes = np.array([f.slope(pt) for pt in pts])
        slopes[m:] = 0.0
        new = replace(new, slopes=slopes)
    new = annotate(new, f)
    diag = check_energy_identity(new, f, p_prime, tolerance, eps, relative=True)
    return TransformResult(new, tm, case, condition, a, p, p_prime, tm.total_S, hz.t_star,
                           limit_point=limit, limit_slope=limit_slope, diagnostics=[diag])


def _dual_gap(x: float, y: float) -> float:
    if math.isinf(x) and math.isinf(y):
        return 0.0
    return abs(x - y)


def verify_duality(
    original: SampledCurve,
    result: TransformResult,
    p: float,
    p_prime: float,
    f: Functional,
    tolerance: float = 1e-3,
    eps: float = EPS_CRIT,
    relative: bool = False,
) -> DiagnosticsReport:
    """Round-trip and dual-relation check for a transform.

    The reverse map ``s -> r`` is recomputed from the transformed curve at
    exponents ``(p', p)``.  Residuals are ``d(u(t_i), u_{p'}(s_i))`` with
    ``s_i`` the reverse map inverted at ``t_i`` and the gap
    ``|S*_{p'->p} - t*_u|``.  The other dual gap ``|t*_{u_{p'}} - S*_{p->p'}|``
    is reported in ``details``.  With ``relative=True`` the round-trip
    distances are divided by ``max(1, d(u(t_i), u(0)))``, which suits curves
    that run off to infinity.
    """
    orig = annotate(original, f)
    hz = detect_positivity_horizon(orig, f, eps)
    new = result.transformed
    d = orig.space.distance
    if result.time_map.degenerate:
        errs = [d(pt, new.points[0]) for pt in orig.points]
        return DiagnosticsReport.from_residuals(
            "duality", errs + [0.0], tolerance, details={"degenerate": True}
        )
    rev = forward_time_map(new, p_prime, p, f, eps)
    hz_new = detect_positivity_horizon(new, f, eps)
    t_star_new = hz_new.t_star
    if hz_new.infinite and result.blocked:
        # the transformed curve lives on the bounded interval [0, S*)
        t_star_new = result.S_star
    back_s = rev.inverse(np.minimum(orig.times, rev.knots_s[-1]))
    back_s = np.minimum(back_s, new.times[-1])
    round_trip = np.array([d(orig.points[i], new.at(float(s))) for i, s in enumerate(back_s)])
    if relative:
        u0 = orig.points[0]
        round_trip /= np.array([max(1.0, d(pt, u0)) for pt in orig.points])
    fwd_s = np.minimum(result.time_map(orig.times), new.times[-1])
    consistency = np.array([d(orig.points[i], new.at(float(s))) for i, s in enumerate(fwd_s)])
    gap_rev = _dual_gap(rev.total_S, hz.t_star)
    gap_fwd = _dual_gap(t_star_new, result.S_star)
    details = {
        "round_trip_sup": float(round_trip.max()),
        "relative": relative,
        "consistency_sup": float(consistency.max()),
        "S_star_reverse": rev.total_S,
        "t_star_original": hz.t_star,
        "t_star_transformed": t_star_new,
        "S_star_forward": result.S_star,
        "dual_gap_reverse": gap_rev,
        "dual_gap_forward": gap_fwd,
    }
    residuals = np.append(round_trip, gap_rev)
    indices = np.append(np.arange(len(orig)), len(orig))
    return DiagnosticsReport.from_residuals("duality", residuals, tolerance, indices, details)


__all__ = [
    "TimeMap",
    "TransformResult",
    "alpha",
    "check_hypotheses",
    "forward_time_map",
    "invert_time_map",
    "transform_curve",
    "verify_duality",
]
