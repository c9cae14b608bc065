"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from maxslope.analysis import (
    arc_length_reparametrize,
    check_convexity_along_curve,
    check_energy_identity,
    check_regularizing_bounds,
    check_slope_monotone,
    detect_positivity_horizon,
)
from maxslope.errors import HypothesisError, WellPosednessError
from maxslope.flow import SolverConfig, oracle_flow, solve_minimizing_movements
from maxslope.functional import DistanceToPoint, NegativeQuadratic, NormLike, Quadratic, proximal
from maxslope.metric import Euclidean, Tripod
from maxslope.transform import transform_curve, verify_duality

E1, E2, T = Euclidean(1), Euclidean(2), Tripod()


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, msg):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {msg}")
        assert ok, msg

    return emit


def test_criterion_01_blow_up(verdict):
    start = time.perf_counter()
    f = NegativeQuadratic(E1)
    u = oracle_flow(f, 2, E1.point([1.0]), np.linspace(0, 10, 10_001))
    res = transform_curve(u, f, 2, 1.5)
    elapsed = time.perf_counter() - start
    a = res.alpha
    s = np.linspace(0, 0.9, 901)
    err = max(abs(res.transformed.at(x).coords[0] - (1 + a * x) ** (1 / a)) for x in s)
    gap = abs(res.S_star - 1.0)
    ok = abs(a + 1) < 1e-12 and err <= 1e-3 and gap <= 1e-3 and elapsed < 5
    verdict(1, ok, f"alpha={a:g} sup_err={err:.2e} |S*-1|={gap:.2e} runtime={elapsed:.2f}s "
                   f"condition={res.condition}")


def _identity_cases():
    quad, neg, norm = Quadratic(E1), NegativeQuadratic(E1), NormLike(E1)
    dist = DistanceToPoint(T.point(1, 1.0))
    x0 = E1.point([1.0])
    return [
        ("quadratic p=2", quad, 2.0, oracle_flow(quad, 2, x0, np.linspace(0, 10, 2001))),
        ("quadratic p=4", quad, 4.0, oracle_flow(quad, 4, x0, np.linspace(0, 2, 2001))),
        ("quadratic p=1.5", quad, 1.5, oracle_flow(quad, 1.5, x0, np.linspace(0, 10, 2001))),
        ("negative_quadratic p=2", neg, 2.0, oracle_flow(neg, 2, x0, np.linspace(0, 5, 2001))),
        ("negative_quadratic p=1.5", neg, 1.5, oracle_flow(neg, 1.5, x0, np.linspace(0, 0.5, 2001))),
        ("norm_like p=2", norm, 2.0, oracle_flow(norm, 2, x0, np.linspace(0, 2, 2001))),
        ("norm_like p=3", norm, 3.0, oracle_flow(norm, 3, x0, np.linspace(0, 2, 2001))),
        ("tripod p=2", dist, 2.0, oracle_flow(dist, 2, T.point(0, 0.5), np.linspace(0, 2, 2001))),
        ("tripod p=3", dist, 3.0, oracle_flow(dist, 3, T.point(2, 0.5), np.linspace(0, 2, 2001))),
    ]


def test_criterion_02_identity(verdict):
    worst, alphas, names = 0.0, set(), []
    for name, f, p, u in _identity_cases():
        res = transform_curve(u, f, p, p)
        n = len(res.time_map.knots_t)
        new = res.transformed
        alphas.add(res.alpha)
        worst = max(worst, float(np.max(np.abs(new.times[:n] - u.times[:n]))))
        worst = max(worst, max(u.space.distance(a, b) for a, b in zip(new.points[:n], u.points[:n])))
        names.append(name)
    ok = alphas == {0.0} and worst <= 1e-10
    verdict(2, ok, f"alpha=0 sup_err_on_knots={worst:.1e} over {len(names)} flows "
                   "(theta family excluded: lambda<0 with p'=4 > p0 is refused)")


def _quadratic_p2_to_p4():
    f = Quadratic(E1)
    u = oracle_flow(f, 2, E1.point([1.0]), np.linspace(0, 16, 10_001))
    return f, u, transform_curve(u, f, 2, 4)


def test_criterion_03_round_trip(verdict):
    f, u, res = _quadratic_p2_to_p4()
    rep = verify_duality(u, res, 2, 4, f)
    rt = rep.details["round_trip_sup"]
    verdict(3, rt <= 1e-3, f"nodes={len(u)} round_trip_sup={rt:.2e}")


def test_criterion_04_dual_relation(verdict):
    f, u, res = _quadratic_p2_to_p4()
    rep = verify_duality(u, res, 2, 4, f)
    h = float(u.times[1] - u.times[0])
    t_new = detect_positivity_horizon(res.transformed, f).t_star
    gap = abs(t_new - res.S_star)
    ok = gap <= 2 * h and rep.details["dual_gap_forward"] <= 2 * h and abs(res.S_star - 1.5) <= 2 * h
    verdict(4, ok, f"S*={res.S_star:.7f} t*_new={t_new:.7f} |gap|={gap:.2e} 2h={2 * h:.1e}")


def test_criterion_05_energy_identity(verdict):
    f = Quadratic(E1)
    fine = solve_minimizing_movements(f, 2, E1.point([1.0]), SolverConfig(1e-3, 1.0))
    coarse = solve_minimizing_movements(f, 2, E1.point([1.0]), SolverConfig(1e-2, 1.0))
    dev = float(np.max(np.abs(fine.coords()[:, 0] - np.exp(-fine.times))))
    r_fine = check_energy_identity(fine, f, 2).max_residual
    r_coarse = check_energy_identity(coarse, f, 2).max_residual
    ok = dev <= 5e-3 and r_fine <= 1e-2 and r_coarse > r_fine
    verdict(5, ok, f"sup_dev={dev:.2e} residual(tau=1e-3)={r_fine:.2e} residual(tau=1e-2)={r_coarse:.2e}")


def test_criterion_06_stationarity(verdict):
    f = NormLike(E1)
    tau = 1e-3
    u = solve_minimizing_movements(f, 2, E1.point([1.0]), SolverConfig(tau, 2.0))
    hz = detect_positivity_horizon(u, f)
    tail = max(E1.distance(pt, u.points[hz.index]) for pt in u.points[hz.index:])
    ok = abs(hz.t_star - 1.0) <= 2 * tau and hz.stationary_tail and tail <= 1e-10
    verdict(6, ok, f"t*={hz.t_star:.4f} tail_movement={tail:.1e}")


def test_criterion_07_convexity(verdict):
    x0 = E1.point([1.0])
    cases = [
        ("x^2/2", Quadratic(E1), oracle_flow(Quadratic(E1), 2, x0, np.linspace(0, 10, 2001))),
        ("|x|", NormLike(E1), oracle_flow(NormLike(E1), 2, x0, np.linspace(0, 2, 2001))),
    ]
    dist = DistanceToPoint(T.point(1, 1.0))
    cases.append(("tripod", dist, oracle_flow(dist, 2, T.point(0, 0.5), np.linspace(0, 2, 2001))))
    neg = NegativeQuadratic(E1)
    cases.append(("-x^2/2", neg, oracle_flow(neg, 2, x0, np.linspace(0, 1, 2001))))
    parts, ok = [], True
    for name, f, u in cases:
        _, flat = arc_length_reparametrize(u, f, n_points=1001)
        rep = check_convexity_along_curve(flat, f, tolerance=1e-6, max_width=1.0)
        ok &= rep.passed
        parts.append(f"{name}(lambda-={f.profile.lambda_minus:g})={rep.max_residual:.1e}")
    verdict(7, ok, "max residual " + " ".join(parts))


def test_criterion_08_slope_monotone(verdict):
    x0 = E1.point([1.0])
    dist = DistanceToPoint(T.point(1, 1.0))
    flows = [
        ("quadratic", Quadratic(E1), oracle_flow(Quadratic(E1), 2, x0, np.linspace(0, 10, 2001))),
        ("quadratic_solver", Quadratic(E1),
         solve_minimizing_movements(Quadratic(E1), 2, x0, SolverConfig(1e-3, 1.0))),
        ("norm_like", NormLike(E1), oracle_flow(NormLike(E1), 2, x0, np.linspace(0, 2, 2001))),
        ("tripod", dist, oracle_flow(dist, 2, T.point(0, 0.5), np.linspace(0, 2, 2001))),
    ]
    parts, ok = [], True
    for name, f, u in flows:
        rep = check_slope_monotone(u, f, tolerance=1e-8)
        ok &= rep.passed
        parts.append(f"{name}={rep.max_residual:.1e}")
    verdict(8, ok, "max upward jump " + " ".join(parts))


def test_criterion_09_regularizing(verdict):
    f = Quadratic(E1)
    u = oracle_flow(f, 2, E1.point([1.0]), np.linspace(0, 5, 501))
    rep = check_regularizing_bounds(u, f, 2, tolerance=1e-6, max_nodes=120)
    d = rep.details
    ok = rep.passed and "iii_margin_infimum" in d and "iv_lower_gap" in d
    verdict(9, ok, f"max residual={rep.max_residual:.1e} iii margins: infimum={d['iii_margin_infimum']:.2e} "
                   f"envelope={d['iii_margin_envelope']:.2e} iv gaps: lower={d['iv_lower_gap']:.1e} "
                   f"upper={d['iv_upper_gap']:.1e}")


def test_criterion_10_nonuniqueness(verdict):
    f = NegativeQuadratic(E2)
    origin = E2.origin()
    flat = solve_minimizing_movements(f, 2, origin, SolverConfig(1e-3, 1.0))
    moved = max(E2.distance(origin, pt) for pt in flat.points)
    grid = np.linspace(0, 2, 2001)
    family = [oracle_flow(f, 4, origin, grid, theta=th) for th in (0.0, math.pi / 2, math.pi)]
    residuals = [check_energy_identity(c, f, 4).max_residual for c in family]
    dist = max(E2.distance(a, b) for a, b in zip(family[0].points, family[2].points))
    ok = moved == 0 and f.slope(origin) == 0 and max(residuals) <= 1e-2 and dist > 0.1
    verdict(10, ok, f"p=2 movement={moved:g} slope(0)={f.slope(origin):g} "
                    f"p'=4 residuals={max(residuals):.2e} sup_dist(theta=0,pi)={dist:.3f}")


def test_criterion_11_guards(verdict):
    f = NegativeQuadratic(E1)
    u = oracle_flow(f, 2, E1.point([1.0]), np.linspace(0, 1, 101))
    try:
        transform_curve(u, f, 2, 3)
        transform_refused = False
    except HypothesisError:
        transform_refused = True
    bound = f.profile.max_tau(2)
    step_refused = 0
    for tau in (bound, 2 * bound):
        try:
            proximal(f, 2, tau, E1.point([1.0]))
        except WellPosednessError:
            step_refused += 1
        try:
            solve_minimizing_movements(f, 2, E1.point([1.0]), SolverConfig(tau, 1.0))
        except WellPosednessError:
            step_refused += 1
    ok = transform_refused and step_refused == 4
    verdict(11, ok, f"p'>p0 transform refused={transform_refused} "
                    f"tau>=(1/lambda-)^(1/(p-1))={bound:g} refused {step_refused}/4")
