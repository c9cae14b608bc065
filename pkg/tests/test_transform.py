import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxslope.analysis import TimeMap, check_energy_identity
from maxslope.errors import HypothesisError
from maxslope.flow import SampledCurve, oracle_flow
from maxslope.functional import ConvexityProfile, DistanceToPoint, NegativeQuadratic, NormLike, Quadratic
from maxslope.metric import Euclidean
from maxslope.transform import alpha, forward_time_map, invert_time_map, transform_curve, verify_duality


def conj(p):
    return p / (p - 1)


E1 = Euclidean(1)


def exp_flow(horizon=10.0, nodes=10_001):
    f = NegativeQuadratic(E1)
    return f, oracle_flow(f, 2, E1.point([1.0]), np.linspace(0, horizon, nodes))


def decay_flow(p=2.0, horizon=16.0, nodes=10_001, f=None):
    f = f or Quadratic(E1)
    return f, oracle_flow(f, p, E1.point([1.0]), np.linspace(0, horizon, nodes))


class TestAlpha:
    def test_examples(self):
        assert alpha(2, 2) == 0
        assert alpha(2, 4) == pytest.approx(2 / 3)
        assert alpha(2, 1.5) == pytest.approx(-1)

    def test_matches_definition(self):
        for p, pp in ((2, 4), (3, 1.5), (1.2, 7)):
            assert alpha(p, pp) == pytest.approx(1 - (p / conj(p)) * (conj(pp) / pp))

    def test_rejects_small_exponents(self):
        with pytest.raises(ValueError):
            alpha(1.0, 2)

    @settings(max_examples=200)
    @given(st.floats(1.001, 50), st.floats(1.001, 50))
    def test_below_one(self, p, pp):
        assert alpha(p, pp) < 1
        assert alpha(p, p) == 0


class TestTimeMap:
    def test_exponential_to_three_halves(self):
        f, u = exp_flow()
        tm = forward_time_map(u, 2, 1.5, f)
        assert np.max(np.abs(tm.knots_s - (1 - np.exp(-tm.knots_t)))) < 1e-6
        assert tm.total_S == pytest.approx(1.0, abs=1e-6)
        assert math.isinf(tm.total_t)

    def test_unit_speed_is_identity(self):
        f = NormLike(E1)
        u = oracle_flow(f, 3, E1.point([1.0]), np.linspace(0, 2, 201))
        tm = forward_time_map(u, 3, 1.7, f)
        assert np.allclose(tm.knots_s, tm.knots_t)
        assert tm.total_S == pytest.approx(1.0) and tm.total_t == pytest.approx(1.0)

    def test_same_exponent_is_identity(self):
        f, u = decay_flow()
        tm = forward_time_map(u, 2, 2, f)
        assert np.array_equal(tm.knots_s, tm.knots_t) and math.isinf(tm.total_S)

    def test_inverse_exponential(self):
        f, u = exp_flow()
        inv = invert_time_map(forward_time_map(u, 2, 1.5, f))
        s = np.linspace(0, 0.99, 100)
        assert np.max(np.abs(inv(s) - (-np.log1p(-s)))) < 1e-4
        assert inv.alpha == pytest.approx(0.5)

    def test_double_inverse_exact(self):
        f, u = decay_flow()
        tm = forward_time_map(u, 2, 4, f)
        back = invert_time_map(invert_time_map(tm))
        assert np.array_equal(back.knots_t, tm.knots_t) and np.array_equal(back.knots_s, tm.knots_s)
        assert back.total_S == tm.total_S
        assert back.alpha == pytest.approx(tm.alpha)

    def test_map_and_inverse_compose(self):
        f, u = decay_flow()
        tm = forward_time_map(u, 2, 4, f)
        assert np.max(np.abs(tm.inverse(tm(tm.knots_t)) - tm.knots_t)) < 1e-10

    def test_locally_bi_lipschitz(self):
        f, u = decay_flow(horizon=5)
        tm = forward_time_map(u, 2, 4, f)
        ratio = np.diff(tm.knots_s) / np.diff(tm.knots_t)
        assert ratio.min() > 0 and np.isfinite(ratio.max())

    def test_invalid_knots(self):
        with pytest.raises(ValueError):
            TimeMap([0, 1, 1], [0, 1, 2], 2, 1, 0.5)
        with pytest.raises(ValueError):
            TimeMap([0, 1], [0, 1], 1, 1, 1.0)

    def test_negative_alpha_refuses_zero_speed(self):
        f = Quadratic(E1)
        pts = [E1.point([x]) for x in (1.0, 0.9, 0.9, 0.9, 0.8, 0.7)]
        u = SampledCurve(E1, np.arange(6.0), pts, 2)
        with pytest.raises(ValueError, match="zero speed"):
            forward_time_map(u, 2, 1.5, f)

    def test_grid_independence(self):
        # two samplings of the same curve give the same map up to grid error
        f = Quadratic(E1)
        u1 = oracle_flow(f, 2, E1.point([1.0]), np.linspace(0, 8, 4001))
        u2 = oracle_flow(f, 2, E1.point([1.0]), np.sort(np.r_[0, 8 * np.random.default_rng(0).random(5000), 8]))
        m1, m2 = forward_time_map(u1, 2, 4, f), forward_time_map(u2, 2, 4, f)
        t = np.linspace(0, 8, 50)
        assert np.max(np.abs(m1(t) - m2(t))) < 1e-4


class TestTransform:
    def test_blow_up_example(self):
        f, u = exp_flow()
        res = transform_curve(u, f, 2, 1.5)
        a = res.alpha
        s = np.linspace(0, 0.9, 91)
        got = np.array([res.transformed.at(x).coords[0] for x in s])
        assert np.max(np.abs(got - (1 + a * s) ** (1 / a))) <= 1e-3
        assert res.case == "D" and res.condition == "blocked"
        assert res.transformed.times[-1] < res.S_star
        assert res.diagnostics[0].passed

    def test_decay_to_p4(self):
        f, u = decay_flow()
        res = transform_curve(u, f, 2, 4)
        assert res.case == "D" and res.condition is None
        assert res.S_star == pytest.approx(1.5, abs=1e-5)
        assert res.limit_point.coords[0] == pytest.approx(0, abs=1e-6)
        new = res.transformed
        mask = new.times < res.S_star
        closed = (1 - 2 * new.times[mask] / 3) ** 1.5
        assert np.max(np.abs(new.coords()[mask, 0] - closed)) < 1e-5
        # independent check: the p'=4 flow of the same functional
        exact = oracle_flow(f, 4, E1.point([1.0]), new.times)
        assert np.max(np.abs(new.coords()[:, 0] - exact.coords()[:, 0])) < 1e-5
        assert new.times[-1] == pytest.approx(2 * res.S_star)
        assert res.diagnostics[0].passed

    def test_case_b_extinction_to_exponential(self):
        # p = 4 flow dies at t = 1.5; its p' = 2 transform decays forever
        f, u = decay_flow(p=4.0, horizon=2.0, nodes=20_001)
        res = transform_curve(u, f, 4, 2)
        assert res.case == "B" and math.isinf(res.S_star) and res.t_star == pytest.approx(1.5, abs=2e-4)
        new = res.transformed
        mask = new.times <= 3
        assert np.max(np.abs(new.coords()[mask, 0] - np.exp(-new.times[mask]))) < 1e-3

    def test_unit_speed_case_c(self):
        f = NormLike(E1)
        u = oracle_flow(f, 2, E1.point([1.0]), np.linspace(0, 2, 201))
        res = transform_curve(u, f, 2, 5)
        assert res.case == "C" and res.S_star == pytest.approx(1.0)
        assert np.allclose(res.transformed.coords()[:, 0], np.maximum(1 - res.transformed.times, 0), atol=1e-12)

    @pytest.mark.parametrize("name", ["quadratic", "negative_quadratic", "norm_like", "tripod"])
    def test_identity(self, name, tripod):
        if name == "quadratic":
            f, u = decay_flow(horizon=5, nodes=501)
        elif name == "negative_quadratic":
            f, u = exp_flow(horizon=2, nodes=201)
        elif name == "norm_like":
            f = NormLike(E1)
            u = oracle_flow(f, 2, E1.point([1.0]), np.linspace(0, 2, 201))
        else:
            f = DistanceToPoint(tripod.point(1, 1.0))
            u = oracle_flow(f, 2, tripod.point(0, 0.5), np.linspace(0, 2, 201))
        res = transform_curve(u, f, 2, 2)
        assert res.alpha == 0
        new = res.transformed
        n = len(res.time_map.knots_t)
        assert np.array_equal(new.times[:n], u.times[:n])
        assert max(u.space.distance(a, b) for a, b in zip(new.points[:n], u.points[:n])) <= 1e-10

    def test_guard_negative_lambda(self):
        f, u = exp_flow(horizon=1, nodes=11)
        with pytest.raises(HypothesisError, match="p0"):
            transform_curve(u, f, 2, 4)
        g = NegativeQuadratic(E1, profile=ConvexityProfile(1.5, -2))
        with pytest.raises(HypothesisError, match="p0 >= 2"):
            transform_curve(u, g, 1.5, 1.2)

    def test_positive_lambda_any_exponent(self):
        f, u = decay_flow(horizon=4, nodes=401)
        assert transform_curve(u, f, 2, 30).alpha < 1

    def test_conditions_for_negative_lambda(self):
        # x^2/2 is (3, -1)-convex as well, which exercises the lambda < 0 branch
        f = Quadratic(E1, profile=ConvexityProfile(3, -1))
        _, u = decay_flow(f=f)
        assert transform_curve(u, f, 2, 3).condition == "c"
        assert transform_curve(u, f, 2, 2).condition == "a"
        _, v = decay_flow(p=3.0, horizon=3.0, nodes=3001, f=f)
        assert transform_curve(v, f, 3, 3).condition == "b"
        assert transform_curve(v, f, 3, 2).condition == "a"

    def test_constant_curve(self):
        f = Quadratic(E1)
        u = SampledCurve(E1, np.linspace(0, 1, 11), [E1.origin()] * 11, 2)
        res = transform_curve(u, f, 2, 4)
        assert res.S_star == 0 and res.time_map.degenerate
        assert all(pt == E1.origin() for pt in res.transformed.points)

    def test_energy_comparable_to_original(self):
        f, u = decay_flow(horizon=8, nodes=4001)
        base = check_energy_identity(u, f, 2, relative=True).max_residual
        res = transform_curve(u, f, 2, 3)
        assert res.diagnostics[0].max_residual < 20 * base + 1e-6

    def test_result_json(self):
        f, u = exp_flow(horizon=10, nodes=2001)
        j = transform_curve(u, f, 2, 1.5).to_json()
        assert j["case"] == "D" and j["condition"] == "blocked" and j["alpha"] == -1.0


class TestDuality:
    def test_exponential_round_trip(self):
        f, u = exp_flow(horizon=1.0, nodes=10_001)
        res = transform_curve(u, f, 2, 1.5)
        assert verify_duality(u, res, 2, 1.5, f).max_residual <= 1e-3

    def test_exponential_relative_round_trip_long(self):
        f, u = exp_flow()
        res = transform_curve(u, f, 2, 1.5)
        rep = verify_duality(u, res, 2, 1.5, f, relative=True)
        assert rep.passed and rep.details["dual_gap_forward"] == 0

    def test_identity_round_trip(self):
        f, u = decay_flow(horizon=5, nodes=501)
        res = transform_curve(u, f, 2, 2)
        assert verify_duality(u, res, 2, 2, f).details["round_trip_sup"] < 1e-12

    def test_normlike_round_trip(self):
        f = NormLike(E1)
        u = oracle_flow(f, 2, E1.point([1.0]), np.linspace(0, 2, 201))
        res = transform_curve(u, f, 2, 3)
        rep = verify_duality(u, res, 2, 3, f)
        assert rep.max_residual < 1e-12
        assert rep.details["S_star_reverse"] == pytest.approx(1.0)

    def test_decay_dual_relations(self):
        f, u = decay_flow()
        res = transform_curve(u, f, 2, 4)
        rep = verify_duality(u, res, 2, 4, f)
        h = u.times[1]
        assert rep.passed
        assert rep.details["dual_gap_forward"] <= 2 * h
        assert math.isinf(rep.details["S_star_reverse"])

    def test_dual_gap_shrinks_under_refinement(self):
        f = NormLike(E1)
        gaps = []
        for n in (101, 201, 401):
            u = oracle_flow(f, 2, E1.point([1.0]), np.linspace(0, 1.9, n))
            res = transform_curve(u, f, 2, 3)
            gaps.append(abs(res.S_star - 1.0))
        assert gaps[-1] <= gaps[0]
