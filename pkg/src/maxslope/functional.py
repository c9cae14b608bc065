"""Built-in functionals, their local slopes and the proximal machinery.

Every functional carries a :class:`ConvexityProfile` ``(p0, lambda, psi)``
declaring that for all ``v0, v1`` the geodesic ``gamma`` between them
satisfies::

    f(gamma_t) <= (1-t) f(v0) + t f(v1) - lambda t (1 - psi(t)) d(v0, v1)**p0

The local slope ``|d^- f|(v) = limsup_{w->v} (f(v)-f(w))^+ / d(v,w)`` is
available in closed form for every built-in, and can also be estimated
through the global formula valid for such functionals::

    |d^- f|(v) = sup_{w != v} [ (f(v)-f(w)) / d(v,w) - lambda^- d(v,w)**(p0-1) ]^+
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError, ProximalError, SpaceMismatchError, WellPosednessError
from .metric import (
    Euclidean,
    EuclideanPoint,
    MetricSpace,
    Point,
    Tripod,
    TripodPoint,
    TRIPOD_BRANCHES,
    point_from_json,
    space_from_json,
)

PSI_FAMILIES = ("linear", "power")


@dataclass(frozen=True)
class ConvexityProfile:
    p0: float
    lam: float
    psi: str = "linear"

    def __post_init__(self):
        if not self.p0 > 1:
            raise ValueError(f"p0 must be > 1, got {self.p0}")
        if self.psi not in PSI_FAMILIES:
            raise ValueError(f"psi must be one of {PSI_FAMILIES}, got {self.psi!r}")

    @property
    def lambda_minus(self) -> float:
        return max(0.0, -self.lam)

    def psi_value(self, t):
        t = np.asarray(t, dtype=float)
        if self.psi == "linear":
            return t
        return t ** (self.p0 - 1.0)

    def max_tau(self, p: float) -> float:
        """Supremum of admissible proximal steps: tau**(p-1) < 1/lambda^-."""
        lm = self.lambda_minus
        if lm == 0.0:
            return math.inf
        return (1.0 / lm) ** (1.0 / (p - 1.0))

    def to_json(self) -> dict:
        return {"p0": self.p0, "lambda": self.lam, "psi": self.psi}

    @classmethod
    def from_json(cls, data: dict) -> "ConvexityProfile":
        return cls(float(data["p0"]), float(data["lambda"]), data.get("psi", "linear"))


class Functional:
    """Base class for the built-in functionals.

    Subclasses provide the value, the closed-form local slope and, where
    known, a closed-form proximal map.  All of them are real valued and
    continuous, hence proper and lower semicontinuous.
    """

    tag = "functional"

    def __init__(self, space: MetricSpace, profile: ConvexityProfile):
        self.space = space
        self.profile = profile

    def __repr__(self):
        return f"{type(self).__name__}({self.space!r}, {self.profile})"

    def check(self, v: Point) -> None:
        issue = self.space.validate(v)
        if issue is not None:
            raise SpaceMismatchError(f"{self.tag} on {self.space!r}: {issue.code}: {issue.detail}")

    def value(self, v: Point) -> float:
        raise NotImplementedError

    def slope(self, v: Point) -> float:
        raise NotImplementedError

    def values(self, X: np.ndarray) -> np.ndarray:
        """Vectorised values on an ``(m, n)`` coordinate array (Euclidean only)."""
        return np.array([self.value(EuclideanPoint(tuple(x))) for x in X])

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.tag} has no gradient")

    def prox_closed_form(self, p: float, tau: float, v: Point) -> Point | None:
        return None

    def minimizer(self) -> Point | None:
        return None

    def infimum(self) -> float | None:
        """``inf f`` when known, ``-inf`` when unbounded below."""
        return None

    def reference(self) -> Point:
        return self.space.origin()

    def to_json(self) -> dict:
        raise NotImplementedError


def _radial_unit(x: np.ndarray) -> np.ndarray | None:
    n = float(np.linalg.norm(x))
    return None if n == 0.0 else x / n


class Quadratic(Functional):
    """``f(x) = scale * |x - center|^2 / 2`` on R^n."""

    tag = "quadratic"

    def __init__(self, space: Euclidean, scale: float = 1.0, center=None, profile=None):
        if not isinstance(space, Euclidean):
            raise SpaceMismatchError("quadratic is defined on Euclidean spaces only")
        if not scale > 0:
            raise ValueError(f"scale must be > 0, got {scale}")
        self.scale = float(scale)
        c = np.zeros(space.dimension) if center is None else np.atleast_1d(np.asarray(center, float))
        if c.shape != (space.dimension,):
            raise SpaceMismatchError("center dimension does not match the space")
        self.center = c
        super().__init__(space, profile or ConvexityProfile(2.0, self.scale / 2.0, "linear"))

    def value(self, v):
        self.check(v)
        r = v.as_array() - self.center
        return 0.5 * self.scale * float(r @ r)

    def values(self, X):
        R = np.asarray(X, float).reshape(len(X), -1) - self.center
        return 0.5 * self.scale * np.einsum("ij,ij->i", R, R)

    def slope(self, v):
        self.check(v)
        return self.scale * float(np.linalg.norm(v.as_array() - self.center))

    def gradient(self, x):
        return self.scale * (x - self.center)

    def prox_closed_form(self, p, tau, v):
        if p != 2.0:
            return None
        x = v.as_array()
        w = (self.center * self.scale * tau + x) / (1.0 + self.scale * tau)
        return EuclideanPoint(tuple(w))

    def minimizer(self):
        return EuclideanPoint(tuple(self.center))

    def infimum(self):
        return 0.0

    def reference(self):
        return EuclideanPoint(tuple(self.center))

    def to_json(self):
        return {
            "functional": self.tag,
            "space": "euclidean",
            "dim": self.space.dimension,
            "scale": self.scale,
            "center": self.center.tolist(),
        }


class NegativeQuadratic(Functional):
    """``f(x) = -|x|^2 / 2`` on R^n, declared (2, -2)-convex."""

    tag = "negative_quadratic"

    def __init__(self, space: Euclidean, profile=None):
        if not isinstance(space, Euclidean):
            raise SpaceMismatchError("negative_quadratic is defined on Euclidean spaces only")
        super().__init__(space, profile or ConvexityProfile(2.0, -2.0, "linear"))

    def value(self, v):
        self.check(v)
        x = v.as_array()
        return -0.5 * float(x @ x)

    def values(self, X):
        X = np.asarray(X, float).reshape(len(X), -1)
        return -0.5 * np.einsum("ij,ij->i", X, X)

    def slope(self, v):
        self.check(v)
        return float(np.linalg.norm(v.as_array()))

    def gradient(self, x):
        return -x

    def prox_closed_form(self, p, tau, v):
        if p != 2.0 or tau >= 1.0:
            return None
        return EuclideanPoint(tuple(v.as_array() / (1.0 - tau)))

    def infimum(self):
        return -math.inf

    def to_json(self):
        return {"functional": self.tag, "space": "euclidean", "dim": self.space.dimension}


class NormLike(Functional):
    """``f(x) = |x|``; the slope is 1 off the origin and 0 at the minimiser."""

    tag = "norm_like"

    def __init__(self, space: Euclidean, profile=None):
        if not isinstance(space, Euclidean):
            raise SpaceMismatchError("norm_like is defined on Euclidean spaces only")
        super().__init__(space, profile or ConvexityProfile(2.0, 0.0, "linear"))

    def value(self, v):
        self.check(v)
        return float(np.linalg.norm(v.as_array()))

    def values(self, X):
        X = np.asarray(X, float).reshape(len(X), -1)
        return np.linalg.norm(X, axis=1)

    def slope(self, v):
        self.check(v)
        return 0.0 if not any(v.coords) else 1.0

    def gradient(self, x):
        e = _radial_unit(x)
        return np.zeros_like(x) if e is None else e

    def prox_closed_form(self, p, tau, v):
        # moving a distance s toward 0 costs s**p/(p tau**(p-1)) and gains s,
        # so the optimal move is s = tau for every p
        x = v.as_array()
        n = float(np.linalg.norm(x))
        if n <= tau:
            return EuclideanPoint((0.0,) * len(x))
        return EuclideanPoint(tuple(x * (1.0 - tau / n)))

    def minimizer(self):
        return self.space.origin()

    def infimum(self):
        return 0.0

    def to_json(self):
        return {"functional": self.tag, "space": "euclidean", "dim": self.space.dimension}


class DistanceToPoint(Functional):
    """``f(v) = d(v, anchor)`` on the tripod."""

    tag = "distance_to_point"

    def __init__(self, anchor: TripodPoint, space: Tripod | None = None, profile=None):
        space = space or Tripod()
        issue = space.validate(anchor)
        if issue is not None:
            raise SpaceMismatchError(f"anchor: {issue.detail}")
        self.anchor = anchor
        super().__init__(space, profile or ConvexityProfile(2.0, 0.0, "linear"))

    def value(self, v):
        self.check(v)
        return self.space.distance(v, self.anchor)

    def slope(self, v):
        self.check(v)
        return 0.0 if v == self.anchor else 1.0

    def prox_closed_form(self, p, tau, v):
        d = self.space.distance(v, self.anchor)
        if d <= tau:
            return self.anchor
        return self.space.geodesic_point(v, self.anchor, tau / d)

    def minimizer(self):
        return self.anchor

    def infimum(self):
        return 0.0

    def reference(self):
        return self.anchor

    def to_json(self):
        return {"functional": self.tag, "space": "tripod", "anchor": self.anchor.to_json()}


FUNCTIONALS = {
    cls.tag: cls for cls in (Quadratic, NegativeQuadratic, NormLike, DistanceToPoint)
}


def functional_from_json(data: dict) -> Functional:
    """Build a functional from ``{"functional": tag, "space": ..., ...}``."""
    tag = data.get("functional")
    if tag not in FUNCTIONALS:
        raise ConfigError(f"unknown functional {tag!r}; known: {sorted(FUNCTIONALS)}")
    profile = ConvexityProfile.from_json(data["profile"]) if "profile" in data else None
    try:
        if tag == "distance_to_point":
            anchor = data.get("anchor", {"branch": 0, "radius": 0.0})
            anchor = point_from_json({"space": "tripod", **anchor})
            return DistanceToPoint(anchor, profile=profile)
        space = space_from_json({"space": data.get("space", "euclidean"), "dim": data.get("dim", 1)})
        if tag == "quadratic":
            return Quadratic(space, data.get("scale", 1.0), data.get("center"), profile=profile)
        return FUNCTIONALS[tag](space, profile=profile)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad functional config {data!r}: {exc}") from exc


def functional_to_json(f: Functional) -> dict:
    out = f.to_json()
    out["profile"] = f.profile.to_json()
    return out


# ---------------------------------------------------------------------------
# evaluation and slopes
# ---------------------------------------------------------------------------


def evaluate(f: Functional, v: Point) -> float:
    return f.value(v)


def slope_analytic(f: Functional, v: Point) -> float:
    return f.slope(v)


def grid_sampler(center: float, radius: float, n: int) -> Callable[[Point], np.ndarray]:
    """Candidate generator returning an ``n``-point grid on ``[c-r, c+r]`` (R^1)."""

    def sample(v):
        return np.linspace(center - radius, center + radius, n).reshape(-1, 1)

    return sample


def default_sampler(f: Functional, n_grid: int = 2048, n_near: int = 2048, seed: int = 0):
    """Candidates spread over a large ball plus log-spaced points close to ``v``.

    The ball is centred at ``f.reference()`` with radius
    ``8 * max(1, d(v, reference))``.
    """

    def sample(v):
        ref = f.reference()
        radius = 8.0 * max(1.0, f.space.distance(v, ref))
        offsets = np.logspace(-9, 0, max(n_near // 2, 1)) * radius / 8.0
        if isinstance(f.space, Tripod):
            pts = []
            per_branch = max(n_grid // TRIPOD_BRANCHES, 2)
            for b in range(TRIPOD_BRANCHES):
                pts.extend(TripodPoint(b, r) for r in np.linspace(0.0, radius, per_branch))
            for b in range(TRIPOD_BRANCHES):
                for s in offsets:
                    if b == v.branch or v.radius == 0.0:
                        pts.append(TripodPoint(b, v.radius + s))
                    else:
                        pts.append(TripodPoint(b, s))
                if b == v.branch:
                    pts.extend(TripodPoint(b, r) for r in v.radius - offsets if r >= 0)
            return pts
        x = v.as_array()
        c = ref.as_array()
        n = len(x)
        if n == 1:
            grid = np.linspace(c[0] - radius, c[0] + radius, n_grid).reshape(-1, 1)
            near = np.concatenate([x + offsets[:, None], x - offsets[:, None]])
            return np.vstack([grid, near])
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(n_grid, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        grid = c + dirs * radius * rng.random(n_grid)[:, None] ** (1.0 / n)
        basis = [np.eye(n)[i] for i in range(n)]
        e = _radial_unit(x - c)
        if e is not None:
            basis.append(e)
        near = [x + sgn * offsets[:, None] * b for b in basis for sgn in (1.0, -1.0)]
        return np.vstack([grid, *near])

    return sample


def slope_global_formula(
    f: Functional,
    v: Point,
    sampler=None,
    profile: ConvexityProfile | None = None,
) -> float:
    """Estimate the local slope by maximising the global formula over candidates.

    ``sampler(v)`` returns either a list of points or, on Euclidean spaces,
    an ``(m, n)`` coordinate array.  The estimate never decreases when the
    candidate set grows.
    """
    profile = profile or f.profile
    sampler = sampler or default_sampler(f)
    f.check(v)
    fv = f.value(v)
    cands = sampler(v)
    lm = profile.lambda_minus
    if isinstance(cands, np.ndarray):
        X = cands.reshape(len(cands), -1)
        d = np.linalg.norm(X - v.as_array(), axis=1)
        keep = d > 0
        if not keep.any():
            raise ValueError("candidate set contains no point different from v")
        d = d[keep]
        fw = f.values(X[keep])
    else:
        pairs = [(f.space.distance(v, w), w) for w in cands]
        pairs = [(d, w) for d, w in pairs if d > 0]
        if not pairs:
            raise ValueError("candidate set contains no point different from v")
        d = np.array([d for d, _ in pairs])
        fw = np.array([f.value(w) for _, w in pairs])
    vals = (fv - fw) / d - lm * d ** (profile.p0 - 1.0)
    return max(float(vals.max()), 0.0)


# ---------------------------------------------------------------------------
# proximal map and envelope
# ---------------------------------------------------------------------------


def proximal_objective(f: Functional, p: float, tau: float, v: Point, w: Point) -> float:
    """``F_p(w; tau, v) = f(w) + d(w, v)**p / (p tau**(p-1))``."""
    return f.value(w) + f.space.distance(w, v) ** p / (p * tau ** (p - 1.0))


def check_step(f: Functional, p: float, tau: float) -> None:
    if not p > 1:
        raise ValueError(f"exponent p must be > 1, got {p}")
    if not tau > 0:
        raise WellPosednessError(f"tau must be > 0, got {tau}")
    prof = f.profile
    if prof.lam < 0:
        if p != prof.p0:
            # convexity of F_p inside the step window is only known for p = p0
            raise WellPosednessError(
                f"{f.tag} is ({prof.p0}, {prof.lam})-convex; proximal steps need p = p0 = {prof.p0}, got p={p}"
            )
        if tau >= prof.max_tau(p):
            raise WellPosednessError(
                f"tau={tau} violates tau**(p-1) < 1/lambda^- (need tau < {prof.max_tau(p):.6g})"
            )


def _descent(f: Functional, p: float, tau: float, v: EuclideanPoint, max_iter: int = 100_000) -> EuclideanPoint:
    """Damped gradient descent on ``F_p`` with Armijo backtracking."""
    x0 = v.as_array()
    c = 1.0 / tau ** (p - 1.0)

    def F(w):
        r = float(np.linalg.norm(w - x0))
        return f.value(EuclideanPoint(tuple(w))) + c * r**p / p

    def grad(w):
        diff = w - x0
        r = float(np.linalg.norm(diff))
        g = f.gradient(w)
        if r > 0.0:
            g = g + c * r ** (p - 2.0) * diff
        return g

    w = x0.copy()
    Fw = F(w)
    g = grad(w)
    step = min(tau, 1.0)
    escape = 1e8 * (1.0 + float(np.linalg.norm(x0)) + tau)
    for _ in range(max_iter):
        gg = float(g @ g)
        if gg == 0.0:
            return EuclideanPoint(tuple(w))
        while True:
            w_new = w - step * g
            F_new = F(w_new)
            if F_new <= Fw - 1e-4 * step * gg:
                break
            step *= 0.5
            if step < 1e-300:
                return EuclideanPoint(tuple(w))
        dw = w_new - w
        g_new = grad(w_new)
        if float(np.linalg.norm(w_new - x0)) > escape or not math.isfinite(F_new):
            raise ProximalError(f"proximal objective of {f.tag} appears unbounded below (p={p}, tau={tau})")
        done = float(np.linalg.norm(dw)) < 1e-12 * (1.0 + float(np.linalg.norm(w_new)))
        y = g_new - g
        sy = float(dw @ y)
        step = float(dw @ dw) / sy if sy > 0 else 2.0 * step
        w, Fw, g = w_new, F_new, g_new
        if done:
            return EuclideanPoint(tuple(w))
    raise ProximalError(f"proximal descent for {f.tag} did not converge in {max_iter} iterations")


def _tripod_search(f: Functional, p: float, tau: float, v: TripodPoint) -> TripodPoint:
    ref = f.reference()
    r_max = v.radius + getattr(ref, "radius", 0.0) + tau + 1.0
    best, best_val = v, proximal_objective(f, p, tau, v, v)
    for b in range(TRIPOD_BRANCHES):
        res = minimize_scalar(
            lambda r: proximal_objective(f, p, tau, v, TripodPoint(b, r)),
            bounds=(0.0, r_max),
            method="bounded",
            options={"xatol": 1e-13, "maxiter": 2000},
        )
        if not res.success:
            raise ProximalError(f"branch search failed on branch {b}: {res.message}")
        cand = TripodPoint(b, float(res.x))
        val = proximal_objective(f, p, tau, v, cand)
        if val < best_val:
            best, best_val = cand, val
    return best


def proximal(f: Functional, p: float, tau: float, v: Point, method: str = "auto") -> Point:
    """Global minimiser of ``w -> F_p(w; tau, v)``.

    ``method`` is ``"auto"`` (closed form when available), ``"analytic"``
    or ``"numeric"``.
    """
    check_step(f, p, tau)
    f.check(v)
    if method in ("auto", "analytic"):
        w = f.prox_closed_form(p, tau, v)
        if w is not None:
            return w
        if method == "analytic":
            raise ProximalError(f"no closed-form proximal map for {f.tag} with p={p}")
    elif method != "numeric":
        raise ValueError(f"unknown method {method!r}")
    if isinstance(f.space, Tripod):
        w = _tripod_search(f, p, tau, v)
    else:
        w = _descent(f, p, tau, v)
    if proximal_objective(f, p, tau, v, w) > f.value(v) + 1e-12 * (1.0 + abs(f.value(v))):
        raise ProximalError("numeric proximal step increased the objective")
    return w


def moreau_envelope(f: Functional, p: float, t: float, v: Point, method: str = "auto") -> float:
    """``f_t(v) = inf_w f(w) + d(v, w)**p / (p t**(p-1))``."""
    w = proximal(f, p, t, v, method=method)
    return proximal_objective(f, p, t, v, w)


# ---------------------------------------------------------------------------
# sampled convexity certificate
# ---------------------------------------------------------------------------


def convexity_defect(
    f: Functional,
    pairs: Iterable[tuple[Point, Point]],
    thetas=None,
    profile: ConvexityProfile | None = None,
) -> float:
    """Largest violation of the declared convexity inequality along geodesics.

    Returns ``max(f(g_t) - (1-t) f(g_0) - t f(g_1) + lambda t (1 - psi(t)) d**p0)``
    over the given endpoint pairs and ``thetas``; a value ``<= 0`` (up to
    rounding) certifies the profile on the sample.
    """
    profile = profile or f.profile
    thetas = np.linspace(0.0, 1.0, 21) if thetas is None else np.asarray(thetas, float)
    psi = profile.psi_value(thetas)
    worst = -math.inf
    for a, b in pairs:
        d = f.space.distance(a, b)
        fa, fb = f.value(a), f.value(b)
        for th, ps in zip(thetas, psi):
            g = f.space.geodesic_point(a, b, float(th))
            bound = (1 - th) * fa + th * fb - profile.lam * th * (1 - ps) * d**profile.p0
            worst = max(worst, f.value(g) - bound)
    return worst
