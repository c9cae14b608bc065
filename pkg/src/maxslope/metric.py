"""Concrete complete metric spaces: Euclidean space and the tripod.

The tripod is three copies of ``[0, inf)`` glued at their origins, carrying
the path-length metric.  Both spaces are uniquely geodesic, so a geodesic is
fully determined by its endpoints.

Points are immutable values and every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import InvalidPointError

TRIPOD_BRANCHES = 3


@dataclass(frozen=True)
class EuclideanPoint:
    coords: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    def to_json(self) -> dict:
        return {"space": "euclidean", "coords": list(self.coords)}


@dataclass(frozen=True)
class TripodPoint:
    """A point ``(branch, radius)`` on the tripod.

    Every zero-radius point is the origin; it is stored canonically as
    branch 0 so that equality and hashing agree with the metric.
    """

    branch: int
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius == 0.0:
            object.__setattr__(self, "branch", 0)

    def to_json(self) -> dict:
        return {"space": "tripod", "branch": self.branch, "radius": self.radius}


Point = Union[EuclideanPoint, TripodPoint]


@dataclass(frozen=True)
class PointIssue:
    """Structured reason why a point is not valid in a space."""

    code: str
    detail: str


class Euclidean:
    """The space R^n with the l2 metric."""

    name = "euclidean"

    def __init__(self, dimension: int):
        if int(dimension) != dimension or dimension < 1:
            raise ValueError(f"dimension must be a positive integer, got {dimension!r}")
        self.dimension = int(dimension)

    def __repr__(self):
        return f"Euclidean({self.dimension})"

    def __eq__(self, other):
        return isinstance(other, Euclidean) and other.dimension == self.dimension

    def __hash__(self):
        return hash(("euclidean", self.dimension))

    def validate(self, p) -> PointIssue | None:
        if not isinstance(p, EuclideanPoint):
            return PointIssue("wrong_type", f"expected EuclideanPoint, got {type(p).__name__}")
        if p.dim != self.dimension:
            return PointIssue(
                "dimension_mismatch", f"point has {p.dim} coordinates, space has dimension {self.dimension}"
            )
        if not all(math.isfinite(c) for c in p.coords):
            return PointIssue("non_finite", "coordinates must be finite")
        return None

    def point(self, coords) -> EuclideanPoint:
        coords = np.atleast_1d(np.asarray(coords, dtype=float))
        p = EuclideanPoint(tuple(coords.tolist()))
        _raise_if_invalid(self, p)
        return p

    def origin(self) -> EuclideanPoint:
        return EuclideanPoint((0.0,) * self.dimension)

    def distance(self, a: EuclideanPoint, b: EuclideanPoint) -> float:
        if len(a.coords) == 1:
            return abs(a.coords[0] - b.coords[0])
        return math.dist(a.coords, b.coords)

    def geodesic_point(self, a: EuclideanPoint, b: EuclideanPoint, theta: float) -> EuclideanPoint:
        if theta == 0.0:
            return a
        if theta == 1.0:
            return b
        return EuclideanPoint(tuple((1.0 - theta) * x + theta * y for x, y in zip(a.coords, b.coords)))


class Tripod:
    """Three half-lines glued at a common origin, with the path metric."""

    name = "tripod"
    dimension = None

    def __repr__(self):
        return "Tripod()"

    def __eq__(self, other):
        return isinstance(other, Tripod)

    def __hash__(self):
        return hash("tripod")

    def validate(self, p) -> PointIssue | None:
        if not isinstance(p, TripodPoint):
            return PointIssue("wrong_type", f"expected TripodPoint, got {type(p).__name__}")
        if int(p.branch) != p.branch or not 0 <= p.branch < TRIPOD_BRANCHES:
            return PointIssue("bad_branch", f"branch must be one of 0, 1, 2, got {p.branch!r}")
        if not math.isfinite(p.radius):
            return PointIssue("non_finite", "radius must be finite")
        if p.radius < 0:
            return PointIssue("negative_radius", f"radius must be >= 0, got {p.radius}")
        return None

    def point(self, branch: int, radius: float) -> TripodPoint:
        p = TripodPoint(int(branch), float(radius))
        _raise_if_invalid(self, p)
        return p

    def origin(self) -> TripodPoint:
        return TripodPoint(0, 0.0)

    def distance(self, a: TripodPoint, b: TripodPoint) -> float:
        if a.branch == b.branch:
            return abs(a.radius - b.radius)
        return a.radius + b.radius

    def geodesic_point(self, a: TripodPoint, b: TripodPoint, theta: float) -> TripodPoint:
        if theta == 0.0:
            return a
        if theta == 1.0:
            return b
        if a.branch == b.branch:
            return TripodPoint(a.branch, (1.0 - theta) * a.radius + theta * b.radius)
        # path runs through the origin
        s = theta * (a.radius + b.radius)
        if s <= a.radius:
            return TripodPoint(a.branch, a.radius - s)
        return TripodPoint(b.branch, s - a.radius)


MetricSpace = Union[Euclidean, Tripod]


def _raise_if_invalid(space, p):
    issue = space.validate(p)
    if issue is not None:
        raise InvalidPointError(f"{issue.code}: {issue.detail}")


def validate_point(space: MetricSpace, p) -> PointIssue | None:
    """Return ``None`` if ``p`` is a valid point of ``space``, else the issue."""
    return space.validate(p)


def distance(space: MetricSpace, a: Point, b: Point) -> float:
    """Distance between two valid points of ``space``."""
    _raise_if_invalid(space, a)
    _raise_if_invalid(space, b)
    return space.distance(a, b)


def geodesic_point(space: MetricSpace, a: Point, b: Point, theta: float) -> Point:
    """Point at fraction ``theta`` of the way along the geodesic from a to b."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    _raise_if_invalid(space, a)
    _raise_if_invalid(space, b)
    return space.geodesic_point(a, b, theta)


def space_from_json(data: dict) -> MetricSpace:
    kind = data.get("space")
    if kind == "euclidean":
        return Euclidean(int(data.get("dim", data.get("dimension", 1))))
    if kind == "tripod":
        return Tripod()
    raise InvalidPointError(f"unknown space {kind!r}")


def space_to_json(space: MetricSpace) -> dict:
    if isinstance(space, Euclidean):
        return {"space": "euclidean", "dim": space.dimension}
    return {"space": "tripod"}


def point_from_json(data: dict) -> Point:
    kind = data.get("space")
    if kind == "euclidean":
        return EuclideanPoint(tuple(float(c) for c in data["coords"]))
    if kind == "tripod":
        return TripodPoint(int(data["branch"]), float(data["radius"]))
    raise InvalidPointError(f"unknown point space {kind!r}")


def point_to_json(p: Point) -> dict:
    return p.to_json()


def point_fields(space: MetricSpace) -> list[str]:
    """Column names used when points are flattened into tables."""
    if isinstance(space, Euclidean):
        return [f"x{i}" for i in range(space.dimension)]
    return ["branch", "radius"]


def point_values(p: Point) -> Sequence[float]:
    if isinstance(p, EuclideanPoint):
        return p.coords
    return (p.branch, p.radius)
