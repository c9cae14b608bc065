"""CSV and JSON serialization of curves and reports.

CSV floats use 17 significant digits so that every double survives a round
trip.  JSON is written with sorted keys and non-finite numbers as strings,
which keeps files byte-stable and strictly valid.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .analysis import _jsonable, annotate
from .flow import SampledCurve
from .functional import Functional
from .metric import point_fields, point_from_json, point_values, space_from_json, space_to_json

CSV_FLOAT = ".17g"


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), CSV_FLOAT)


def curve_to_json(curve: SampledCurve) -> dict:
    def arr(a):
        return None if a is None else [_jsonable(float(x)) for x in a]

    return {
        "space": space_to_json(curve.space),
        "p": curve.p,
        "functional": curve.functional,
        "tau": curve.tau,
        "flags": _jsonable(curve.flags),
        "times": arr(curve.times),
        "points": [p.to_json() for p in curve.points],
        "f_values": arr(curve.f_values),
        "slopes": arr(curve.slopes),
        "metric_derivatives": arr(curve.metric_derivatives),
    }


def curve_from_json(data: dict) -> SampledCurve:
    def arr(key):
        v = data.get(key)
        return None if v is None else np.array([float(x) for x in v])

    return SampledCurve(
        space_from_json(data["space"]),
        arr("times"),
        [point_from_json(p) for p in data["points"]],
        float(data["p"]),
        functional=data.get("functional"),
        tau=data.get("tau"),
        flags=dict(data.get("flags") or {}),
        f_values=arr("f_values"),
        slopes=arr("slopes"),
        metric_derivatives=arr("metric_derivatives"),
    )


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def export_curve(curve: SampledCurve, fmt: str, path, f: Functional | None = None) -> Path:
    """Write ``curve`` as ``csv`` or ``json``.

    The CSV header is ``t,<point fields>,f,slope,metric_derivative``.  When
    ``f`` is given, missing cached columns are computed first; otherwise they
    are left empty.
    """
    if f is not None and len(curve) >= 2:
        curve = annotate(curve, f)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        return write_json(path, curve_to_json(curve))
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}; use 'csv' or 'json'")
    cols = [curve.f_values, curve.slopes, curve.metric_derivatives]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *point_fields(curve.space), "f", "slope", "metric_derivative"])
        for i, (t, pt) in enumerate(zip(curve.times, curve.points)):
            extra = ["" if c is None else _fmt(c[i]) for c in cols]
            w.writerow([_fmt(t), *(_fmt(v) for v in point_values(pt)), *extra])
    return path


def import_curve(path) -> SampledCurve:
    """Read a curve written by ``export_curve(..., "json", ...)``."""
    return curve_from_json(read_json(path))


def read_curve_csv(path) -> dict:
    """Columns of an exported CSV as float arrays, keyed by header name."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        out[name] = np.array([math.nan if r[j] == "" else float(r[j]) for r in body])
    return out
