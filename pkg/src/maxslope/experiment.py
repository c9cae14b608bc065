"""Configured experiments and the curated example reproductions.

An experiment produces a p-flow (minimizing movements or closed form), runs
the enabled checkers on it, transforms it to every requested exponent p' and
writes curves (CSV, JSON) and a ``report.json`` into its own directory.

Exit codes: 0 when every enabled checker passed or an outcome was an
expected block, 1 when a checker failed, 2 when a request was refused.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .analysis import (
    DiagnosticsReport,
    annotate,
    arc_length_reparametrize,
    check_convexity_along_curve,
    check_energy_identity,
    check_regularizing_bounds,
    check_slope_monotone,
    detect_positivity_horizon,
)
from .errors import ConfigError, HypothesisError, WellPosednessError
from .flow import SolverConfig, oracle_flow, solve_minimizing_movements
from .functional import Functional, NegativeQuadratic, NormLike, Quadratic, functional_from_json
from .io import export_curve, write_json
from .metric import Euclidean, Tripod
from .transform import transform_curve, verify_duality

EXIT_OK, EXIT_FAILED, EXIT_REFUSED = 0, 1, 2

DEFAULT_CHECKERS = {
    "energy_identity": {"enabled": True, "tolerance": 1e-2, "relative": False},
    "convexity": {"enabled": True, "tolerance": 1e-6, "nodes": 1001},
    "slope_monotone": {"enabled": True, "tolerance": 1e-8},
    "regularizing_bounds": {"enabled": True, "tolerance": 1e-6},
    "transform_energy": {"enabled": True, "tolerance": 1e-2},
    "duality": {"enabled": True, "tolerance": 1e-3, "relative": False},
}
DEFAULT_SOLVER = {"tau": 1e-3, "horizon": 1.0, "max_steps": 1_000_000, "stop_on_critical": False,
                  "blow_up_radius": 1e6}
DEFAULT_ORACLE = {"nodes": 1001, "horizon": 1.0, "theta": None}


@dataclass
class ExperimentConfig:
    """Everything needed to rerun an experiment; see ``from_dict`` for the JSON layout."""

    name: str = "experiment"
    functional: dict = field(default_factory=lambda: {"functional": "quadratic", "space": "euclidean", "dim": 1})
    p: float = 2.0
    p_prime: list = field(default_factory=list)
    u0: object = field(default_factory=lambda: [1.0])
    source: str = "solver"
    solver: dict = field(default_factory=lambda: dict(DEFAULT_SOLVER))
    oracle: dict = field(default_factory=lambda: dict(DEFAULT_ORACLE))
    checkers: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_CHECKERS))
    output: str = "out"
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        for key, value in data.items():
            if key == "solver":
                value = {**DEFAULT_SOLVER, **value}
            elif key == "oracle":
                value = {**DEFAULT_ORACLE, **value}
            elif key == "checkers":
                merged = copy.deepcopy(DEFAULT_CHECKERS)
                for name, opts in value.items():
                    if name not in merged:
                        raise ConfigError(f"unknown checker {name!r}; known: {sorted(merged)}")
                    if isinstance(opts, bool):
                        opts = {"enabled": opts}
                    merged[name].update(opts)
                value = merged
            elif key == "p_prime" and not isinstance(value, list):
                value = [value]
            setattr(cfg, key, value)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        if self.source not in ("solver", "oracle"):
            raise ConfigError(f"source must be 'solver' or 'oracle', got {self.source!r}")
        try:
            self.p = float(self.p)
            self.p_prime = [float(x) for x in self.p_prime]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad exponent: {exc}") from exc
        if not self.p > 1 or any(not x > 1 for x in self.p_prime):
            raise ConfigError("exponents must be > 1")
        for name, opts in self.checkers.items():
            if not opts.get("tolerance", 1.0) > 0:
                raise ConfigError(f"tolerance of {name} must be > 0")
        self.build_functional()

    def build_functional(self) -> Functional:
        return functional_from_json(self.functional)

    def initial_point(self, f: Functional):
        u0 = self.u0
        if isinstance(f.space, Tripod):
            if not isinstance(u0, dict):
                raise ConfigError("tripod u0 must be {'branch': b, 'radius': r}")
            return f.space.point(u0.get("branch", 0), u0.get("radius", 0.0))
        coords = [u0] if isinstance(u0, (int, float)) else u0
        return f.space.point(coords)

    def to_dict(self) -> dict:
        return asdict(self)


def apply_overrides(data: dict, sets) -> dict:
    """Apply ``key.sub=value`` overrides; values are parsed as JSON when possible."""
    data = copy.deepcopy(data)
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return data


def _produce_curve(cfg: ExperimentConfig, f: Functional, u0):
    if cfg.source == "solver":
        s = cfg.solver
        scfg = SolverConfig(float(s["tau"]), float(s["horizon"]), int(s["max_steps"]),
                            bool(s["stop_on_critical"]), float(s["blow_up_radius"]))
        return solve_minimizing_movements(f, cfg.p, u0, scfg)
    o = cfg.oracle
    grid = np.linspace(0.0, float(o["horizon"]), int(o["nodes"]))
    return oracle_flow(f, cfg.p, u0, grid, theta=o.get("theta"))


def _tol(cfg, name, scale):
    return cfg.checkers[name]["tolerance"] * scale


def _enabled(cfg, name):
    return bool(cfg.checkers[name].get("enabled", True))


def _base_checks(cfg: ExperimentConfig, f: Functional, curve, scale: float) -> dict:
    out = {}
    if _enabled(cfg, "energy_identity"):
        out["energy_identity"] = check_energy_identity(
            curve, f, cfg.p, _tol(cfg, "energy_identity", scale),
            relative=bool(cfg.checkers["energy_identity"].get("relative", False)),
        )
    if _enabled(cfg, "convexity"):
        n = int(cfg.checkers["convexity"].get("nodes", 1001))
        _, flat = arc_length_reparametrize(curve, f, n_points=min(n, len(curve)))
        out["convexity"] = check_convexity_along_curve(flat, f, tolerance=_tol(cfg, "convexity", scale))
    if _enabled(cfg, "slope_monotone"):
        tol = _tol(cfg, "slope_monotone", scale)
        if f.profile.lam < 0:
            out["slope_monotone"] = DiagnosticsReport.skip("slope_monotone", tol, "lambda < 0")
        else:
            out["slope_monotone"] = check_slope_monotone(curve, f, tolerance=tol)
    if _enabled(cfg, "regularizing_bounds"):
        out["regularizing_bounds"] = check_regularizing_bounds(
            curve, f, cfg.p, tolerance=_tol(cfg, "regularizing_bounds", scale)
        )
    return out


def _transform_entry(cfg, f, curve, pp, out_dir: Path, scale: float) -> dict:
    entry = {"p_prime": pp}
    try:
        res = transform_curve(curve, f, cfg.p, pp, tolerance=_tol(cfg, "transform_energy", scale))
    except HypothesisError as exc:
        entry.update(status="refused", error=str(exc))
        return entry
    entry.update(res.to_json())
    reports = []
    if _enabled(cfg, "transform_energy"):
        reports.append(res.diagnostics[0])
    if _enabled(cfg, "duality"):
        reports.append(verify_duality(curve, res, cfg.p, pp, f, _tol(cfg, "duality", scale),
                                      relative=bool(cfg.checkers["duality"].get("relative", False))))
    entry["diagnostics"] = [r.to_json() for r in reports]
    export_curve(res.transformed, "csv", out_dir / f"transformed_p{pp:g}.csv", f)
    if res.blocked:
        entry["status"] = "blocked"
    else:
        entry["status"] = "passed" if all(r.passed for r in reports) else "failed"
    return entry


def run_experiment(
    cfg: ExperimentConfig, out_dir=None, mode: str = "verify", tol_scale: float = 1.0
) -> tuple[int, dict]:
    """Run ``cfg`` in mode ``solve``, ``transform`` or ``verify``.

    ``solve`` only produces and exports the flow; ``transform`` adds the
    exponent transforms with their diagnostics; ``verify`` also runs the
    checkers on the flow itself.  Returns ``(exit_code, summary)``; the
    summary is also written to ``<out_dir>/<name>/report.json``.
    """
    if mode not in ("solve", "transform", "verify"):
        raise ConfigError(f"unknown mode {mode!r}")
    if not tol_scale > 0:
        raise ConfigError("tol_scale must be > 0")
    out = Path(out_dir if out_dir is not None else cfg.output) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    summary = {"name": cfg.name, "mode": mode, "tol_scale": tol_scale, "config": cfg.to_dict()}
    f = cfg.build_functional()
    try:
        u0 = cfg.initial_point(f)
        curve = annotate(_produce_curve(cfg, f, u0), f)
    except (WellPosednessError, HypothesisError, ValueError) as exc:
        summary.update(status="refused", error=str(exc), exit_code=EXIT_REFUSED)
        _write_report(out, summary)
        return EXIT_REFUSED, summary
    export_curve(curve, "csv", out / "curve.csv", f)
    export_curve(curve, "json", out / "curve.json", f)
    hz = detect_positivity_horizon(curve, f)
    summary["curve"] = {"nodes": len(curve), "flags": curve.flags, "t_star": hz.t_star,
                        "stationary_tail": hz.stationary_tail}
    code = EXIT_OK
    if mode == "verify":
        checks = _base_checks(cfg, f, curve, tol_scale)
        summary["checkers"] = {k: r.to_json() for k, r in checks.items()}
        if not all(r.passed for r in checks.values()):
            code = EXIT_FAILED
    if mode in ("transform", "verify"):
        entries = [_transform_entry(cfg, f, curve, pp, out, tol_scale) for pp in cfg.p_prime]
        summary["transforms"] = entries
        if any(e["status"] == "refused" for e in entries):
            code = EXIT_REFUSED
        elif any(e["status"] == "failed" for e in entries):
            code = max(code, EXIT_FAILED)
    summary["exit_code"] = code
    summary["status"] = {EXIT_OK: "passed", EXIT_FAILED: "failed", EXIT_REFUSED: "refused"}[code]
    _write_report(out, summary)
    return code, summary


def _write_report(out: Path, summary: dict) -> None:
    stamped = {**summary, "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    write_json(out / "report.json", stamped)


# ---------------------------------------------------------------------------
# curated examples
# ---------------------------------------------------------------------------


def _check(name, value, tolerance, passed=None, **extra):
    ok = (value <= tolerance) if passed is None else passed
    return {"name": name, "value": value, "tolerance": tolerance, "passed": bool(ok), **extra}


def _blowup_example(out: Path, scale: float) -> list:
    E = Euclidean(1)
    f = NegativeQuadratic(E)
    u = oracle_flow(f, 2.0, E.point([1.0]), np.linspace(0.0, 10.0, 10_001))
    res = transform_curve(u, f, 2.0, 1.5)
    export_curve(res.transformed, "csv", out / "transformed_p1.5.csv", f)
    a = res.alpha
    s = np.linspace(0.0, 0.9, 901)
    closed = (1.0 + a * s) ** (1.0 / a)
    err = max(abs(res.transformed.at(x).coords[0] - c) for x, c in zip(s, closed))
    dual = verify_duality(u, res, 2.0, 1.5, f, 1e-3 * scale, relative=True)
    return [
        _check("alpha", abs(a + 1.0), 1e-12 * scale),
        _check("S_star_vs_minus_inverse_alpha", abs(res.S_star + 1.0 / a), 1e-3 * scale),
        _check("sup_error_on_0_0.9", err, 1e-3 * scale),
        _check("condition_blocked", 0.0, 1.0, passed=res.condition == "blocked", condition=res.condition),
        _check("transformed_energy_identity", res.diagnostics[0].max_residual, 1e-2 * scale),
        _check("relative_round_trip", dual.max_residual, 1e-3 * scale),
    ]


def _nonuniqueness_example(out: Path, scale: float) -> list:
    E = Euclidean(2)
    f = NegativeQuadratic(E)
    origin = E.origin()
    flat = solve_minimizing_movements(f, 2.0, origin, SolverConfig(1e-3, 1.0))
    moved = max(E.distance(origin, pt) for pt in flat.points)
    checks = [
        _check("p2_flow_constant", moved, 1e-12 * scale),
        _check("slope_at_origin", f.slope(origin), 1e-12 * scale),
    ]
    grid = np.linspace(0.0, 2.0, 2001)
    family = []
    for theta in (0.0, math.pi / 2, math.pi):
        c = oracle_flow(f, 4.0, origin, grid, theta=theta)
        rep = check_energy_identity(c, f, 4.0)
        checks.append(_check(f"energy_identity_p4_theta_{theta:.4f}", rep.max_residual, 1e-2 * scale))
        export_curve(c, "csv", out / f"theta_{theta:.4f}.csv", f)
        family.append(c)
    dmin = min(
        max(E.distance(x, y) for x, y in zip(a.points, b.points))
        for i, a in enumerate(family)
        for b in family[i + 1:]
    )
    checks.append(_check("min_pairwise_sup_distance", dmin, 0.1, passed=dmin > 0.1))
    try:
        transform_curve(flat, f, 2.0, 4.0)
        refused = False
    except HypothesisError:
        refused = True
    checks.append(_check("transform_to_p4_refused", 0.0, 1.0, passed=refused))
    return checks


def _normlike_stationary(out: Path, scale: float) -> list:
    E = Euclidean(1)
    f = NormLike(E)
    tau = 1e-3
    u = solve_minimizing_movements(f, 2.0, E.point([1.0]), SolverConfig(tau, 2.0))
    export_curve(u, "csv", out / "curve.csv", f)
    hz = detect_positivity_horizon(u, f)
    return [
        _check("t_star_minus_u0", abs(hz.t_star - 1.0), 2 * tau * scale, t_star=hz.t_star),
        _check("stationary_tail", 0.0, 1.0, passed=hz.stationary_tail),
        _check("energy_identity", check_energy_identity(u, f, 2.0).max_residual, 1e-2 * scale),
    ]


def _quadratic_family(out: Path, scale: float) -> list:
    E = Euclidean(1)
    f = Quadratic(E)
    u0 = E.point([1.0])
    u = oracle_flow(f, 2.0, u0, np.linspace(0.0, 16.0, 10_001))
    checks = []
    for pp in (1.5, 3.0, 4.0):
        res = transform_curve(u, f, 2.0, pp)
        new = res.transformed
        export_curve(new, "csv", out / f"transformed_p{pp:g}.csv", f)
        exact = oracle_flow(f, pp, u0, new.times)
        err = max(E.distance(x, y) for x, y in zip(new.points, exact.points))
        checks.append(_check(f"p{pp:g}_vs_closed_form", err, 1e-3 * scale, case=res.case))
        checks.append(_check(f"p{pp:g}_energy_identity", res.diagnostics[0].max_residual, 1e-2 * scale))
        dual = verify_duality(u, res, 2.0, pp, f, 1e-3 * scale)
        checks.append(_check(f"p{pp:g}_round_trip", dual.max_residual, 1e-3 * scale))
    return checks


EXAMPLES = {
    "blowup_example": _blowup_example,
    "nonuniqueness_example": _nonuniqueness_example,
    "normlike_stationary": _normlike_stationary,
    "quadratic_family": _quadratic_family,
}


def reproduce_example(name: str, out_dir="out", tol_scale: float = 1.0) -> tuple[int, dict]:
    """Run a curated example against its closed form and write ``summary.json``."""
    if name not in EXAMPLES:
        raise ConfigError(f"unknown example {name!r}; known: {sorted(EXAMPLES)}")
    out = Path(out_dir) / name
    out.mkdir(parents=True, exist_ok=True)
    checks = EXAMPLES[name](out, tol_scale)
    passed = all(c["passed"] for c in checks)
    summary = {"example": name, "checks": checks, "passed": passed, "tol_scale": tol_scale}
    stamped = {**summary, "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    write_json(out / "summary.json", stamped)
    return (EXIT_OK if passed else EXIT_FAILED), summary
