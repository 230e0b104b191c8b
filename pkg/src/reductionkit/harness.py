"""Batch experiment runner: configuration, sweeps, scaling fits and reports.

A run reads an INI-style configuration with a ``[run]`` section (seed,
output directory, worker count), an optional ``[sweep]`` section (axis name
and values), an optional ``[tolerances]`` section overriding assertion
tolerances, and one section named after the experiment holding its
parameters.  Every experiment returns rows for a CSV file, a summary for a
JSON file and a list of named assertions; the exit status is 0 when all
assertions pass, 1 when one fails and 2 for configuration errors.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import jsonschema
import numpy as np

from .exceptions import ConfigError, ReductionKitError
from .fitting import FIT_FLOOR, FitResult, loglog_fit

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSpec:
    default: object
    kind: type
    doc: str


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: dict
    sweep_name: str | None = None
    sweep_values: tuple[float, ...] = ()
    seed: int = 0
    out: str = "results"
    workers: int = 1
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": dict(sorted(self.params.items())),
            "sweep": {"name": self.sweep_name, "values": list(self.sweep_values)},
            "seed": self.seed,
            "tolerances": dict(sorted(self.tolerances.items())),
        }


def _parse_value(raw: str, kind: type, key: str):
    text = raw.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            value = float(text)
            if not math.isfinite(value):
                raise ValueError(text)
            return value
        if kind is tuple:
            values = tuple(float(v) for v in text.replace(",", " ").split())
            if not all(math.isfinite(v) for v in values):
                raise ValueError(text)
            return values
        return text
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config(text: str, kind: str, seed: int | None = None, out: str | None = None, workers: int | None = None) -> ExperimentConfig:
    """Validate a configuration text for experiment ``kind``."""
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {kind!r}; choose from {', '.join(sorted(EXPERIMENTS))}")
    experiment = EXPERIMENTS[kind]
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    allowed_sections = {"run", "sweep", "tolerances", kind}
    for section in parser.sections():
        if section not in allowed_sections:
            raise ConfigError(f"section [{section}] does not belong to experiment {kind!r}")

    def section(name):
        return parser[name] if parser.has_section(name) else {}

    run = section("run")
    for key in run:
        if key not in ("seed", "out", "workers"):
            raise ConfigError(f"unknown key {key!r} in [run]")
    cfg_seed = _parse_value(run["seed"], int, "seed") if "seed" in run else 0
    cfg_out = run.get("out", "results") if run else "results"
    cfg_workers = _parse_value(run["workers"], int, "workers") if "workers" in run else 1

    params = {name: spec.default for name, spec in experiment.params.items()}
    for key, raw in section(kind).items():
        if key not in experiment.params:
            raise ConfigError(f"unknown parameter {key!r} for {kind}; documented keys: {', '.join(sorted(experiment.params))}")
        params[key] = _parse_value(raw, experiment.params[key].kind, key)

    sweep = section("sweep")
    sweep_name, sweep_values = None, ()
    if sweep:
        for key in sweep:
            if key not in ("name", "values"):
                raise ConfigError(f"unknown key {key!r} in [sweep]")
        sweep_name = sweep.get("name", "").strip()
        if sweep_name not in experiment.sweepable:
            raise ConfigError(f"{kind} cannot sweep {sweep_name!r}; sweepable: {', '.join(experiment.sweepable) or 'none'}")
        sweep_values = _parse_value(sweep.get("values", ""), tuple, "values")
        if list(sweep_values) != sorted(sweep_values):
            raise ConfigError("sweep values must be sorted ascending")

    tolerances = dict(experiment.tolerances)
    for key, raw in section("tolerances").items():
        if key not in tolerances:
            raise ConfigError(f"unknown tolerance {key!r} for {kind}; known: {', '.join(sorted(tolerances))}")
        tolerances[key] = _parse_value(raw, float, key)

    config = ExperimentConfig(
        kind,
        params,
        sweep_name,
        tuple(sweep_values),
        cfg_seed if seed is None else int(seed),
        cfg_out if out is None else out,
        cfg_workers if workers is None else int(workers),
        tolerances,
    )
    if config.workers < 1:
        raise ConfigError("workers must be at least 1")
    experiment.validate(config)
    return config


def load_config(path: str, kind: str, **overrides) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path!r}: {exc}") from None
    return parse_config(text, kind, **overrides)


# ---------------------------------------------------------------------------
# Results and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Column:
    name: str
    unit: str

    @property
    def header(self) -> str:
        return f"{self.name} [{self.unit}]"


@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


@dataclass
class ExperimentResult:
    kind: str
    columns: list[Column]
    rows: list[tuple]
    summary: dict
    assertions: list[Assertion]
    fits: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def failures(self) -> list[Assertion]:
        return [a for a in self.assertions if not a.passed]


SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["experiment", "config", "passed", "assertions", "fits", "results"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"type": "string"},
        "config": {
            "type": "object",
            "required": ["kind", "params", "sweep", "seed", "tolerances"],
            "properties": {
                "kind": {"type": "string"},
                "params": {"type": "object"},
                "sweep": {
                    "type": "object",
                    "required": ["name", "values"],
                    "properties": {
                        "name": {"type": ["string", "null"]},
                        "values": {"type": "array", "items": {"type": "number"}},
                    },
                },
                "seed": {"type": "integer"},
                "tolerances": {"type": "object", "additionalProperties": {"type": "number"}},
            },
        },
        "passed": {"type": "boolean"},
        "assertions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "passed", "detail"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "passed": {"type": "boolean"},
                    "detail": {"type": "string"},
                },
            },
        },
        "fits": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["slope", "intercept", "slope_stderr", "r_squared", "npoints", "excluded"],
                "properties": {
                    "slope": {"type": "number"},
                    "intercept": {"type": "number"},
                    "slope_stderr": {"type": "number"},
                    "r_squared": {"type": "number"},
                    "npoints": {"type": "integer", "minimum": 3},
                    "excluded": {"type": "integer", "minimum": 0},
                },
            },
        },
        "results": {"type": "object"},
    },
}


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def csv_text(columns: list[Column], rows: list[tuple]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([c.header for c in columns])
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row {row!r} does not match {len(columns)} columns")
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        # JSON has no infinities; 12 significant digits keeps files stable across platforms
        return float(f"{v:.12g}") if math.isfinite(v) else str(v)
    if isinstance(value, complex):
        return {"real": _jsonable(value.real), "imag": _jsonable(value.imag)}
    if value is None or isinstance(value, str):
        return value
    if hasattr(value, "to_dict"):
        return _jsonable(value.to_dict())
    raise TypeError(f"cannot serialize {type(value).__name__}")


def summary_document(config: ExperimentConfig, result: ExperimentResult) -> dict:
    doc = {
        "experiment": result.kind,
        "config": _jsonable(config.to_dict()),
        "passed": result.passed,
        "assertions": [a.to_dict() for a in result.assertions],
        "fits": {name: _jsonable(fit.to_dict()) for name, fit in sorted(result.fits.items())},
        "results": _jsonable(result.summary),
    }
    jsonschema.validate(doc, SUMMARY_SCHEMA)
    return doc


def emit_report(config: ExperimentConfig, result: ExperimentResult, out_dir: str | None = None) -> tuple[str, str]:
    """Write ``<kind>.csv`` and ``<kind>.json``; identical inputs give identical bytes."""
    directory = config.out if out_dir is None else out_dir
    os.makedirs(directory, exist_ok=True)
    csv_path = os.path.join(directory, f"{result.kind}.csv")
    json_path = os.path.join(directory, f"{result.kind}.json")
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        handle.write(csv_text(result.columns, result.rows))
    with open(json_path, "w", encoding="utf-8") as handle:
        json.dump(summary_document(config, result), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return csv_path, json_path


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Experiment:
    name: str
    params: dict[str, ParamSpec]
    sweepable: tuple[str, ...]
    tolerances: dict[str, float]
    run: Callable[[ExperimentConfig], ExperimentResult]
    check: Callable[[ExperimentConfig], None] | None = None
    description: str = ""

    def validate(self, config: ExperimentConfig) -> None:
        if self.check is not None:
            self.check(config)


def _map(config: ExperimentConfig, func, items) -> list:
    """Evaluate sweep points, in parallel when ``workers > 1``; results keep the input order."""
    items = list(items)
    if config.workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, len(items))) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


def _slope_assertion(name: str, fit: FitResult | None, expected: float, tol: float) -> Assertion:
    if fit is None:
        return Assertion(name, False, "fewer than 3 points above the fit floor")
    ok = abs(fit.slope - expected) <= tol
    return Assertion(name, ok, f"slope {fit.slope:.6g}, expected {expected:g} +- {tol:g}")


def _safe_fit(points, fit=loglog_fit):
    try:
        return fit(points, FIT_FLOOR)
    except ValueError:
        return None


# gadget-verify and sw-scan -------------------------------------------------

GADGET_KINDS = ("pauli-tune", "pauli-to-ising", "ising-to-xx", "xx-to-heisenberg")


def make_gadget(kind: str, lam: float, bfield: float, fraction: float = 0.5, axis_a: str = "Y", axis_b: str = "Z"):
    from . import gadgets

    if kind == "pauli-tune":
        # the target is a fraction of the largest reachable coupling lam^2 / B
        return gadgets.compile_pauli_tune(axis_a, axis_b, fraction * lam * lam / bfield, lam, bfield)
    if kind == "pauli-to-ising":
        return gadgets.compile_pauli_to_ising(axis_a, axis_b, lam, bfield)
    if kind == "ising-to-xx":
        return gadgets.compile_ising_to_xx(lam, bfield, axis=axis_a)
    if kind == "xx-to-heisenberg":
        return gadgets.compile_xx_to_heisenberg(lam, bfield, field_axis=axis_b)
    raise ConfigError(f"unknown gadget kind {kind!r}")


GADGET_PARAMS = {
    "kind": ParamSpec("pauli-tune", str, "gadget kind: " + ", ".join(GADGET_KINDS)),
    "lam": ParamSpec(1.0, float, "outer coupling strength lambda"),
    "bfield": ParamSpec(1000.0, float, "mediator field B (ignored when sweeping B)"),
    "fraction": ParamSpec(0.5, float, "pauli-tune target as a fraction of lambda^2 / B"),
    "axis_a": ParamSpec("Y", str, "first outer axis"),
    "axis_b": ParamSpec("Z", str, "second outer axis (field axis for xx-to-heisenberg)"),
    "compensation": ParamSpec("printed", str, "compensation policy: none, printed or derived"),
}


def _check_gadget(config: ExperimentConfig) -> None:
    p = config.params
    if p["kind"] not in GADGET_KINDS:
        raise ConfigError(f"kind must be one of {', '.join(GADGET_KINDS)}")
    if p["compensation"] not in ("none", "printed", "derived"):
        raise ConfigError("compensation must be none, printed or derived")
    if p["lam"] < 0:
        raise ConfigError("lam must be non-negative")
    fields = config.sweep_values if config.sweep_name == "bfield" and config.sweep_values else (p.get("bfield", 1.0),)
    if any(b <= 0 for b in fields):
        raise ConfigError("mediator fields must be positive")


def _gadget_point(args) -> tuple:
    p, bfield = args
    from .gadgets import verify_gadget

    spec = make_gadget(p["kind"], p["lam"], bfield, p["fraction"], p["axis_a"], p["axis_b"])
    report = verify_gadget(spec, p["compensation"])
    label, predicted = spec.predicted[0]
    return (
        bfield,
        label,
        predicted,
        report.measured[label],
        report.parameters["relative_error"],
        report.measured["max_spurious_two_body"],
        report.deviation,
    )


def run_gadget_verify(config: ExperimentConfig) -> ExperimentResult:
    p = config.params
    fields = config.sweep_values if config.sweep_name == "bfield" else (p["bfield"],)
    rows = _map(config, _gadget_point, [(p, b) for b in fields])
    columns = [
        Column("B", "energy"),
        Column("label", "pauli"),
        Column("predicted", "energy"),
        Column("measured", "energy"),
        Column("relative_error", "1"),
        Column("max_spurious", "energy"),
        Column("deviation", "energy"),
    ]
    factor = config.tolerances["error_factor"]
    assertions = []
    for b, label, predicted, measured, rel, _, deviation in rows:
        lam = p["lam"]
        if lam == 0:
            ok = abs(measured) <= 1e-12 and deviation <= 1e-12
            assertions.append(Assertion(f"zero coupling at B={b:g}", ok, f"measured {measured:.3g}, deviation {deviation:.3g}"))
        else:
            bound = factor * lam / b
            assertions.append(Assertion(f"{label} coupling at B={b:g}", rel <= bound, f"relative error {rel:.3g} <= {bound:.3g}"))
    return ExperimentResult("gadget-verify", columns, rows, {"kind": p["kind"], "points": len(rows)}, assertions)


SW_PARAMS = dict(GADGET_PARAMS)
SW_PARAMS.pop("bfield")


def _sw_check(config: ExperimentConfig) -> None:
    _check_gadget(config)
    if len(_sw_fields(config)) < 3:
        raise ConfigError("sw-scan needs at least 3 field values")


def _sw_fields(config: ExperimentConfig) -> tuple[float, ...]:
    return config.sweep_values if config.sweep_name == "bfield" and config.sweep_values else (1e2, 1e3, 1e4)


def _sw_point(args) -> tuple:
    p, bfield = args
    from .gadgets import gadget_hamiltonian, mediator_ground_state, product_low_basis
    from .matrices import to_matrix
    from .perturbation import BlockSplit, effective_hamiltonian_2nd

    spec = make_gadget(p["kind"], p["lam"], bfield, p["fraction"], p["axis_a"], p["axis_b"])
    h, v = gadget_hamiltonian(spec, p["compensation"])
    hm, vm = to_matrix(h).toarray(), to_matrix(v).toarray()
    low = product_low_basis(3, {1: mediator_ground_state(spec.field_direction)})
    report = effective_hamiltonian_2nd(hm, vm, BlockSplit.from_low_basis(hm, low, spec.bfield, vm))
    return (bfield, report.deviation, report.bound)


def run_sw_scan(config: ExperimentConfig) -> ExperimentResult:
    p = config.params
    rows = _map(config, _sw_point, [(p, b) for b in _sw_fields(config)])
    fit = _safe_fit([(b, d) for b, d, _ in rows])
    columns = [Column("B", "energy"), Column("deviation", "energy"), Column("bound", "energy")]
    assertions = [_slope_assertion("deviation slope", fit, -2.0, config.tolerances["slope_tol"])]
    fits = {"deviation": fit} if fit else {}
    return ExperimentResult("sw-scan", columns, rows, {"kind": p["kind"]}, assertions, fits)


# chain-verify ---------------------------------------------------------------

CHAIN_PARAMS = {
    "axis_a": ParamSpec("Y", str, "first endpoint axis"),
    "axis_b": ParamSpec("Z", str, "second endpoint axis"),
    "target": ParamSpec(0.01, float, "target coupling"),
    "ratio": ParamSpec(20.0, float, "geometric schedule ratio r"),
    "layers": ParamSpec(4, int, "number of gadget layers (1 to 4)"),
    "method": ParamSpec("auto", str, "eigensolver: auto, dense or krylov"),
}


def _check_chain(config: ExperimentConfig) -> None:
    p = config.params
    if not 1 <= p["layers"] <= 4:
        raise ConfigError("layers must be between 1 and 4")
    if p["ratio"] < 10:
        raise ConfigError("ratio must be at least 10")
    if p["method"] not in ("auto", "dense", "krylov"):
        raise ConfigError("method must be auto, dense or krylov")


def run_chain_verify(config: ExperimentConfig) -> ExperimentResult:
    from .chain import compile_full_chain, schedule_strengths, verify_chain

    p = config.params
    schedule = schedule_strengths(mode="geometric", ratio=p["ratio"])
    chain = compile_full_chain(p["axis_a"], p["axis_b"], p["target"], schedule, layers=p["layers"])
    report = verify_chain(chain, seed=config.seed, strength_tolerance=config.tolerances["strength_tol"], method=p["method"])
    rows = [(i, e, r) for i, (e, r) in enumerate(zip(report.eigenvalues, report.residuals))]
    columns = [Column("index", "1"), Column("eigenvalue", "energy"), Column("residual", "energy")]
    summary = {
        "nqubits": report.nqubits,
        "strength_ratio": report.strength_ratio,
        "largest_spurious": report.largest_spurious,
        "method": report.method,
        "measured": {k: v for k, v in report.measured.items() if k != "II"},
        "nominal_target": chain.nominal_target,
    }
    assertions = [
        Assertion("coupling sign", report.sign_ok, f"strength ratio {report.strength_ratio:.6g}"),
        Assertion("degeneracy pattern", report.degeneracy_ok, "2 + 2 split by 2 |lambda|"),
        Assertion("coupling strength", report.strength_ok, f"|ratio - 1| <= {config.tolerances['strength_tol']:g}"),
    ]
    return ExperimentResult("chain-verify", columns, rows, summary, assertions)


# hubbard-exchange -----------------------------------------------------------

HUBBARD_PARAMS = {
    "t": ParamSpec(1.0, float, "hopping amplitude"),
    "U": ParamSpec(100.0, float, "on-site repulsion (ignored when sweeping U)"),
}


def _hubbard_values(config):
    return config.sweep_values if config.sweep_name == "U" and config.sweep_values else (config.params["U"],)


def _check_hubbard(config: ExperimentConfig) -> None:
    if any(u <= 0 for u in _hubbard_values(config)):
        raise ConfigError("U must be positive")


def _hubbard_point(args) -> tuple:
    t, u = args
    from .gadgets import hubbard_effective_exchange

    r = hubbard_effective_exchange(t, u, check_regime=False)
    return (u, r.exact_gap, r.analytic_gap, r.predicted_gap, r.relative_error)


def run_hubbard_exchange(config: ExperimentConfig) -> ExperimentResult:
    t = config.params["t"]
    rows = _map(config, _hubbard_point, [(t, u) for u in _hubbard_values(config)])
    columns = [
        Column("U", "energy"),
        Column("exact_gap", "energy"),
        Column("analytic_gap", "energy"),
        Column("predicted_gap", "energy"),
        Column("relative_error", "1"),
    ]
    tol = config.tolerances["gap_tol"]
    assertions = [
        Assertion(f"closed-form gap at U={u:g}", abs(e - a) <= tol, f"|exact - analytic| = {abs(e - a):.3g}")
        for u, e, a, _, _ in rows
    ]
    fits = {}
    if len(rows) >= 3:
        fit = _safe_fit([(u, e) for u, e, _, _, _ in rows])
        fits["gap"] = fit
        assertions.append(_slope_assertion("gap slope", fit, -1.0, config.tolerances["slope_tol"]))
    return ExperimentResult("hubbard-exchange", columns, rows, {"t": t}, assertions, {k: v for k, v in fits.items() if v})


# kp-band ----------------------------------------------------------------------

KP_PARAMS = {
    "well": ParamSpec(8.0, float, "well strength V for the band and Wannier profile"),
    "kpoints": ParamSpec(65, int, "number of k points (odd gives a symmetric grid)"),
    "convention": ParamSpec("half", str, "kinetic convention: half or unit"),
    "scan_min": ParamSpec(5.0, float, "lowest well strength of the bandwidth scan"),
    "scan_max": ParamSpec(12.0, float, "highest well strength of the bandwidth scan"),
    "scan_points": ParamSpec(8, int, "number of bandwidth scan points"),
}


def _check_kp(config: ExperimentConfig) -> None:
    p = config.params
    if p["convention"] not in ("half", "unit"):
        raise ConfigError("convention must be half or unit")
    if p["well"] < 3 or p["scan_min"] < 3:
        raise ConfigError("well strengths must be at least 3")
    if p["scan_points"] < 3 or p["scan_max"] <= p["scan_min"]:
        raise ConfigError("the bandwidth scan needs 3 points over an increasing range")
    if p["kpoints"] < 3:
        raise ConfigError("kpoints must be at least 3")


def run_kp_band(config: ExperimentConfig) -> ExperimentResult:
    from .band import BandModelParams, bandwidth_scan, solve_dispersion, wannier_profile

    p = config.params
    params = BandModelParams(p["well"], convention=p["convention"])
    band = solve_dispersion(params, p["kpoints"])
    wannier = wannier_profile(band)
    wells = config.sweep_values if config.sweep_name == "well" and config.sweep_values else tuple(
        np.linspace(p["scan_min"], p["scan_max"], p["scan_points"])
    )
    scan = bandwidth_scan(wells, p["convention"])
    rows = list(zip(band.k, band.kappa, band.energy))
    columns = [Column("k", "1/a"), Column("kappa", "1/a"), Column("energy", "hbar^2/(m a^2)")]
    summary = {
        "bandwidth": band.bandwidth,
        "gap": band.gap,
        "deviations": band.deviations(),
        "wannier": wannier.to_dict(),
        "scan": scan.to_dict(),
    }
    tol = config.tolerances["slope_tol"]
    assertions = [
        _slope_assertion("bandwidth decay rate", scan.reduced, -1.0, tol),
        Assertion(
            "Wannier closed form",
            wannier.closed_form_deviation <= config.tolerances["wannier_tol"],
            f"relative deviation {wannier.closed_form_deviation:.3g}",
        ),
    ]
    return ExperimentResult("kp-band", columns, rows, summary, assertions, {"bandwidth_raw": scan.raw, "bandwidth_reduced": scan.reduced})


# coulomb-cu -------------------------------------------------------------------

COULOMB_PARAMS = {
    "tolerance": ParamSpec(1e-3, float, "quadrature tolerance and route agreement bound"),
    "refinements": ParamSpec(3, int, "refinement levels of the reduced route"),
}


def _check_coulomb(config: ExperimentConfig) -> None:
    if not config.params["tolerance"] >= 1e-6:
        raise ConfigError("tolerance must be at least 1e-6")
    if config.params["refinements"] < 1:
        raise ConfigError("refinements must be at least 1")


def run_coulomb_cu(config: ExperimentConfig) -> ExperimentResult:
    from .band import CU_REFERENCE, RouteDisagreementError, coulomb_cu_report

    p = config.params
    try:
        report = coulomb_cu_report(p["tolerance"], p["refinements"])
    except RouteDisagreementError as exc:
        assertion = Assertion("route agreement", False, str(exc))
        return ExperimentResult("coulomb-cu", [Column("level", "1"), Column("value", "1")], [], {}, [assertion])
    rows = [(i, v) for i, v in enumerate(report.refinement)]
    columns = [Column("level", "1"), Column("value", "1")]
    ref_tol = config.tolerances["reference_tol"]
    assertions = [
        Assertion("reference value", abs(report.value - CU_REFERENCE) <= ref_tol, f"c_U = {report.value:.9g}"),
        Assertion("route agreement", report.route_difference <= p["tolerance"], f"difference {report.route_difference:.3g}"),
        Assertion("refinement is Cauchy", report.cauchy(), "successive differences shrink"),
    ]
    return ExperimentResult("coulomb-cu", columns, rows, report.to_dict(), assertions)


# dft-solve --------------------------------------------------------------------

DFT_PARAMS = {
    "t": ParamSpec(1.0, float, "hopping amplitude of the two-site Hubbard kernel"),
    "U": ParamSpec(4.0, float, "on-site repulsion"),
    "nelectrons": ParamSpec(2, int, "electron number"),
    "seeds": ParamSpec(5, int, "number of random potential seeds"),
    "field_scale": ParamSpec(1.0, float, "standard deviation of the random potential entries"),
    "convexity_pairs": ParamSpec(20, int, "random density pairs for the midpoint convexity probe"),
}


def _check_dft(config: ExperimentConfig) -> None:
    p = config.params
    if not 1 <= p["nelectrons"] <= 3:
        raise ConfigError("two sites hold 1 to 3 electrons here")
    if p["seeds"] < 1 or p["convexity_pairs"] < 0:
        raise ConfigError("seeds must be positive and convexity_pairs non-negative")


def random_potentials(rng: np.random.Generator, nsites: int, scale: float) -> np.ndarray:
    a = rng.normal(scale=scale, size=(nsites, 2, 2)) + 1j * rng.normal(scale=scale, size=(nsites, 2, 2))
    return 0.5 * (a + a.conj().transpose(0, 2, 1))


def _dft_point(args) -> tuple:
    t, u, n, scale, seed = args
    from .dft import SectorKernel, dft_ground_energy, potential_coords
    from .lattice import LatticeGraph
    from .models import build_hubbard

    kernel = build_hubbard(LatticeGraph.chain(2), t, u)
    sk = SectorKernel(kernel, 2, n)
    v = random_potentials(np.random.default_rng(seed), 2, scale)
    exact = float(np.linalg.eigvalsh(sk.hamiltonian(potential_coords(v)))[0])
    result = dft_ground_energy(v, kernel, n)
    return (seed, result.energy, exact, result.energy - exact, result.iterations)


def random_density(rng: np.random.Generator, nsites: int, nelectrons: int):
    """A random representable density: the site blocks of a random mixed state."""
    from .dft import SpinDensity

    weights = rng.dirichlet(np.ones(2 * nsites)) * nelectrons
    while weights.max() > 1:
        weights = np.minimum(weights, 1.0)
        weights += (nelectrons - weights.sum()) * (weights < 1) / max(1, int((weights < 1).sum()))
    blocks = []
    for i in range(nsites):
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        q, _ = np.linalg.qr(a)
        blocks.append((q * weights[2 * i : 2 * i + 2]) @ q.conj().T)
    return SpinDensity(np.array(blocks), nelectrons)


def run_dft_solve(config: ExperimentConfig) -> ExperimentResult:
    from .dft import SectorKernel, convexity_probe
    from .lattice import LatticeGraph
    from .models import build_hubbard

    p = config.params
    seeds = [config.seed + k for k in range(p["seeds"])]
    rows = _map(config, _dft_point, [(p["t"], p["U"], p["nelectrons"], p["field_scale"], s) for s in seeds])
    columns = [Column("seed", "1"), Column("dft_energy", "energy"), Column("exact_energy", "energy"), Column("error", "energy"), Column("iterations", "1")]
    tol = config.tolerances["energy_tol"]
    assertions = [Assertion(f"seed {s} energy", abs(err) <= tol, f"|E_dft - E_exact| = {abs(err):.3g}") for s, _, _, err, _ in rows]
    kernel = SectorKernel(build_hubbard(LatticeGraph.chain(2), p["t"], p["U"]), 2, p["nelectrons"])
    rng = np.random.default_rng(config.seed)
    slacks = []
    for _ in range(p["convexity_pairs"]):
        first = random_density(rng, 2, p["nelectrons"])
        second = random_density(rng, 2, p["nelectrons"])
        slacks.append(convexity_probe(first, second, kernel, config.tolerances["convexity_tol"]).slack)
    if slacks:
        worst = min(slacks)
        assertions.append(Assertion("midpoint convexity", worst >= -config.tolerances["convexity_tol"], f"smallest slack {worst:.3g}"))
    summary = {"max_error": max(abs(r[3]) for r in rows), "convexity_slacks": slacks}
    return ExperimentResult("dft-solve", columns, rows, summary, assertions)


# hf-ising ---------------------------------------------------------------------

HF_PARAMS = {
    "side": ParamSpec(2, int, "lattice side L of the L x L x 2 spin lattice"),
    "instances": ParamSpec(20, int, "number of random instances"),
    "restarts": ParamSpec(32, int, "Hartree-Fock restarts per instance"),
    "min_hits": ParamSpec(18, int, "instances that must reach the brute-force minimum"),
    "variational_instances": ParamSpec(5, int, "random small Hamiltonians for the variational bound"),
    "variational_modes": ParamSpec(6, int, "modes of the variational-bound Hamiltonians (at most 12)"),
}


def _check_hf(config: ExperimentConfig) -> None:
    p = config.params
    if not 1 <= p["side"] or 2 * p["side"] ** 2 > 24:
        raise ConfigError("side must give at most 24 spins")
    if p["instances"] < 1 or p["restarts"] < 1:
        raise ConfigError("instances and restarts must be positive")
    if not 2 <= p["variational_modes"] <= 12:
        raise ConfigError("variational_modes must lie between 2 and 12")


def _hf_point(args) -> tuple:
    side, restarts, seed, rel_tol = args
    from .hartree_fock import IsingInstance, decode_spins, embed_ising, hf_optimize, ising_bruteforce, tables_from_fermion

    instance = IsingInstance.random(side, seed)
    exact, _ = ising_bruteforce(instance)
    h1, h2 = tables_from_fermion(embed_ising(instance))
    result = hf_optimize(h1, h2, instance.nspins, restarts=restarts, seed=seed)
    decoded = decode_spins(result.state, instance)
    hit = abs(result.energy - exact) <= rel_tol * max(1.0, abs(exact))
    return (seed, exact, result.energy, hit, result.distinct_minima, len(decoded.ambiguous))


def random_tables(rng: np.random.Generator, nmodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian one- and two-body tables with real Gaussian entries."""
    h1 = rng.normal(size=(nmodes, nmodes))
    h1 = 0.5 * (h1 + h1.T)
    h2 = rng.normal(size=(nmodes,) * 4) / nmodes
    h2 = 0.5 * (h2 + h2.transpose(3, 2, 1, 0))
    return h1, h2


def run_hf_ising(config: ExperimentConfig) -> ExperimentResult:
    from .eigensolve import lowest_eigs
    from .fermion import from_tables
    from .hartree_fock import hf_optimize
    from .matrices import to_matrix

    p = config.params
    seeds = [config.seed + k for k in range(p["instances"])]
    rows = _map(config, _hf_point, [(p["side"], p["restarts"], s, config.tolerances["energy_rel_tol"]) for s in seeds])
    columns = [
        Column("seed", "1"),
        Column("ising_minimum", "J"),
        Column("hf_energy", "J"),
        Column("hit", "1"),
        Column("distinct_minima", "1"),
        Column("ambiguous_sites", "1"),
    ]
    hits = sum(1 for r in rows if r[3])
    assertions = [Assertion("Ising minimum hits", hits >= p["min_hits"], f"{hits} of {len(rows)} instances, need {p['min_hits']}")]
    rng = np.random.default_rng(config.seed)
    gaps = []
    m = p["variational_modes"]
    for k in range(p["variational_instances"]):
        h1, h2 = random_tables(rng, m)
        n = 1 + k % (m - 1)
        exact = float(lowest_eigs(to_matrix(from_tables(h1, h2), sector=n), 1).eigenvalues[0])
        hf = hf_optimize(h1, h2, n, restarts=4, seed=config.seed + k).energy
        gaps.append(hf - exact)
    if gaps:
        worst = min(gaps)
        assertions.append(Assertion("variational bound", worst >= -config.tolerances["variational_tol"], f"smallest E_HF - E_exact {worst:.3g}"))
    return ExperimentResult("hf-ising", columns, rows, {"hits": hits, "variational_gaps": gaps}, assertions)


# erasure-scan -------------------------------------------------------------------

ERASURE_PARAMS = {
    "length": ParamSpec(3, int, "chain length of the Heisenberg background"),
    "keep": ParamSpec("0 2", str, "kept sites, separated by spaces"),
    "J": ParamSpec(1.0, float, "Heisenberg coupling"),
}


def _erasure_values(config):
    return config.sweep_values if config.sweep_name == "b_e" and config.sweep_values else (1e2, 1e3, 1e4)


def _check_erasure(config: ExperimentConfig) -> None:
    p = config.params
    try:
        keep = [int(s) for s in p["keep"].split()]
    except ValueError:
        raise ConfigError("keep must list integer sites") from None
    if any(not 0 <= s < p["length"] for s in keep):
        raise ConfigError("kept sites must lie on the chain")
    if len(_erasure_values(config)) < 3 or any(b <= 0 for b in _erasure_values(config)):
        raise ConfigError("erasure-scan needs at least 3 positive field values")


def _erasure_point(args) -> tuple:
    length, keep, j, b_e = args
    from .gadgets import verify_erasure
    from .lattice import LatticeGraph

    report = verify_erasure(LatticeGraph.chain(length), keep, b_e, j)
    return (b_e, report.deviation)


def run_erasure_scan(config: ExperimentConfig) -> ExperimentResult:
    p = config.params
    keep = tuple(int(s) for s in p["keep"].split())
    rows = _map(config, _erasure_point, [(p["length"], keep, p["J"], b) for b in _erasure_values(config)])
    fit = _safe_fit(rows)
    columns = [Column("B_e", "energy"), Column("deviation", "energy")]
    assertions = [_slope_assertion("erasure slope", fit, -1.0, config.tolerances["slope_tol"])]
    return ExperimentResult("erasure-scan", columns, rows, {"kept": list(keep)}, assertions, {"deviation": fit} if fit else {})


EXPERIMENTS: dict[str, Experiment] = {
    "gadget-verify": Experiment(
        "gadget-verify", GADGET_PARAMS, ("bfield",), {"error_factor": 10.0}, run_gadget_verify, _check_gadget,
        "exact effective coupling of one gadget against its prediction",
    ),
    "sw-scan": Experiment(
        "sw-scan", SW_PARAMS, ("bfield",), {"slope_tol": 0.15}, run_sw_scan, _sw_check,
        "second-order effective spectrum error against the mediator field",
    ),
    "chain-verify": Experiment(
        "chain-verify", CHAIN_PARAMS, (), {"strength_tol": 0.25}, run_chain_verify, _check_chain,
        "compile the nested gadget chain and diagonalize it",
    ),
    "hubbard-exchange": Experiment(
        "hubbard-exchange", HUBBARD_PARAMS, ("U",), {"gap_tol": 1e-10, "slope_tol": 0.02}, run_hubbard_exchange, _check_hubbard,
        "singlet-triplet gap of the two-site Hubbard model",
    ),
    "kp-band": Experiment(
        "kp-band", KP_PARAMS, ("well",), {"slope_tol": 0.05, "wannier_tol": 0.01}, run_kp_band, _check_kp,
        "Kronig-Penney band, bandwidth scan and Wannier profile",
    ),
    "coulomb-cu": Experiment(
        "coulomb-cu", COULOMB_PARAMS, (), {"reference_tol": 5e-3}, run_coulomb_cu, _check_coulomb,
        "on-site Coulomb constant by two quadrature routes",
    ),
    "dft-solve": Experiment(
        "dft-solve", DFT_PARAMS, (), {"energy_tol": 1e-4, "convexity_tol": 1e-6}, run_dft_solve, _check_dft,
        "lattice density functional minimization against exact diagonalization",
    ),
    "hf-ising": Experiment(
        "hf-ising", HF_PARAMS, (), {"energy_rel_tol": 1e-8, "variational_tol": 1e-9}, run_hf_ising, _check_hf,
        "Hartree-Fock on embedded Ising spin glasses",
    ),
    "erasure-scan": Experiment(
        "erasure-scan", ERASURE_PARAMS, ("b_e",), {"slope_tol": 0.1}, run_erasure_scan, _check_erasure,
        "erasure gadget deviation against the erasing field",
    ),
}


def run(config: ExperimentConfig, write: bool = True) -> tuple[int, ExperimentResult | None, list[str]]:
    """Run one experiment; returns ``(exit status, result, messages)``."""
    experiment = EXPERIMENTS[config.kind]
    try:
        result = experiment.run(config)
    except (ConfigError, ValueError) as exc:
        # library preconditions (regime checks, ranges) reject the configured parameters
        return EXIT_CONFIG, None, [f"configuration error: {exc}"]
    except ReductionKitError as exc:
        result = ExperimentResult(config.kind, [Column("error", "text")], [], {"error": str(exc)}, [Assertion("experiment completed", False, str(exc))])
    if write:
        emit_report(config, result)
    messages = [f"FAIL {a.name}: {a.detail}" for a in result.failures()]
    return (EXIT_OK if result.passed else EXIT_ASSERTION), result, messages
