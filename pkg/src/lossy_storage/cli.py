"""Scenario files, command dispatch and result export.

Scenario JSON schema (field names are exact; extra or missing fields are
schema errors)::

    {
      "storage": {"eta_c": 0.5, "eta_d": 0.5, "lambda": 1.0,
                  "delta": 1.0, "x0": 0.75, "horizon": 2},
      "bounds":  {"u_max": [1, 1], "u_min": [1, 1],
                  "x_max": [1, 1], "x_min": [0, 0]},
      "cost":    {"family": "energy_arbitrage",
                  "p_buy": [1, 1], "p_sell": [1, 1]},
      "solve":   {"max_iterations": 20000, "step_rule": "diminishing",
                  "step_parameter": null, "projection_tolerance": 1e-8,
                  "objective_tolerance": 1e-9, "seed": 0,
                  "initial_point": "offset-b"},
      "outputs": ["solution", "certificate"]
    }

Note that "u_min" entries are discharge-power magnitudes (all
nonnegative); the admissible power interval per period is
[-u_min[t], u_max[t]].  "solve" and "outputs" are optional.  Valid cost
families: peak_shaving (load), load_balancing (load), power_regulation
(signal), energy_arbitrage (p_buy, p_sell), power_smoothing (renewable).

Verbs: solve, certify, sample-sets, oracle-check.  Command-line flags
override scenario-file solve options, which override defaults.

Exit codes: 0 ok, 2 infeasible, 3 not converged, 4 best-effort only
(no convexity guarantee), 64 usage, 65 schema/validation.

Floating-point values in emitted JSON/CSV use fixed 17-significant-digit
formatting, so identical runs produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import costs as costs_mod
from . import oracle as oracle_mod
from . import solver as solver_mod
from .errors import (
    HorizonNot2,
    InfeasibleProblem,
    ParseError,
    SchemaError,
    ValidationError,
)
from .model import Bounds, StorageParams, build_dynamics, validate_params
from .transform import (
    build_energy_polytope,
    energy_membership_mask,
    power_feasibility_mask,
)

__all__ = [
    "Scenario",
    "load_scenario",
    "write_scenario",
    "scenario_to_dict",
    "run_solve",
    "emit_feasible_set_samples",
    "main",
]

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_NOT_CONVERGED = 3
EXIT_BEST_EFFORT = 4
EXIT_USAGE = 64
EXIT_SCHEMA = 65

OUTPUT_KINDS = ("solution", "feasible-set-samples", "certificate", "oracle-comparison")

COST_FIELDS = {
    "peak_shaving": ("load",),
    "load_balancing": ("load",),
    "power_regulation": ("signal",),
    "energy_arbitrage": ("p_buy", "p_sell"),
    "power_smoothing": ("renewable",),
}

_COST_BUILDERS = {
    "peak_shaving": lambda kw: costs_mod.PeakShaving(load=kw["load"]),
    "load_balancing": lambda kw: costs_mod.LoadBalancing(load=kw["load"]),
    "power_regulation": lambda kw: costs_mod.PowerRegulation(signal=kw["signal"]),
    "energy_arbitrage": lambda kw: costs_mod.EnergyArbitrage(
        p_buy=kw["p_buy"], p_sell=kw["p_sell"]
    ),
    "power_smoothing": lambda kw: costs_mod.PowerSmoothing(renewable=kw["renewable"]),
}

MIN_SAMPLE_RESOLUTION = 11
DEFAULT_SAMPLE_RESOLUTION = 201


@dataclass(frozen=True, eq=False)
class Scenario:
    storage: StorageParams
    bounds: Bounds
    cost: costs_mod.CostSpec
    solve_options: solver_mod.SolveOptions
    outputs: tuple[str, ...]


# ---------------------------------------------------------------------------
# deterministic serialization


def _fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _json_value(obj) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    if isinstance(obj, np.ndarray):
        return _json_value(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_json_value(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {_json_value(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj) -> str:
    """JSON text with 17-significant-digit floats and LF ending."""
    return _json_value(obj) + "\n"


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# scenario loading


def _require_keys(mapping: dict, required: Sequence[str], where: str) -> None:
    missing = [k for k in required if k not in mapping]
    extra = [k for k in mapping if k not in required]
    if missing:
        raise SchemaError(f"{where}: missing field(s) {missing}")
    if extra:
        raise SchemaError(f"{where}: unknown field(s) {extra}")


def _number(mapping: dict, key: str, where: str) -> float:
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}.{key}: expected a number, got {value!r}")
    return float(value)


def _number_list(mapping: dict, key: str, horizon: int, where: str) -> list[float]:
    value = mapping[key]
    if not isinstance(value, list) or any(
        isinstance(v, bool) or not isinstance(v, (int, float)) for v in value
    ):
        raise SchemaError(f"{where}.{key}: expected a list of numbers")
    if len(value) != horizon:
        raise SchemaError(
            f"{where}.{key}: length {len(value)} does not match horizon {horizon}"
        )
    return [float(v) for v in value]


def _parse_storage(raw: dict) -> StorageParams:
    _require_keys(raw, ("eta_c", "eta_d", "lambda", "delta", "x0", "horizon"), "storage")
    horizon = raw["horizon"]
    if isinstance(horizon, bool) or not isinstance(horizon, int):
        raise SchemaError(f"storage.horizon: expected an integer, got {horizon!r}")
    return StorageParams(
        eta_c=_number(raw, "eta_c", "storage"),
        eta_d=_number(raw, "eta_d", "storage"),
        lam=_number(raw, "lambda", "storage"),
        delta=_number(raw, "delta", "storage"),
        x0=_number(raw, "x0", "storage"),
        horizon=horizon,
    )


def _parse_cost(raw: dict, horizon: int) -> costs_mod.CostSpec:
    if "family" not in raw:
        raise SchemaError("cost: missing field 'family'")
    family = raw["family"]
    if family not in COST_FIELDS:
        raise SchemaError(
            f"cost.family: unknown tag {family!r}; valid tags: "
            + ", ".join(sorted(COST_FIELDS))
        )
    fields = COST_FIELDS[family]
    _require_keys(raw, ("family",) + fields, "cost")
    kw = {name: _number_list(raw, name, horizon, "cost") for name in fields}
    return _COST_BUILDERS[family](kw)


def _parse_solve_options(raw: dict, horizon: int) -> solver_mod.SolveOptions:
    allowed = (
        "max_iterations",
        "step_rule",
        "step_parameter",
        "projection_tolerance",
        "objective_tolerance",
        "seed",
        "initial_point",
    )
    extra = [k for k in raw if k not in allowed]
    if extra:
        raise SchemaError(f"solve: unknown field(s) {extra}")
    kwargs = {}
    for key in ("max_iterations", "seed"):
        if key in raw:
            if isinstance(raw[key], bool) or not isinstance(raw[key], int):
                raise SchemaError(f"solve.{key}: expected an integer")
            kwargs[key] = raw[key]
    for key in ("projection_tolerance", "objective_tolerance"):
        if key in raw:
            kwargs[key] = _number(raw, key, "solve")
    if "step_parameter" in raw and raw["step_parameter"] is not None:
        kwargs["step_parameter"] = _number(raw, "step_parameter", "solve")
    if "step_rule" in raw:
        if raw["step_rule"] not in solver_mod.STEP_RULES:
            raise SchemaError(
                f"solve.step_rule: expected one of {solver_mod.STEP_RULES}"
            )
        kwargs["step_rule"] = raw["step_rule"]
    if "initial_point" in raw:
        point = raw["initial_point"]
        if isinstance(point, list):
            kwargs["initial_point"] = np.asarray(
                _number_list(raw, "initial_point", horizon, "solve"), dtype=float
            )
        elif point in solver_mod.INITIAL_POINT_POLICIES:
            kwargs["initial_point"] = point
        else:
            raise SchemaError(
                "solve.initial_point: expected "
                f"{solver_mod.INITIAL_POINT_POLICIES} or a vector"
            )
    try:
        return solver_mod.SolveOptions(**kwargs)
    except ValueError as exc:
        raise SchemaError(f"solve: {exc}") from exc


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file.

    Raises ParseError (malformed JSON, with line info), SchemaError
    (missing/extra/ill-typed fields, length mismatches, unknown tags) or a
    forwarded ValidationError from parameter validation.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: top level must be an object")
    known = ("storage", "bounds", "cost", "solve", "outputs")
    extra = [k for k in raw if k not in known]
    if extra:
        raise SchemaError(f"top level: unknown field(s) {extra}")
    for key in ("storage", "bounds", "cost"):
        if key not in raw:
            raise SchemaError(f"top level: missing field {key!r}")
        if not isinstance(raw[key], dict):
            raise SchemaError(f"{key}: expected an object")

    storage = _parse_storage(raw["storage"])
    horizon = storage.horizon

    _require_keys(raw["bounds"], ("u_max", "u_min", "x_max", "x_min"), "bounds")
    bounds = Bounds(
        u_max=_number_list(raw["bounds"], "u_max", horizon, "bounds"),
        u_min_mag=_number_list(raw["bounds"], "u_min", horizon, "bounds"),
        x_max=_number_list(raw["bounds"], "x_max", horizon, "bounds"),
        x_min=_number_list(raw["bounds"], "x_min", horizon, "bounds"),
    )
    cost = _parse_cost(raw["cost"], horizon)

    solve_options = _parse_solve_options(raw.get("solve", {}), horizon)

    outputs = raw.get("outputs", ["solution"])
    if not isinstance(outputs, list) or any(o not in OUTPUT_KINDS for o in outputs):
        raise SchemaError(f"outputs: expected a list drawn from {OUTPUT_KINDS}")

    problem = validate_params(storage, bounds)  # forwards ValidationError
    return Scenario(
        storage=problem.params,
        bounds=problem.bounds,
        cost=cost,
        solve_options=solve_options,
        outputs=tuple(outputs),
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    cost_tag = costs_mod.FAMILY_TAGS[type(scenario.cost)]
    cost_obj = {"family": cost_tag}
    for name in COST_FIELDS[cost_tag]:
        cost_obj[name] = getattr(scenario.cost, name).tolist()
    opts = scenario.solve_options
    initial = opts.initial_point
    return {
        "storage": {
            "eta_c": scenario.storage.eta_c,
            "eta_d": scenario.storage.eta_d,
            "lambda": scenario.storage.lam,
            "delta": scenario.storage.delta,
            "x0": scenario.storage.x0,
            "horizon": scenario.storage.horizon,
        },
        "bounds": {
            "u_max": scenario.bounds.u_max.tolist(),
            "u_min": scenario.bounds.u_min_mag.tolist(),
            "x_max": scenario.bounds.x_max.tolist(),
            "x_min": scenario.bounds.x_min.tolist(),
        },
        "cost": cost_obj,
        "solve": {
            "max_iterations": opts.max_iterations,
            "step_rule": opts.step_rule,
            "step_parameter": opts.step_parameter,
            "projection_tolerance": opts.projection_tolerance,
            "objective_tolerance": opts.objective_tolerance,
            "seed": opts.seed,
            "initial_point": initial if isinstance(initial, str) else initial.tolist(),
        },
        "outputs": list(scenario.outputs),
    }


def write_scenario(scenario: Scenario, path) -> None:
    _write_text(Path(path), dumps_json(scenario_to_dict(scenario)))


# ---------------------------------------------------------------------------
# artifacts


def _certificate_dict(certificate: costs_mod.ConvexityCertificate) -> dict:
    return {
        "certified": certificate.certified,
        "rule": certificate.rule,
        "failing_indices": list(certificate.failing_indices),
    }


def _solution_dict(solution: solver_mod.Solution, seed: int) -> dict:
    return {
        "objective": solution.objective,
        "x_star": solution.x_star,
        "u_star": solution.u_star,
        "certificate": _certificate_dict(solution.certificate),
        "guarantee_flag": solution.guarantee_flag,
        "status": solution.status,
        "iterations_used": solution.iterations_used,
        "feasibility_residual": solution.feasibility_residual,
        "instance_digest": solution.instance_digest,
        "seed": seed,
    }


def _write_trace_csv(path: Path, trace: np.ndarray) -> None:
    lines = ["iteration,best_objective"]
    lines.extend(f"{i},{_fmt_float(v)}" for i, v in enumerate(trace))
    _write_text(path, "\n".join(lines) + "\n")


def _solution_exit_code(solution: solver_mod.Solution) -> int:
    if solution.status == solver_mod.STATUS_MAX_ITERATIONS:
        return EXIT_NOT_CONVERGED
    if not solution.certificate.certified:
        return EXIT_BEST_EFFORT
    return EXIT_OK


def _default_oracle_points(horizon: int) -> int:
    return 401 if horizon <= 2 else 101


def run_solve(
    scenario: Scenario, out_dir, resolution: Optional[int] = None
) -> tuple[int, Optional[solver_mod.Solution]]:
    """Solve a scenario and write its requested artifacts.

    Returns (exit code, solution or None).  On a suspected-empty feasible
    set, writes diagnostic.json and returns the infeasible exit code.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = validate_params(scenario.storage, scenario.bounds)
    try:
        solution = solver_mod.solve(problem, scenario.cost, scenario.solve_options)
    except InfeasibleProblem as exc:
        _write_text(
            out / "diagnostic.json",
            dumps_json({"error": "infeasible", "message": str(exc)}),
        )
        return EXIT_INFEASIBLE, None

    _write_text(
        out / "solution.json",
        dumps_json(_solution_dict(solution, scenario.solve_options.seed)),
    )
    _write_trace_csv(out / "trace.csv", solution.best_objective_trace)

    if "certificate" in scenario.outputs:
        _write_text(
            out / "certificate.json",
            dumps_json(_certificate_dict(solution.certificate)),
        )
    if "feasible-set-samples" in scenario.outputs:
        emit_feasible_set_samples(
            scenario, resolution or DEFAULT_SAMPLE_RESOLUTION, out
        )
    if "oracle-comparison" in scenario.outputs:
        points = resolution or _default_oracle_points(scenario.storage.horizon)
        _write_oracle_report(scenario, solution, points, out)
    return _solution_exit_code(solution), solution


def _write_oracle_report(
    scenario: Scenario,
    solution: solver_mod.Solution,
    points: int,
    out: Path,
    tolerance: float = 1e-3,
) -> oracle_mod.GapReport:
    result = oracle_mod.brute_force_solve(
        scenario.storage, scenario.bounds, scenario.cost, oracle_mod.GridSpec(points)
    )
    report = oracle_mod.compare(solution, result, tolerance=tolerance)
    _write_text(
        out / "oracle.json",
        dumps_json(
            {
                "solver_objective": solution.objective,
                "oracle_objective": result.cost_best,
                "oracle_u_best": result.u_best,
                "gap": report.gap,
                "discretization_bound": report.discretization_bound,
                "tolerance": report.tolerance,
                "verdict": report.verdict,
                "feasible_count": result.feasible_count,
                "points_per_axis": points,
                "instance_digest": result.instance_digest,
            }
        ),
    )
    return report


def emit_feasible_set_samples(
    scenario: Scenario, resolution: int, out_dir
) -> tuple[Path, Path]:
    """Write the two-period feasible-set rasters as CSV data.

    power_samples.csv marks grid points of the power box feasible/infeasible
    for the nonconvex power set; energy_samples.csv marks grid points of the
    energy box as members/non-members of the convex energy polytope.
    """
    if scenario.storage.horizon != 2:
        raise HorizonNot2(
            f"feasible-set sampling needs horizon 2, got {scenario.storage.horizon}"
        )
    if resolution < MIN_SAMPLE_RESOLUTION:
        raise ValueError(
            f"resolution {resolution} too coarse, minimum {MIN_SAMPLE_RESOLUTION}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params, bounds = scenario.storage, scenario.bounds
    dyn = build_dynamics(params)

    axes_u = [
        np.linspace(-bounds.u_min_mag[t], bounds.u_max[t], resolution) for t in range(2)
    ]
    grid_u = np.column_stack(
        [np.repeat(axes_u[0], resolution), np.tile(axes_u[1], resolution)]
    )
    feasible = power_feasibility_mask(grid_u, params, bounds, dyn)
    power_path = out / "power_samples.csv"
    lines = ["u_1,u_2,feasible"]
    lines.extend(
        f"{_fmt_float(row[0])},{_fmt_float(row[1])},{int(flag)}"
        for row, flag in zip(grid_u, feasible)
    )
    _write_text(power_path, "\n".join(lines) + "\n")

    polytope = build_energy_polytope(params, bounds, dyn)
    axes_x = [np.linspace(bounds.x_min[t], bounds.x_max[t], resolution) for t in range(2)]
    grid_x = np.column_stack(
        [np.repeat(axes_x[0], resolution), np.tile(axes_x[1], resolution)]
    )
    member = energy_membership_mask(grid_x, polytope)
    energy_path = out / "energy_samples.csv"
    lines = ["x_1,x_2,member"]
    lines.extend(
        f"{_fmt_float(row[0])},{_fmt_float(row[1])},{int(flag)}"
        for row, flag in zip(grid_x, member)
    )
    _write_text(energy_path, "\n".join(lines) + "\n")
    return power_path, energy_path


# ---------------------------------------------------------------------------
# command dispatch


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 64 instead of argparse's default 2
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="lossy-storage", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, resolution_help=None):
        p.add_argument("--scenario", required=True, help="scenario JSON path")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override solver seed")
        if resolution_help:
            p.add_argument("--resolution", type=int, default=None, help=resolution_help)

    common(sub.add_parser("solve", help="solve the scenario, write solution artifacts"),
           "grid resolution for any sampled/oracle outputs")
    common(sub.add_parser("certify", help="write the convexity certificate only"))
    common(sub.add_parser("sample-sets", help="rasterize the two feasible sets (T=2)"),
           f"points per axis (default {DEFAULT_SAMPLE_RESOLUTION}, min {MIN_SAMPLE_RESOLUTION})")
    common(sub.add_parser("oracle-check", help="solve and compare against the grid oracle"),
           "oracle points per axis (default 401 for T<=2, else 101)")
    return parser


def _apply_overrides(scenario: Scenario, seed: Optional[int]) -> Scenario:
    if seed is None:
        return scenario
    options = dataclasses.replace(scenario.solve_options, seed=seed)
    return dataclasses.replace(scenario, solve_options=options)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        scenario = load_scenario(args.scenario)
    except FileNotFoundError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, SchemaError, ValidationError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    scenario = _apply_overrides(scenario, args.seed)
    out = Path(args.out)

    if args.verb == "solve":
        try:
            code, _ = run_solve(scenario, out, resolution=args.resolution)
        except (HorizonNot2, ValueError) as exc:
            print(f"usage error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        return code

    if args.verb == "certify":
        certificate = costs_mod.certify_convexity(scenario.cost, scenario.storage)
        out.mkdir(parents=True, exist_ok=True)
        _write_text(
            out / "certificate.json", dumps_json(_certificate_dict(certificate))
        )
        return EXIT_OK if certificate.certified else EXIT_BEST_EFFORT

    if args.verb == "sample-sets":
        resolution = args.resolution or DEFAULT_SAMPLE_RESOLUTION
        try:
            emit_feasible_set_samples(scenario, resolution, out)
        except (HorizonNot2, ValueError) as exc:
            print(f"usage error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        return EXIT_OK

    # oracle-check: the report is written here, once, at the flag resolution
    plain = dataclasses.replace(
        scenario, outputs=tuple(o for o in scenario.outputs if o != "oracle-comparison")
    )
    try:
        code, solution = run_solve(plain, out)
        if solution is None:
            return code
        points = args.resolution or _default_oracle_points(scenario.storage.horizon)
        _write_oracle_report(scenario, solution, points, out)
    except (HorizonNot2, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return code


if __name__ == "__main__":
    raise SystemExit(main())
