"""Problem-file loading, command dispatch, and deterministic report emission.

Problem files are TOML with a closed schema (unknown keys are rejected)::

    [problem]      n, kind ("reduced"|"full"), rho (default 1.0), z0 = [d floats]
    [hamiltonian]  h0 = "expr"
    [generators]   hams = ["expr", ...]            # or, reduced only:
                   base_fields = [["expr" x n], ...]   # x-only, auto-lifted
    [box]          a = [a1..am]
    [integrator]   method ("rk4-fixed"|"rk45-adaptive"), step      # optional
    [tolerances]   first_integral, closure, stationarity, rank     # optional
    [cauchy]       x0 = [n exprs in l1..l(n-1)], p0, u0, box       # optional

Commands: ``charflow check|orbit|certify|cauchy <file> [--grid k]
[--json out] [--csv out]``.  Exit codes: 0 pass, 1 check failure,
2 input error.  Identical inputs produce byte-identical output: reports
and CSV carry no timestamps or machine state, floats are printed with 17
significant digits, and row order is deterministic regardless of the
CHARFLOW_THREADS parallelism cap.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import expr as ex
from .charfield import (
    CheckReport,
    Hamiltonian,
    PhasePoint,
    char_field,
    is_first_integral,
    sample_ball,
)
from .flow import FlowDivergenceError, IntegratorConfig, Orbit, orbit_grid
from .gradsys import RankDeficientError, certify_stationarity, lambda_grid
from .lie import VectorField, check_closure, cotangent_lift
from .stationary import (
    CauchyData,
    check_compatibility,
    check_level,
    check_transversality,
    parameter_grid,
)

__all__ = ["ProblemFormatError", "Problem", "load_problem", "main"]

SCHEMA_VERSION = "1"
BALL_SAMPLES = 50
BALL_SEED = 0


class ProblemFormatError(ValueError):
    """The problem file is malformed or inconsistent."""


@dataclass
class Tolerances:
    first_integral: float = 1e-9
    closure: float = 1e-8
    stationarity: float = 1e-6
    rank: float = 1e-10


@dataclass
class Problem:
    path: str
    sha256: str
    ctx: ex.VarContext
    rho: float
    z0: PhasePoint
    h0: Hamiltonian
    generators: list[Hamiltonian]
    fields: list[VectorField]
    labels: list[str]
    box: tuple[float, ...]
    integrator: IntegratorConfig
    tolerances: Tolerances
    cauchy: CauchyData | None

    @property
    def m(self) -> int:
        return len(self.fields)

    def orbit(self) -> Orbit:
        return Orbit(self.fields, self.z0, self.box, self.integrator)

    def sample_grid(self) -> np.ndarray:
        return sample_ball(self.z0.vector, 2.0 * self.rho, BALL_SAMPLES, BALL_SEED)


def _require(table: dict, section: str, key: str):
    if key not in table:
        raise ProblemFormatError(f"[{section}] is missing required key '{key}'")
    return table[key]


def _reject_unknown(table: dict, section: str, allowed: set[str]):
    for key in table:
        if key not in allowed:
            raise ProblemFormatError(f"unknown key '{key}' in [{section}]")


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProblemFormatError(f"{where} must be a number")
    return float(value)


def _as_float_list(value, where: str) -> list[float]:
    if not isinstance(value, list):
        raise ProblemFormatError(f"{where} must be an array of numbers")
    return [_as_float(v, where) for v in value]


def _as_str_list(value, where: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ProblemFormatError(f"{where} must be an array of strings")
    return list(value)


def _parse_expr(source: str, ctx, where: str) -> ex.Expr:
    try:
        return ex.parse(source, ctx)
    except ex.ParseError as err:
        raise ProblemFormatError(f"{where}: {err}") from err


def load_problem(path: str) -> Problem:
    """Load and strictly validate a problem file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    sha256 = hashlib.sha256(raw).hexdigest()
    data = tomllib.loads(raw.decode("utf-8"))

    _reject_unknown(
        data,
        "top level",
        {"problem", "hamiltonian", "generators", "box", "integrator", "tolerances", "cauchy"},
    )
    for section in ("problem", "hamiltonian", "generators", "box"):
        if section not in data:
            raise ProblemFormatError(f"missing required section [{section}]")

    prob = data["problem"]
    _reject_unknown(prob, "problem", {"n", "kind", "rho", "z0"})
    n = _require(prob, "problem", "n")
    if not isinstance(n, int) or n < 1:
        raise ProblemFormatError("[problem] n must be a positive integer")
    kind = _require(prob, "problem", "kind")
    if kind not in ("reduced", "full"):
        raise ProblemFormatError("[problem] kind must be 'reduced' or 'full'")
    ctx = ex.VarContext(n, kind)
    rho = _as_float(prob.get("rho", 1.0), "[problem] rho")
    if rho <= 0:
        raise ProblemFormatError("[problem] rho must be positive")
    z0_list = _as_float_list(_require(prob, "problem", "z0"), "[problem] z0")
    if len(z0_list) != ctx.dim:
        raise ProblemFormatError(
            f"[problem] z0 must have {ctx.dim} components for kind '{kind}', "
            f"got {len(z0_list)}"
        )
    z0 = PhasePoint.from_vector(ctx, z0_list)

    ham = data["hamiltonian"]
    _reject_unknown(ham, "hamiltonian", {"h0"})
    h0_src = _require(ham, "hamiltonian", "h0")
    if not isinstance(h0_src, str):
        raise ProblemFormatError("[hamiltonian] h0 must be a string")
    h0 = Hamiltonian(ctx, _parse_expr(h0_src, ctx, "[hamiltonian] h0"))

    gen = data["generators"]
    _reject_unknown(gen, "generators", {"hams", "base_fields"})
    if ("hams" in gen) == ("base_fields" in gen):
        raise ProblemFormatError(
            "[generators] must have exactly one of 'hams' or 'base_fields'"
        )
    generators: list[Hamiltonian] = []
    fields: list[VectorField] = []
    labels: list[str] = []
    if "hams" in gen:
        sources = _as_str_list(gen["hams"], "[generators] hams")
        if not sources:
            raise ProblemFormatError("[generators] hams must be nonempty")
        for i, src in enumerate(sources, start=1):
            h = Hamiltonian(ctx, _parse_expr(src, ctx, f"[generators] hams[{i}]"))
            generators.append(h)
            fields.append(char_field(h))
            labels.append(f"g{i}")
    else:
        if kind != "reduced":
            raise ProblemFormatError("[generators] base_fields require kind 'reduced'")
        rows = gen["base_fields"]
        if not isinstance(rows, list) or not rows:
            raise ProblemFormatError("[generators] base_fields must be a nonempty array")
        x_names = ctx.x_names
        p_vars = [ex.Var(name) for name in ctx.p_names]
        for i, row in enumerate(rows, start=1):
            comps = _as_str_list(row, f"[generators] base_fields[{i}]")
            if len(comps) != n:
                raise ProblemFormatError(
                    f"[generators] base_fields[{i}] must have {n} components"
                )
            parsed = [
                _parse_expr(c, x_names, f"[generators] base_fields[{i}]")
                for c in comps
            ]
            base = VectorField(x_names, parsed)
            # H_i = <p, f_i(x)>; its characteristic field is the lift.
            h_expr = ex.ZERO
            for pv, comp in zip(p_vars, parsed):
                h_expr = ex.add(h_expr, ex.mul(pv, comp))
            generators.append(Hamiltonian(ctx, h_expr))
            fields.append(cotangent_lift(base))
            labels.append(f"g{i}")

    box_table = data["box"]
    _reject_unknown(box_table, "box", {"a"})
    box = _as_float_list(_require(box_table, "box", "a"), "[box] a")
    if len(box) != len(fields):
        raise ProblemFormatError(
            f"[box] a must list one radius per generator ({len(fields)}), got {len(box)}"
        )
    if any(a <= 0 for a in box):
        raise ProblemFormatError("[box] a radii must be positive")

    integ = data.get("integrator", {})
    _reject_unknown(integ, "integrator", {"method", "step"})
    method = integ.get("method", "rk4-fixed")
    step = _as_float(integ.get("step", 1e-3), "[integrator] step")
    try:
        integrator = IntegratorConfig(method=method, step=step)
    except ValueError as err:
        raise ProblemFormatError(f"[integrator] {err}") from err

    tols = data.get("tolerances", {})
    _reject_unknown(
        tols, "tolerances", {"first_integral", "closure", "stationarity", "rank"}
    )
    tolerances = Tolerances(
        first_integral=_as_float(
            tols.get("first_integral", 1e-9), "[tolerances] first_integral"
        ),
        closure=_as_float(tols.get("closure", 1e-8), "[tolerances] closure"),
        stationarity=_as_float(
            tols.get("stationarity", 1e-6), "[tolerances] stationarity"
        ),
        rank=_as_float(tols.get("rank", 1e-10), "[tolerances] rank"),
    )

    cauchy = None
    if "cauchy" in data:
        ctable = data["cauchy"]
        _reject_unknown(ctable, "cauchy", {"x0", "p0", "u0", "box"})
        x0 = _as_str_list(_require(ctable, "cauchy", "x0"), "[cauchy] x0")
        p0 = _as_str_list(_require(ctable, "cauchy", "p0"), "[cauchy] p0")
        u0 = _require(ctable, "cauchy", "u0")
        if not isinstance(u0, str):
            raise ProblemFormatError("[cauchy] u0 must be a string")
        cbox = _as_float_list(ctable.get("box", [1.0] * (n - 1)), "[cauchy] box")
        try:
            cauchy = CauchyData.from_sources(n, x0, p0, u0, cbox)
        except (ValueError, ex.ParseError) as err:
            raise ProblemFormatError(f"[cauchy] {err}") from err

    return Problem(
        path=os.path.basename(path),
        sha256=sha256,
        ctx=ctx,
        rho=rho,
        z0=z0,
        h0=h0,
        generators=generators,
        fields=fields,
        labels=labels,
        box=tuple(box),
        integrator=integrator,
        tolerances=tolerances,
        cauchy=cauchy,
    )


# ---------------------------------------------------------------------------
# Deterministic serialization: floats always carry 17 significant digits.


def _fmt_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        return f'"{x}"'
    return format(float(x), ".17g")


def dumps_json(obj, indent: int = 0) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        rows = [
            f'{inner}"{key}": {dumps_json(value, indent + 1)}'
            for key, value in obj.items()
        ]
        return "{\n" + ",\n".join(rows) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        rows = [f"{inner}{dumps_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(rows) + f"\n{pad}]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _record(check: CheckReport) -> dict:
    return {
        "name": check.name,
        "max_residual": check.max_residual,
        "tolerance": check.tolerance,
        "pass": check.passed,
    }


def build_report(command: str, problem: Problem, checks: list[dict], summary: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "problem": problem.path,
        "problem_sha256": problem.sha256,
        "environment": {
            "integrator": {
                "method": problem.integrator.method,
                "step": problem.integrator.step,
            }
        },
        "checks": checks,
        "summary": summary,
        "pass": all(c["pass"] for c in checks),
    }


def _emit(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Commands.  Each returns (report dict or None, exit code).


def run_hypothesis_checks(problem: Problem, grid) -> list[dict]:
    """First-integral membership for every generator, then span closure."""
    z0_field = char_field(problem.h0)
    checks = []
    for label, h in zip(problem.labels, problem.generators):
        rep = is_first_integral(h, z0_field, grid, tol=problem.tolerances.first_integral)
        rep.name = f"first_integral({label})"
        checks.append(_record(rep))
    closure = check_closure(
        problem.fields,
        grid,
        tol=problem.tolerances.closure,
        mode="constants",
        rank_tol=problem.tolerances.rank,
    )
    record = {
        "name": "closure",
        "max_residual": closure.max_relative_residual,
        "tolerance": closure.tolerance,
        "pass": closure.passed,
    }
    if closure.degenerate_span_warning:
        record["warning"] = "generator span is rank-deficient on most of the grid"
    checks.append(record)
    return checks


def cmd_check(problem: Problem, json_path: str | None) -> int:
    checks = run_hypothesis_checks(problem, problem.sample_grid())
    report = build_report("check", problem, checks, {"grid_points": BALL_SAMPLES})
    _emit(dumps_json(report) + "\n", json_path)
    return 0 if report["pass"] else 1


def csv_rows(problem: Problem, grid) -> tuple[str, list[str]]:
    names = problem.ctx.names
    header = ",".join(
        [f"t{i}" for i in range(1, problem.m + 1)] + list(names) + ["H0", "drift"]
    )
    base = problem.h0.value(problem.z0)
    rows = []
    for lam, point in grid:
        if point is None:
            continue
        h_val = problem.h0.value(point)
        cells = (
            [_fmt_float(t) for t in lam]
            + [_fmt_float(v) for v in point.coords]
            + [_fmt_float(h_val), _fmt_float(h_val - base)]
        )
        rows.append(",".join(cells))
    return header, rows


def cmd_orbit(
    problem: Problem, k: int, csv_path: str | None, json_path: str | None, threads: int
) -> int:
    grid = orbit_grid(problem.orbit(), k, threads=threads)
    header, rows = csv_rows(problem, grid)
    _emit(header + "\n" + "\n".join(rows) + ("\n" if rows else ""), csv_path)
    if json_path is not None:
        summary = {
            "k": k,
            "rows": len(rows),
            "divergences": [
                {
                    "lambda": list(d["lambda"]),
                    "generator": d["generator"],
                    "sigma": d["sigma"],
                }
                for d in grid.divergences
            ],
        }
        report = build_report("orbit", problem, [], summary)
        report["pass"] = not grid.divergences
        _emit(dumps_json(report) + "\n", json_path)
    if grid.divergences:
        for d in grid.divergences:
            sys.stderr.write(f"divergence: {d['message']} at lambda={d['lambda']}\n")
        return 1
    return 0


def cmd_certify(problem: Problem, k: int, json_path: str | None, threads: int) -> int:
    checks = run_hypothesis_checks(problem, problem.sample_grid())
    orbit = problem.orbit()
    grid = lambda_grid(problem.box, k)
    tol = problem.tolerances.stationarity
    summary: dict = {"k": k, "grid_points": len(grid)}
    try:
        cert = certify_stationarity(orbit, problem.h0, grid, tol=tol, threads=threads)
    except RankDeficientError as err:
        checks.append(
            {
                "name": "stationarity",
                "max_residual": float("inf"),
                "tolerance": tol,
                "pass": False,
                "error": str(err),
                "lambda": list(err.lam),
            }
        )
        report = build_report("certify", problem, checks, summary)
        _emit(dumps_json(report) + "\n", json_path)
        return 1
    except FlowDivergenceError as err:
        checks.append(
            {
                "name": "stationarity",
                "max_residual": float("inf"),
                "tolerance": tol,
                "pass": False,
                "error": str(err),
            }
        )
        report = build_report("certify", problem, checks, summary)
        _emit(dumps_json(report) + "\n", json_path)
        return 1

    checks.append(
        {
            "name": "stationarity_directional",
            "max_residual": cert.max_directional,
            "tolerance": tol,
            "pass": cert.max_directional <= tol,
        }
    )
    checks.append(
        {
            "name": "stationarity_gradient",
            "max_residual": cert.max_grad_norm,
            "tolerance": cert.max_grad_bound,
            "pass": cert.max_grad_norm <= cert.max_grad_bound,
        }
    )
    checks.append(
        {
            "name": "stationarity_drift",
            "max_residual": cert.max_drift,
            "tolerance": tol,
            "pass": cert.max_drift <= tol,
        }
    )
    summary.update(
        {
            "min_sigma_min": cert.min_sigma_min,
            "max_defect": cert.max_defect,
            "max_drift": cert.max_drift,
            "max_directional": cert.max_directional,
            "certificate_pass": cert.passed,
            "failing_lambdas": len(cert.failures),
        }
    )
    report = build_report("certify", problem, checks, summary)
    report["pass"] = report["pass"] and cert.passed
    _emit(dumps_json(report) + "\n", json_path)
    return 0 if report["pass"] else 1


def cmd_cauchy(problem: Problem, k: int, json_path: str | None) -> int:
    if problem.cauchy is None:
        raise ProblemFormatError("command 'cauchy' requires a [cauchy] section")
    c = problem.cauchy
    grid = parameter_grid(c, k)
    compat = check_compatibility(c, grid)
    level = check_level(c, problem.h0, problem.z0, grid)
    trans = check_transversality(c, problem.h0, grid)
    checks = [
        _record(compat),
        _record(level),
        {
            "name": "transversality",
            "max_residual": trans.min_sigma_min,
            "tolerance": trans.threshold,
            "pass": trans.passed,
            "min_abs_det": trans.min_abs_det,
        },
    ]
    report = build_report(
        "cauchy", problem, checks, {"grid_points": trans.points, "k": k}
    )
    _emit(dumps_json(report) + "\n", json_path)
    return 0 if report["pass"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="charflow",
        description="Check, flow, and certify characteristic-field problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, default_k in (
        ("check", None),
        ("orbit", 11),
        ("certify", 11),
        ("cauchy", 21),
    ):
        p = sub.add_parser(name)
        p.add_argument("file", help="problem file (TOML)")
        if default_k is not None:
            p.add_argument("--grid", type=int, default=default_k, metavar="K")
        p.add_argument("--json", metavar="OUT", help="write the JSON report here")
        if name == "orbit":
            p.add_argument("--csv", metavar="OUT", help="write the CSV table here")
    args = parser.parse_args(argv)

    threads = max(1, int(os.environ.get("CHARFLOW_THREADS", "1")))
    try:
        problem = load_problem(args.file)
        if args.command == "check":
            return cmd_check(problem, args.json)
        if args.command == "orbit":
            return cmd_orbit(problem, args.grid, args.csv, args.json, threads)
        if args.command == "certify":
            return cmd_certify(problem, args.grid, args.json, threads)
        return cmd_cauchy(problem, args.grid, args.json)
    except (ProblemFormatError, tomllib.TOMLDecodeError, OSError, ValueError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
