"""Command-line front end.

Exit codes: 0 success (all checks pass), 1 a check failed, 2 bad input,
3 infeasible instance.  ``HJMOT_LOG`` selects the log level (error, info,
debug).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field

from . import formats
from .certification import ALL_CHECKS, certify
from .diagnostics import DEFAULT_T_GRID, probe_rows
from .generators import GeneratorSpec, generate
from .model import InvalidInstanceError, check_valid
from .monge import MongeError, extract_monge_map
from .paths import path_to_json
from .reduction import reduced_cost_table
from .solver import solve_hjmot
from .transport import ConvergenceError, InfeasibleError

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("hjmot")


@dataclass
class RunConfig:
    """Settings for one run; a ``--config`` JSON file may set any of these keys.

    Command-line flags override values from the file.
    """

    command: str | None = None
    instance: str | None = None
    solution: str | None = None
    spec: str | None = None
    out: str | None = None
    method: str = "exact"
    epsilon: float = 1e-2
    max_iter: int = 10_000
    stop_tol: float = 1e-9
    checks: list = field(default_factory=lambda: list(ALL_CHECKS))
    tol: float = 1e-9
    seed: int = 0
    source: int = 0
    direction: list = field(default_factory=lambda: [1.0])
    t_grid: list = field(default_factory=lambda: list(DEFAULT_T_GRID))
    table: str | None = None


class InputError(Exception):
    pass


def _csv_floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_names(text: str) -> list:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hjmot", description="Solve and certify discrete jump transport problems.")
    p.add_argument("--config", help="JSON file with run settings (see RunConfig)")
    sub = p.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--out", help="output file (default: stdout or a derived name)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tol", type=float)

    g = sub.add_parser("generate", help="write a random instance from a generator spec")
    g.add_argument("spec", nargs="?")
    common(g)

    s = sub.add_parser("solve", help="solve an instance and write the solution")
    s.add_argument("instance", nargs="?")
    s.add_argument("--method", choices=["exact", "entropic"])
    s.add_argument("--epsilon", type=float)
    s.add_argument("--max-iter", dest="max_iter", type=int)
    s.add_argument("--stop-tol", dest="stop_tol", type=float)
    s.add_argument("--table", help="also export the reduced cost table as CSV")
    common(s)

    c = sub.add_parser("certify", help="run structural checks on a solution")
    c.add_argument("instance", nargs="?")
    c.add_argument("solution", nargs="?")
    c.add_argument("--checks", type=_csv_names)
    common(c)

    pr = sub.add_parser("probe", help="finite-difference diagnostics at a source point")
    pr.add_argument("instance", nargs="?")
    pr.add_argument("--source", type=int)
    pr.add_argument("--direction", type=_csv_floats)
    pr.add_argument("--t-grid", dest="t_grid", type=_csv_floats)
    common(pr)

    r = sub.add_parser("report", help="solve, certify and extract the Monge map in one go")
    r.add_argument("instance", nargs="?")
    r.add_argument("--method", choices=["exact", "entropic"])
    r.add_argument("--epsilon", type=float)
    r.add_argument("--checks", type=_csv_names)
    common(r)
    return p


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise InputError("config must be a JSON object")
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise InputError(f"unknown config keys {unknown}")
    return RunConfig(**data)


def merge(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates = {k: v for k, v in vars(args).items() if k in {f.name for f in dataclasses.fields(RunConfig)}
               and v is not None}
    return dataclasses.replace(config, **updates)


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def summary_line(solution) -> str:
    skipped = ", ".join(_fmt(m) for m in solution.skipped_mass())
    return f"M={_fmt(solution.M)} atoms={len(solution.path_atoms)} skipped_mass=[{skipped}]"


def _load_instance(path: str | None):
    if not path:
        raise InputError("an instance file is required")
    try:
        return check_valid(formats.load_instance(path))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except (formats.FormatError, InvalidInstanceError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_generate(cfg: RunConfig) -> int:
    if not cfg.spec:
        raise InputError("a generator spec file is required")
    try:
        with open(cfg.spec, encoding="utf-8") as fh:
            data = json.load(fh)
        spec = GeneratorSpec.from_dict(data)
        if cfg.seed is not None and "seed" not in data:
            spec = dataclasses.replace(spec, seed=cfg.seed)
        instance = generate(spec)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise InputError(f"bad generator spec: {exc}") from None
    _emit(json.dumps(formats.instance_to_dict(instance), indent=2) + "\n", cfg.out)
    return EXIT_OK


def _solve(cfg: RunConfig, instance):
    return solve_hjmot(instance, cfg.method, cfg.epsilon, cfg.max_iter, cfg.stop_tol)


def cmd_solve(cfg: RunConfig) -> int:
    instance = _load_instance(cfg.instance)
    solution = _solve(cfg, instance)
    text = json.dumps(formats.solution_to_dict(instance, solution), indent=2, allow_nan=False) + "\n"
    out = cfg.out or (os.path.splitext(cfg.instance)[0] + ".solution.json")
    _emit(text, out)
    if cfg.table:
        formats.write_reduced_table(solution.table or reduced_cost_table(instance), cfg.table)
    print(summary_line(solution))
    return EXIT_OK


def _check_names(cfg: RunConfig) -> list:
    unknown = sorted(set(cfg.checks) - set(ALL_CHECKS))
    if unknown:
        raise InputError(f"unknown checks {unknown}; choose from {','.join(ALL_CHECKS)}")
    return list(cfg.checks)


def _print_report(report) -> None:
    for c in report.checks:
        status = "pass" if c.passed else "FAIL"
        extra = c.details.get("status", "") if isinstance(c.details, dict) else ""
        print(f"{c.name}: {status} slack={_fmt(c.slack)}{' ' + extra if extra else ''}")


def cmd_certify(cfg: RunConfig) -> int:
    instance = _load_instance(cfg.instance)
    if not cfg.solution:
        raise InputError("a solution file is required")
    try:
        solution = formats.load_solution(instance, cfg.solution)
    except OSError as exc:
        raise InputError(f"cannot read {cfg.solution}: {exc}") from None
    except (formats.FormatError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{cfg.solution}: {exc}") from None
    report = certify(instance, solution, _check_names(cfg), cfg.tol, cfg.seed)
    _print_report(report)
    if cfg.out:
        formats.dump_report(report, cfg.out)
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_probe(cfg: RunConfig) -> int:
    instance = _load_instance(cfg.instance)
    if not instance.costs.kind.is_kernel:
        raise InputError("probe requires kernel costs")
    if not 0 <= cfg.source < instance.spaces[0].size:
        raise InputError(f"source {cfg.source} out of range")
    try:
        rows = probe_rows(instance, cfg.source, cfg.direction, cfg.t_grid)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    fh = open(cfg.out, "w", newline="", encoding="utf-8") if cfg.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["t", "continuation", "quotient", "r", "r_over_t", "D"])
        for r in rows:
            w.writerow([repr(r["t"]), json.dumps(r["continuation"]), repr(r["quotient"]),
                        repr(r["r"]), repr(r["r_over_t"]), repr(r["D"])])
    finally:
        if cfg.out:
            fh.close()
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    instance = _load_instance(cfg.instance)
    solution = _solve(cfg, instance)
    checks = _check_names(cfg)
    if solution.duals is None and "splitting" in checks:
        checks.remove("splitting")
    report = certify(instance, solution, checks, cfg.tol, cfg.seed)
    print(summary_line(solution))
    _print_report(report)
    out = {"solution": formats.solution_to_dict(instance, solution), "report": report.to_dict()}
    try:
        mm = extract_monge_map(solution, instance.K)
        out["monge_map"] = {instance.spaces[0].points[a]: path_to_json(p) for a, p in mm.paths.items()}
    except MongeError as exc:
        out["monge_map"] = None
        print(f"monge map: not extractable ({exc})")
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2, allow_nan=False)
            fh.write("\n")
    return EXIT_OK if report.passed else EXIT_CHECK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "certify": cmd_certify,
            "probe": cmd_probe, "report": cmd_report}


def _setup_logging() -> None:
    level = os.environ.get("HJMOT_LOG", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if level not in LOG_LEVELS:
        log.error("unknown HJMOT_LOG level %r; using 'error'", level)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        cfg = merge(load_config(args.config), args)
        if cfg.command not in COMMANDS:
            raise InputError("a command is required: " + ", ".join(COMMANDS))
        return COMMANDS[cfg.command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
