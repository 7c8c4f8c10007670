"""JSON and CSV formats for instances, solutions, reduced tables, Monge maps and reports.

Floats are written with Python's shortest round-trip representation, so a
double survives a write/read cycle bit for bit.  Infinite costs are written
as the string ``"inf"``; weights may be given as numbers or decimal strings.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path as FsPath

import numpy as np

from .model import CostFamily, CostKind, DiscreteMeasure, ProblemInstance, StageSpace
from .paths import path_from_json, path_to_json
from .solver import HJMOTSolution, build_solution


class FormatError(ValueError):
    """Malformed input file."""


def _number(x) -> float:
    if isinstance(x, bool):
        raise FormatError(f"expected a number, got {x!r}")
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, str):
        try:
            return float(x)
        except ValueError:
            pass
    raise FormatError(f"expected a number or decimal string, got {x!r}")


def _encode(x: float):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


def _encode_list(values) -> list:
    return [_encode(v) for v in np.ravel(values)]


def instance_to_dict(instance: ProblemInstance) -> dict:
    spaces = []
    for s in instance.spaces:
        d = {"points": list(s.points)}
        if s.coords is not None:
            d["coords"] = [_encode_list(row) for row in s.coords]
        if s.angles is not None:
            d["angles"] = _encode_list(s.angles)
        spaces.append(d)
    cost = {"kind": instance.costs.kind.value}
    if instance.costs.matrices is not None:
        cost["matrices"] = {
            f"{i},{j}": [_encode_list(row) for row in m]
            for (i, j), m in sorted(instance.costs.matrices.items())
        }
    return {
        "K": instance.K,
        "spaces": spaces,
        "cost": cost,
        "mu0": _encode_list(instance.mu0.weights),
        "muK": _encode_list(instance.muK.weights),
        "allow_skips": instance.allow_skips,
    }


def instance_from_dict(d: dict) -> ProblemInstance:
    if not isinstance(d, dict):
        raise FormatError("instance must be a JSON object")
    known = {"K", "spaces", "cost", "mu0", "muK", "allow_skips"}
    extra = set(d) - known
    if extra:
        raise FormatError(f"unknown instance keys {sorted(extra)}")
    for key in ("K", "spaces", "cost", "mu0", "muK"):
        if key not in d:
            raise FormatError(f"missing key {key!r}")
    K = d["K"]
    if not isinstance(K, int) or isinstance(K, bool):
        raise FormatError(f"K must be an integer, got {K!r}")
    spaces = []
    for k, s in enumerate(d["spaces"]):
        if "points" not in s:
            raise FormatError(f"stage {k} has no points")
        coords = s.get("coords")
        angles = s.get("angles")
        spaces.append(StageSpace(
            k,
            [str(p) if not isinstance(p, str) else p for p in s["points"]],
            coords=None if coords is None else np.array([[_number(x) for x in np.atleast_1d(row)] for row in coords]),
            angles=None if angles is None else np.array([_number(x) for x in angles]),
        ))
    cost = d["cost"]
    try:
        kind = CostKind(cost["kind"])
    except (KeyError, ValueError, TypeError):
        raise FormatError(f"unknown cost kind {cost.get('kind') if isinstance(cost, dict) else cost!r}") from None
    mats = None
    if "matrices" in cost:
        mats = {}
        for key, rows in cost["matrices"].items():
            try:
                i, j = (int(t) for t in key.split(","))
            except ValueError:
                raise FormatError(f"bad matrix key {key!r}, expected 'i,j'") from None
            mats[(i, j)] = np.array([[_number(x) for x in row] for row in rows], dtype=float).reshape(len(rows), -1)
    allow = d.get("allow_skips", True)
    if not isinstance(allow, bool):
        raise FormatError("allow_skips must be a boolean")
    return ProblemInstance(
        K, spaces, CostFamily(kind, mats),
        DiscreteMeasure(0, [_number(w) for w in d["mu0"]]),
        DiscreteMeasure(K, [_number(w) for w in d["muK"]]),
        allow_skips=allow,
    )


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def instance_hash(instance: ProblemInstance) -> str:
    return hashlib.sha256(canonical_json(instance_to_dict(instance)).encode("utf-8")).hexdigest()


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    FsPath(path).write_text(text, encoding="utf-8")


def load_instance(path) -> ProblemInstance:
    return instance_from_dict(_read_json(path))


def dump_instance(instance: ProblemInstance, path) -> None:
    _write_json(instance_to_dict(instance), path)


def solution_to_dict(instance: ProblemInstance, solution: HJMOTSolution) -> dict:
    out = {
        "M": _encode(solution.M),
        "atoms": [{"path": path_to_json(p), "mass": _encode(m)} for p, m in solution.path_atoms],
        "marginals": [_encode_list(m.weights) for m in solution.intermediate_marginals],
        "instance_hash": instance_hash(instance),
        "method": solution.method,
        "duals": None,
    }
    if solution.duals is not None:
        u, v = solution.duals
        out["duals"] = {"u": _encode_list(u), "v": _encode_list(v)}
    return out


def solution_from_dict(instance: ProblemInstance, d: dict, check_hash: bool = True) -> HJMOTSolution:
    """Rebuild a solution; intermediate marginals are recomputed from the atoms."""
    for key in ("M", "atoms"):
        if key not in d:
            raise FormatError(f"solution is missing {key!r}")
    if check_hash and d.get("instance_hash") not in (None, instance_hash(instance)):
        raise FormatError("solution was computed for a different instance (hash mismatch)")
    atoms = []
    for a in d["atoms"]:
        path = path_from_json(a["path"])
        if len(path) != instance.K + 1:
            raise FormatError(f"path {a['path']} has the wrong length")
        atoms.append((path, _number(a["mass"])))
    duals = None
    if d.get("duals"):
        duals = (np.array([_number(x) for x in d["duals"]["u"]]),
                 np.array([_number(x) for x in d["duals"]["v"]]))
    return build_solution(instance, atoms, _number(d["M"]), d.get("method", "exact"), duals)


def load_solution(instance: ProblemInstance, path, check_hash: bool = True) -> HJMOTSolution:
    return solution_from_dict(instance, _read_json(path), check_hash)


def dump_solution(instance: ProblemInstance, solution: HJMOTSolution, path) -> None:
    _write_json(solution_to_dict(instance, solution), path)


def write_reduced_table(table, csv_path) -> FsPath:
    """Values as CSV (row = source, column = terminal) plus ``<name>.paths.json`` with argmin paths."""
    csv_path = FsPath(csv_path)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for row in table.values:
            w.writerow([repr(float(x)) if math.isfinite(x) else "inf" for x in row])
    sidecar = csv_path.with_suffix(".paths.json")
    paths = [[None if p is None else path_to_json(p) for p in row] for row in table.argmin_paths]
    _write_json({"argmin_paths": paths, "ties": table.ties.tolist(), "tol": table.tol}, sidecar)
    return sidecar


def write_monge_table(instance: ProblemInstance, monge_map, csv_path) -> None:
    labels = instance.spaces[0].points
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "path"])
        for a, path in sorted(monge_map.paths.items()):
            w.writerow([labels[a], json.dumps(path_to_json(path))])


def dump_report(report, path) -> None:
    _write_json(report.to_dict(), path)
