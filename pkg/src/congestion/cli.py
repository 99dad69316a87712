"""Command-line front end: run scenario files, sweep parameter grids, verify outputs.

Exit codes: 0 success, 2 bad input, 3 infeasible instance, 4 convergence
failure. Floats are written with ``repr`` so CSV output is byte-identical
across reruns and round-trips exactly.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .beckmann import (
    SolveOptions,
    kkt_residual,
    multiplier_recover,
    solve_beckmann_frank_wolfe,
    support_bound_report,
)
from .constraints import FixedMeasure
from .dynamic import active_horizon, extend_graph, extend_potential, solve_dynamic
from .errors import (
    CongestionError,
    ConvergenceError,
    InfeasibleError,
    NegativeLoopError,
    PreconditionError,
)
from .flows import EdgeFlow, NodeFunction, divergence, gradient
from .graph import Metric, shortest_distances
from .potentials import potential_gradient
from .roads import (
    compute_T0,
    one_road_obstacle_solve,
    one_road_solve,
    two_roads_kkt,
    two_roads_solve,
)
from .scenario import Scenario, ScenarioError, load_scenario
from .smirnov import smirnov_decompose, wardrop_certificate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_CONVERGENCE = 4

log = logging.getLogger("congestion")


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: FsPath, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _write_json(path: FsPath, obj) -> None:
    path.write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")


@dataclass
class RunOutcome:
    code: int
    files: list = field(default_factory=list)
    report: dict = field(default_factory=dict)


def _solve_options(scenario: Scenario, overrides: dict) -> SolveOptions:
    opts = scenario.options
    opts.update({k: v for k, v in overrides.items() if v is not None})
    return SolveOptions(
        tol=float(opts.get("tol", 1e-8)),
        max_iter=int(opts.get("max_iter", 10_000)),
        seed=opts.get("seed"),
    )


def _beckmann_certificates(graph, potential, constraint, flow: EdgeFlow) -> dict:
    """Consolidated optimality evidence for a static solution."""
    metric = potential_gradient(potential, flow)
    out: dict = {}
    recovery = multiplier_recover(flow, metric)
    out["multiplier"] = recovery.to_json()
    if recovery.found:
        out["kkt"] = kkt_residual(flow, recovery.u, potential, constraint).to_json()
    try:
        profile = smirnov_decompose(flow)
        cert = wardrop_certificate(profile, lambda f: potential_gradient(potential, f))
        out["wardrop"] = cert.to_json()
    except (PreconditionError, CongestionError) as exc:
        out["wardrop"] = {"error": str(exc)}
    out["support_bound"] = support_bound_report(flow, metric).to_json()
    return out


def _run_geodesic(scenario: Scenario, out_dir: FsPath) -> RunOutcome:
    graph = scenario.graph
    metric = Metric(graph, scenario.params["metric"], signed=True)
    sd = shortest_distances(graph, metric, scenario.params["sources"])
    rows = [(x, _fmt(sd.distance(x))) for x in graph.nodes]
    _write_csv(out_dir / "distances.csv", ["node", "distance"], rows)
    report = {
        "kind": "geodesic",
        "distances": {x: sd.distance(x) for x in graph.nodes},
        "geodesic_edges": [list(graph.edges[k]) for k in sd.geodesic_edges()],
    }
    return RunOutcome(EXIT_OK, ["distances.csv"], report)


def _run_beckmann(scenario: Scenario, out_dir: FsPath, overrides: dict) -> RunOutcome:
    opts = _solve_options(scenario, overrides)
    result = solve_beckmann_frank_wolfe(
        scenario.graph, scenario.potential, scenario.constraint, opts
    )
    rows = [
        (e[0], e[1], _fmt(v))
        for e, v in zip(scenario.graph.edges, result.flow.values)
    ]
    _write_csv(out_dir / "flow.csv", ["tail", "head", "flow"], rows)
    report = {
        "kind": "beckmann",
        "converged": result.converged,
        "iterations": result.n_iter,
        "gap": result.best_gap,
        "objective": result.objective,
        "certified_global": result.certified_global,
    }
    if result.note:
        report["note"] = result.note
    report.update(
        _beckmann_certificates(
            scenario.graph, scenario.potential, scenario.constraint, result.flow
        )
    )
    code = EXIT_OK if result.converged else EXIT_CONVERGENCE
    return RunOutcome(code, ["flow.csv"], report)


def _run_dynamic(scenario: Scenario, out_dir: FsPath, overrides: dict) -> RunOutcome:
    opts = _solve_options(scenario, overrides)
    sol = solve_dynamic(
        scenario.graph,
        scenario.potential,
        scenario.params["mu"],
        scenario.params["nu"],
        scenario.params["T"],
        opts,
    )
    ext = sol.ext
    transit = ext.transit_view(sol.flow.values)
    rows = [
        (t, e[0], e[1], _fmt(transit[t - 1, k]))
        for t in range(1, ext.horizon + 1)
        for k, e in enumerate(ext.base.edges)
    ]
    _write_csv(out_dir / "flow.csv", ["t", "tail", "head", "flow"], rows)
    deposit = ext.deposit_view(sol.flow.values)
    dep_rows = [
        (t, x, _fmt(deposit[t - 1, k]))
        for t in range(1, ext.horizon + 1)
        for k, x in enumerate(ext.base.nodes)
    ]
    _write_csv(out_dir / "deposit.csv", ["t", "node", "deposit_flow"], dep_rows)
    report = {
        "kind": "dynamic",
        "converged": sol.result.converged,
        "iterations": sol.result.n_iter,
        "gap": sol.result.best_gap,
        "objective": sol.result.objective,
        "conservation": sol.interior_conservation_residual(),
        "active_horizon": active_horizon(ext, sol.flow),
    }
    try:
        profile = smirnov_decompose(sol.flow)
        cert = wardrop_certificate(
            profile, lambda f: potential_gradient(sol.potential, f)
        )
        report["wardrop"] = cert.to_json()
    except (PreconditionError, CongestionError) as exc:
        report["wardrop"] = {"error": str(exc)}
    code = EXIT_OK if sol.result.converged else EXIT_CONVERGENCE
    return RunOutcome(code, ["flow.csv", "deposit.csv"], report)


def _run_one_road(scenario: Scenario, out_dir: FsPath) -> RunOutcome:
    p = scenario.params
    traj = one_road_solve(p["T"], p["beta"], p["eps"])
    psor = one_road_obstacle_solve(p["T"], p["beta"], p["eps"])
    match = float(np.abs(traj.values - psor.values).max())
    t0 = compute_T0(p["beta"], p["eps"])
    rows = [(t, _fmt(traj.values[t])) for t in range(p["T"] + 1)]
    _write_csv(out_dir / "trajectory.csv", ["t", "j"], rows)
    report = {
        "kind": "one_road",
        "T0": None if math.isinf(t0) else int(t0),
        "closed_form_vs_psor": match,
        "support_end": int(np.flatnonzero(traj.values > 1e-12)[-1]) if traj.values.max() > 1e-12 else 0,
    }
    return RunOutcome(EXIT_OK, ["trajectory.csv"], report)


def _run_two_roads(scenario: Scenario, out_dir: FsPath, init=None) -> RunOutcome:
    p = scenario.params
    sol = two_roads_solve(
        p["T"], p["m1"], p["m2"], p["gamma"], p["eps"], init=init
    )
    kkt = two_roads_kkt(sol.j1, sol.j2, p["gamma"], p["eps"])
    rows = [
        (t, _fmt(sol.j1.values[t]), _fmt(sol.j2.values[t]))
        for t in range(p["T"] + 1)
    ]
    _write_csv(out_dir / "trajectory.csv", ["t", "j1", "j2"], rows)
    report = {
        "kind": "two_roads",
        "converged": sol.converged,
        "sweeps": sol.sweeps,
        "energy": sol.energies[-1],
        "kkt_residual": kkt.residual,
    }
    outcome = RunOutcome(
        EXIT_OK if sol.converged else EXIT_CONVERGENCE, ["trajectory.csv"], report
    )
    outcome.report["_solution"] = sol
    return outcome


def run_scenario(scenario: Scenario, out_dir, overrides=None, init=None) -> RunOutcome:
    """Dispatch one scenario, writing CSV output, a report, and a manifest."""
    overrides = overrides or {}
    out_dir = FsPath(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    if scenario.kind == "geodesic":
        outcome = _run_geodesic(scenario, out_dir)
    elif scenario.kind == "beckmann":
        outcome = _run_beckmann(scenario, out_dir, overrides)
    elif scenario.kind == "dynamic":
        outcome = _run_dynamic(scenario, out_dir, overrides)
    elif scenario.kind == "one_road":
        outcome = _run_one_road(scenario, out_dir)
    elif scenario.kind == "two_roads":
        outcome = _run_two_roads(scenario, out_dir, init=init)
    else:
        raise ScenarioError(f"unknown kind {scenario.kind!r}", "$.kind")
    elapsed = time.perf_counter() - started
    solution = outcome.report.pop("_solution", None)
    _write_json(out_dir / "report.json", outcome.report)
    manifest = {
        "scenario": scenario.name,
        "kind": scenario.kind,
        "parameters": {
            k: v
            for k, v in scenario.raw.items()
            if k not in ("schema", "graph", "potential", "constraint", "options")
        },
        "options": _solve_options(scenario, overrides).to_json(),
        "iterations": outcome.report.get("iterations") or outcome.report.get("sweeps"),
        "wall_time_s": elapsed,
        "tolerances": scenario.checks,
    }
    _write_json(out_dir / "manifest.json", manifest)
    outcome.files += ["report.json", "manifest.json"]
    if solution is not None:
        outcome.report["_solution"] = solution
    return outcome


def _sweep_cells(scenario: Scenario):
    sweep = scenario.sweep or {}
    params = sweep.get("parameters")
    if not params:
        if scenario.kind == "two_roads":
            params = {"gamma": [k * 2.0 / 15.0 for k in range(15, -1, -1)]}
        else:
            raise ScenarioError("sweep requires declared parameters", "$.sweep")
    names = list(params)
    grids = [params[n] for n in names]
    cells = []
    for combo in itertools.product(*grids):
        cells.append(dict(zip(names, combo)))
    warm = bool(sweep.get("warm_start", scenario.kind == "two_roads"))
    return cells, warm


def run_sweep(scenario: Scenario, out_dir, overrides=None, jobs: int = 1) -> dict:
    """Run every grid cell; failures are recorded per cell without aborting."""
    from .scenario import parse_scenario

    out_dir = FsPath(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells, warm = _sweep_cells(scenario)
    index = {"scenario": scenario.name, "kind": scenario.kind, "cells": []}

    def make_cell_scenario(cell):
        raw = dict(scenario.raw)
        raw.update(cell)
        raw.pop("sweep", None)
        return parse_scenario(raw, scenario.path)

    def run_cell(k, cell, init=None):
        cell_dir = out_dir / f"cell_{k:03d}"
        entry = {"index": k, "params": cell, "dir": cell_dir.name}
        try:
            outcome = run_scenario(make_cell_scenario(cell), cell_dir, overrides, init=init)
            entry["status"] = "ok" if outcome.code == EXIT_OK else f"exit_{outcome.code}"
            for key in ("energy", "kkt_residual", "T0", "gap", "objective"):
                if key in outcome.report:
                    entry[key] = outcome.report[key]
            return entry, outcome.report.get("_solution")
        except CongestionError as exc:
            entry["status"] = "error"
            entry["error"] = str(exc)
            return entry, None

    if warm and scenario.kind == "two_roads":
        init = None
        for k, cell in enumerate(cells):
            entry, sol = run_cell(k, cell, init=init)
            index["cells"].append(entry)
            if sol is not None:
                init = (sol.j1.values.copy(), sol.j2.values.copy())
    elif jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_cell, k, cell) for k, cell in enumerate(cells)]
            index["cells"] = [f.result()[0] for f in futures]
    else:
        index["cells"] = [run_cell(k, cell)[0] for k, cell in enumerate(cells)]
    _write_json(out_dir / "index.json", index)
    return index


def _read_csv(path: FsPath):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


def _check_entry(name, value, tol):
    return {"name": name, "value": value, "tol": tol, "ok": bool(value <= tol)}


def run_check(scenario: Scenario, out_dir, tol_override=None) -> dict:
    """Recompute certificates from written files; verdict is in ``ok``."""
    out_dir = FsPath(out_dir)
    checks = scenario.checks
    if tol_override is not None:
        checks = {k: tol_override for k in checks}
    entries = []
    if scenario.kind == "beckmann":
        _, rows = _read_csv(out_dir / "flow.csv")
        if len(rows) != scenario.graph.n_edges:
            raise ScenarioError(
                f"flow.csv has {len(rows)} rows for {scenario.graph.n_edges} edges"
            )
        vals = np.zeros(scenario.graph.n_edges)
        for tail, head, flow in rows:
            vals[scenario.graph.edge_id((tail, head))] = float(flow)
        flow = EdgeFlow(scenario.graph, vals)
        certs = _beckmann_certificates(
            scenario.graph, scenario.potential, scenario.constraint, flow
        )
        if "kkt" in certs:
            entries.append(_check_entry("constitutive", certs["kkt"]["constitutive"], checks["constitutive"]))
            entries.append(_check_entry("divergence", certs["kkt"]["divergence"], checks["divergence"]))
        else:
            div = divergence(flow).values - scenario.constraint.f.values if isinstance(scenario.constraint, FixedMeasure) else None
            value = float(np.abs(div).max()) if div is not None else math.inf
            entries.append(_check_entry("divergence", value, checks["divergence"]))
            entries.append(_check_entry("constitutive", math.inf, checks["constitutive"]))
        if "gap" in certs.get("wardrop", {}):
            entries.append(_check_entry("wardrop_gap", certs["wardrop"]["gap"], checks["wardrop_gap"]))
    elif scenario.kind == "dynamic":
        ext = extend_graph(scenario.graph, scenario.params["T"], deposit=True)
        _, rows = _read_csv(out_dir / "flow.csv")
        _, dep_rows = _read_csv(out_dir / "deposit.csv")
        if len(rows) != ext.n_transit_edges or len(dep_rows) != ext.n_deposit_edges:
            raise ScenarioError("flow files do not match the extended graph size")
        vals = np.zeros(ext.graph.n_edges)
        for t, tail, head, flow_s in rows:
            vals[ext.transit_edge_id((tail, head), int(t))] = float(flow_s)
        for t, node, flow_s in dep_rows:
            vals[ext.deposit_edge_id(node, int(t))] = float(flow_s)
        flow = EdgeFlow(ext.graph, vals)
        div = divergence(flow).values
        ids = ext.interior_node_ids()
        conservation = float(np.abs(div[ids]).max()) if ids else 0.0
        entries.append(_check_entry("conservation", conservation, checks["conservation"]))
        H = extend_potential(ext, scenario.potential)
        try:
            profile = smirnov_decompose(flow)
            cert = wardrop_certificate(profile, lambda f: potential_gradient(H, f))
            entries.append(_check_entry("wardrop_gap", cert.gap, checks["wardrop_gap"]))
        except CongestionError as exc:
            entries.append({"name": "wardrop_gap", "error": str(exc), "ok": False})
    elif scenario.kind == "one_road":
        p = scenario.params
        _, rows = _read_csv(out_dir / "trajectory.csv")
        if len(rows) != p["T"] + 1:
            raise ScenarioError("trajectory length does not match the horizon")
        vals = np.array([float(j) for _, j in rows])
        closed = one_road_solve(p["T"], p["beta"], p["eps"]).values
        entries.append(
            _check_entry("closed_form", float(np.abs(vals - closed).max()), checks["closed_form"])
        )
    elif scenario.kind == "two_roads":
        p = scenario.params
        _, rows = _read_csv(out_dir / "trajectory.csv")
        if len(rows) != p["T"] + 1:
            raise ScenarioError("trajectory length does not match the horizon")
        from .roads import RoadTrajectory

        j1 = RoadTrajectory(np.array([float(r[1]) for r in rows]))
        j2 = RoadTrajectory(np.array([float(r[2]) for r in rows]))
        kkt = two_roads_kkt(j1, j2, p["gamma"], p["eps"])
        entries.append(_check_entry("kkt", kkt.residual, checks["kkt"]))
        mono = max(j1.monotonicity_violation(), j2.monotonicity_violation())
        entries.append(_check_entry("monotonicity", mono, checks["divergence"]))
    else:
        raise ScenarioError(f"check does not support kind {scenario.kind!r}")
    verdict = {"ok": all(e["ok"] for e in entries), "checks": entries}
    _write_json(out_dir / "check.json", verdict)
    return verdict


def _configure_logging():
    level = os.environ.get("CONGESTION_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="congestion",
        description="Solve and verify congestion scenarios (flow equilibria on graphs).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="path to a scenario JSON file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--tol", type=float, default=None, help="solver gap tolerance")
        p.add_argument("--max-iter", type=int, default=None, help="iteration cap")
        p.add_argument("--seed", type=int, default=None, help="recorded RNG seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")

    run_p = sub.add_parser("run", help="run one scenario")
    common(run_p)
    sweep_p = sub.add_parser("sweep", help="run a declared parameter grid")
    common(sweep_p)
    check_p = sub.add_parser("check", help="verify previously written output")
    common(check_p)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    args = _build_parser().parse_args(argv)
    overrides = {"tol": args.tol, "max_iter": args.max_iter, "seed": args.seed}
    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        if args.command == "run":
            outcome = run_scenario(scenario, args.out, overrides)
            outcome.report.pop("_solution", None)
            print(json.dumps(_json_safe(outcome.report), indent=2, sort_keys=True))
            return outcome.code
        if args.command == "sweep":
            index = run_sweep(scenario, args.out, overrides, jobs=args.jobs)
            print(json.dumps(_json_safe(index), indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "check":
            try:
                verdict = run_check(scenario, args.out, tol_override=args.tol)
            except (ScenarioError, OSError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_INPUT
            print(json.dumps(_json_safe(verdict), indent=2, sort_keys=True))
            return EXIT_OK if verdict["ok"] else 1
    except (InfeasibleError, NegativeLoopError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
