"""Command-line front end: simulate -> reconstruct -> evaluate.

Exit codes: 0 success, 2 bad flags, 3 I/O or file-format failure,
4 solver failure, 5 trajectory length mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .core import BaseStation, SolverConfig, Trajectory, index_stations
from .decoder import NoFeasiblePath
from .evaluation import LengthMismatch, baseline_mar, baseline_wcl, evaluate
from .fileio import FileFormatError, project_lonlat
from .mobility import AllUndefined
from .msr import EmptyFirstSlot, MsrProblem, NewtonFailure, \
    anchor_estimates_nearest, solve as msr_solve
from .optimizer import run_hre, run_hrea
from .road_graph import EmptyCorridor, build_nodes
from .simulator import BadParams, gen_scenario

SOLVER_ERRORS = (NoFeasiblePath, NewtonFailure, EmptyCorridor, AllUndefined,
                 EmptyFirstSlot)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rssmm",
        description="Reconstruct vehicle trajectories on road networks from "
                    "sequential RSS measurements.",
        epilog="RSSMM_THREADS caps worker parallelism (0 or unset = auto).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic scenario bundle")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--grid", default="5x5", help="ROWSxCOLS intersections")
    sim.add_argument("--spacing", type=float, default=200.0)
    sim.add_argument("--slots", type=int, default=500)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--delta", type=float, default=0.2)
    sim.add_argument("--stations", type=int, default=None,
                     help="station count (default: rows*cols)")
    sim.add_argument("--sigma-range", default="1,4",
                     help="LO,HI shadowing std range in dB (0,0 = noiseless)")
    sim.add_argument("--top-k", type=int, default=7)
    sim.add_argument("--missing", type=float, default=0.0)
    sim.add_argument("--profile", choices=("wandering", "constant", "regimes"),
                     default="wandering")
    sim.add_argument("--v-avr", type=float, default=10.5)
    sim.add_argument("--v-max", type=float, default=22.2)
    sim.add_argument("--regimes", default="8,18", help="speeds for --profile regimes")
    sim.add_argument("--regime-len", type=int, default=100)
    sim.set_defaults(func=cmd_simulate)

    rec = sub.add_parser("reconstruct", help="estimate a trajectory from observations")
    rec.add_argument("--observations", required=True)
    rec.add_argument("--stations", required=True)
    rec.add_argument("--network", default=None,
                     help="road network (required for hre/hrea)")
    rec.add_argument("--method", choices=("hre", "hrea", "msr", "mar", "wcl"),
                     default="hre")
    rec.add_argument("--out", required=True, help="trajectory CSV path")
    rec.add_argument("--diagnostics", default=None,
                     help="diagnostics CSV (default: diagnostics.csv next to --out)")
    rec.add_argument("--theta-out", default=None, help="fitted propagation model CSV")
    rec.add_argument("--mobility-out", default=None, help="fitted mobility model CSV")
    rec.add_argument("--delta", type=float, default=None,
                     help="override the slot duration from the observations file")
    rec.add_argument("--vmax", type=float, default=22.2)
    rec.add_argument("--vavr", type=float, default=10.5)
    rec.add_argument("--eta", type=float, default=0.05)
    rec.add_argument("--eta-mode", choices=("density", "tail"), default="tail")
    rec.add_argument("--groups", type=int, default=10)
    rec.add_argument("--gamma-coarse", type=float, default=300.0)
    rec.add_argument("--gamma-fine", type=float, default=2.0)
    rec.add_argument("--slack", type=int, default=1)
    rec.add_argument("--corridor-radius", type=float, default=None)
    rec.add_argument("--max-iters", type=int, default=30)
    rec.add_argument("--anchor", choices=("nearest", "weighted"), default="nearest")
    rec.add_argument("--utm", action="store_true",
                     help="inputs are lon/lat degrees; project to local meters")
    rec.set_defaults(func=cmd_reconstruct)

    ev = sub.add_parser("evaluate", help="score an estimate against ground truth")
    ev.add_argument("--estimate", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--network", default=None, help="enables TME when given")
    ev.add_argument("--gamma-fine", type=float, default=2.0)
    ev.add_argument("--per-slot", default=None, help="write per-slot error CSV")
    ev.add_argument("--report", default=None, help="write machine-readable JSON")
    ev.add_argument("--utm", action="store_true",
                    help="inputs are lon/lat degrees; project to local meters")
    ev.set_defaults(func=cmd_evaluate)
    return parser


def _parse_grid(raw: str) -> tuple[int, int]:
    try:
        rows, cols = raw.lower().split("x")
        return int(rows), int(cols)
    except ValueError:
        raise BadParams(f"--grid expects ROWSxCOLS, got {raw!r}") from None


def _parse_pair(raw: str, what: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in raw.split(","))
        return lo, hi
    except ValueError:
        raise BadParams(f"{what} expects LO,HI, got {raw!r}") from None


def cmd_simulate(args) -> int:
    rows, cols = _parse_grid(args.grid)
    sigma_range = _parse_pair(args.sigma_range, "--sigma-range")
    regimes = tuple(float(v) for v in args.regimes.split(","))
    scenario = gen_scenario(
        seed=args.seed, rows=rows, cols=cols, spacing=args.spacing,
        slots=args.slots, delta=args.delta, n_stations=args.stations,
        sigma_range=sigma_range, top_k=args.top_k,
        v_avr=args.v_avr, v_max=args.v_max, profile=args.profile,
        regime_speeds=regimes, regime_len=args.regime_len,
        missing_rate=args.missing,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.write_network(out / "network.jsonl", scenario.network)
    fileio.write_stations(out / "stations.csv", scenario.stations)
    fileio.write_observations(out / "observations.csv", scenario.seq)
    fileio.write_trajectory(out / "truth.csv", scenario.truth)
    meta = {
        "seed": scenario.seed,
        "delta": scenario.seq.delta,
        "slots": len(scenario.seq),
        "theta_true": {
            str(bs_id): list(theta)
            for bs_id, theta in sorted(scenario.theta_true.items())
        },
    }
    with (out / "meta.json").open("w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"seed={scenario.seed}")
    return 0


def _project_inputs(stations, network, trajectories):
    """One equirectangular projection shared by every input of a command."""
    chunks = [np.array([bs.position for bs in stations])] if stations else []
    if network is not None:
        chunks.extend(network.polylines)
    chunks.extend(t.positions for t in trajectories)
    ref = np.vstack(chunks).mean(axis=0)
    out_stations = tuple(
        BaseStation(id=bs.id, position=project_lonlat(bs.position, ref)[0])
        for bs in stations
    ) if stations else stations
    out_network = None
    if network is not None:
        from .road_graph import RoadNetwork
        out_network = RoadNetwork(polylines=tuple(
            project_lonlat(p, ref) for p in network.polylines
        ))
    out_trajs = [Trajectory(positions=project_lonlat(t.positions, ref))
                 for t in trajectories]
    return out_stations, out_network, out_trajs


def cmd_reconstruct(args) -> int:
    seq = fileio.read_observations(args.observations, delta_override=args.delta)
    stations = fileio.read_stations(args.stations)
    network = fileio.read_network(args.network) if args.network else None
    if args.utm:
        stations, network, _ = _project_inputs(stations, network, [])
    station_map = index_stations(stations)
    out = Path(args.out)
    diag_path = Path(args.diagnostics) if args.diagnostics \
        else out.parent / "diagnostics.csv"

    if args.method in ("hre", "hrea"):
        config = SolverConfig(
            v_max=args.vmax, v_avr=args.vavr, eta=args.eta,
            gamma_coarse=args.gamma_coarse, gamma_fine=args.gamma_fine,
            group_count=args.groups, max_outer_iters=args.max_iters,
            eta_mode=args.eta_mode, hop_slack=args.slack,
            corridor_radius=args.corridor_radius,
        )
        if args.method == "hre":
            result = run_hre(seq, network, station_map, config, anchor=args.anchor)
        else:
            result = run_hrea(seq, network, station_map, config, anchor=args.anchor)
        fileio.write_trajectory(out, result.trajectory)
        fileio.write_diagnostics(diag_path, result.diagnostics)
        if args.theta_out:
            fileio.write_propagation(args.theta_out, result.theta)
        if args.mobility_out and args.method == "hrea":
            fileio.write_mobility(args.mobility_out, result.phi)
    elif args.method == "msr":
        anchors = anchor_estimates_nearest(seq, station_map)
        solution = msr_solve(MsrProblem(anchors=anchors,
                                        step_cap=args.vmax * seq.delta))
        fileio.write_trajectory(out, solution.trajectory)
        fileio.write_msr_report(diag_path, solution)
    else:
        trajectory = baseline_mar(seq, station_map) if args.method == "mar" \
            else baseline_wcl(seq, station_map)
        fileio.write_trajectory(out, trajectory)
        with diag_path.open("w", encoding="utf-8", newline="") as fh:
            fh.write("iteration,objective,changed_nodes,corridor_size,obs_dropped\n")
    return 0


def cmd_evaluate(args) -> int:
    estimate = fileio.read_trajectory(args.estimate)
    truth = fileio.read_trajectory(args.truth)
    network = fileio.read_network(args.network) if args.network else None
    if args.utm:
        _, network, (estimate, truth) = _project_inputs((), network,
                                                        [estimate, truth])
    graph = build_nodes(network, args.gamma_fine) if network is not None else None
    report = evaluate(estimate, truth, graph)
    print(f"QLE [m]: {report.qle:.6g}")
    if report.tme is not None:
        print(f"TME [%]: {report.tme:.6g}")
    if args.per_slot:
        with Path(args.per_slot).open("w", encoding="utf-8", newline="") as fh:
            fh.write("t,error\n")
            for t, err in enumerate(report.per_slot_errors):
                fh.write(f"{t},{err!r}\n")
    if args.report:
        payload = {
            "qle_m": report.qle,
            "tme_pct": report.tme,
            "length_true_m": report.length_true,
            "length_loss_m": report.length_loss,
            "length_surplus_m": report.length_surplus,
        }
        with Path(args.report).open("w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "reconstruct" and args.method in ("hre", "hrea") \
            and not args.network:
        parser.error(f"--network is required for --method {args.method}")
    try:
        return args.func(args)
    except LengthMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except SOLVER_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    except BadParams as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
