"""On-disk formats for stations, observations, networks, trajectories,
models, and diagnostics.

All files are UTF-8, newline-terminated CSV or JSON-lines. Floats are
written with repr so every file re-parses to the exact in-memory value;
unknown columns are rejected on read.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .core import BaseStation, RssmmError, RssObservation, RssObservationSequence, \
    Trajectory
from .decoder import DecodedPath
from .mobility import AdaptiveMobilityModel
from .msr import MsrSolution
from .optimizer import Diagnostics
from .propagation import PathLossParams, PropagationModel
from .road_graph import RoadNetwork

__all__ = [
    "FileFormatError",
    "read_stations", "write_stations",
    "read_observations", "write_observations",
    "read_network", "write_network",
    "read_trajectory", "write_trajectory",
    "read_propagation", "write_propagation",
    "read_mobility", "write_mobility",
    "write_decoded_path", "write_diagnostics", "write_msr_report",
    "project_lonlat",
]

EARTH_RADIUS_M = 6371000.0


class FileFormatError(RssmmError, ValueError):
    """A file does not conform to its expected format."""


def _fmt(x: float) -> str:
    return repr(float(x))


def _parse_float(raw: str, path: Path, what: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise FileFormatError(f"{path}: bad {what} value {raw!r}") from None
    if not math.isfinite(v):
        raise FileFormatError(f"{path}: non-finite {what} value {raw!r}")
    return v


def _parse_int(raw: str, path: Path, what: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise FileFormatError(f"{path}: bad {what} value {raw!r}") from None


def _check_header(row: list[str], expected: list[str], path: Path):
    if row != expected:
        raise FileFormatError(
            f"{path}: expected header {','.join(expected)}, got {','.join(row)}"
        )


def write_stations(path, stations) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("bs_id,x,y\n")
        for bs in sorted(stations, key=lambda b: b.id):
            fh.write(f"{bs.id},{_fmt(bs.position[0])},{_fmt(bs.position[1])}\n")


def read_stations(path) -> tuple[BaseStation, ...]:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FileFormatError(f"{path}: empty stations file")
    _check_header(rows[0], ["bs_id", "x", "y"], path)
    out = []
    for row in rows[1:]:
        if len(row) != 3:
            raise FileFormatError(f"{path}: expected 3 columns, got {row}")
        out.append(BaseStation(
            id=_parse_int(row[0], path, "bs_id"),
            position=(_parse_float(row[1], path, "x"),
                      _parse_float(row[2], path, "y")),
        ))
    return tuple(out)


def write_observations(path, seq: RssObservationSequence) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"#delta={_fmt(seq.delta)}\n")
        fh.write(f"#slots={len(seq)}\n")
        fh.write("t,bs_id,rss\n")
        for t, slot in enumerate(seq.slots):
            for obs in sorted(slot, key=lambda o: o.bs_id):
                fh.write(f"{t},{obs.bs_id},{_fmt(obs.rss)}\n")


def read_observations(path, delta_override: float | None = None) -> RssObservationSequence:
    path = Path(path)
    delta = None
    slots_declared = None
    data_rows: list[list[str]] = []
    header_seen = False
    with path.open("r", encoding="utf-8", newline="") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                if key == "delta":
                    delta = _parse_float(value, path, "delta")
                elif key == "slots":
                    slots_declared = _parse_int(value, path, "slots")
                else:
                    raise FileFormatError(f"{path}: unknown metadata line {line!r}")
                continue
            row = next(csv.reader([line]))
            if not header_seen:
                _check_header(row, ["t", "bs_id", "rss"], path)
                header_seen = True
                continue
            data_rows.append(row)
    if not header_seen:
        raise FileFormatError(f"{path}: missing header line")
    if delta_override is not None:
        delta = delta_override
    if delta is None:
        raise FileFormatError(f"{path}: missing #delta metadata")
    per_slot: dict[int, list[RssObservation]] = {}
    max_t = -1
    for row in data_rows:
        if len(row) != 3:
            raise FileFormatError(f"{path}: expected 3 columns, got {row}")
        t = _parse_int(row[0], path, "t")
        if t < 0:
            raise FileFormatError(f"{path}: negative slot index {t}")
        max_t = max(max_t, t)
        per_slot.setdefault(t, []).append(RssObservation(
            bs_id=_parse_int(row[1], path, "bs_id"),
            rss=_parse_float(row[2], path, "rss"),
        ))
    t_total = slots_declared if slots_declared is not None else max_t + 1
    if t_total < 1:
        raise FileFormatError(f"{path}: no slots")
    if max_t >= t_total:
        raise FileFormatError(
            f"{path}: slot index {max_t} exceeds declared slot count {t_total}"
        )
    slots = tuple(tuple(per_slot.get(t, ())) for t in range(t_total))
    return RssObservationSequence(slots=slots, delta=delta)


def write_network(path, network: RoadNetwork) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for poly in network.polylines:
            fh.write(json.dumps([[float(x), float(y)] for x, y in poly]))
            fh.write("\n")


def read_network(path) -> RoadNetwork:
    path = Path(path)
    polys = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                pts = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FileFormatError(f"{path}:{lineno}: bad JSON ({exc})") from None
            arr = np.asarray(pts, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise FileFormatError(
                    f"{path}:{lineno}: polyline must be a list of [x, y] pairs"
                )
            polys.append(arr)
    if not polys:
        raise FileFormatError(f"{path}: no polylines")
    return RoadNetwork(polylines=tuple(polys))


def write_trajectory(path, trajectory: Trajectory) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("t,x,y\n")
        for t, (x, y) in enumerate(trajectory.positions):
            fh.write(f"{t},{_fmt(x)},{_fmt(y)}\n")


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FileFormatError(f"{path}: empty trajectory file")
    _check_header(rows[0], ["t", "x", "y"], path)
    pts = []
    for i, row in enumerate(rows[1:]):
        if len(row) != 3:
            raise FileFormatError(f"{path}: expected 3 columns, got {row}")
        t = _parse_int(row[0], path, "t")
        if t != i:
            raise FileFormatError(f"{path}: slot indices must be 0..T-1 in order")
        pts.append((_parse_float(row[1], path, "x"),
                    _parse_float(row[2], path, "y")))
    if not pts:
        raise FileFormatError(f"{path}: no positions")
    return Trajectory(positions=np.asarray(pts))


def write_propagation(path, model: PropagationModel) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("bs_id,alpha,beta,sigma\n")
        for bs_id in sorted(model.params):
            p = model.params[bs_id]
            fh.write(f"{bs_id},{_fmt(p.alpha)},{_fmt(p.beta)},{_fmt(p.sigma)}\n")


def read_propagation(path) -> PropagationModel:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FileFormatError(f"{path}: empty model file")
    _check_header(rows[0], ["bs_id", "alpha", "beta", "sigma"], path)
    params = {}
    for row in rows[1:]:
        if len(row) != 4:
            raise FileFormatError(f"{path}: expected 4 columns, got {row}")
        bs_id = _parse_int(row[0], path, "bs_id")
        params[bs_id] = PathLossParams(
            alpha=_parse_float(row[1], path, "alpha"),
            beta=_parse_float(row[2], path, "beta"),
            sigma=_parse_float(row[3], path, "sigma"),
        )
    return PropagationModel(params=params)


def write_mobility(path, phi: AdaptiveMobilityModel) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("group,v_avr,sigma_sq\n")
        for a in range(phi.group_count):
            fh.write(f"{a},{_fmt(phi.v_avr[a])},{_fmt(phi.sigma_v_sq[a])}\n")


def read_mobility(path) -> tuple[np.ndarray, np.ndarray]:
    """Per-group (v_avr, sigma_sq) arrays; assignments are not stored."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FileFormatError(f"{path}: empty mobility file")
    _check_header(rows[0], ["group", "v_avr", "sigma_sq"], path)
    v, s2 = [], []
    for a, row in enumerate(rows[1:]):
        if len(row) != 3:
            raise FileFormatError(f"{path}: expected 3 columns, got {row}")
        if _parse_int(row[0], path, "group") != a:
            raise FileFormatError(f"{path}: group ids must be 0..A-1 in order")
        v.append(_parse_float(row[1], path, "v_avr"))
        s2.append(_parse_float(row[2], path, "sigma_sq"))
    return np.asarray(v), np.asarray(s2)


def write_decoded_path(path, decoded: DecodedPath) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("t,node,x,y,obs_score,trans_score\n")
        for t in range(len(decoded.nodes)):
            trans = decoded.trans_scores[t - 1] if t >= 1 else 0.0
            fh.write(
                f"{t},{int(decoded.nodes[t])},{_fmt(decoded.positions[t, 0])},"
                f"{_fmt(decoded.positions[t, 1])},{_fmt(decoded.obs_scores[t])},"
                f"{_fmt(trans)}\n"
            )


def write_diagnostics(path, diagnostics: Diagnostics) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("iteration,objective,changed_nodes,corridor_size,obs_dropped\n")
        for rec in diagnostics.iterations:
            fh.write(
                f"{rec.iteration},{_fmt(rec.objective)},{rec.changed_nodes},"
                f"{rec.corridor_size},{rec.obs_dropped}\n"
            )


def write_msr_report(path, solution: MsrSolution) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("outer_iters,inner_iters,c_final,suboptimality_bound,"
                 "max_violation,objective\n")
        fh.write(
            f"{solution.outer_iters},{solution.inner_iters},"
            f"{_fmt(solution.c_final)},{_fmt(solution.suboptimality_bound)},"
            f"{_fmt(solution.max_violation)},{_fmt(solution.objective)}\n"
        )


def project_lonlat(points: np.ndarray, ref: np.ndarray | None = None) -> np.ndarray:
    """Equirectangular projection of (lon, lat) degrees to local meters.

    One fixed reference (default: the centroid of the inputs) defines the
    frame; adequate for city-scale extents.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if ref is None:
        ref = pts.mean(axis=0)
    lat0 = math.radians(float(ref[1]))
    x = np.radians(pts[:, 0] - ref[0]) * math.cos(lat0) * EARTH_RADIUS_M
    y = np.radians(pts[:, 1] - ref[1]) * EARTH_RADIUS_M
    return np.column_stack([x, y])
