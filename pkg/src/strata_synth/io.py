"""
CSV readers and writers for panels, treatment lists and edge lists.

All files are UTF-8, comma separated, with a header row. Lines whose first
non-blank character is ``#`` are comments and blank lines are ignored.
Errors carry ``path:line`` context.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import PanelFormatError
from .panel import AdjacencyGraph, PanelData, TreatmentSchedule


def read_csv_rows(path) -> Tuple[List[str], Iterator[Tuple[int, List[str]]]]:
    """Return the header and an iterator of ``(line_number, fields)`` rows."""
    path = Path(path)
    if not path.exists():
        raise PanelFormatError("file not found", path)
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [(n, ln) for n, ln in enumerate(fh, 1) if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise PanelFormatError("empty file (no header row)", path)
    parsed = [(n, next(csv.reader([ln]))) for n, ln in lines]
    header = [h.strip() for h in parsed[0][1]]
    rows = ((n, [f.strip() for f in fields]) for n, fields in parsed[1:])
    return header, rows


def _expect_header(path, header, expected):
    if header[: len(expected)] != list(expected):
        raise PanelFormatError(f"expected header starting {','.join(expected)!r}, got {','.join(header)!r}", path, 1)


def _parse_float(text, path, line, what):
    try:
        v = float(text)
    except ValueError:
        raise PanelFormatError(f"{what}: cannot parse {text!r} as a number", path, line) from None
    if not math.isfinite(v):
        raise PanelFormatError(f"{what}: non-finite value {text!r}", path, line)
    return v


def _time_sort_key(labels: Sequence[str]):
    try:
        nums = {s: float(s) for s in labels}
        return lambda s: nums[s]
    except ValueError:
        return lambda s: s


def read_outcomes(path) -> Tuple[List[str], List[str], np.ndarray]:
    """
    Read a long-format outcome file with header ``unit,time,outcome``.

    Units keep first-appearance order. Time labels are sorted numerically
    when every label parses as a number, otherwise lexicographically (which
    orders ISO dates correctly).
    """
    header, rows = read_csv_rows(path)
    _expect_header(path, header, ("unit", "time", "outcome"))
    cells: Dict[Tuple[str, str], float] = {}
    units: List[str] = []
    seen_units = set()
    times = set()
    for line, f in rows:
        if len(f) < 3:
            raise PanelFormatError(f"expected 3 fields, got {len(f)}", path, line)
        unit, time, raw = f[0], f[1], f[2]
        if raw == "" or raw.upper() in ("NA", "NAN"):
            raise PanelFormatError(f"missing outcome for unit {unit!r} at time {time!r}", path, line)
        value = _parse_float(raw, path, line, "outcome")
        if (unit, time) in cells:
            raise PanelFormatError(f"duplicate row for unit {unit!r} at time {time!r}", path, line)
        cells[(unit, time)] = value
        if unit not in seen_units:
            seen_units.add(unit)
            units.append(unit)
        times.add(time)
    if not cells:
        raise PanelFormatError("no data rows", path)
    time_labels = sorted(times, key=_time_sort_key(list(times)))
    y = np.empty((len(units), len(time_labels)))
    for i, u in enumerate(units):
        for t, s in enumerate(time_labels):
            try:
                y[i, t] = cells[(u, s)]
            except KeyError:
                raise PanelFormatError(f"missing outcome for unit {u!r} at time {s!r}", path) from None
    return units, time_labels, y


def read_covariates(path, unit_ids: Sequence[str]) -> Tuple[List[str], np.ndarray]:
    header, rows = read_csv_rows(path)
    if not header or header[0] != "unit":
        raise PanelFormatError("covariate header must start with 'unit'", path, 1)
    names = header[1:]
    index = {u: i for i, u in enumerate(unit_ids)}
    z = np.full((len(unit_ids), len(names)), np.nan)
    filled = set()
    for line, f in rows:
        if len(f) != len(header):
            raise PanelFormatError(f"expected {len(header)} fields, got {len(f)}", path, line)
        unit = f[0]
        if unit not in index:
            raise PanelFormatError(f"unknown unit id {unit!r}", path, line)
        if unit in filled:
            raise PanelFormatError(f"duplicate covariate row for unit {unit!r}", path, line)
        filled.add(unit)
        for j, raw in enumerate(f[1:]):
            z[index[unit], j] = _parse_float(raw, path, line, f"covariate {names[j]!r}")
    missing = [u for u in unit_ids if u not in filled]
    if missing:
        raise PanelFormatError(f"no covariate row for unit(s) {missing}", path)
    return names, z


def read_treatment(path, unit_ids: Sequence[str], t0: int, time_labels: Optional[Sequence[str]] = None) -> TreatmentSchedule:
    """
    Read ``unit,treated`` rows. Units not listed are untreated.

    An optional third column ``adoption`` (a time label) is accepted only if
    every treated unit adopts at the first post period; staggered adoption is
    rejected.
    """
    header, rows = read_csv_rows(path)
    _expect_header(path, header, ("unit", "treated"))
    has_adoption = len(header) > 2 and header[2] == "adoption"
    index = {u: i for i, u in enumerate(unit_ids)}
    treated = set()
    seen = set()
    for line, f in rows:
        if len(f) < 2:
            raise PanelFormatError(f"expected at least 2 fields, got {len(f)}", path, line)
        unit, flag = f[0], f[1]
        if unit not in index:
            raise PanelFormatError(f"unknown unit id {unit!r}", path, line)
        if unit in seen:
            raise PanelFormatError(f"duplicate treatment row for unit {unit!r}", path, line)
        seen.add(unit)
        if flag not in ("0", "1"):
            raise PanelFormatError(f"treated must be 0 or 1, got {flag!r}", path, line)
        if flag == "1":
            treated.add(index[unit])
            if has_adoption and len(f) > 2 and f[2]:
                expected = time_labels[t0] if time_labels is not None else None
                if expected is not None and f[2] != expected:
                    raise PanelFormatError(
                        f"staggered adoption is not supported: unit {unit!r} adopts at {f[2]!r}, "
                        f"but all treated units must adopt at the first post period {expected!r}",
                        path,
                        line,
                    )
    return TreatmentSchedule.simultaneous(len(unit_ids), treated, t0)


def read_adjacency(path, unit_ids: Sequence[str]) -> AdjacencyGraph:
    header, rows = read_csv_rows(path)
    _expect_header(path, header, ("unit_a", "unit_b"))
    index = {u: i for i, u in enumerate(unit_ids)}
    edges = []
    for line, f in rows:
        if len(f) < 2:
            raise PanelFormatError(f"expected 2 fields, got {len(f)}", path, line)
        for u in f[:2]:
            if u not in index:
                raise PanelFormatError(f"unknown unit id {u!r}", path, line)
        if f[0] == f[1]:
            raise PanelFormatError(f"self-loop on unit {f[0]!r}", path, line)
        edges.append((index[f[0]], index[f[1]]))
    return AdjacencyGraph.from_edges(len(unit_ids), edges)


def load_panel(
    outcome_file,
    covariate_file=None,
    treatment_file=None,
    adjacency_file=None,
    t0: int = None,
) -> Tuple[PanelData, TreatmentSchedule, AdjacencyGraph]:
    """Read and validate the four input files into panel, schedule and graph."""
    units, times, y = read_outcomes(outcome_file)
    if t0 is None or not 2 <= int(t0) < len(times):
        raise PanelFormatError(
            f"t0 out of range: need 2 <= t0 < T = {len(times)}, got t0={t0}", outcome_file
        )
    t0 = int(t0)
    if covariate_file is not None:
        names, z = read_covariates(covariate_file, units)
    else:
        names, z = [], np.zeros((len(units), 0))
    panel = PanelData(y, z, units, times, t0, tuple(names))
    if treatment_file is None:
        raise PanelFormatError("a treatment file is required")
    schedule = read_treatment(treatment_file, units, t0, times)
    if adjacency_file is None:
        raise PanelFormatError("an adjacency file is required")
    graph = read_adjacency(adjacency_file, units)
    return panel, schedule, graph


def write_panel(panel: PanelData, outcome_path, covariate_path=None) -> None:
    """Write a panel back out; floats use ``repr`` so reloading is bit-exact."""
    with open(outcome_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "time", "outcome"])
        for i, u in enumerate(panel.unit_ids):
            for t, s in enumerate(panel.time_labels):
                w.writerow([u, s, repr(float(panel.outcomes[i, t]))])
    if covariate_path is not None:
        with open(covariate_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["unit", *panel.covariate_names])
            for i, u in enumerate(panel.unit_ids):
                w.writerow([u, *(repr(float(v)) for v in panel.covariates[i])])


def write_treatment(schedule: TreatmentSchedule, unit_ids: Sequence[str], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "treated"])
        for i, u in enumerate(unit_ids):
            w.writerow([u, int(schedule.is_treated(i))])


def write_adjacency(graph: AdjacencyGraph, unit_ids: Sequence[str], path) -> None:
    """Write both directions of every edge, so reading back raises no asymmetry warning."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_a", "unit_b"])
        for a, b in graph.edges():
            w.writerow([unit_ids[a], unit_ids[b]])
            w.writerow([unit_ids[b], unit_ids[a]])
