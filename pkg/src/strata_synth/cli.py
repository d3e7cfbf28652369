"""
Command-line front end: ``strata-synth {estimate,simulate,classify}``.

Settings come from built-in defaults, then an optional ``key=value`` config
file (``--config``), then command-line flags; later sources win. Every run
writes the resolved settings to ``<out>/config.resolved`` in the same
``key=value`` format, so ``--config <out>/config.resolved`` repeats it.

Exit codes: 0 on success (possibly with per-unit failure records), 1 on
invalid input or configuration, 2 when no estimate could be produced.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
import warnings
from dataclasses import fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ._parallel import worker_count
from .conformal import ConformalConfig
from .effects import EffectSeries, EstimationConfig, estimate_all
from .errors import PanelFormatError, StrataSynthError
from .io import load_panel, read_csv_rows, read_adjacency, read_outcomes, read_treatment
from .panel import compute_exposure
from .simulation import (
    COVARIATE_MODES,
    ESTIMATORS,
    MODELS,
    FULL_DIRECT_GRID,
    FULL_INDIRECT_GRID,
    DgpConfig,
    StudyConfig,
    fmt,
    run_study,
)

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
RESOLVED_NAME = "config.resolved"
POOL_KINDS = ("direct", "total", "naive")
PLOT_PANELS = {"A": "bias", "B": "coverage", "C": "pre_rmse", "D": "max_weight"}

PRESETS = {
    "smoke": {"grid_direct": "-0.7", "grid_indirect": "0.3", "reps": "5"},
    "desk": {"grid_direct": "-0.7,-0.2,0.2", "grid_indirect": "-0.3,0,0.3", "reps": "200"},
    "full": {
        "grid_direct": ",".join(f"{v:g}" for v in FULL_DIRECT_GRID),
        "grid_indirect": ",".join(f"{v:g}" for v in FULL_INDIRECT_GRID),
        "reps": "200",
    },
}

DEFAULTS = {
    "estimate": {
        "outcomes": "", "covariates": "", "treatment": "", "adjacency": "", "t0": "",
        "q_threshold": "none", "lambda": "cv", "lambda_grid": "", "alpha": "0.05",
        "refit_conformal": "true", "ci_grid": "", "covariate_mode": "all",
        "min_pool_size": "5", "out": "out", "seed": "0",
    },
    "classify": {
        "outcomes": "", "treatment": "", "adjacency": "", "t0": "", "q_threshold": "none", "out": "out",
    },
    "simulate": {
        "preset": "full", "dgp": "linear_factor", "reps": "", "seed": "0", "grid_direct": "",
        "grid_indirect": "", "covariate_mode": "limited", "alpha": "0.05", "lambda": "cv",
        "refit_conformal": "true", "conformal": "true", "estimators": ",".join(ESTIMATORS),
        "q_threshold": "none", "out": "out",
    },
}
# DGP calibration constants settable from a simulate config file
_DGP_KEYS = {
    f.name: f.type for f in fields(DgpConfig)
    if f.name not in ("model", "covariate_mode", "direct_effect", "indirect_effect", "seed", "neighbor_threshold")
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- parsing


def parse_config_file(path) -> Dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value, got {raw.strip()!r}")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def parse_grid(text: str, what: str) -> List[float]:
    """``lo:hi:steps`` (evenly spaced) or a comma list of values."""
    try:
        if ":" in text:
            lo, hi, steps = text.split(":")
            n = int(steps)
            if n < 1:
                raise ValueError
            vals = np.linspace(float(lo), float(hi), n) if n > 1 else np.array([float(lo)])
            return [float(f"{v:.12g}") + 0.0 for v in vals]
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected lo:hi:steps or a comma list of numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{what}: empty grid")
    return vals


def _bool(text, key):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}")


def _float(text, key, lo=None, hi=None, open_lo=False):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{key}: must be finite, got {text!r}")
    if lo is not None and (v < lo or (open_lo and v == lo)):
        raise ConfigError(f"{key}: must be {'>' if open_lo else '>='} {lo:g}, got {text}")
    if hi is not None and v > hi:
        raise ConfigError(f"{key}: must be <= {hi:g}, got {text}")
    return v


def _int(text, key, lo=None):
    try:
        v = int(str(text))
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if lo is not None and v < lo:
        raise ConfigError(f"{key}: must be >= {lo}, got {v}")
    return v


def _threshold(text):
    if str(text).strip().lower() in ("", "none", "any"):
        return None
    return _float(text, "q_threshold", 0.0, 1.0, open_lo=True)


def resolve(command: str, file_values: Dict[str, str], flag_values: Dict[str, str]) -> Dict[str, str]:
    """Merge defaults, config file and flags; reject unknown keys."""
    base = dict(DEFAULTS[command])
    allowed = set(base) | (set(_DGP_KEYS) if command == "simulate" else set())
    file_values = dict(file_values)
    echoed = file_values.pop("command", command)
    if echoed != command:
        raise ConfigError(f"config file was written for {echoed!r}, not {command!r}")
    unknown = sorted(set(file_values) - allowed)
    if unknown:
        raise ConfigError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    merged = {**base, **file_values, **{k: v for k, v in flag_values.items() if v is not None}}
    if command == "simulate":
        preset = merged["preset"]
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; valid options: {', '.join(PRESETS)}")
        for k, v in PRESETS[preset].items():
            if not merged.get(k):
                merged[k] = v
    return merged


def write_resolved(command: str, values: Dict[str, str], out_dir: Path) -> None:
    lines = [f"command = {command}"] + [f"{k} = {values[k]}" for k in sorted(values)]
    (out_dir / RESOLVED_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- output helpers


def _safe_name(unit_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", unit_id)


def _num(x):
    """Round to 12 significant digits for JSON; NaN and infinities become null."""
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.12g}")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _write_rows(path: Path, header, rows) -> None:
    text = ",".join(header) + "\n" + "".join(",".join(r) + "\n" for r in rows)
    path.write_text(text, encoding="utf-8")


def _prepare_out(out: str) -> Path:
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------- estimate


def _estimation_config(v) -> EstimationConfig:
    lam = None
    if v["lambda"].strip().lower() != "cv":
        lam = _float(v["lambda"], "lambda", 0.0)
    grid = None
    if v["lambda_grid"]:
        lo, hi, n = _grid_bounds(v["lambda_grid"], "lambda_grid")
        if lo <= 0:
            raise ConfigError("lambda_grid: bounds must be positive (the grid is log-spaced)")
        grid = tuple(float(g) for g in np.logspace(math.log10(lo), math.log10(hi), n))
    conf = {"alpha": _float(v["alpha"], "alpha", 0.0, 1.0, open_lo=True),
            "refit_weights": _bool(v["refit_conformal"], "refit_conformal")}
    if conf["alpha"] >= 1.0:
        raise ConfigError("alpha must be below 1")
    if v["ci_grid"]:
        lo, hi, n = _grid_bounds(v["ci_grid"], "ci_grid")
        conf.update(grid_low=lo, grid_high=hi, grid_steps=n)
    mode = v["covariate_mode"].strip()
    if mode.startswith("limited:"):
        covs = tuple(c.strip() for c in mode[len("limited:"):].split(",") if c.strip())
    elif mode in ("none", "all"):
        covs = mode
    else:
        raise ConfigError(f"covariate_mode: expected none, all or limited:<name,...>, got {mode!r}")
    try:
        cc = ConformalConfig(**conf)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return EstimationConfig(
        lam=lam,
        lambda_grid=grid,
        covariates=covs,
        neighbor_threshold=_threshold(v["q_threshold"]),
        min_pool_size=_int(v["min_pool_size"], "min_pool_size", 1),
        conformal=cc,
    )


def _grid_bounds(text, key):
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"{key}: expected lo:hi:steps, got {text!r}")
    lo, hi = _float(parts[0], key), _float(parts[1], key)
    n = _int(parts[2], key, 3)
    if not lo < hi:
        raise ConfigError(f"{key}: need lo < hi, got {text!r}")
    return lo, hi, n


def _effects_rows(panel, per):
    t0 = panel.t0
    cols = {}
    for kind in POOL_KINDS:
        r = per.get(kind)
        cols[kind] = r if isinstance(r, EffectSeries) else None
    rows = []
    observed = panel.outcomes
    for t, label in enumerate(panel.time_labels):
        post = t >= t0
        row = [label, "post" if post else "pre"]
        obs = None
        for kind in POOL_KINDS:
            r = cols[kind]
            if r is not None:
                obs = r.observed[t]
        row.append(fmt(obs) if obs is not None else "")
        for kind in POOL_KINDS:
            r = cols[kind]
            row.append(fmt(r.synthetic_path[t]) if r is not None else "")
        for kind in POOL_KINDS:
            r = cols[kind]
            row.append(fmt(r.observed[t] - r.synthetic_path[t]) if r is not None else "")
        for kind in POOL_KINDS:
            r = cols[kind]
            if r is None or not post:
                row += ["", "", ""]
            else:
                s = t - t0
                row += [fmt(r.ci_low[s]), fmt(r.ci_high[s]), fmt(r.p_values[s])]
        rows.append(row)
    header = ["time", "phase", "observed"]
    header += [f"synthetic_{k}" for k in POOL_KINDS] + [f"gap_{k}" for k in POOL_KINDS]
    for k in POOL_KINDS:
        header += [f"ci_low_{k}", f"ci_high_{k}", f"p_{k}"]
    return header, rows


def _spillover_rows(panel, per):
    d, t, s = per.get("direct"), per.get("total"), per.get("spillover")
    if not isinstance(s, EffectSeries):
        return None
    rows = []
    for i, label in enumerate(panel.time_labels):
        if i >= panel.t0:
            value = s.points[i - panel.t0]
        else:
            value = (t.observed[i] - t.synthetic_path[i]) - (d.observed[i] - d.synthetic_path[i])
        rows.append([label, "post" if i >= panel.t0 else "pre", fmt(value)])
    return ["time", "phase", "spillover"], rows


def _weights_doc(panel, unit, per):
    pools = {}
    for kind in POOL_KINDS:
        r = per.get(kind)
        if not isinstance(r, EffectSeries):
            pools[kind] = {"error": r.error, "message": r.message} if r is not None else None
            continue
        w = r.weights
        pools[kind] = {
            "lambda": _num(r.lam),
            "donors": [
                {"unit": panel.unit_ids[j], "weight": _num(g)} for j, g in zip(w.donor_indices, w.gamma)
            ],
        }
    return {"unit": panel.unit_ids[unit], "pools": pools}


def _diagnostics_doc(panel, unit, per):
    doc = {}
    for kind in POOL_KINDS:
        r = per.get(kind)
        if not isinstance(r, EffectSeries):
            doc[kind] = {"error": r.error, "message": r.message} if r is not None else None
            continue
        d = {k: _num(v) for k, v in r.fit.as_dict().items()}
        d["pool_size"] = len(r.weights.donor_indices)
        d["lambda"] = _num(r.lam)
        d["cv_curve"] = [[_num(a), _num(b)] for a, b in (r.cv_curve or [])]
        d["notes"] = list(r.notes)
        doc[kind] = d
    return doc


def cmd_estimate(v: Dict[str, str], out: Path, stdout=sys.stdout) -> int:
    config = _estimation_config(v)
    for key in ("outcomes", "treatment", "adjacency", "t0"):
        if not v[key]:
            raise ConfigError(f"estimate needs {key} (--{key.replace('_', '-')})")
    t0 = _int(v["t0"], "t0")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        panel, schedule, graph = load_panel(
            v["outcomes"], v["covariates"] or None, v["treatment"], v["adjacency"], t0
        )
        cols = config.covariate_selection
        if isinstance(cols, tuple):
            try:
                panel.covariate_columns(cols)
            except KeyError as exc:
                raise ConfigError(f"covariate_mode: {exc.args[0]}") from None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    exposure = compute_exposure(schedule, graph, config.neighbor_threshold)
    report = estimate_all(panel, schedule, graph, config, n_jobs=worker_count())
    out = _prepare_out(out)
    write_resolved("estimate", v, out)

    diagnostics, summary_results = {}, {}
    n_ok = 0
    for unit, per in report.results.items():
        uid = panel.unit_ids[unit]
        name = _safe_name(uid)
        header, rows = _effects_rows(panel, per)
        _write_rows(out / f"effects_{name}.csv", header, rows)
        sp = _spillover_rows(panel, per)
        if sp is not None:
            _write_rows(out / f"spillover_{name}.csv", *sp)
        _dump_json(_weights_doc(panel, unit, per), out / f"weights_{name}.json")
        diagnostics[uid] = _diagnostics_doc(panel, unit, per)
        entry = {}
        for kind, r in per.items():
            if isinstance(r, EffectSeries):
                n_ok += 1
                entry[kind] = {
                    "status": "ok",
                    "mean_post_effect": _num(float(np.mean(r.points))),
                    "estimates": [
                        {"time": panel.time_labels[panel.t0 + s], "estimate": _num(p), "ci_low": _num(lo),
                         "ci_high": _num(hi), "p_value": _num(pv),
                         "ci_unbounded": bool(lo is not None and math.isinf(lo) or hi is not None and math.isinf(hi))}
                        for s, (p, lo, hi, pv) in enumerate(r.estimates)
                    ],
                }
            else:
                entry[kind] = {"status": "failed", "error": r.error, "message": r.message}
        summary_results[uid] = entry
    _dump_json(diagnostics, out / "diagnostics.json")
    counts = exposure.counts()
    summary = {
        "n_units": panel.n_units,
        "n_periods": panel.n_periods,
        "t0": panel.t0,
        "first_post_period": panel.time_labels[panel.t0],
        "strata": counts,
        "targets": [panel.unit_ids[i] for i in report.results],
        "results": summary_results,
        "n_failures": len(report.failures()),
        "notes": report.notes,
    }
    _dump_json(summary, out / "summary.json")
    for note in report.notes:
        print(f"note: {note}", file=sys.stderr)
    for f in report.failures():
        print(f"failed: unit {panel.unit_ids[f.target_unit]} {f.kind}: {f.error}: {f.message}", file=sys.stderr)
    print(f"{len(report.results)} target(s), {n_ok} estimate(s), {len(report.failures())} failure(s); wrote {out}",
          file=stdout)
    return EXIT_OK if n_ok else EXIT_FAILED


# ---------------------------------------------------------------- classify


def _unit_order(v) -> List[str]:
    if v["outcomes"]:
        return read_outcomes(v["outcomes"])[0]
    seen, order = set(), []
    for path, ncols in ((v["treatment"], 1), (v["adjacency"], 2)):
        _, rows = read_csv_rows(path)
        for line, f in rows:
            for u in f[:ncols]:
                if u and u not in seen:
                    seen.add(u)
                    order.append(u)
    return order


def cmd_classify(v: Dict[str, str], out: Path, stdout=sys.stdout) -> int:
    for key in ("treatment", "adjacency"):
        if not v[key]:
            raise ConfigError(f"classify needs {key} (--{key})")
    theta = _threshold(v["q_threshold"])
    units = _unit_order(v)
    t0 = _int(v["t0"], "t0", 1) if v["t0"] else 1
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        schedule = read_treatment(v["treatment"], units, t0)
        graph = read_adjacency(v["adjacency"], units)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    table = compute_exposure(schedule, graph, theta)
    out = _prepare_out(out)
    write_resolved("classify", v, out)
    rows = [
        [u, table.stratum[i].value, str(table.q_values[i]), str(table.n_neighbors[i]), str(table.n_treated_neighbors[i])]
        for i, u in enumerate(units)
    ]
    _write_rows(out / "exposure.csv", ["unit", "stratum", "q", "n_neighbors", "n_treated_neighbors"], rows)
    for s, n in table.counts().items():
        print(f"{s}: {n}", file=stdout)
    return EXIT_OK


# ---------------------------------------------------------------- simulate


def _study_config(v) -> StudyConfig:
    if v["dgp"] not in MODELS:
        raise ConfigError(f"unknown dgp {v['dgp']!r}; valid options: {', '.join(MODELS)}")
    modes = tuple(m.strip() for m in v["covariate_mode"].split(",") if m.strip())
    bad = [m for m in modes if m not in COVARIATE_MODES]
    if bad or not modes:
        raise ConfigError(f"covariate_mode: expected a comma list of {', '.join(COVARIATE_MODES)}, got {v['covariate_mode']!r}")
    estimators = tuple(e.strip() for e in v["estimators"].split(",") if e.strip())
    bad = [e for e in estimators if e not in ESTIMATORS]
    if bad or not estimators:
        raise ConfigError(f"estimators: expected a comma list of {', '.join(ESTIMATORS)}, got {v['estimators']!r}")
    dgp_kwargs = {}
    for key, typ in _DGP_KEYS.items():
        if key not in v:
            continue
        raw = v[key]
        if key == "ar_coeffs":
            dgp_kwargs[key] = tuple(_float(x, key) for x in raw.split(",") if x.strip())
        elif key == "estimate_covariates":
            dgp_kwargs[key] = raw or None
        elif typ in ("int", int):
            dgp_kwargs[key] = _int(raw, key)
        elif typ in ("str", str):
            dgp_kwargs[key] = raw
        else:
            dgp_kwargs[key] = _float(raw, key)
    lam = None if v["lambda"].strip().lower() == "cv" else _float(v["lambda"], "lambda", 0.0)
    try:
        base = DgpConfig(model=v["dgp"], neighbor_threshold=_threshold(v["q_threshold"]), **dgp_kwargs)
        return StudyConfig(
            base=base,
            direct_effects=tuple(parse_grid(v["grid_direct"], "grid_direct")),
            indirect_effects=tuple(parse_grid(v["grid_indirect"], "grid_indirect")),
            covariate_modes=modes,
            n_reps=_int(v["reps"], "reps", 1),
            master_seed=_int(v["seed"], "seed", 0),
            alpha=_float(v["alpha"], "alpha", 0.0, 1.0, open_lo=True),
            conformal=_bool(v["conformal"], "conformal"),
            lam=lam,
            refit_conformal=_bool(v["refit_conformal"], "refit_conformal"),
            estimators=estimators,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def cmd_simulate(v: Dict[str, str], out: Path, stdout=sys.stdout) -> int:
    study = _study_config(v)
    report = run_study(study, n_jobs=worker_count())
    out = _prepare_out(out)
    write_resolved("simulate", v, out)
    (out / "study.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "study.json").write_text(report.to_json(), encoding="utf-8")
    for letter, metric in PLOT_PANELS.items():
        (out / f"panel_{letter}_{metric}.csv").write_text(report.panel_csv(metric), encoding="utf-8")
    n_scen = len(report.scenarios)
    print(f"{n_scen} scenario(s) x {study.n_reps} replication(s); wrote {out}", file=stdout)
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="strata-synth",
        description="Stratified synthetic control estimation under neighbourhood interference.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value settings file; flags override its values")
        sp.add_argument("--out", help="output directory (default: out)")
        sp.add_argument("-v", "--verbose", action="store_true", help="print the resolved settings")

    def panel_inputs(sp, outcomes_required_text="long-format unit,time,outcome CSV"):
        sp.add_argument("--outcomes", help=outcomes_required_text)
        sp.add_argument("--treatment", help="unit,treated CSV")
        sp.add_argument("--adjacency", help="unit_a,unit_b edge list CSV")
        sp.add_argument("--t0", help="number of pre-treatment periods")
        sp.add_argument("--q-threshold", dest="q_threshold",
                        help="fraction of treated neighbours for exposure (default: any treated neighbour)")

    e = sub.add_parser("estimate", help="estimate direct, total, spillover and naive effects")
    common(e)
    panel_inputs(e)
    e.add_argument("--covariates", help="unit,<name>... CSV of time-invariant covariates")
    e.add_argument("--lambda", dest="lambda", metavar="{cv|VALUE}", help="ridge penalty or cv (default)")
    e.add_argument("--lambda-grid", dest="lambda_grid", metavar="LO:HI:STEPS", help="log-spaced cv grid")
    e.add_argument("--alpha", help="conformal significance level (default 0.05)")
    e.add_argument("--no-refit-conformal", dest="refit_conformal", action="store_const", const="false",
                   help="reuse point-estimate weights for every hypothesised effect")
    e.add_argument("--ci-grid", dest="ci_grid", metavar="LO:HI:STEPS", help="conformal test-inversion grid")
    e.add_argument("--covariate-mode", dest="covariate_mode", help="none, all or limited:<name,...>")
    e.add_argument("--min-pool-size", dest="min_pool_size", help="warn below this many donors (default 5)")
    e.add_argument("--seed", help="recorded for reproducibility; estimation is deterministic")

    s = sub.add_parser("simulate", help="run a Monte Carlo study")
    common(s)
    s.add_argument("--preset", choices=sorted(PRESETS), help="effect grids and replications (default: full)")
    s.add_argument("--dgp", help=f"one of {', '.join(MODELS)}")
    s.add_argument("--reps", help="replications per scenario")
    s.add_argument("--seed", help="master seed")
    s.add_argument("--grid-direct", dest="grid_direct", metavar="LO:HI:STEPS", help="direct effects (or a comma list)")
    s.add_argument("--grid-indirect", dest="grid_indirect", metavar="LO:HI:STEPS", help="indirect effects (or a comma list)")
    s.add_argument("--covariate-mode", dest="covariate_mode", help="comma list of none, limited, all")
    s.add_argument("--alpha", help="conformal significance level")
    s.add_argument("--lambda", dest="lambda", metavar="{cv|VALUE}", help="ridge penalty or cv")
    s.add_argument("--no-refit-conformal", dest="refit_conformal", action="store_const", const="false")
    s.add_argument("--no-conformal", dest="conformal", action="store_const", const="false",
                   help="skip intervals (coverage is then empty)")
    s.add_argument("--estimators", help=f"comma list from {', '.join(ESTIMATORS)}")
    s.add_argument("--q-threshold", dest="q_threshold")

    c = sub.add_parser("classify", help="classify units into exposure strata")
    common(c)
    panel_inputs(c, "optional outcome CSV fixing the unit order")
    return p


def main(argv: Optional[List[str]] = None, stdout=sys.stdout) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        values = resolve(args.command, file_values, flags)
        if args.verbose:
            for k in sorted(values):
                print(f"{k} = {values[k]}", file=sys.stderr)
        runner = {"estimate": cmd_estimate, "simulate": cmd_simulate, "classify": cmd_classify}[args.command]
        return runner(values, values["out"], stdout)
    except (ConfigError, PanelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (StrataSynthError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
