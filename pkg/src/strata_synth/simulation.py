"""
Monte Carlo study of the stratified estimators under neighbourhood interference.

Three data-generating processes are available (linear factor, two-way fixed
effects, autoregressive). Treatment is a spatially clustered block of units
adopting simultaneously; the direct effect is added to treated units and the
indirect effect to every unit with a treated neighbour, post periods only.
Unstated calibration constants (sizes, loadings, covariate strength) are
exposed as ``DgpConfig`` fields.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._parallel import map_ordered
from .conformal import ConformalConfig
from .effects import EffectSeries, EstimationConfig, estimate_all
from .errors import StrataSynthError
from .panel import AdjacencyGraph, PanelData, Stratum, TreatmentSchedule, compute_exposure

MODELS = ("linear_factor", "fixed_effects", "autoregressive")
GRAPHS = ("lattice", "geometric")
COVARIATE_MODES = ("none", "limited", "all")
ESTIMATORS = ("direct", "total", "spillover", "naive")
N_LIMITED = 2
N_ALL = 5
AR_BURN_IN = 50

FULL_DIRECT_GRID = (-0.7, -0.4, -0.2, 0.0, 0.2)
FULL_INDIRECT_GRID = (-0.3, -0.15, 0.0, 0.15, 0.3)


@dataclass(frozen=True)
class DgpConfig:
    """
    Simulation settings for one scenario.

    ``covariate_mode`` sets how many covariates the DGP draws (none, the two
    that drive treatment, or those two plus three outcome-only ones);
    ``estimate_covariates`` sets which of them the estimators balance on and
    defaults to the same mode.
    """

    model: str = "linear_factor"
    n_units: int = 50
    n_pre: int = 7
    n_post: int = 7
    n_factors: int = 3
    ar_coeffs: Tuple[float, ...] = (0.5,)
    covariate_mode: str = "limited"
    estimate_covariates: Optional[str] = None
    direct_effect: float = -0.7
    indirect_effect: float = 0.3
    noise_sd: float = 0.2
    unit_effect_sd: float = 0.5
    factor_sd: float = 0.3
    covariate_effect_sd: float = 0.3
    propensity_strength: float = 1.0
    graph: str = "lattice"
    lattice_width: int = 10
    geometric_radius: float = 0.2
    treated_size: int = 6
    neighbor_threshold: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; valid options: {', '.join(MODELS)}")
        if self.graph not in GRAPHS:
            raise ValueError(f"unknown graph {self.graph!r}; valid options: {', '.join(GRAPHS)}")
        for name in ("covariate_mode",) + (("estimate_covariates",) if self.estimate_covariates else ()):
            if getattr(self, name) not in COVARIATE_MODES:
                raise ValueError(f"{name} must be one of {COVARIATE_MODES}, got {getattr(self, name)!r}")
        if self.n_units < 4:
            raise ValueError("n_units must be at least 4")
        if self.n_pre < 2 or self.n_post < 1:
            raise ValueError("need n_pre >= 2 and n_post >= 1")
        if not self.noise_sd >= 0:
            raise ValueError("noise_sd must be nonnegative")
        if not 2 <= self.treated_size <= self.n_units - 2:
            raise ValueError(
                f"treated_size must lie in [2, n_units - 2] so that S11 and the control strata can be nonempty, "
                f"got {self.treated_size}"
            )
        if self.model == "autoregressive":
            check_ar_stable(self.ar_coeffs)

    @property
    def estimation_covariates(self):
        mode = self.estimate_covariates or self.covariate_mode
        n_avail = {"none": 0, "limited": N_LIMITED, "all": N_ALL}[self.covariate_mode]
        if mode == "none" or n_avail == 0:
            return "none"
        if mode == "limited":
            return tuple(f"z{j + 1}" for j in range(min(N_LIMITED, n_avail)))
        return "all"


def check_ar_stable(coeffs) -> None:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0:
        return
    companion = np.zeros((coeffs.size, coeffs.size))
    companion[0] = coeffs
    companion[1:, :-1] = np.eye(coeffs.size - 1)
    radius = float(np.max(np.abs(np.linalg.eigvals(companion))))
    if radius >= 1.0:
        raise ValueError(f"ar_coeffs {tuple(coeffs)} are not stationary (spectral radius {radius:.4g} >= 1)")


def make_graph(kind: str, n_units: int, params: Optional[dict] = None, seed=None) -> AdjacencyGraph:
    """
    Lattice (rook adjacency, ``params['width']`` columns) or random geometric
    graph on the unit square (``params['radius']``).
    """
    params = params or {}
    if n_units < 4:
        raise ValueError("n_units must be at least 4")
    if kind == "lattice":
        width = int(params.get("width", 10))
        if width < 1 or n_units % width:
            raise ValueError(f"lattice width {width} does not divide n_units={n_units}")
        edges = []
        for i in range(n_units):
            r, c = divmod(i, width)
            if c + 1 < width:
                edges.append((i, i + 1))
            if i + width < n_units:
                edges.append((i, i + width))
        return AdjacencyGraph.from_edges(n_units, edges, warn=False)
    if kind == "geometric":
        radius = float(params.get("radius", 0.2))
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        rng = np.random.default_rng(seed)
        pts = rng.random((n_units, 2))
        d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        ii, jj = np.nonzero(np.triu(d <= radius, k=1))
        return AdjacencyGraph.from_edges(n_units, zip(ii.tolist(), jj.tolist()), warn=False)
    raise ValueError(f"unknown graph kind {kind!r}; valid options: {', '.join(GRAPHS)}")


@dataclass(frozen=True)
class SyntheticPanel:
    panel: PanelData
    schedule: TreatmentSchedule
    graph: AdjacencyGraph
    truth_direct: np.ndarray
    truth_indirect: np.ndarray
    truth_total: np.ndarray

    def __post_init__(self):
        if not np.array_equal(self.truth_total, self.truth_direct + self.truth_indirect):
            raise AssertionError("truth.total must equal truth.direct + truth.indirect")


def _n_covariates(mode):
    return {"none": 0, "limited": N_LIMITED, "all": N_ALL}[mode]


def _draw_treated(cfg: DgpConfig, graph: AdjacencyGraph, z: np.ndarray, rng) -> List[int]:
    """A seed unit plus a random subset of its 2-hop neighbourhood."""
    n = cfg.n_units
    if z.shape[1] >= N_LIMITED:
        score = cfg.propensity_strength * z[:, :N_LIMITED].sum(axis=1)
        prop = np.exp(score - score.max())
    else:
        prop = np.ones(n)
    seed_unit = int(rng.choice(n, p=prop / prop.sum()))
    hop1 = graph.neighbor_sets[seed_unit]
    hop2 = set(hop1)
    for j in hop1:
        hop2 |= graph.neighbor_sets[j]
    hop2.discard(seed_unit)
    cand = sorted(hop2)
    take = min(cfg.treated_size - 1, len(cand))
    if take == 0:
        return [seed_unit]
    p = prop[cand] / prop[cand].sum()
    extra = rng.choice(cand, size=take, replace=False, p=p)
    return sorted([seed_unit, *map(int, extra)])


def _strata_ok(schedule, graph, theta) -> bool:
    counts = compute_exposure(schedule, graph, theta).counts()
    return counts["S11"] > 0 and counts["S01"] > 0 and counts["S00"] > 0


def _baseline_outcomes(cfg: DgpConfig, z: np.ndarray, rng) -> np.ndarray:
    n, t = cfg.n_units, cfg.n_pre + cfg.n_post
    noise = cfg.noise_sd * rng.standard_normal((n, t))
    p = z.shape[1]
    cov = z @ (cfg.covariate_effect_sd * rng.standard_normal((p, t))) if p else np.zeros((n, t))
    alpha = cfg.unit_effect_sd * rng.standard_normal(n)
    if cfg.model == "autoregressive":
        coeffs = np.asarray(cfg.ar_coeffs, dtype=float)
        lags = coeffs.size
        total = AR_BURN_IN + t
        shocks = cfg.noise_sd * rng.standard_normal((n, total))
        dev = np.zeros((n, total + lags))
        for s in range(total):
            past = dev[:, s:s + lags][:, ::-1]
            dev[:, s + lags] = past @ coeffs + shocks[:, s]
        return alpha[:, None] + cov + dev[:, lags + AR_BURN_IN:]
    delta = rng.standard_normal(t)
    y = alpha[:, None] + delta[None, :] + cov + noise
    if cfg.model == "linear_factor":
        loadings = rng.standard_normal((n, cfg.n_factors))
        factors = cfg.factor_sd * rng.standard_normal((cfg.n_factors, t))
        y = y + loadings @ factors
    return y


def generate(cfg: DgpConfig) -> SyntheticPanel:
    """Draw one synthetic panel; identical seeds give identical panels."""
    rng = np.random.default_rng(cfg.seed)
    params = {"width": cfg.lattice_width, "radius": cfg.geometric_radius}
    graph = make_graph(cfg.graph, cfg.n_units, params, seed=rng.integers(2**63))
    p = _n_covariates(cfg.covariate_mode)
    z = rng.standard_normal((cfg.n_units, p))
    t0, t = cfg.n_pre, cfg.n_pre + cfg.n_post

    for _ in range(100):
        treated = _draw_treated(cfg, graph, z, rng)
        schedule = TreatmentSchedule.simultaneous(cfg.n_units, treated, t0)
        if _strata_ok(schedule, graph, cfg.neighbor_threshold):
            break
    else:
        raise ValueError(
            "could not draw a treated block with nonempty S11, S01 and S00 strata in 100 attempts; "
            "adjust treated_size, graph or n_units"
        )
    exposure = compute_exposure(schedule, graph, cfg.neighbor_threshold)

    y0 = _baseline_outcomes(cfg, z, rng)
    treated_mask = np.array([schedule.is_treated(i) for i in range(cfg.n_units)], dtype=float)
    q = np.asarray(exposure.q_values, dtype=float)
    truth_direct = np.repeat((cfg.direct_effect * treated_mask)[:, None], cfg.n_post, axis=1)
    truth_indirect = np.repeat((cfg.indirect_effect * q)[:, None], cfg.n_post, axis=1)
    truth_total = truth_direct + truth_indirect
    y = y0.copy()
    y[:, t0:] += truth_total

    panel = PanelData(
        outcomes=y,
        covariates=z,
        unit_ids=[f"u{i:03d}" for i in range(cfg.n_units)],
        time_labels=[str(s + 1) for s in range(t)],
        t0=t0,
    )
    return SyntheticPanel(panel, schedule, graph, truth_direct, truth_indirect, truth_total)


@dataclass(frozen=True)
class StudyConfig:
    """Grid of scenarios crossed from effect sizes and covariate modes."""

    base: DgpConfig = field(default_factory=DgpConfig)
    direct_effects: Tuple[float, ...] = FULL_DIRECT_GRID
    indirect_effects: Tuple[float, ...] = FULL_INDIRECT_GRID
    covariate_modes: Tuple[str, ...] = ("limited",)
    n_reps: int = 200
    master_seed: int = 0
    alpha: float = 0.05
    conformal: bool = True
    lam: Optional[float] = None
    refit_conformal: bool = True
    estimators: Tuple[str, ...] = ESTIMATORS

    def __post_init__(self):
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad or not self.estimators:
            raise ValueError(f"unknown estimator(s) {bad}; valid: {', '.join(ESTIMATORS)}")

    def scenarios(self) -> List[DgpConfig]:
        return [
            replace(self.base, direct_effect=float(de), indirect_effect=float(ie), covariate_mode=cm)
            for cm in self.covariate_modes
            for de in self.direct_effects
            for ie in self.indirect_effects
        ]


def scenario_name(cfg: DgpConfig) -> str:
    return f"{cfg.model}/{cfg.covariate_mode}/de={cfg.direct_effect:g}/ie={cfg.indirect_effect:g}"


def estimation_config(cfg: DgpConfig, alpha=0.05, conformal=True, lam=None, refit=True) -> EstimationConfig:
    return EstimationConfig(
        lam=lam,
        covariates=cfg.estimation_covariates,
        neighbor_threshold=cfg.neighbor_threshold,
        conformal=ConformalConfig(alpha=alpha, refit_weights=refit) if conformal else None,
    )


def rep_seed(master_seed: int, scenario_index: int, rep: int) -> int:
    """Replication seed derived only from its coordinates, never from run order."""
    ss = np.random.SeedSequence([int(master_seed), int(scenario_index), int(rep)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _truth_for(kind, sp: SyntheticPanel, unit):
    if kind in ("direct", "naive"):
        return sp.truth_direct[unit]
    if kind == "total":
        return sp.truth_total[unit]
    return sp.truth_indirect[unit]


def run_replication(
    cfg: DgpConfig,
    seed: int,
    est_config: Optional[EstimationConfig] = None,
    estimators: Sequence[str] = ESTIMATORS,
) -> List[dict]:
    """
    One draw of the DGP with all four estimators applied to every S11 unit.

    Returns one record per (estimator, unit, post period) with the error
    against the truth, the coverage indicator (NaN for spillover or when no
    interval exists), pre-period RMSE and the largest absolute weight.
    Estimator failures become records with ``failed=True``. ``estimators``
    restricts the work to a subset (spillover implies direct and total).
    """
    sp = generate(replace(cfg, seed=seed))
    est_config = est_config or estimation_config(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = estimate_all(sp.panel, sp.schedule, sp.graph, est_config, kinds=estimators)
    records = []
    for unit, per in report.results.items():
        for kind in estimators:
            res = per[kind]
            if not isinstance(res, EffectSeries):
                records.append({"estimator": kind, "unit": unit, "failed": True, "error": res.error, "message": res.message})
                continue
            truth = _truth_for(kind, sp, unit)
            fit = res.fit
            for s in range(res.points.size):
                lo, hi = res.ci_low[s], res.ci_high[s]
                covered = float(lo <= truth[s] <= hi) if not (np.isnan(lo) or np.isnan(hi)) else math.nan
                records.append({
                    "estimator": kind,
                    "unit": unit,
                    "period": s,
                    "failed": False,
                    "estimate": float(res.points[s]),
                    "truth": float(truth[s]),
                    "error": float(res.points[s] - truth[s]),
                    "covered": covered,
                    "pre_rmse": fit.pre_rmse if fit else math.nan,
                    "max_weight": fit.max_abs_weight if fit else math.nan,
                })
    return records


METRICS = ("bias", "coverage", "pre_rmse", "max_weight")
_RECORD_FIELD = {"bias": "error", "coverage": "covered", "pre_rmse": "pre_rmse", "max_weight": "max_weight"}


def _nanmean(xs):
    xs = [x for x in xs if not math.isnan(x)]
    return sum(xs) / len(xs) if xs else math.nan


def summarize_replication(records: List[dict], estimators: Sequence[str] = ESTIMATORS) -> Dict[str, Dict[str, float]]:
    """Per-estimator means of each metric over one replication's records."""
    out = {}
    for kind in estimators:
        ok = [r for r in records if r["estimator"] == kind and not r["failed"]]
        if not ok:
            continue
        out[kind] = {m: _nanmean([r[_RECORD_FIELD[m]] for r in ok]) for m in METRICS}
    return out


@dataclass(frozen=True)
class CellSummary:
    scenario: str
    estimator: str
    values: Dict[str, float]
    mc_se: Dict[str, float]
    n_reps: int
    n_failures: int


def aggregate(
    per_rep: List[Dict[str, Dict[str, float]]], scenario: str, estimators: Sequence[str] = ESTIMATORS
) -> List[CellSummary]:
    """Average replication-level summaries; Monte Carlo SE is ``sd / sqrt(n)``."""
    cells = []
    for kind in estimators:
        reps = [r[kind] for r in per_rep if kind in r]
        values, ses = {}, {}
        for m in METRICS:
            xs = np.array([r[m] for r in reps if not math.isnan(r[m])])
            values[m] = float(xs.mean()) if xs.size else math.nan
            ses[m] = float(xs.std(ddof=1) / math.sqrt(xs.size)) if xs.size > 1 else math.nan
        cells.append(CellSummary(scenario, kind, values, ses, len(reps), len(per_rep) - len(reps)))
    return cells


@dataclass
class StudyReport:
    cells: List[CellSummary]
    scenarios: List[DgpConfig]
    config: StudyConfig

    def cell(self, scenario: str, estimator: str) -> CellSummary:
        for c in self.cells:
            if c.scenario == scenario and c.estimator == estimator:
                return c
        raise KeyError((scenario, estimator))

    def to_csv(self) -> str:
        lines = ["scenario,estimator,metric,value,mc_se"]
        for c in self.cells:
            for m in METRICS:
                lines.append(f"{c.scenario},{c.estimator},{m},{fmt(c.values[m])},{fmt(c.mc_se[m])}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "config": _jsonable(asdict(self.config)),
            "scenarios": [
                {"name": scenario_name(s), **_jsonable(asdict(s))} for s in self.scenarios
            ],
            "cells": [
                {
                    "scenario": c.scenario,
                    "estimator": c.estimator,
                    "n_reps": c.n_reps,
                    "n_failures": c.n_failures,
                    "values": {k: _num(v) for k, v in c.values.items()},
                    "mc_se": {k: _num(v) for k, v in c.mc_se.items()},
                }
                for c in self.cells
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def panel_csv(self, metric: str) -> str:
        """Long table for one plot panel: one row per scenario and estimator."""
        by_name = {scenario_name(s): s for s in self.scenarios}
        lines = ["scenario,model,covariate_mode,direct_effect,indirect_effect,estimator,value,mc_se"]
        for c in self.cells:
            s = by_name[c.scenario]
            lines.append(
                f"{c.scenario},{s.model},{s.covariate_mode},{fmt(s.direct_effect)},{fmt(s.indirect_effect)},"
                f"{c.estimator},{fmt(c.values[metric])},{fmt(c.mc_se[metric])}"
            )
        return "\n".join(lines) + "\n"


def fmt(x) -> str:
    """12 significant digits; empty for missing values."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.12g}"


def _num(x):
    if isinstance(x, float):
        return None if math.isnan(x) else float(f"{x:.12g}")
    return x


def _jsonable(d):
    if isinstance(d, dict):
        return {k: _jsonable(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_jsonable(v) for v in d]
    return _num(d)


def _replicate_task(args):
    cfg, seed, alpha, conformal, lam, refit, estimators = args
    records = run_replication(cfg, seed, estimation_config(cfg, alpha, conformal, lam, refit), estimators)
    return summarize_replication(records, estimators)


def run_study(study: StudyConfig, n_reps: Optional[int] = None, n_jobs: int = 1) -> StudyReport:
    """
    Run every scenario of ``study`` for ``n_reps`` replications.

    Replication ``r`` of scenario ``s`` is seeded from ``(master_seed, s, r)``
    so results do not depend on ``n_jobs`` or completion order.
    """
    n_reps = study.n_reps if n_reps is None else n_reps
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    scenarios = study.scenarios()
    tasks = [
        (cfg, rep_seed(study.master_seed, s, r), study.alpha, study.conformal, study.lam, study.refit_conformal, study.estimators)
        for s, cfg in enumerate(scenarios)
        for r in range(n_reps)
    ]
    summaries = map_ordered(_replicate_task, tasks, n_jobs)
    cells = []
    for s, cfg in enumerate(scenarios):
        cells.extend(aggregate(summaries[s * n_reps:(s + 1) * n_reps], scenario_name(cfg), study.estimators))
    return StudyReport(cells, scenarios, replace(study, n_reps=n_reps))
