"""
Direct, total, spillover and naive effect estimation for treated units.

For a target ``i`` in S11 the direct effect uses donors from S01 outside
``i``'s neighbourhood (counterfactual ``Y(0, 1)``), the total effect uses
donors from S00 (counterfactual ``Y(0, 0)``), and the spillover effect is
their difference. The naive estimator ignores interference and uses every
untreated unit. Each pool gets its own cross-validated ridge penalty.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._parallel import map_ordered
from .conformal import ConformalConfig, ConformalResult, conformal_interval, conformal_pvalue
from .errors import (
    EmptyDonorPool,
    MismatchedSeries,
    NoAcceptedPoint,
    SmallDonorPool,
    StrataSynthError,
    StratumMismatch,
)
from .panel import (
    DEFAULT_MIN_POOL_SIZE,
    AdjacencyGraph,
    DonorPool,
    PanelData,
    PoolKind,
    Stratum,
    TreatmentSchedule,
    build_donor_pool,
    compute_exposure,
)
from .solver import (
    FitDiagnostics,
    WeightVector,
    assemble_features,
    augmented_weights,
    diagnostics,
    scm_weights,
    select_lambda,
)

ALL_KINDS = ("direct", "total", "spillover", "naive")


@dataclass(frozen=True)
class EstimationConfig:
    """
    Knobs shared by all estimators.

    Parameters
    ----------
    lam : float, optional
        Fixed ridge penalty. ``None`` selects it by leave-one-period-out
        cross-validation over ``lambda_grid`` (default grid when ``None``).
    covariates : {'none', 'all'} or tuple of str
        Covariates added to the balance rows.
    conformal : ConformalConfig, optional
        ``None`` skips interval estimation.
    pvalue_null : float
        Effect value tested for the reported per-period p-value.
    """

    lam: Optional[float] = None
    lambda_grid: Optional[Tuple[float, ...]] = None
    covariates: Union[str, Tuple[str, ...]] = "all"
    standardize: bool = True
    neighbor_threshold: Optional[float] = None
    min_pool_size: int = DEFAULT_MIN_POOL_SIZE
    conformal: Optional[ConformalConfig] = field(default_factory=ConformalConfig)
    pvalue_null: float = 0.0

    @property
    def covariate_selection(self):
        c = self.covariates
        if c is True:
            return "all"
        if c is False or c is None:
            return "none"
        return c if isinstance(c, str) else tuple(c)


@dataclass(frozen=True)
class EffectSeries:
    """
    Post-period effect estimates for one target and one estimand.

    ``points`` and the interval arrays have one entry per post period
    ``t0 .. T-1``; missing intervals or p-values are NaN. ``synthetic_path``
    covers all ``T`` periods; for the spillover series it holds
    ``synthetic(0,1) - synthetic(0,0)``.
    """

    target_unit: int
    kind: str
    points: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    p_values: np.ndarray
    synthetic_path: np.ndarray
    observed: np.ndarray
    t0: int
    weights: Optional[WeightVector] = None
    lam: Optional[float] = None
    fit: Optional[FitDiagnostics] = None
    cv_curve: Optional[List[Tuple[float, float]]] = None
    intervals: Tuple[Optional[ConformalResult], ...] = ()
    notes: Tuple[str, ...] = ()

    @property
    def estimates(self):
        """``(point, ci_low, ci_high, p_value)`` tuples, ``None`` where absent."""
        def opt(v):
            return None if np.isnan(v) else float(v)
        return [
            (float(p), opt(lo), opt(hi), opt(pv))
            for p, lo, hi, pv in zip(self.points, self.ci_low, self.ci_high, self.p_values)
        ]

    @property
    def gap(self) -> np.ndarray:
        return self.observed - self.synthetic_path


@dataclass(frozen=True)
class EstimationFailure:
    target_unit: int
    kind: str
    error: str
    message: str


def _exposure(schedule, graph, config):
    return compute_exposure(schedule, graph, config.neighbor_threshold)


def _fit_pool(panel: PanelData, target: int, pool, config: EstimationConfig) -> EffectSeries:
    fb = assemble_features(panel, target, pool, config.covariate_selection, standardize=config.standardize)
    cv_curve = None
    if config.lam is None:
        if panel.t0 < 3:
            raise ValueError("cross-validated lambda needs t0 >= 3; pass a fixed lam instead")
        lam, cv_curve = select_lambda(fb, config.lambda_grid)
    else:
        lam = float(config.lam)
    scm = scm_weights(fb)
    aug = augmented_weights(fb, scm, lam)
    donors = list(pool.donor_indices)
    y = panel.outcomes
    synthetic = y[donors].T @ aug.gamma
    observed = y[target].copy()
    t0, n_post = panel.t0, panel.n_post
    points = observed[t0:] - synthetic[t0:]
    ci_low = np.full(n_post, np.nan)
    ci_high = np.full(n_post, np.nan)
    pvals = np.full(n_post, np.nan)
    intervals: List[Optional[ConformalResult]] = []
    notes: List[str] = []
    if config.conformal is not None:
        for s in range(n_post):
            t = t0 + s
            pvals[s] = conformal_pvalue(panel, target, pool, config, t, config.pvalue_null, lam, aug)
            try:
                res = conformal_interval(panel, target, pool, config, t, lam, aug, float(points[s]))
            except NoAcceptedPoint as exc:
                intervals.append(None)
                notes.append(str(exc))
                continue
            ci_low[s], ci_high[s] = res.ci_low, res.ci_high
            intervals.append(res)
            if res.unbounded:
                notes.append(f"period {panel.time_labels[t]}: confidence set is unbounded")
    return EffectSeries(
        target_unit=target,
        kind=pool.effect_kind.value,
        points=points,
        ci_low=ci_low,
        ci_high=ci_high,
        p_values=pvals,
        synthetic_path=synthetic,
        observed=observed,
        t0=t0,
        weights=aug,
        lam=lam,
        fit=diagnostics(fb, aug, lam, scm),
        cv_curve=cv_curve,
        intervals=tuple(intervals),
        notes=tuple(notes),
    )


def estimate_direct(panel, schedule, graph, target, config: Optional[EstimationConfig] = None) -> EffectSeries:
    """Direct effect ``Y(1,1) - Y(0,1)`` using S01 donors outside the target's neighbourhood."""
    config = config or EstimationConfig()
    exposure = _exposure(schedule, graph, config)
    pool = build_donor_pool(target, PoolKind.DIRECT, exposure, graph, config.min_pool_size)
    return _fit_pool(panel, target, pool, config)


def estimate_total(panel, schedule, graph, target, config: Optional[EstimationConfig] = None) -> EffectSeries:
    """Total effect ``Y(1,1) - Y(0,0)`` using pure controls (S00)."""
    config = config or EstimationConfig()
    exposure = _exposure(schedule, graph, config)
    pool = build_donor_pool(target, PoolKind.TOTAL, exposure, graph, config.min_pool_size)
    return _fit_pool(panel, target, pool, config)


def estimate_naive(panel, schedule, target, config: Optional[EstimationConfig] = None, graph=None) -> EffectSeries:
    """
    Ridge ASCM with every untreated unit as a donor, ignoring interference.

    Exposure does not affect the pool, so the graph is optional.
    """
    config = config or EstimationConfig()
    if not schedule.is_treated(target):
        raise StratumMismatch(f"naive effect requires a treated target; unit {target} is untreated")
    untreated = [j for j in range(panel.n_units) if not schedule.is_treated(j)]
    if not untreated:
        raise EmptyDonorPool(f"no untreated units available as naive donors for unit {target}")
    if len(untreated) < config.min_pool_size:
        warnings.warn(
            f"naive pool for unit {target} has {len(untreated)} donors (< {config.min_pool_size})",
            SmallDonorPool,
            stacklevel=2,
        )
    pool = DonorPool(target, PoolKind.NAIVE, tuple(untreated))
    return _fit_pool(panel, target, pool, config)


def estimate_spillover(direct: EffectSeries, total: EffectSeries) -> EffectSeries:
    """Spillover ``total - direct`` per post period; no interval is attached."""
    if direct.target_unit != total.target_unit:
        raise MismatchedSeries(
            f"targets differ: direct={direct.target_unit}, total={total.target_unit}"
        )
    if direct.points.shape != total.points.shape or direct.t0 != total.t0:
        raise MismatchedSeries("direct and total series cover different post periods")
    n = direct.points.shape[0]
    nan = np.full(n, np.nan)
    return EffectSeries(
        target_unit=direct.target_unit,
        kind="spillover",
        points=total.points - direct.points,
        ci_low=nan,
        ci_high=nan.copy(),
        p_values=nan.copy(),
        synthetic_path=direct.synthetic_path - total.synthetic_path,
        observed=direct.observed,
        t0=direct.t0,
        notes=("no interval: conformal inference covers direct and total effects only",),
    )


@dataclass
class EstimationReport:
    """Results of ``estimate_all`` keyed by target unit index, in unit order."""

    results: Dict[int, Dict[str, Union[EffectSeries, EstimationFailure]]]
    notes: List[str] = field(default_factory=list)

    def failures(self) -> List[EstimationFailure]:
        return [r for per in self.results.values() for r in per.values() if isinstance(r, EstimationFailure)]


def _guard(kind, target, fn, *args):
    try:
        return fn(*args)
    except (StrataSynthError, ValueError, np.linalg.LinAlgError) as exc:
        return EstimationFailure(target, kind, type(exc).__name__, str(exc))


def _estimate_target(args):
    panel, schedule, graph, target, config, kinds = args
    need = set(kinds)
    if "spillover" in need:
        need |= {"direct", "total"}
    out: Dict[str, Union[EffectSeries, EstimationFailure]] = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if "direct" in need:
            out["direct"] = _guard("direct", target, estimate_direct, panel, schedule, graph, target, config)
        if "total" in need:
            out["total"] = _guard("total", target, estimate_total, panel, schedule, graph, target, config)
        if "spillover" in need:
            d, t = out["direct"], out["total"]
            if isinstance(d, EffectSeries) and isinstance(t, EffectSeries):
                out["spillover"] = estimate_spillover(d, t)
            else:
                bad = "direct" if isinstance(d, EstimationFailure) else "total"
                out["spillover"] = EstimationFailure(target, "spillover", "MissingComponent", f"{bad} estimate failed")
        if "naive" in need:
            out["naive"] = _guard("naive", target, estimate_naive, panel, schedule, target, config, graph)
    return {k: out[k] for k in ALL_KINDS if k in out}


def estimate_all(
    panel,
    schedule,
    graph,
    config: Optional[EstimationConfig] = None,
    n_jobs: int = 1,
    kinds: Sequence[str] = ALL_KINDS,
) -> EstimationReport:
    """
    Run direct, total, spillover and naive estimators for every S11 unit.

    Per-unit failures become ``EstimationFailure`` records. Treated units
    without treated neighbours (S10) are listed in ``notes`` as unsupported.
    Results are ordered by unit index whatever ``n_jobs`` is.
    """
    config = config or EstimationConfig()
    exposure = _exposure(schedule, graph, config)
    targets = exposure.members(Stratum.S11)
    notes = []
    for i in exposure.members(Stratum.S10):
        notes.append(
            f"unit {panel.unit_ids[i]} is treated with no treated neighbours (S10); "
            "the Y(1,0) - Y(0,0) direct effect is not supported"
        )
    if not targets:
        notes.append("no treated unit has a treated neighbour (S11 is empty); nothing to estimate")
        return EstimationReport({}, notes)
    outs = map_ordered(_estimate_target, [(panel, schedule, graph, i, config, tuple(kinds)) for i in targets], n_jobs)
    return EstimationReport(dict(zip(targets, outs)), notes)
