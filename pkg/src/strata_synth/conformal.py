"""
Conformal p-values and test-inversion intervals for a single post period.

For a hypothesised effect ``tau0`` at post period ``t`` the treated
outcome is replaced by ``y_t - tau0``, the ridge-augmented weights are refit
with that value as an extra balance row, and the post-period residual is
ranked against the pre-period residuals:

    p(tau0) = (#{s <= t0 : |r_s| >= |R_t|} + 1) / (t0 + 1)

The interval collects grid values with ``p(tau0) > alpha``. Because
``p >= 1 / (t0 + 1)``, no value can be rejected once ``alpha < 1/(t0+1)``
and the confidence set is the whole real line. Such intervals, and any side
whose accepted region still reaches the grid edge after the last expansion,
are reported as infinite and flagged ``unbounded``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import NoAcceptedPoint
from .solver import FeatureBlock, augmented_weights, scm_weights

MAX_EXPANSIONS = 6


@dataclass(frozen=True)
class ConformalConfig:
    """
    Settings for conformal inference.

    ``grid_low``/``grid_high`` default to the point estimate plus or minus
    four pre-period residual standard deviations. ``refit_weights=False``
    reuses the point-estimate weights for every ``tau0`` (a cheaper
    split-style approximation, not full conformal inference).
    """

    alpha: float = 0.05
    grid_low: Optional[float] = None
    grid_high: Optional[float] = None
    grid_steps: int = 81
    refit_weights: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.grid_steps < 3:
            raise ValueError("grid_steps must be at least 3")
        if (self.grid_low is None) != (self.grid_high is None):
            raise ValueError("give both grid_low and grid_high or neither")
        if self.grid_low is not None and not self.grid_low < self.grid_high:
            raise ValueError("grid_low must be below grid_high")


@dataclass(frozen=True)
class ConformalResult:
    p_values: List[Tuple[float, float]]
    ci_low: float
    ci_high: float
    post_period: int
    expansions: int = 0
    unbounded: bool = False


def pvalue_from_residuals(pre_residuals, post_residual) -> float:
    """Rank ``|post_residual|`` against pre-period residual magnitudes."""
    pre = np.abs(np.asarray(pre_residuals, dtype=float))
    n = pre.size + 1
    return (int(np.count_nonzero(pre >= abs(post_residual))) + 1) / n


class _Problem:
    """Per (target, pool, post period) state reused across the tau0 grid."""

    def __init__(self, panel, target, pool, config, t_post, lam, point_weights=None):
        t0 = panel.t0
        if not t0 <= t_post < panel.n_periods:
            raise ValueError(f"t_post must index a post period ({t0}..{panel.n_periods - 1}), got {t_post}")
        self.donors = list(pool.donor_indices)
        self.t0, self.t_post, self.lam = t0, t_post, float(lam)
        self.config = config
        cols = panel.covariate_columns(config.covariate_selection)
        y = panel.outcomes
        self.y1_pre = y[target, :t0]
        self.y0_pre = y[self.donors, :t0]
        self.y1_t = y[target, t_post]
        self.y0_t = y[self.donors, t_post]
        self.z1 = panel.covariates[target, cols]
        self.z0 = panel.covariates[np.ix_(self.donors, cols)]
        self.standardize = config.standardize
        self.point_gamma = None if point_weights is None else np.asarray(point_weights.gamma)
        self._warm = None

    def _refit(self, tau0):
        x1 = np.concatenate([self.y1_pre, [self.y1_t - tau0], self.z1])
        x0 = np.vstack([self.y0_pre.T, self.y0_t[None, :], self.z0.T])
        fb = FeatureBlock.from_arrays(x1, x0, standardize=self.standardize, n_outcome_rows=self.t0 + 1)
        scm = scm_weights(fb, init=self._warm)
        self._warm = scm.gamma
        return augmented_weights(fb, scm, self.lam).gamma

    def residuals(self, tau0, refit=True):
        if refit:
            gamma = self._refit(tau0)
        else:
            if self.point_gamma is None:
                raise ValueError("refit_weights=False needs the point-estimate weights")
            gamma = self.point_gamma
        pre = self.y1_pre - self.y0_pre.T @ gamma
        post = (self.y1_t - self.y0_t @ gamma) - tau0
        return pre, post

    def pvalue(self, tau0, refit=True):
        pre, post = self.residuals(tau0, refit)
        return pvalue_from_residuals(pre, post)


def conformal_pvalue(panel, target, pool, config, t_post, tau0, lam, point_weights=None) -> float:
    """
    p-value for ``H0: effect at t_post == tau0``.

    ``config`` is an estimation config exposing ``conformal``,
    ``covariate_selection`` and ``standardize``. ``t_post`` is a 0-based
    column index into the outcome matrix (``t0 <= t_post < T``).
    """
    prob = _Problem(panel, target, pool, config, t_post, lam, point_weights)
    return prob.pvalue(float(tau0), config.conformal.refit_weights)


def _grid(center, half, steps):
    return center + np.linspace(-half, half, steps)


def conformal_interval(
    panel,
    target,
    pool,
    config,
    t_post,
    lam,
    point_weights=None,
    point_estimate: Optional[float] = None,
) -> ConformalResult:
    """
    Invert the conformal test over a grid of hypothesised effects.

    The grid half-width doubles (at most six times) while an accepted point
    sits on a grid endpoint; a side still open after that is infinite.
    Raises ``NoAcceptedPoint`` if nothing is accepted.
    """
    cc = config.conformal
    prob = _Problem(panel, target, pool, config, t_post, lam, point_weights)
    if point_weights is None:
        raise ValueError("point_weights are required to centre the grid")
    gamma = np.asarray(point_weights.gamma)
    if point_estimate is None:
        point_estimate = float(prob.y1_t - prob.y0_t @ gamma)
    if cc.grid_low is None:
        pre_resid = prob.y1_pre - prob.y0_pre.T @ gamma
        # near-perfect pre fits give a tiny residual sd; floor it by the target's own variation
        sd = max(float(np.std(pre_resid)), 0.1 * float(np.std(prob.y1_pre)))
        center, half = point_estimate, 4.0 * sd if sd > 0 else 1.0
    else:
        center, half = 0.5 * (cc.grid_low + cc.grid_high), 0.5 * (cc.grid_high - cc.grid_low)
        # the grid must reach the point estimate
        half = max(half, abs(point_estimate - center) * (1.0 + 1e-9))

    if 1.0 / (prob.t0 + 1) > cc.alpha:
        # every tau0 has p >= 1/(t0+1) > alpha: nothing can be rejected
        return ConformalResult([], -np.inf, np.inf, t_post, 0, True)

    expansions = 0
    while True:
        grid = _grid(center, half, cc.grid_steps)
        ps = [prob.pvalue(float(tau), cc.refit_weights) for tau in grid]
        accepted = np.flatnonzero(np.asarray(ps) > cc.alpha)
        touches = accepted.size and (accepted[0] == 0 or accepted[-1] == grid.size - 1)
        if not touches or expansions == MAX_EXPANSIONS:
            break
        half *= 2.0
        expansions += 1
    pairs = [(float(tau), float(p)) for tau, p in zip(grid, ps)]
    if accepted.size == 0:
        raise NoAcceptedPoint(
            f"no tau0 accepted at alpha={cc.alpha} for unit {target}, period {t_post}"
        )
    lo = -np.inf if accepted[0] == 0 else float(grid[accepted[0]])
    hi = np.inf if accepted[-1] == grid.size - 1 else float(grid[accepted[-1]])
    return ConformalResult(pairs, lo, hi, t_post, expansions, bool(np.isinf(lo) or np.isinf(hi)))


def write_pvalue_curve(result: ConformalResult, path) -> None:
    """Dump the ``tau0,p`` curve for audit."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tau0,p\n")
        for tau, p in result.p_values:
            fh.write(f"{tau:.12g},{p:.12g}\n")
