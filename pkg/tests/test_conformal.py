from fractions import Fraction

import numpy as np
import pytest

from conftest import make_panel
from strata_synth.conformal import (
    ConformalConfig,
    conformal_interval,
    conformal_pvalue,
    pvalue_from_residuals,
    write_pvalue_curve,
)
from strata_synth.effects import EstimationConfig
from strata_synth.panel import DonorPool, PoolKind
from strata_synth.solver import FeatureBlock, WeightVector, augmented_weights, scm_weights


def count_pvalue(pre, post):
    """Direct count: (#{|r_s| >= |R|} + 1) / (t0 + 1), in exact arithmetic."""
    pre = [abs(Fraction(x)) for x in pre]
    hits = sum(1 for r in pre if r >= abs(Fraction(post)))
    return float(Fraction(hits + 1, len(pre) + 1))


def config(alpha=0.05, refit=True, **grid):
    return EstimationConfig(covariates="none", conformal=ConformalConfig(alpha=alpha, refit_weights=refit, **grid))


def point_weights(panel, target, donors, lam):
    t0 = panel.t0
    fb = FeatureBlock.from_arrays(panel.outcomes[target, :t0], panel.outcomes[donors, :t0].T)
    return augmented_weights(fb, scm_weights(fb), lam)


def noisy_panel(rng, n=8, t0=20, t_post=3, sd=0.3):
    common = rng.standard_normal(t0 + t_post)
    y = common + 0.5 * rng.standard_normal((n, 1)) + sd * rng.standard_normal((n, t0 + t_post))
    return make_panel(y, t0)


# ---------------------------------------------------------------- formula


def test_pvalue_formula_examples():
    assert pvalue_from_residuals([0.1, 0.2, 0.3, 0.4], 0.25) == pytest.approx(0.6)
    assert pvalue_from_residuals([0.1, -0.2, 0.3], 5.0) == 0.25
    assert pvalue_from_residuals([1.0, -2.0, 3.0], 0.5) == 1.0
    assert pvalue_from_residuals([-0.5, 0.5], 0.5) == 1.0  # ties count


def test_pvalue_count_oracle_single_donor(rng):
    # one donor forces weight 1, so residuals are exact differences on a dyadic grid
    for _ in range(100):
        t0 = int(rng.integers(2, 16))
        t = t0 + int(rng.integers(1, 4))
        y = rng.integers(-16, 17, size=(2, t)) / 8.0
        panel = make_panel(y, t0)
        pool = DonorPool(0, PoolKind.TOTAL, (1,))
        t_post = int(rng.integers(t0, t))
        tau0 = int(rng.integers(-16, 17)) / 8.0
        refit = bool(rng.integers(2))
        pw = WeightVector(np.array([1.0]), "augmented", (1,))
        p = conformal_pvalue(panel, 0, pool, config(refit=refit), t_post, tau0, 1.0, pw)
        pre = y[0, :t0] - y[1, :t0]
        post = (y[0, t_post] - tau0) - y[1, t_post]
        assert p == count_pvalue(pre, post)


def test_pvalue_count_oracle_fixed_weights(rng):
    for _ in range(50):
        panel = noisy_panel(rng, n=6, t0=int(rng.integers(3, 12)))
        donors = (1, 2, 3, 4, 5)
        pw = point_weights(panel, 0, list(donors), 0.5)
        t_post = panel.t0 + 1
        tau0 = float(rng.normal())
        p = conformal_pvalue(panel, 0, DonorPool(0, PoolKind.TOTAL, donors), config(refit=False), t_post, tau0, 0.5, pw)
        y = panel.outcomes
        g = pw.gamma
        pre = y[0, : panel.t0] - g @ y[list(donors), : panel.t0]
        post = (y[0, t_post] - tau0) - g @ y[list(donors), t_post]
        assert p == count_pvalue(pre, post)


def test_pvalue_refit_matches_extended_fit(rng):
    panel = noisy_panel(rng, n=7, t0=10)
    donors = [1, 2, 3, 4, 5, 6]
    t_post, tau0, lam = 11, 0.4, 0.8
    y = panel.outcomes
    x1 = np.concatenate([y[0, :10], [y[0, t_post] - tau0]])
    x0 = np.vstack([y[donors, :10].T, y[donors, t_post][None, :]])
    fb = FeatureBlock.from_arrays(x1, x0)
    g = augmented_weights(fb, scm_weights(fb), lam).gamma
    pre = y[0, :10] - g @ y[donors, :10]
    post = (y[0, t_post] - tau0) - g @ y[donors, t_post]
    pool = DonorPool(0, PoolKind.TOTAL, tuple(donors))
    p = conformal_pvalue(panel, 0, pool, config(), t_post, tau0, lam)
    assert p == pytest.approx(pvalue_from_residuals(pre, post))


def test_pvalue_range_and_steps(rng):
    panel = noisy_panel(rng, n=6, t0=9)
    pool = DonorPool(0, PoolKind.TOTAL, (1, 2, 3, 4, 5))
    ps = [conformal_pvalue(panel, 0, pool, config(), 10, tau, 1.0) for tau in np.linspace(-3, 3, 61)]
    assert min(ps) >= 1 / 10 and max(ps) <= 1.0
    assert len(set(ps)) <= 10


def test_observed_gap_gives_p_one(rng):
    panel = noisy_panel(rng)
    donors = (1, 2, 3, 4, 5, 6, 7)
    pw = point_weights(panel, 0, list(donors), 1.0)
    gap = panel.outcomes[0, 21] - pw.gamma @ panel.outcomes[list(donors), 21]
    p = conformal_pvalue(panel, 0, DonorPool(0, PoolKind.TOTAL, donors), config(refit=False), 21, gap, 1.0, pw)
    assert p == 1.0


def test_t_post_must_be_post(rng):
    panel = noisy_panel(rng)
    with pytest.raises(ValueError):
        conformal_pvalue(panel, 0, DonorPool(0, PoolKind.TOTAL, (1, 2)), config(), 5, 0.0, 1.0)


# ---------------------------------------------------------------- intervals


def test_interval_brackets_point_estimate(rng):
    panel = noisy_panel(rng, t0=9)
    donors = (1, 2, 3, 4, 5, 6, 7)
    pool = DonorPool(0, PoolKind.TOTAL, donors)
    pw = point_weights(panel, 0, list(donors), 1.0)
    point = float(panel.outcomes[0, 10] - pw.gamma @ panel.outcomes[list(donors), 10])
    cfg = config(alpha=0.2, grid_low=point - 1, grid_high=point + 1, grid_steps=41)
    res = conformal_interval(panel, 0, pool, cfg, 10, 1.0, pw, point)
    assert res.ci_low <= point <= res.ci_high
    assert all(1 / 10 <= p <= 1 for _, p in res.p_values)
    accepted = [tau for tau, p in res.p_values if p > 0.2]
    assert (min(accepted), max(accepted)) == (res.ci_low, res.ci_high) or res.unbounded


def test_interval_nested_in_alpha(rng):
    panel = noisy_panel(rng, t0=25)
    donors = (1, 2, 3, 4, 5, 6, 7)
    pool = DonorPool(0, PoolKind.TOTAL, donors)
    pw = point_weights(panel, 0, list(donors), 1.0)
    point = float(panel.outcomes[0, 26] - pw.gamma @ panel.outcomes[list(donors), 26])
    widths = []
    for alpha in (0.05, 0.1, 0.3, 0.6):
        res = conformal_interval(panel, 0, pool, config(alpha=alpha, grid_low=point - 3, grid_high=point + 3), 26, 1.0, pw, point)
        widths.append(res.ci_high - res.ci_low)
    assert all(a >= b for a, b in zip(widths, widths[1:]))


def test_extreme_alpha_collapses(rng):
    panel = noisy_panel(rng, t0=9)
    donors = (1, 2, 3, 4, 5, 6, 7)
    pool = DonorPool(0, PoolKind.TOTAL, donors)
    pw = point_weights(panel, 0, list(donors), 1.0)
    point = float(panel.outcomes[0, 10] - pw.gamma @ panel.outcomes[list(donors), 10])
    grid = dict(grid_low=point - 2, grid_high=point + 2, grid_steps=81)
    wide = conformal_interval(panel, 0, pool, config(alpha=0.2, **grid), 10, 1.0, pw, point)
    tight = conformal_interval(panel, 0, pool, config(alpha=1 - 1 / 10 + 1e-9, refit=False, **grid), 10, 1.0, pw, point)
    assert tight.ci_low <= point <= tight.ci_high
    assert tight.ci_high - tight.ci_low < wide.ci_high - wide.ci_low


def test_unrejectable_alpha_gives_whole_line(rng):
    panel = noisy_panel(rng, t0=7)
    donors = (1, 2, 3, 4, 5)
    pw = point_weights(panel, 0, list(donors), 1.0)
    res = conformal_interval(panel, 0, DonorPool(0, PoolKind.TOTAL, donors), config(alpha=0.05), 8, 1.0, pw)
    assert (res.ci_low, res.ci_high, res.unbounded) == (-np.inf, np.inf, True)


def test_grid_expands_when_accepted_set_touches_edge(rng):
    panel = noisy_panel(rng, t0=25, sd=1.0)
    donors = (1, 2, 3, 4, 5, 6, 7)
    pw = point_weights(panel, 0, list(donors), 1.0)
    point = float(panel.outcomes[0, 26] - pw.gamma @ panel.outcomes[list(donors), 26])
    cfg = config(alpha=0.05, grid_low=point - 0.01, grid_high=point + 0.01)
    res = conformal_interval(panel, 0, DonorPool(0, PoolKind.TOTAL, donors), cfg, 26, 1.0, pw, point)
    assert res.expansions >= 1
    assert res.ci_low < point - 0.01 and res.ci_high > point + 0.01


def test_pvalue_curve_csv(tmp_path, rng):
    panel = noisy_panel(rng, t0=12)
    donors = (1, 2, 3, 4, 5)
    pw = point_weights(panel, 0, list(donors), 1.0)
    res = conformal_interval(panel, 0, DonorPool(0, PoolKind.TOTAL, donors), config(alpha=0.2), 13, 1.0, pw)
    write_pvalue_curve(res, tmp_path / "curve.csv")
    lines = (tmp_path / "curve.csv").read_text().splitlines()
    assert lines[0] == "tau0,p" and len(lines) == 82


@pytest.mark.parametrize(
    "kwargs",
    [dict(alpha=0.0), dict(alpha=1.0), dict(grid_steps=2), dict(grid_low=1.0), dict(grid_low=1.0, grid_high=0.0)],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ConformalConfig(**kwargs)
