import warnings

import numpy as np
import pytest

from conftest import make_panel, path_graph, star_setup
from strata_synth.conformal import ConformalConfig
from strata_synth.effects import (
    EffectSeries,
    EstimationConfig,
    EstimationFailure,
    estimate_all,
    estimate_direct,
    estimate_naive,
    estimate_spillover,
    estimate_total,
)
from strata_synth.errors import EmptyDonorPool, MismatchedSeries, StratumMismatch
from strata_synth.panel import AdjacencyGraph, Stratum, TreatmentSchedule, compute_exposure
from strata_synth.simulation import DgpConfig, estimation_config, generate

QUIET = EstimationConfig(covariates="none", conformal=None)


def series(points, kind="direct", target=0, t0=2):
    pts = np.asarray(points, dtype=float)
    nan = np.full(pts.size, np.nan)
    path = np.zeros(t0 + pts.size)
    return EffectSeries(target, kind, pts, nan, nan, nan, path, path, t0)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def test_direct_null_on_identical_donors():
    t0, t = 6, 9
    path = np.sin(np.arange(t))
    panel, schedule, graph = star_setup(n_s01=4, n_s00=3, t=t, t0=t0)
    y = np.tile(path, (panel.n_units, 1))
    panel = make_panel(y, t0)
    res = estimate_direct(panel, schedule, graph, 0, EstimationConfig(lam=1.0, covariates="none", conformal=None))
    np.testing.assert_allclose(res.points, 0.0, atol=1e-12)
    assert res.points.shape == (t - t0,)
    assert res.synthetic_path.shape == (t,)


def test_single_donor_is_simple_difference():
    panel, schedule, graph = star_setup(n_s01=1, n_s00=3)
    res = estimate_direct(panel, schedule, graph, 0, QUIET)
    y = panel.outcomes
    np.testing.assert_array_equal(res.points, y[0, panel.t0:] - y[2, panel.t0:])
    assert res.weights.donor_indices == (2,)


def test_direct_requires_s11():
    panel, schedule, graph = star_setup()
    with pytest.raises(StratumMismatch):
        estimate_direct(panel, schedule, graph, 3, QUIET)


def test_total_empty_s00():
    panel, schedule, graph = star_setup(n_s01=4, n_s00=0)
    with pytest.raises(EmptyDonorPool):
        estimate_total(panel, schedule, graph, 0, QUIET)


def test_naive_equals_total_when_no_exposed_controls():
    g = AdjacencyGraph.from_edges(8, [(0, 1)], warn=False)
    schedule = TreatmentSchedule.simultaneous(8, [0, 1], 6)
    panel = make_panel(np.random.default_rng(2).standard_normal((8, 9)), 6)
    tot = estimate_total(panel, schedule, g, 0, QUIET)
    nai = estimate_naive(panel, schedule, 0, QUIET)
    assert tot.weights.donor_indices == nai.weights.donor_indices
    np.testing.assert_array_equal(tot.points, nai.points)


def test_naive_needs_treated_target_and_controls():
    panel, schedule, graph = star_setup()
    with pytest.raises(StratumMismatch):
        estimate_naive(panel, schedule, 4, QUIET)
    all_treated = TreatmentSchedule.simultaneous(panel.n_units, range(panel.n_units), panel.t0)
    with pytest.raises(EmptyDonorPool):
        estimate_naive(panel, all_treated, 0, QUIET)


def test_spillover_examples():
    sp = estimate_spillover(series([-0.7, -0.7]), series([-0.4, -0.4], "total"))
    np.testing.assert_allclose(sp.points, [0.3, 0.3])
    assert np.isnan(sp.ci_low).all() and sp.notes
    same = series([0.1, -2.0])
    assert np.all(estimate_spillover(same, same).points == 0.0)


def test_spillover_bitwise_subtraction(rng):
    for _ in range(50):
        d, t = rng.normal(size=5), rng.normal(size=5)
        sp = estimate_spillover(series(d), series(t, "total"))
        assert np.array_equal(sp.points, t - d)


def test_spillover_mismatch():
    with pytest.raises(MismatchedSeries):
        estimate_spillover(series([1.0]), series([1.0], "total", target=3))
    with pytest.raises(MismatchedSeries):
        estimate_spillover(series([1.0]), series([1.0, 2.0], "total"))


def test_direct_pool_discipline():
    sp = generate(DgpConfig(seed=9))
    ex = compute_exposure(sp.schedule, sp.graph)
    s01 = set(ex.members(Stratum.S01))
    for target in ex.members(Stratum.S11):
        try:
            res = estimate_direct(sp.panel, sp.schedule, sp.graph, target, QUIET)
        except EmptyDonorPool:
            continue
        donors = set(res.weights.donor_indices)
        assert donors <= s01 and not donors & sp.graph.neighbors(target)


def test_estimate_all_isolates_failures():
    panel, schedule, graph = star_setup(n_s01=5, n_s00=6)
    report = estimate_all(panel, schedule, graph, QUIET)
    assert list(report.results) == [0, 1]
    assert isinstance(report.results[1]["direct"], EstimationFailure)
    assert report.results[1]["direct"].error == "EmptyDonorPool"
    assert isinstance(report.results[1]["spillover"], EstimationFailure)
    assert isinstance(report.results[1]["total"], EffectSeries)
    assert all(isinstance(r, EffectSeries) for r in report.results[0].values())


def test_estimate_all_empty_s11_and_s10_note():
    g = path_graph(6)
    schedule = TreatmentSchedule.simultaneous(6, [0], 4)
    panel = make_panel(np.random.default_rng(0).standard_normal((6, 6)), 4)
    report = estimate_all(panel, schedule, g, QUIET)
    assert report.results == {}
    assert any("S11 is empty" in n for n in report.notes)
    assert any("S10" in n for n in report.notes)


def test_estimate_all_kind_subset():
    panel, schedule, graph = star_setup()
    report = estimate_all(panel, schedule, graph, QUIET, kinds=("naive",))
    assert all(list(per) == ["naive"] for per in report.results.values())


def test_estimate_all_spillover_identity_and_determinism():
    sp = generate(DgpConfig(seed=4))
    cfg = estimation_config(DgpConfig())
    a = estimate_all(sp.panel, sp.schedule, sp.graph, cfg)
    b = estimate_all(sp.panel, sp.schedule, sp.graph, cfg, n_jobs=2)
    for unit, per in a.results.items():
        if isinstance(per["spillover"], EffectSeries):
            assert np.array_equal(per["spillover"].points, per["total"].points - per["direct"].points)
        for kind, r in per.items():
            other = b.results[unit][kind]
            if isinstance(r, EffectSeries):
                assert np.array_equal(r.points, other.points)
                assert np.array_equal(r.synthetic_path, other.synthetic_path)
                assert np.array_equal(r.ci_low, other.ci_low, equal_nan=True)
            else:
                assert r == other


def test_conformal_outputs_attached():
    sp = generate(DgpConfig(seed=2, n_pre=20, n_post=2))
    ex = compute_exposure(sp.schedule, sp.graph)
    target = ex.members(Stratum.S11)[0]
    cfg = EstimationConfig(covariates=("z1", "z2"), conformal=ConformalConfig(alpha=0.1))
    res = estimate_total(sp.panel, sp.schedule, sp.graph, target, cfg)
    assert res.p_values.shape == (2,) and np.all((res.p_values >= 1 / 21) & (res.p_values <= 1))
    for (pt, lo, hi, _), iv in zip(res.estimates, res.intervals):
        assert lo <= pt <= hi or iv.unbounded
    assert res.cv_curve and res.lam in [lam for lam, _ in res.cv_curve]


def test_fixed_lambda_requires_no_cv_and_short_panels():
    panel, schedule, graph = star_setup(t=4, t0=2)
    with pytest.raises(ValueError, match="t0 >= 3"):
        estimate_total(panel, schedule, graph, 0, QUIET)
    res = estimate_total(panel, schedule, graph, 0, EstimationConfig(lam=0.5, covariates="none", conformal=None))
    assert res.lam == 0.5 and res.cv_curve is None


def test_direct_recovers_effect_on_average():
    # small deterministic Monte Carlo; the acceptance suite runs the full version
    cfg = DgpConfig(direct_effect=-0.7, indirect_effect=0.3)
    errs = []
    for seed in range(25):
        sp = generate(DgpConfig(**{**cfg.__dict__, "seed": seed}))
        rep = estimate_all(sp.panel, sp.schedule, sp.graph, estimation_config(cfg, conformal=False), kinds=("direct",))
        errs += [float(np.mean(r["direct"].points)) for r in rep.results.values() if isinstance(r["direct"], EffectSeries)]
    assert np.mean(errs) == pytest.approx(-0.7, abs=0.15)
