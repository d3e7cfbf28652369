import math
from dataclasses import replace

import numpy as np
import pytest

from strata_synth.panel import Stratum, compute_exposure
from strata_synth.simulation import (
    METRICS,
    DgpConfig,
    StudyConfig,
    aggregate,
    check_ar_stable,
    estimation_config,
    generate,
    make_graph,
    rep_seed,
    run_replication,
    run_study,
    summarize_replication,
)

FAST = dict(conformal=False)


# ---------------------------------------------------------------- graphs


def test_lattice_corners_have_two_neighbours():
    g = make_graph("lattice", 9, {"width": 3})
    assert [len(g.neighbors(i)) for i in (0, 2, 6, 8)] == [2, 2, 2, 2]
    assert len(g.neighbors(4)) == 4


def test_geometric_extremes():
    assert make_graph("geometric", 12, {"radius": 0.0}, seed=1).edges() == []
    g = make_graph("geometric", 12, {"radius": math.sqrt(2)}, seed=1)
    assert len(g.edges()) == 12 * 11 // 2


@pytest.mark.parametrize("kind,n,params", [("lattice", 10, {"width": 3}), ("lattice", 3, {}), ("hex", 9, {})])
def test_make_graph_rejects(kind, n, params):
    with pytest.raises(ValueError):
        make_graph(kind, n, params)


# ---------------------------------------------------------------- DGP


def test_ar_stability():
    check_ar_stable((0.5, 0.3))
    with pytest.raises(ValueError, match="not stationary"):
        check_ar_stable((1.0,))
    with pytest.raises(ValueError, match="not stationary"):
        DgpConfig(model="autoregressive", ar_coeffs=(0.6, 0.5))


def test_invalid_model_lists_options():
    with pytest.raises(ValueError, match="linear_factor, fixed_effects, autoregressive"):
        DgpConfig(model="garch")


def test_truth_identity_and_values():
    sp = generate(DgpConfig(direct_effect=-0.7, indirect_effect=0.3, seed=11))
    ex = compute_exposure(sp.schedule, sp.graph)
    for i in ex.members(Stratum.S11):
        np.testing.assert_allclose(sp.truth_total[i], -0.4, atol=1e-15)
    for i in ex.members(Stratum.S01):
        assert np.all(sp.truth_total[i] == 0.3)
    for i in ex.members(Stratum.S00):
        assert np.all(sp.truth_total[i] == 0.0)
    assert np.array_equal(sp.truth_total, sp.truth_direct + sp.truth_indirect)


def test_effects_only_in_post_periods():
    base = DgpConfig(seed=3, direct_effect=0.0, indirect_effect=0.0)
    a, b = generate(base), generate(replace(base, direct_effect=-0.7, indirect_effect=0.3))
    t0 = base.n_pre
    assert np.array_equal(a.panel.outcomes[:, :t0], b.panel.outcomes[:, :t0])
    np.testing.assert_allclose(b.panel.outcomes[:, t0:] - a.panel.outcomes[:, t0:], b.truth_total, atol=1e-12)


@pytest.mark.parametrize("model", ["linear_factor", "fixed_effects", "autoregressive"])
@pytest.mark.parametrize("graph", ["lattice", "geometric"])
def test_seed_determinism(model, graph):
    cfg = DgpConfig(model=model, graph=graph, seed=21)
    a, b = generate(cfg), generate(cfg)
    assert np.array_equal(a.panel.outcomes, b.panel.outcomes)
    assert np.array_equal(a.panel.covariates, b.panel.covariates)
    assert a.schedule == b.schedule and a.graph == b.graph
    assert not np.array_equal(a.panel.outcomes, generate(replace(cfg, seed=22)).panel.outcomes)


def test_all_strata_nonempty():
    for seed in range(20):
        counts = compute_exposure(*(lambda s: (s.schedule, s.graph))(generate(DgpConfig(seed=seed)))).counts()
        assert counts["S11"] and counts["S01"] and counts["S00"]


def test_treated_size_validated():
    with pytest.raises(ValueError, match="treated_size"):
        DgpConfig(treated_size=1)


def test_covariate_modes_shape():
    for mode, p in (("none", 0), ("limited", 2), ("all", 5)):
        assert generate(DgpConfig(covariate_mode=mode)).panel.covariates.shape == (50, p)


def test_zero_noise_fixed_effects_gap_vanishes():
    cfg = DgpConfig(model="fixed_effects", noise_sd=0.0, unit_effect_sd=0.0, covariate_mode="none",
                    direct_effect=0.0, indirect_effect=0.0)
    for seed in range(5):
        recs = run_replication(cfg, seed, estimation_config(cfg, **FAST), ("direct",))
        ok = [r for r in recs if not r["failed"]]
        assert ok
        assert max(abs(r["estimate"]) for r in ok) <= 1e-12


# ---------------------------------------------------------------- replication and study


def test_replication_records():
    cfg = DgpConfig(seed=0)
    recs = run_replication(cfg, 5, estimation_config(cfg, alpha=0.1))
    kinds = {r["estimator"] for r in recs}
    assert kinds == {"direct", "total", "spillover", "naive"}
    for r in recs:
        if r["failed"]:
            assert r["error"] and r["message"]
            continue
        assert r["estimate"] - r["truth"] == r["error"]
        if r["estimator"] == "spillover":
            assert math.isnan(r["covered"])
        else:
            assert r["covered"] in (0.0, 1.0)
            assert r["pre_rmse"] >= 0 and r["max_weight"] > 0


def test_failure_rows_do_not_stop_study():
    # a tiny lattice where some direct pools are empty
    cfg = DgpConfig(n_units=9, lattice_width=3, treated_size=5)
    failed = []
    for seed in range(20):
        failed += [r for r in run_replication(cfg, seed, estimation_config(cfg, **FAST)) if r["failed"]]
    assert failed and all(r["error"] for r in failed)
    report = run_study(StudyConfig(base=cfg, direct_effects=(0.0,), indirect_effects=(0.0,), n_reps=3, conformal=False))
    assert len(report.cells) == 4


def test_coverage_matches_streaming_recomputation():
    cfg = DgpConfig(n_post=2)
    summaries, streams = [], {k: [0.0, 0] for k in ("direct", "total", "naive")}
    for seed in range(4):
        recs = run_replication(cfg, seed, estimation_config(cfg, alpha=0.2, refit=False))
        s = summarize_replication(recs)
        summaries.append(s)
        for kind, acc in streams.items():
            cov = [r["covered"] for r in recs if r["estimator"] == kind and not r["failed"]]
            if cov:
                acc[0] += sum(cov) / len(cov)
                acc[1] += 1
    cells = {c.estimator: c for c in aggregate(summaries, "x")}
    for kind, (total, n) in streams.items():
        assert cells[kind].values["coverage"] == pytest.approx(total / n, abs=1e-14)
    assert math.isnan(cells["spillover"].values["coverage"])


def test_one_scenario_one_rep_has_four_rows():
    study = StudyConfig(direct_effects=(-0.7,), indirect_effects=(0.3,), n_reps=1)
    report = run_study(study)
    assert [c.estimator for c in report.cells] == ["direct", "total", "spillover", "naive"]
    lines = report.to_csv().splitlines()
    assert lines[0] == "scenario,estimator,metric,value,mc_se"
    assert len(lines) == 1 + 4 * len(METRICS)


def test_study_bytes_identical_and_order_free():
    study = StudyConfig(direct_effects=(-0.7, 0.2), indirect_effects=(0.3,), n_reps=3, master_seed=9, conformal=False)
    a = run_study(study)
    b = run_study(study, n_jobs=2)
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()
    assert a.to_csv() != run_study(replace(study, master_seed=10)).to_csv()


def test_rep_seed_depends_on_coordinates_only():
    assert rep_seed(0, 1, 2) == rep_seed(0, 1, 2)
    assert len({rep_seed(0, s, r) for s in range(5) for r in range(5)}) == 25


def test_estimator_subset():
    study = StudyConfig(direct_effects=(0.0,), indirect_effects=(0.0,), n_reps=2, conformal=False,
                        estimators=("direct", "naive"))
    assert [c.estimator for c in run_study(study).cells] == ["direct", "naive"]
    with pytest.raises(ValueError):
        StudyConfig(estimators=("bogus",))


def test_panel_csv_columns():
    report = run_study(StudyConfig(direct_effects=(0.2,), indirect_effects=(-0.3,), n_reps=1, conformal=False))
    lines = report.panel_csv("bias").splitlines()
    assert lines[0].split(",") == [
        "scenario", "model", "covariate_mode", "direct_effect", "indirect_effect", "estimator", "value", "mc_se"
    ]
    assert len(lines) == 5 and lines[1].split(",")[3:5] == ["0.2", "-0.3"]
