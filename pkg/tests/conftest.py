import numpy as np
import pytest

from strata_synth.panel import AdjacencyGraph, PanelData, TreatmentSchedule

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def path_graph(n):
    return AdjacencyGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)], warn=False)


def make_panel(y, t0, z=None, names=None):
    y = np.asarray(y, dtype=float)
    n, t = y.shape
    z = np.zeros((n, 0)) if z is None else np.asarray(z, dtype=float)
    names = names or tuple(f"z{j + 1}" for j in range(z.shape[1]))
    return PanelData(y, z, [f"u{i}" for i in range(n)], [str(s + 1) for s in range(t)], t0, tuple(names))


def star_setup(n_s01=4, n_s00=6, t=10, t0=6, seed=0):
    """
    Two adjacent treated units (S11), ``n_s01`` exposed controls hanging off
    unit 1 only, and ``n_s00`` isolated controls; so unit 0's direct pool is
    every S01 unit and the total pool is every S00 unit.
    """
    rng = np.random.default_rng(seed)
    n = 2 + n_s01 + n_s00
    edges = [(0, 1)] + [(1, 2 + k) for k in range(n_s01)]
    graph = AdjacencyGraph.from_edges(n, edges, warn=False)
    schedule = TreatmentSchedule.simultaneous(n, [0, 1], t0)
    y = rng.standard_normal((n, t))
    return make_panel(y, t0), schedule, graph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
