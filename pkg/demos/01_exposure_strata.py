"""
Classify units on a lattice into the four exposure strata and show which
donor pool each estimator draws from.

Run: python demos/01_exposure_strata.py
"""

import warnings

from strata_synth import Stratum, TreatmentSchedule, build_donor_pool, compute_exposure, make_graph

WIDTH, HEIGHT = 8, 5


def draw(exposure):
    marks = {"S11": "#", "S10": "+", "S01": "o", "S00": "."}
    for r in range(HEIGHT):
        print(" ".join(marks[exposure.stratum[r * WIDTH + c].value] for c in range(WIDTH)))


def main():
    graph = make_graph("lattice", WIDTH * HEIGHT, {"width": WIDTH})
    treated = [10, 11, 12, 19, 20, 37]  # a contiguous block plus one isolated unit
    schedule = TreatmentSchedule.simultaneous(graph.n_units, treated, t0=7)

    exposure = compute_exposure(schedule, graph)
    print("any treated neighbour counts as exposure")
    print("# treated+exposed  + treated only  o exposed control  . clean control")
    draw(exposure)
    print(exposure.counts())

    strict = compute_exposure(schedule, graph, neighbor_threshold=0.5)
    print("\nexposed only when at least half the neighbours are treated")
    draw(strict)
    print(strict.counts())

    target = exposure.members(Stratum.S11)[0]
    print(f"\ndonor pools for unit {target}:")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for kind in ("direct", "total", "naive"):
            pool = build_donor_pool(target, kind, exposure, graph)
            print(f"  {kind:6s} {len(pool.donor_indices):2d} donors: {list(pool.donor_indices)}")


if __name__ == "__main__":
    main()
