"""
Panel data model, neighbourhood exposure strata and donor pools.

Units are addressed internally by integer index ``0..N-1`` in the order of
``PanelData.unit_ids``. Time periods are 1-based in the treatment schedule
(``adoption_time = t0 + 1``) to match the usual panel notation, but arrays
are plain 0-based numpy arrays: column ``t0`` is the first post period.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    AsymmetricAdjacency,
    EmptyDonorPool,
    PanelFormatError,
    SmallDonorPool,
    StratumMismatch,
)

DEFAULT_MIN_POOL_SIZE = 5


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PanelData:
    """
    Balanced panel of outcomes with optional time-invariant covariates.

    Parameters
    ----------
    outcomes : array of shape (N, T)
        Outcome matrix, one row per unit.
    covariates : array of shape (N, p)
        Unit covariates; ``p`` may be zero.
    unit_ids : sequence of str
        Distinct unit labels.
    time_labels : sequence of str
        Ordered time labels, length ``T``.
    t0 : int
        Number of pre-treatment periods, ``2 <= t0 < T``.
    covariate_names : sequence of str, optional
        Column names for ``covariates``; defaults to ``z1..zp``.
    """

    outcomes: np.ndarray
    covariates: np.ndarray
    unit_ids: Tuple[str, ...]
    time_labels: Tuple[str, ...]
    t0: int
    covariate_names: Tuple[str, ...] = ()
    standardize_covariates: bool = True

    def __post_init__(self):
        y = _frozen(self.outcomes)
        if y.ndim != 2:
            raise PanelFormatError("outcomes must be a 2-D (units x time) matrix")
        n, t = y.shape
        z = np.asarray(self.covariates, dtype=float)
        if z.size == 0:
            z = np.zeros((n, 0))
        z = _frozen(z)
        if z.ndim != 2 or z.shape[0] != n:
            raise PanelFormatError(f"covariates must have {n} rows, got shape {z.shape}")
        if not np.all(np.isfinite(y)):
            raise PanelFormatError("missing outcome: outcome matrix contains NaN/inf cells")
        if not np.all(np.isfinite(z)):
            raise PanelFormatError("covariate matrix contains NaN/inf cells")
        ids = tuple(str(u) for u in self.unit_ids)
        if len(ids) != n:
            raise PanelFormatError(f"expected {n} unit ids, got {len(ids)}")
        if len(set(ids)) != n:
            raise PanelFormatError("unit_ids must be distinct")
        times = tuple(str(s) for s in self.time_labels)
        if len(times) != t:
            raise PanelFormatError(f"expected {t} time labels, got {len(times)}")
        if len(set(times)) != t:
            raise PanelFormatError("time_labels must be distinct")
        t0 = int(self.t0)
        if not 2 <= t0 < t:
            raise PanelFormatError(
                f"t0 must satisfy 2 <= t0 < T (T={t}), got t0={t0}"
            )
        names = tuple(self.covariate_names) or tuple(f"z{j + 1}" for j in range(z.shape[1]))
        if len(names) != z.shape[1]:
            raise PanelFormatError("covariate_names length does not match covariates")
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "covariates", z)
        object.__setattr__(self, "unit_ids", ids)
        object.__setattr__(self, "time_labels", times)
        object.__setattr__(self, "t0", t0)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n_units(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_periods(self) -> int:
        return self.outcomes.shape[1]

    @property
    def n_post(self) -> int:
        return self.n_periods - self.t0

    def index_of(self, unit_id: str) -> int:
        try:
            return self.unit_ids.index(str(unit_id))
        except ValueError:
            raise KeyError(f"unknown unit id {unit_id!r}") from None

    def covariate_columns(self, selection) -> np.ndarray:
        """Resolve a covariate selection ('none', 'all', or names) to column indices."""
        if selection is None or selection == "none":
            return np.arange(0)
        if selection == "all":
            return np.arange(self.covariates.shape[1])
        cols = []
        for name in selection:
            if name not in self.covariate_names:
                raise KeyError(f"unknown covariate {name!r}; have {list(self.covariate_names)}")
            cols.append(self.covariate_names.index(name))
        return np.asarray(cols, dtype=int)


@dataclass(frozen=True)
class TreatmentSchedule:
    """Simultaneous, absorbing treatment: every treated unit adopts at ``t0 + 1``."""

    n_units: int
    treated_units: FrozenSet[int]
    adoption_time: int

    def __post_init__(self):
        treated = frozenset(int(i) for i in self.treated_units)
        bad = [i for i in treated if not 0 <= i < self.n_units]
        if bad:
            raise PanelFormatError(f"treated unit index out of range: {sorted(bad)}")
        object.__setattr__(self, "treated_units", treated)

    @classmethod
    def simultaneous(cls, n_units: int, treated: Iterable[int], t0: int) -> "TreatmentSchedule":
        return cls(n_units, frozenset(treated), t0 + 1)

    def is_treated(self, i: int) -> bool:
        return i in self.treated_units

    def indicator(self, n_periods: int) -> np.ndarray:
        """The N x T matrix of treatment indicators A_it."""
        a = np.zeros((self.n_units, n_periods), dtype=int)
        idx = sorted(self.treated_units)
        a[idx, self.adoption_time - 1:] = 1
        return a


@dataclass(frozen=True)
class AdjacencyGraph:
    """Undirected, irreflexive hop-1 neighbourhoods indexed by unit."""

    neighbor_sets: Tuple[FrozenSet[int], ...]

    def __post_init__(self):
        sets = tuple(frozenset(int(j) for j in s) for s in self.neighbor_sets)
        n = len(sets)
        for i, s in enumerate(sets):
            if i in s:
                raise PanelFormatError(f"unit {i} lists itself as a neighbour")
            for j in s:
                if not 0 <= j < n:
                    raise PanelFormatError(f"neighbour index {j} of unit {i} out of range")
                if i not in sets[j]:
                    raise PanelFormatError(f"adjacency is not symmetric: {i}->{j} without {j}->{i}")
        object.__setattr__(self, "neighbor_sets", sets)

    @classmethod
    def from_edges(cls, n_units: int, edges: Iterable[Tuple[int, int]], warn: bool = True) -> "AdjacencyGraph":
        """Build from an edge list, symmetrising one-directional edges.

        Self-loops are dropped. A warning is emitted when at least one edge
        was listed in a single direction only.
        """
        directed = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                continue
            for k in (a, b):
                if not 0 <= k < n_units:
                    raise PanelFormatError(f"edge ({a}, {b}) references unknown unit index {k}")
            directed.add((a, b))
        one_way = [(a, b) for a, b in directed if (b, a) not in directed]
        if one_way and warn:
            warnings.warn(
                f"{len(one_way)} edge(s) listed in one direction only; adjacency symmetrised",
                AsymmetricAdjacency,
                stacklevel=2,
            )
        sets: List[set] = [set() for _ in range(n_units)]
        for a, b in directed:
            sets[a].add(b)
            sets[b].add(a)
        return cls(tuple(frozenset(s) for s in sets))

    @property
    def n_units(self) -> int:
        return len(self.neighbor_sets)

    def neighbors(self, i: int) -> FrozenSet[int]:
        return self.neighbor_sets[i]

    def edges(self) -> List[Tuple[int, int]]:
        return [(i, j) for i, s in enumerate(self.neighbor_sets) for j in sorted(s) if i < j]


class Stratum(str, Enum):
    S11 = "S11"
    S10 = "S10"
    S01 = "S01"
    S00 = "S00"

    @classmethod
    def of(cls, treated: bool, q: int) -> "Stratum":
        return {
            (True, 1): cls.S11,
            (True, 0): cls.S10,
            (False, 1): cls.S01,
            (False, 0): cls.S00,
        }[(bool(treated), int(q))]


@dataclass(frozen=True)
class ExposureTable:
    """Per-unit exposure indicator ``q`` and the stratum it implies."""

    stratum: Tuple[Stratum, ...]
    q_values: Tuple[int, ...]
    n_neighbors: Tuple[int, ...] = ()
    n_treated_neighbors: Tuple[int, ...] = ()

    def members(self, s: Stratum) -> List[int]:
        return [i for i, si in enumerate(self.stratum) if si == s]

    def counts(self) -> Dict[str, int]:
        return {s.value: len(self.members(s)) for s in Stratum}


def compute_exposure(
    schedule: TreatmentSchedule,
    graph: AdjacencyGraph,
    neighbor_threshold: Optional[float] = None,
) -> ExposureTable:
    """
    Classify every unit by own treatment and neighbourhood exposure.

    With ``neighbor_threshold=None`` a unit is exposed (q=1) when any
    neighbour is treated. With ``theta`` in (0, 1] it is exposed when the
    treated fraction of its neighbours is ``>= theta``. Units without
    neighbours are never exposed.
    """
    if schedule.n_units != graph.n_units:
        raise PanelFormatError(
            f"schedule covers {schedule.n_units} units but graph has {graph.n_units}"
        )
    if neighbor_threshold is not None and not 0.0 < neighbor_threshold <= 1.0:
        raise ValueError(f"neighbor_threshold must lie in (0, 1], got {neighbor_threshold}")
    treated = schedule.treated_units
    strata, qs, n_nb, n_tr = [], [], [], []
    for i in range(graph.n_units):
        nb = graph.neighbor_sets[i]
        k = len(nb & treated)
        if not nb:
            q = 0
        elif neighbor_threshold is None:
            q = int(k > 0)
        else:
            q = int(k / len(nb) >= neighbor_threshold)
        strata.append(Stratum.of(i in treated, q))
        qs.append(q)
        n_nb.append(len(nb))
        n_tr.append(k)
    return ExposureTable(tuple(strata), tuple(qs), tuple(n_nb), tuple(n_tr))


class PoolKind(str, Enum):
    DIRECT = "direct"
    TOTAL = "total"
    NAIVE = "naive"


@dataclass(frozen=True)
class DonorPool:
    target_unit: int
    effect_kind: PoolKind
    donor_indices: Tuple[int, ...]

    def __len__(self):
        return len(self.donor_indices)


def build_donor_pool(
    target: int,
    kind,
    exposure: ExposureTable,
    graph: Optional[AdjacencyGraph] = None,
    min_size: int = DEFAULT_MIN_POOL_SIZE,
) -> DonorPool:
    """
    Donor pool for one target unit.

    ``direct`` draws from S01 minus the target's neighbours, ``total`` from
    S00, and ``naive`` from every untreated unit. Donors are listed in unit
    order. Raises ``EmptyDonorPool`` when nothing qualifies and warns with
    ``SmallDonorPool`` when fewer than ``min_size`` donors remain.
    """
    kind = PoolKind(kind)
    s = exposure.stratum[target]
    if kind in (PoolKind.DIRECT, PoolKind.TOTAL):
        if s != Stratum.S11:
            raise StratumMismatch(
                f"{kind.value} effect requires target in S11; unit {target} is in {s.value}"
            )
    elif s not in (Stratum.S11, Stratum.S10):
        raise StratumMismatch(f"naive effect requires a treated target; unit {target} is in {s.value}")

    if kind == PoolKind.DIRECT:
        if graph is None:
            raise ValueError("direct pool needs the adjacency graph")
        nb = graph.neighbor_sets[target]
        donors = [j for j in exposure.members(Stratum.S01) if j not in nb]
    elif kind == PoolKind.TOTAL:
        donors = exposure.members(Stratum.S00)
    else:
        donors = [j for j, sj in enumerate(exposure.stratum) if sj in (Stratum.S01, Stratum.S00)]
    donors = [j for j in donors if j != target]

    if not donors:
        raise EmptyDonorPool(f"no eligible {kind.value} donors for unit {target}")
    if len(donors) < min_size:
        warnings.warn(
            f"{kind.value} pool for unit {target} has {len(donors)} donors (< {min_size})",
            SmallDonorPool,
            stacklevel=2,
        )
    return DonorPool(target, kind, tuple(donors))
