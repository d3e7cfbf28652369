"""
Synthetic control weight solvers.

The simplex-constrained fit minimises ``(x1 - X0 g)' V (x1 - X0 g)`` over
``{g >= 0, sum(g) = 1}`` with an accelerated projected gradient method. The
ridge-augmented weights add the closed-form correction

    g_aug = g_scm + X0' (X0 X0' + lam I)^{-1} (x1 - X0 g_scm)

which, because every feature row is centred on the donor mean, already sums
to one and coincides with the minimiser of

    (1 / 2 lam) ||x1 - X0 g||^2 + 1/2 ||g - g_scm||^2   s.t.  sum(g) = 1.

Here ``X0`` is ``k x J`` with one column per donor, so the Gram matrix
``X0 X0'`` is ``k x k``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .errors import GridEndpointWarning, NonFiniteInput, ScalingWarning, SingularGram

SUM_TOL = 1e-9
SCM_MAX_ITER = 10_000
SCM_TOL = 1e-10


@dataclass(frozen=True)
class FeatureBlock:
    """
    Treated-unit features ``x1`` against donor features ``x0``.

    Rows are centred on the donor mean and, unless disabled, divided by the
    donor standard deviation. ``center`` and ``scale`` undo that mapping;
    ``scale`` is 1 for rows left unscaled. The first ``n_outcome_rows`` rows
    are lagged outcomes, any remaining rows are covariates.
    """

    x1: np.ndarray
    x0: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    v_diag: np.ndarray
    n_outcome_rows: int
    donor_indices: Tuple[int, ...] = ()
    row_labels: Tuple[str, ...] = ()

    @classmethod
    def from_arrays(
        cls,
        x1,
        x0,
        v_diag=None,
        standardize: bool = True,
        n_outcome_rows: Optional[int] = None,
        donor_indices: Sequence[int] = (),
        row_labels: Sequence[str] = (),
    ) -> "FeatureBlock":
        x1 = np.asarray(x1, dtype=float).reshape(-1)
        x0 = np.asarray(x0, dtype=float)
        if x0.ndim == 1:
            x0 = x0.reshape(-1, 1)
        k, j = x0.shape
        if x1.shape[0] != k:
            raise ValueError(f"x1 has {x1.shape[0]} rows but x0 has {k}")
        if j < 1:
            raise ValueError("need at least one donor column")
        if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x0))):
            raise NonFiniteInput("feature block contains NaN or infinite entries")
        v = np.ones(k) if v_diag is None else np.asarray(v_diag, dtype=float).reshape(-1)
        if v.shape[0] != k or np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("v_diag must be a finite nonnegative vector with one entry per row")

        center = x0.mean(axis=1)
        scale = np.ones(k)
        labels = tuple(row_labels) or tuple(f"row{r}" for r in range(k))
        if standardize:
            sd = x0.std(axis=1)
            flat = sd <= 1e-12 * np.maximum(1.0, np.abs(center))
            if j > 1 and np.any(flat):
                names = [labels[r] for r in np.flatnonzero(flat)]
                warnings.warn(
                    f"zero donor variance in row(s) {names}; left unscaled",
                    ScalingWarning,
                    stacklevel=2,
                )
            scale = np.where(flat, 1.0, sd)
        x1s = (x1 - center) / scale
        x0s = (x0 - center[:, None]) / scale[:, None]
        return cls(
            x1=x1s,
            x0=x0s,
            center=center,
            scale=scale,
            v_diag=v,
            n_outcome_rows=k if n_outcome_rows is None else int(n_outcome_rows),
            donor_indices=tuple(int(d) for d in donor_indices),
            row_labels=labels,
        )

    @property
    def k(self) -> int:
        return self.x0.shape[0]

    @property
    def n_donors(self) -> int:
        return self.x0.shape[1]

    def subset(self, rows) -> "FeatureBlock":
        """Row subset with the original centring and scaling kept."""
        rows = np.asarray(rows, dtype=int)
        n_out = int(np.sum(rows < self.n_outcome_rows))
        return FeatureBlock(
            x1=self.x1[rows],
            x0=self.x0[rows],
            center=self.center[rows],
            scale=self.scale[rows],
            v_diag=self.v_diag[rows],
            n_outcome_rows=n_out,
            donor_indices=self.donor_indices,
            row_labels=tuple(self.row_labels[r] for r in rows),
        )

    def residual(self, gamma) -> np.ndarray:
        """``x1 - x0 @ gamma`` in scaled units."""
        return self.x1 - self.x0 @ gamma


def assemble_features(panel, target: int, pool, use_covariates=True, v_diag=None, standardize: bool = True) -> FeatureBlock:
    """
    Stack pre-period outcomes and selected covariates for target and donors.

    ``use_covariates`` is a bool or a selection understood by
    ``PanelData.covariate_columns`` ('none', 'all', or a list of names).
    """
    donors = list(pool.donor_indices) if hasattr(pool, "donor_indices") else list(pool)
    if target in donors:
        raise ValueError(f"target {target} appears in its own donor pool")
    sel = "all" if use_covariates is True else ("none" if use_covariates is False else use_covariates)
    cols = panel.covariate_columns(sel)
    t0 = panel.t0
    x1 = np.concatenate([panel.outcomes[target, :t0], panel.covariates[target, cols]])
    x0 = np.vstack([panel.outcomes[donors, :t0].T, panel.covariates[np.ix_(donors, cols)].T])
    labels = [f"y[{s}]" for s in panel.time_labels[:t0]] + [panel.covariate_names[c] for c in cols]
    return FeatureBlock.from_arrays(
        x1, x0, v_diag=v_diag, standardize=standardize, n_outcome_rows=t0,
        donor_indices=donors, row_labels=labels,
    )


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    v = v - v.max()  # shift-invariant; keeps the cumulative sums small
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, n + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    return w / w.sum()


@dataclass(frozen=True)
class WeightVector:
    gamma: np.ndarray
    kind: str
    donor_indices: Tuple[int, ...] = ()
    iterations: int = 0

    @property
    def sum_constraint_residual(self) -> float:
        return float(abs(self.gamma.sum() - 1.0))

    @property
    def min_weight(self) -> float:
        return float(self.gamma.min())

    def as_dict(self):
        return {int(d): float(g) for d, g in zip(self.donor_indices, self.gamma)}


def scm_objective(fb: FeatureBlock, gamma) -> float:
    r = fb.residual(gamma)
    return float(r @ (fb.v_diag * r))


def fixed_point_residual(fb: FeatureBlock, gamma) -> float:
    """``max |g - P(g - grad f(g))|``; zero exactly at a simplex optimum."""
    grad = -2.0 * fb.x0.T @ (fb.v_diag * fb.residual(gamma))
    return float(np.max(np.abs(gamma - simplex_project(gamma - grad))))


def _polish(G, c, gamma):
    """Exact equality-constrained solve on the support of ``gamma``.

    Returns None when the support system has no nonnegative solution.
    """
    support = np.flatnonzero(gamma > 0.0)
    m = support.size
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = G[np.ix_(support, support)]
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    rhs = np.append(c[support], 1.0)
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    if not np.all(np.isfinite(sol)) or np.any(sol[:m] < 0):
        return None
    out = np.zeros_like(gamma)
    out[support] = sol[:m]
    return out / out.sum()


def scm_weights(fb: FeatureBlock, init=None, max_iter: int = SCM_MAX_ITER, tol: float = SCM_TOL) -> WeightVector:
    """
    Simplex-constrained synthetic control weights.

    FISTA with function-value restarts and exact simplex projection. Every
    10 iterations, and whenever the objective improves by less than ``tol``,
    the current support is re-solved exactly; the run stops as soon as that
    solution (or the iterate itself, on a stall) passes the fixed-point
    optimality check. Hard cap of ``max_iter`` iterations.
    """
    x0, x1, v = fb.x0, fb.x1, fb.v_diag
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(x1))):
        raise NonFiniteInput("feature block contains NaN or infinite entries")
    j = x0.shape[1]
    if j == 1:
        return WeightVector(np.ones(1), "scm", fb.donor_indices, 0)

    xv = x0 * v[:, None]
    G = x0.T @ xv
    c = xv.T @ x1
    base = float(x1 @ (v * x1))
    lip = 2.0 * float(np.linalg.eigvalsh(G)[-1])

    def f(g):
        return base - 2.0 * c @ g + g @ G @ g

    if lip <= 0.0:
        return WeightVector(np.full(j, 1.0 / j), "scm", fb.donor_indices, 0)
    step = 1.0 / lip
    gscale = max(1.0, float(np.max(np.abs(c))), lip)

    def fp_residual(g):
        return float(np.max(np.abs(g - simplex_project(g - 2.0 * (G @ g - c)))))

    certified = 1e-10 * gscale
    fuzz = 1e-14 * max(1.0, base)
    g = np.full(j, 1.0 / j) if init is None else simplex_project(np.asarray(init, dtype=float))
    fg = f(g)
    y, t = g.copy(), 1.0
    it = 0
    for it in range(1, max_iter + 1):
        grad_y = 2.0 * (G @ y - c)
        g_new = simplex_project(y - step * grad_y)
        f_new = f(g_new)
        if f_new > fg + fuzz:
            # momentum overshoot: restart from the last accepted point
            y, t = g.copy(), 1.0
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = g_new + ((t - 1.0) / t_new) * (g_new - g)
        improvement = fg - f_new
        g, fg, t = g_new, f_new, t_new
        stalled = improvement < tol
        if stalled or it % 10 == 0:
            # once the support is identified the exact solve finishes the job
            p = _polish(G, c, g)
            if p is not None and f(p) <= fg + 1e-12 * max(1.0, abs(fg)) and fp_residual(p) <= certified:
                g = p
                break
            if stalled and fp_residual(g) <= 1e-9 * gscale:
                break
    return WeightVector(g, "scm", fb.donor_indices, it)


def _gram(fb: FeatureBlock) -> np.ndarray:
    return fb.x0 @ fb.x0.T


def _check_gram_invertible(gram):
    ev = np.linalg.eigvalsh(gram)
    if ev[0] <= 1e-10 * max(ev[-1], 1e-300):
        raise SingularGram(
            "lambda = 0 requires an invertible donor Gram matrix; "
            f"smallest/largest eigenvalue = {ev[0]:.3g}/{ev[-1]:.3g}"
        )


def augmented_weights(fb: FeatureBlock, scm: WeightVector, lam: float) -> WeightVector:
    """Ridge-augmented weights via a Cholesky solve of ``(X0 X0' + lam I) u = r``."""
    lam = float(lam)
    if not lam >= 0.0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    gram = _gram(fb)
    if lam == 0.0:
        _check_gram_invertible(gram)
    r = fb.residual(scm.gamma)
    m = gram + lam * np.eye(fb.k)
    try:
        u = linalg.cho_solve(linalg.cho_factor(m, lower=True, check_finite=False), r, check_finite=False)
    except linalg.LinAlgError:
        raise SingularGram(f"Gram matrix not positive definite at lambda={lam}") from None
    gamma = scm.gamma + fb.x0.T @ u
    return WeightVector(gamma, "augmented", fb.donor_indices)


@dataclass(frozen=True)
class RidgeFit:
    """
    Ridge outcome model ``y_j ~ eta0 + x_j' eta`` across donors.

    The penalty is ``(lam / 2) ||eta||^2`` against half the residual sum of
    squares, the scaling under which the ridge-corrected synthetic control
    equals the augmented-weight estimate exactly.
    """

    lam: float
    coefficients: np.ndarray
    intercept: float
    cv_curve: Optional[List[Tuple[float, float]]] = None

    def predict(self, x) -> np.ndarray:
        return self.intercept + np.asarray(x) @ self.coefficients


def ridge_fit(fb: FeatureBlock, y, lam: float, cv_curve=None) -> RidgeFit:
    y = np.asarray(y, dtype=float)
    gram = _gram(fb)
    if lam == 0.0:
        _check_gram_invertible(gram)
    intercept = float(y.mean())
    rhs = fb.x0 @ (y - intercept)
    eta = linalg.cho_solve(linalg.cho_factor(gram + lam * np.eye(fb.k), lower=True), rhs)
    return RidgeFit(float(lam), eta, intercept, cv_curve)


def default_lambda_grid(fb: FeatureBlock, n: int = 20) -> np.ndarray:
    scale = float(np.mean(np.diag(_gram(fb))))
    if not scale > 0.0:
        scale = 1.0
    return np.logspace(-4, 4, n) * scale


def select_lambda(fb: FeatureBlock, grid=None) -> Tuple[float, List[Tuple[float, float]]]:
    """
    Leave-one-pre-period-out cross-validation over a penalty grid.

    For each held-out outcome row the simplex weights and their ridge
    correction are refit on the remaining rows; the score is the squared
    prediction error on the held-out row in original outcome units. Returns
    the grid value with the smallest mean score, preferring the larger
    penalty on ties, and the ``(lambda, cv_error)`` curve.
    """
    grid = default_lambda_grid(fb) if grid is None else np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0 or np.any(grid < 0):
        raise ValueError("lambda grid must be nonempty and nonnegative")
    if fb.n_outcome_rows < 3:
        raise ValueError("cross-validation needs at least 3 pre-treatment periods")
    if grid.size == 1:
        return float(grid[0]), [(float(grid[0]), float("nan"))]

    errs = np.zeros(grid.size)
    for h in range(fb.n_outcome_rows):
        keep = np.delete(np.arange(fb.k), h)
        sub = fb.subset(keep)
        scm = scm_weights(sub)
        r = sub.residual(scm.gamma)
        evals, vecs = np.linalg.eigh(_gram(sub))
        evals = np.maximum(evals, 0.0)
        rot = vecs.T @ r
        held_x0 = fb.x0[h] @ sub.x0.T @ vecs
        base = fb.x1[h] - fb.x0[h] @ scm.gamma
        for g, lam in enumerate(grid):
            denom = evals + lam
            if np.any(denom <= 1e-10 * max(evals[-1], 1e-300)):
                errs[g] = np.inf
                continue
            pred_err = (base - held_x0 @ (rot / denom)) * fb.scale[h]
            errs[g] += pred_err * pred_err
    errs /= fb.n_outcome_rows

    best = np.min(errs)
    tied = np.flatnonzero(errs <= best + 1e-12 * abs(best))
    pick = tied[np.argmax(grid[tied])]
    order = np.argsort(grid)
    if pick in (order[0], order[-1]):
        warnings.warn(f"cross-validated lambda {grid[pick]:.4g} is a grid endpoint", GridEndpointWarning, stacklevel=2)
    curve = [(float(lam), float(e)) for lam, e in zip(grid, errs)]
    return float(grid[pick]), curve


@dataclass(frozen=True)
class FitDiagnostics:
    pre_rmse: float
    max_abs_weight: float
    l2_weight_norm: float
    imbalance_term: float
    error_bound: Optional[float] = None

    def as_dict(self):
        return {
            "pre_rmse": self.pre_rmse,
            "max_abs_weight": self.max_abs_weight,
            "l2_weight_norm": self.l2_weight_norm,
            "imbalance_term": self.imbalance_term,
            "error_bound": self.error_bound,
        }


def imbalance_term(fb: FeatureBlock, scm_gamma, lam: float) -> float:
    """Norm of the SCM residual shrunk by ``lam / (d^2 + lam)`` along singular directions."""
    u, d, _ = np.linalg.svd(fb.x0, full_matrices=True)
    d2 = np.zeros(fb.k)
    d2[: d.size] = d * d
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.where(d2 > 0, lam / (d2 + lam), 1.0)
    return float(np.linalg.norm(shrink * (u.T @ fb.residual(scm_gamma))))


def diagnostics(
    fb: FeatureBlock,
    w: WeightVector,
    lam: float,
    scm: Optional[WeightVector] = None,
    beta_norm: Optional[float] = None,
    delta: Optional[float] = None,
    sigma: Optional[float] = None,
) -> FitDiagnostics:
    """
    Fit diagnostics for a weight vector.

    The autoregressive error bound ``beta_norm * imbalance + delta * sigma *
    (1 + ||g_aug||)`` is filled in only when all three constants are given.
    """
    g = w.gamma
    n = fb.n_outcome_rows
    resid = fb.residual(g)[:n] * fb.scale[:n]
    pre_rmse = float(np.sqrt(np.mean(resid * resid))) if n else 0.0
    scm_gamma = (scm or w).gamma
    imb = imbalance_term(fb, scm_gamma, lam)
    l2 = float(np.linalg.norm(g))
    bound = None
    if beta_norm is not None and delta is not None and sigma is not None:
        bound = float(beta_norm * imb + delta * sigma * (1.0 + l2))
    return FitDiagnostics(pre_rmse, float(np.max(np.abs(g))), l2, imb, bound)
