"""Cross-validated selection of the penalty weights and the shrinkage level.

The (tau1, tau2) criterion scores held-out reconstruction error of the basis
fitted on the training folds; the gamma criterion scores how well the fitted
covariance built from training folds matches the held-out sample covariance.
Sweeps warm start along increasing tau2 and reuse one spectral factorization
per (fold, tau1) cell, which is where nearly all of the compute goes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .covariance import SampleCovariance, estimate_parameters
from .solver import SolverConfig, fit, precompute_quadratic
from .tps import PenaltyOperator

__all__ = [
    "FoldAssignment",
    "TuningGrid",
    "CvReport",
    "partition_folds",
    "default_log_grid",
    "gamma_grid",
    "cv_tau",
    "cv_gamma",
    "restrict_grid",
]


def default_log_grid(count: int, low: float = 1.0, high: float = 1e3) -> np.ndarray:
    """{0} followed by count-1 log-spaced values in [low, high], endpoints exact."""
    if count < 2:
        return np.array([0.0])
    vals = np.geomspace(low, high, count - 1)
    vals[0] = low
    vals[-1] = high
    return np.concatenate([[0.0], vals])


@dataclass(frozen=True)
class FoldAssignment:
    """Balanced random partition: assignment[i] in 1..m, sizes differ by <= 1."""

    assignment: np.ndarray
    m: int
    seed: int

    @property
    def n(self) -> int:
        return self.assignment.shape[0]


def partition_folds(n: int, m: int, seed: int) -> FoldAssignment:
    """Seeded random balanced split of n row indices into m folds."""
    if m < 2:
        raise ValueError("need at least 2 folds")
    if m > n:
        raise ValueError(f"cannot split {n} rows into {m} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    labels = np.empty(n, dtype=int)
    base, rem = divmod(n, m)
    start = 0
    for fold in range(m):
        size = base + (1 if fold < rem else 0)
        labels[perm[start : start + size]] = fold + 1
        start += size
    labels.setflags(write=False)
    return FoldAssignment(assignment=labels, m=m, seed=seed)


@dataclass(frozen=True)
class TuningGrid:
    """Candidate penalty values and the shrinkage-grid recipe.

    Defaults: tau1 is {0} plus 10 log-spaced values in [1, 1e3]; tau2 the
    same with 30 log-spaced values; the gamma grid has gamma_value_count
    points from 0 up to the leading eigenvalue of Phi' S Phi, with lower end
    1 unless gamma_lower_fraction scales it relative to that eigenvalue.
    """

    tau1_values: np.ndarray = field(default_factory=lambda: default_log_grid(11))
    tau2_values: np.ndarray = field(default_factory=lambda: default_log_grid(31))
    gamma_value_count: int = 11
    gamma_lower_fraction: float | None = None
    m: int = 5

    def __post_init__(self):
        for name in ("tau1_values", "tau2_values"):
            vals = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if vals.size == 0:
                raise ValueError(f"{name} must be nonempty")
            if np.any(vals < 0) or not np.all(np.isfinite(vals)):
                raise ValueError(f"{name} must be finite and nonnegative")
            if np.any(np.diff(vals) <= 0) and vals.size > 1:
                raise ValueError(f"{name} must be strictly ascending")
            vals = vals.copy()
            vals.setflags(write=False)
            object.__setattr__(self, name, vals)
        if self.gamma_value_count < 1:
            raise ValueError("gamma_value_count must be at least 1")
        if self.gamma_lower_fraction is not None and not 0 < self.gamma_lower_fraction <= 1:
            raise ValueError("gamma_lower_fraction must lie in (0, 1]")
        if self.m < 2:
            raise ValueError("need at least 2 folds")


@dataclass(frozen=True)
class CvReport:
    """Criterion surface over a grid plus the selected point.

    kind is "tau" (criterion indexed tau1 x tau2, selected a pair) or
    "gamma" (one-dimensional).  converged mirrors the criterion shape and is
    False wherever some fold fit hit the iteration cap.
    """

    kind: str
    criterion: np.ndarray
    selected: tuple[float, float] | float
    folds: FoldAssignment
    converged: np.ndarray
    tau1_values: np.ndarray | None = None
    tau2_values: np.ndarray | None = None
    gamma_values: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "criterion": self.criterion.tolist(),
            "selected": list(self.selected) if self.kind == "tau" else self.selected,
            "converged": self.converged.tolist(),
            "folds": {
                "m": self.folds.m,
                "seed": self.folds.seed,
                "assignment": self.folds.assignment.tolist(),
            },
        }
        for name in ("tau1_values", "tau2_values", "gamma_values"):
            vals = getattr(self, name)
            if vals is not None:
                out[name] = vals.tolist()
        return out


def _check_folds(folds: FoldAssignment, n: int):
    if folds.n != n:
        raise ValueError(f"fold assignment covers {folds.n} rows, data has {n}")


def cv_tau(y, penalty: PenaltyOperator, k: int, grid: TuningGrid, folds: FoldAssignment) -> CvReport:
    """M-fold score of every (tau1, tau2) cell by held-out reconstruction error.

    criterion[i, j] = (1/M) sum_m ||Y_m - Y_m Phi Phi'||_F^2 with Phi fitted
    on the other folds at (tau1_i, tau2_j).  Ties select the smallest
    (tau1, tau2) in lexicographic order; NaN cells are skipped.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    _check_folds(folds, n)
    t1s, t2s = grid.tau1_values, grid.tau2_values
    crit = np.zeros((t1s.size, t2s.size))
    conv = np.ones((t1s.size, t2s.size), dtype=bool)
    for m in range(1, folds.m + 1):
        mask = folds.assignment == m
        y_tr, y_va = y[~mask], y[mask]
        for i, t1 in enumerate(t1s):
            quad = precompute_quadratic(y_tr, penalty, t1)
            warm = None
            for j, t2 in enumerate(t2s):
                cfg = SolverConfig(tau1=float(t1), tau2=float(t2), k=k)
                basis = fit(y_tr, penalty, cfg, warm_start=warm, quad=quad)
                warm = basis.phi
                proj = y_va @ basis.phi
                crit[i, j] += float(np.sum((y_va - proj @ basis.phi.T) ** 2))
                conv[i, j] &= basis.converged
    crit /= folds.m

    best = None
    for i in range(t1s.size):
        for j in range(t2s.size):
            v = crit[i, j]
            if np.isnan(v):
                continue
            if best is None or v < crit[best]:
                best = (i, j)
    if best is None:
        raise ValueError("cross-validation criterion is NaN everywhere")
    selected = (float(t1s[best[0]]), float(t2s[best[1]]))
    return CvReport(
        kind="tau",
        criterion=crit,
        selected=selected,
        folds=folds,
        converged=conv,
        tau1_values=t1s,
        tau2_values=t2s,
    )


def gamma_grid(dhat1: float, count: int, lower_fraction: float | None = None) -> np.ndarray:
    """{0} plus count-1 log-spaced values up to dhat1.

    The lower end is 1, or dhat1 * lower_fraction when given.  Degenerate
    cases collapse: dhat1 <= lower end yields {0, dhat1}; dhat1 <= 0 yields
    {0}.
    """
    if dhat1 <= 0.0:
        return np.array([0.0])
    low = dhat1 * lower_fraction if lower_fraction is not None else 1.0
    if dhat1 <= low or count < 2:
        return np.unique(np.array([0.0, float(dhat1)]))
    vals = np.geomspace(low, dhat1, count - 1)
    vals[0] = low
    vals[-1] = dhat1
    return np.concatenate([[0.0], vals])


def cv_gamma(y, basis, grid: TuningGrid, folds: FoldAssignment) -> CvReport:
    """M-fold score of the shrinkage level for a basis fitted on all rows.

    Each fold re-estimates (Lambda, sigma2) from the training-fold sample
    covariance and scores ||S_m - Phi Lambda Phi' - sigma2 I||_F^2 against
    the held-out sample covariance.  Ties select the smallest gamma.
    """
    y = np.asarray(y, dtype=float)
    n, p = y.shape
    _check_folds(folds, n)
    phi = basis.phi
    s_full = SampleCovariance.from_data(y)
    mhat = phi.T @ s_full.s @ phi
    dhat1 = float(np.linalg.eigvalsh(0.5 * (mhat + mhat.T))[-1])
    gammas = gamma_grid(dhat1, grid.gamma_value_count, grid.gamma_lower_fraction)

    crit = np.zeros(gammas.size)
    eye = np.eye(p)
    for m in range(1, folds.m + 1):
        mask = folds.assignment == m
        s_tr = SampleCovariance.from_data(y[~mask])
        s_va = SampleCovariance.from_data(y[mask]).s
        for gi, g in enumerate(gammas):
            model = estimate_parameters(s_tr, basis, float(g))
            resid = s_va - phi @ model.lam @ phi.T - model.sigma2 * eye
            crit[gi] += float(np.sum(resid * resid))
    crit /= folds.m

    best = None
    for gi in range(gammas.size):
        if np.isnan(crit[gi]):
            continue
        if best is None or crit[gi] < crit[best]:
            best = gi
    if best is None:
        raise ValueError("cross-validation criterion is NaN everywhere")
    return CvReport(
        kind="gamma",
        criterion=crit,
        selected=float(gammas[best]),
        folds=folds,
        converged=np.ones(gammas.size, dtype=bool),
        gamma_values=gammas,
    )


def restrict_grid(grid: TuningGrid, tau1=None, tau2=None) -> TuningGrid:
    """Pin one or both penalty axes to fixed values, keeping the rest."""
    changes = {}
    if tau1 is not None:
        changes["tau1_values"] = np.array([float(tau1)])
    if tau2 is not None:
        changes["tau2_values"] = np.array([float(tau2)])
    return replace(grid, **changes) if changes else grid
