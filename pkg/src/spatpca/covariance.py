"""Covariance estimation on top of a fitted eigenbasis.

Given the sample covariance S and an orthonormal basis Phi, the estimator
solves, in closed form,

    min_{Lambda >= 0, sigma2 >= 0}  (1/2) ||S - Phi Lambda Phi' - sigma2 I||_F^2
                                    + gamma ||Phi Lambda Phi'||_*

where ||.||_* is the nuclear norm.  The solution shares eigenvectors with
Phi' S Phi; its eigenvalues are soft-thresholded by sigma2 + gamma.  The
fitted pair (Lambda, sigma2) then yields a positive semidefinite covariance
surface and best linear predictions at arbitrary locations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .solver import EigenBasis, _fix_signs
from .tps import PenaltyOperator, evaluate

__all__ = [
    "SampleCovariance",
    "CovarianceModel",
    "estimate_parameters",
    "objective_value",
    "covariance_at",
    "rotated_eigenfunctions",
    "predict",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SampleCovariance:
    """S = Y'Y / n for centered data; symmetric PSD up to roundoff."""

    s: np.ndarray
    n: int

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("sample covariance must be square")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        tol = 1e-10 * max(1.0, float(np.abs(s).max()))
        if np.abs(s - s.T).max() > tol:
            raise ValueError("sample covariance must be symmetric")
        s = 0.5 * (s + s.T)
        if np.linalg.eigvalsh(s)[0] < -tol:
            raise ValueError("sample covariance must be positive semidefinite")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @classmethod
    def from_data(cls, y) -> "SampleCovariance":
        y = np.asarray(y, dtype=float)
        if y.ndim != 2:
            raise ValueError("data must be an n x p matrix")
        n = y.shape[0]
        return cls(s=y.T @ y / n, n=n)

    @property
    def p(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class CovarianceModel:
    """Closed-form (Lambda, sigma2) estimate for a fixed basis.

    lam is K x K symmetric PSD with eigenvalues lambda_star (nonincreasing)
    and eigenvectors vhat; l_hat counts the eigenvalues kept above the
    noise-plus-shrinkage floor.
    """

    sigma2: float
    lam: np.ndarray
    vhat: np.ndarray
    lambda_star: np.ndarray
    l_hat: int
    gamma: float
    basis: EigenBasis


def _sorted_eig_desc(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # deterministic descending eigendecomposition: canonical column signs,
    # exact ties ordered by the entries of the eigenvectors themselves
    w, v = np.linalg.eigh(m)
    w = w[::-1].copy()
    v = _fix_signs(v[:, ::-1])
    k = w.shape[0]
    order = sorted(range(k), key=lambda j: (-w[j], tuple(v[:, j])))
    return w[order], v[:, order]


def estimate_parameters(s: SampleCovariance, basis: EigenBasis, gamma: float) -> CovarianceModel:
    """Closed-form noise variance and component covariance for a fitted basis.

    With d_1 >= ... >= d_K the eigenvalues of Phi' S Phi:

    * if d_1 > gamma, sigma2 = (tr(S) - sum_{k<=L}(d_k - gamma)) / (p - L)
      for the largest L whose d_L - gamma stays above that average;
      otherwise sigma2 = tr(S) / p;
    * lambda*_k = max(d_k - sigma2 - gamma, 0), reassembled around the
      eigenvectors of Phi' S Phi.

    Requires K < p so the noise variance is identifiable.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    phi = basis.phi
    p, k = phi.shape
    if s.p != p:
        raise ValueError(f"sample covariance is {s.p} x {s.p}, basis has p = {p}")
    if k >= p:
        raise ValueError(f"need k < p to identify the noise variance, got k = {k}, p = {p}")

    m = phi.T @ s.s @ phi
    m = 0.5 * (m + m.T)
    d, v = _sorted_eig_desc(m)
    tr = float(np.trace(s.s))

    l_hat = 0
    sigma2 = tr / p
    if d[0] > gamma:
        head = 0.0
        for ell in range(1, k + 1):
            head += d[ell - 1] - gamma
            candidate = (tr - head) / (p - ell)
            if d[ell - 1] - gamma > candidate:
                l_hat = ell
                sigma2 = candidate
    if sigma2 < 0.0:
        # cannot happen in exact arithmetic; clamp roundoff dust
        logger.warning("clamping tiny negative noise variance %.3e to 0", sigma2)
        sigma2 = 0.0

    lambda_star = np.maximum(d - sigma2 - gamma, 0.0)
    lam = (v * lambda_star) @ v.T
    lam = 0.5 * (lam + lam.T)
    for arr in (lam, v, lambda_star):
        arr.setflags(write=False)
    return CovarianceModel(
        sigma2=float(sigma2),
        lam=lam,
        vhat=v,
        lambda_star=lambda_star,
        l_hat=l_hat,
        gamma=float(gamma),
        basis=basis,
    )


def objective_value(s, phi, lam, sigma2: float, gamma: float) -> float:
    """Penalized fit criterion evaluated at arbitrary feasible (lam, sigma2).

    (1/2)||S - Phi Lam Phi' - sigma2 I||_F^2 + gamma * ||Phi Lam Phi'||_*.
    Exposed so independent minimizers can be compared against
    estimate_parameters.
    """
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    p = s.shape[0]
    low = phi @ lam @ phi.T
    resid = s - low - sigma2 * np.eye(p)
    nuclear = float(np.linalg.svd(low, compute_uv=False).sum())
    return 0.5 * float(np.sum(resid * resid)) + gamma * nuclear


def _basis_at(model: CovarianceModel, penalty: PenaltyOperator, point) -> np.ndarray:
    d = penalty.domain.d
    pt = np.atleast_1d(np.asarray(point, dtype=float))
    if pt.shape != (d,):
        raise ValueError(f"point must have {d} coordinates, got shape {pt.shape}")
    query = pt[None, :]
    return np.array([evaluate(c, penalty.domain, query)[0] for c in model.basis.splines])


def covariance_at(model: CovarianceModel, penalty: PenaltyOperator, s_point, s_star) -> float:
    """Estimated covariance between the process at two locations.

    C(s, s*) = psi(s)' Lambda psi(s*) with psi the spline-interpolated basis.
    Computed in symmetrized form, so swapping arguments returns the identical
    float.
    """
    ps = _basis_at(model, penalty, s_point)
    pt = _basis_at(model, penalty, s_star)
    return 0.5 * (float(ps @ model.lam @ pt) + float(pt @ model.lam @ ps))


def rotated_eigenfunctions(model: CovarianceModel) -> np.ndarray:
    """Basis columns rotated to diagonalize the component covariance: Phi Vhat."""
    return model.basis.phi @ model.vhat


def predict(model: CovarianceModel, penalty: PenaltyOperator, y, query) -> np.ndarray:
    """Best linear prediction of each observation at new locations.

    yhat_i(s0) = psi(s0)' Lambda Phi' (Phi Lambda Phi' + sigma2 I)^{-1} y_i.

    When sigma2 == 0 the bracketed matrix is rank deficient and its
    Moore-Penrose pseudoinverse is used instead, which reduces to projecting
    y_i onto the range of Lambda in basis coordinates.

    Returns an n x q matrix, one row per observation.
    """
    y = np.asarray(y, dtype=float)
    phi = model.basis.phi
    p, k = phi.shape
    if y.ndim != 2 or y.shape[1] != p:
        raise ValueError(f"data must be n x {p}, got {y.shape}")
    q = np.asarray(query, dtype=float)
    if q.ndim == 1:
        q = q[:, None] if penalty.domain.d == 1 else q[None, :]
    psi = np.column_stack([evaluate(c, penalty.domain, q) for c in model.basis.splines])

    if model.sigma2 > 0.0:
        c = phi @ model.lam @ phi.T + model.sigma2 * np.eye(p)
        x = np.linalg.solve(c, y.T)
        return (psi @ (model.lam @ (phi.T @ x))).T

    w, u = np.linalg.eigh(model.lam)
    cutoff = 1e-12 * max(1.0, float(w.max(initial=0.0)))
    keep = w > cutoff
    range_proj = (u[:, keep]) @ (u[:, keep]).T
    return (psi @ (range_proj @ (phi.T @ y.T))).T
