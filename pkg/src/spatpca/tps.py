"""Thin-plate spline machinery: radial kernel, bending-energy penalty, interpolation.

A field sampled at p fixed sites is smoothed by penalizing the bending energy
of the spline interpolating it.  That energy is a quadratic form

    v' omega v  =  roughness of the spline through (s_i, v_i),

where ``omega`` is the upper-left p x p block of the inverse of the bordered
kernel system assembled in :func:`build_penalty`.  Downstream code works with
``omega`` directly and only touches spline coefficients when a component has
to be evaluated off the observation sites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

__all__ = [
    "ConditioningError",
    "SpatialDomain",
    "PenaltyOperator",
    "SplineCoefficients",
    "kernel",
    "build_penalty",
    "solve_coefficients",
    "evaluate",
]


class ConditioningError(ValueError):
    """The bordered interpolation system is numerically singular.

    ``pair`` holds the indices of the closest (or coincident) pair of sites,
    which is the usual culprit.
    """

    def __init__(self, message: str, pair: tuple[int, int] | None = None):
        super().__init__(message)
        self.pair = pair


@dataclass(frozen=True)
class SpatialDomain:
    """Fixed set of study sites in R^d with d in {1, 2, 3}.

    Parameters
    ----------
    locations : ndarray, shape (p, d)
        Site coordinates, one row per site.  A 1-d array is accepted as a
        column of one-dimensional sites.

    Notes
    -----
    At least d + 2 sites are required so that the affine part of the spline
    is identifiable alongside the radial part.
    """

    locations: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        if loc.ndim == 1:
            loc = loc[:, None]
        if loc.ndim != 2:
            raise ValueError("locations must be a p x d matrix")
        p, d = loc.shape
        if d not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {d}")
        if p < d + 2:
            raise ValueError(f"need at least d + 2 = {d + 2} sites, got {p}")
        if not np.all(np.isfinite(loc)):
            raise ValueError("site coordinates must be finite")
        loc = loc.copy()
        loc.setflags(write=False)
        object.__setattr__(self, "locations", loc)

    @property
    def p(self) -> int:
        return self.locations.shape[0]

    @property
    def d(self) -> int:
        return self.locations.shape[1]


@dataclass(frozen=True)
class PenaltyOperator:
    """Bending-energy penalty and interpolation solver for one domain.

    Attributes
    ----------
    domain : SpatialDomain
    omega : ndarray, shape (p, p)
        Symmetric positive semidefinite; annihilates affine fields
        (``omega @ e == 0``) and satisfies ``v' omega v == a' g a`` for the
        radial coefficients ``a`` interpolating ``v``.
    g : ndarray, shape (p, p)
        Kernel Gram matrix g(||s_i - s_j||).
    e : ndarray, shape (p, d + 1)
        Affine design, row i equal to (1, s_i').
    bordered_factor : tuple
        LU factorization of [[g, e], [e', 0]] reused by
        :func:`solve_coefficients`.
    """

    domain: SpatialDomain
    omega: np.ndarray
    g: np.ndarray
    e: np.ndarray
    bordered_factor: tuple


@dataclass(frozen=True)
class SplineCoefficients:
    """Radial weights ``a`` (length p, with e'a = 0) and affine part ``b``."""

    a: np.ndarray
    b: np.ndarray


def kernel(r, d: int):
    """Radial generator of thin-plate splines in R^d.

    g(r) = r^2 log(r) / (16 pi)                          for d = 2
    g(r) = Gamma(d/2 - 2) r^(4 - d) / (16 pi^(d/2))      for d = 1, 3

    with g(0) = 0 by continuity.  The d = 3 coefficient is negative because
    Gamma(-1/2) < 0; that is the correct bending-energy generator, not a sign
    slip.  For d = 1 the formula reduces to r^3 / 12.

    Parameters
    ----------
    r : float or ndarray
        Nonnegative distances.
    d : int
        Spatial dimension, 1, 2 or 3.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"kernel defined for d in {{1, 2, 3}}, got {d}")
    arr = np.asarray(r, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr < 0):
        raise ValueError("distances must be nonnegative")
    if d == 2:
        safe = np.where(arr > 0.0, arr, 1.0)
        out = np.where(arr > 0.0, arr * arr * np.log(safe), 0.0) / (16.0 * math.pi)
    else:
        coef = math.gamma(d / 2.0 - 2.0) / (16.0 * math.pi ** (d / 2.0))
        out = coef * arr ** (4 - d)
    return float(out[0]) if scalar else out


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def build_penalty(domain: SpatialDomain) -> PenaltyOperator:
    """Assemble the bending-energy penalty for ``domain``.

    ``omega`` is the upper-left p x p block of the inverse of the bordered
    system [[g, e], [e', 0]], computed in null-space form: with q2 an
    orthonormal basis of the complement of col(e), omega equals
    q2 (q2' g q2)^{-1} q2', which annihilates affine fields to machine
    precision.  The result is symmetrized, and its spectrum clipped at zero
    only if roundoff pushed an eigenvalue below -1e-10.

    Raises
    ------
    ConditioningError
        If two sites coincide or the interpolation system is singular.
    """
    loc = domain.locations
    p, d = loc.shape
    dist = _pairwise_distances(loc, loc)
    off = dist + np.diag(np.full(p, np.inf))
    i, j = np.unravel_index(int(np.argmin(off)), off.shape)
    if off[i, j] == 0.0:
        raise ConditioningError(
            f"sites {i} and {j} coincide; the interpolation system is singular",
            pair=(i, j),
        )

    g = kernel(dist, d)
    e = np.hstack([np.ones((p, 1)), loc])
    m = np.zeros((p + d + 1, p + d + 1))
    m[:p, :p] = g
    m[:p, p:] = e
    m[p:, :p] = e.T

    q_full, _ = np.linalg.qr(e, mode="complete")
    q2 = q_full[:, d + 1 :]
    core = q2.T @ g @ q2
    core = 0.5 * (core + core.T)
    try:
        factor = lu_factor(m)
        omega = q2 @ cho_solve(cho_factor(core), q2.T)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConditioningError(
            f"interpolation system is singular; closest sites are {i} and {j} "
            f"at distance {off[i, j]:.6g}",
            pair=(i, j),
        ) from exc
    if not np.all(np.isfinite(omega)):
        raise ConditioningError(
            f"interpolation system is numerically singular; closest sites are "
            f"{i} and {j} at distance {off[i, j]:.6g}",
            pair=(i, j),
        )

    omega = 0.5 * (omega + omega.T)
    if np.linalg.eigvalsh(omega)[0] < -1e-10:
        # roundoff produced real negative curvature; project back onto the cone
        w, u = np.linalg.eigh(omega)
        omega = (u * np.clip(w, 0.0, None)) @ u.T
        omega = 0.5 * (omega + omega.T)

    for arr in (omega, g, e):
        arr.setflags(write=False)
    return PenaltyOperator(domain=domain, omega=omega, g=g, e=e, bordered_factor=factor)


def solve_coefficients(penalty: PenaltyOperator, values) -> SplineCoefficients:
    """Interpolating spline through (s_i, values_i), via the stored factorization."""
    p = penalty.domain.p
    d = penalty.domain.d
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.shape != (p,):
        raise ValueError(f"values must have length p = {p}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    rhs = np.concatenate([v, np.zeros(d + 1)])
    sol = lu_solve(penalty.bordered_factor, rhs)
    if not np.all(np.isfinite(sol)):
        raise ConditioningError("interpolation solve produced non-finite coefficients")
    return SplineCoefficients(a=sol[:p].copy(), b=sol[p:].copy())


def evaluate(coeffs: SplineCoefficients, domain: SpatialDomain, query) -> np.ndarray:
    """Evaluate the spline at query points.

    phi(s) = sum_i a_i g(||s - s_i||) + b_0 + b_{1:}' s

    Parameters
    ----------
    query : ndarray
        Shape (q, d).  A 1-d array is read as q one-dimensional points when
        d = 1, otherwise as a single d-dimensional point.

    Returns
    -------
    ndarray, shape (q,)
    """
    q = np.asarray(query, dtype=float)
    if q.ndim == 1:
        q = q[:, None] if domain.d == 1 else q[None, :]
    if q.ndim != 2 or q.shape[1] != domain.d:
        raise ValueError(f"query must be q x {domain.d}, got shape {np.shape(query)}")
    if not np.all(np.isfinite(q)):
        raise ValueError("query points must be finite")
    r = _pairwise_distances(q, domain.locations)
    return kernel(r, domain.d) @ coeffs.a + coeffs.b[0] + q @ coeffs.b[1:]
