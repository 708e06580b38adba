"""Independent oracles the tests compare against.

Everything here is deliberately written from first principles with different
algorithms than the package uses: spline energies come from scipy's natural
cubic spline and an exact piecewise integral, the covariance-parameter
minimizer is a projected gradient method, and subspace distances go through
an SVD of the QR factors.  Slow and simple on purpose.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline


def principal_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Largest principal angle (radians) between the column spaces of a and b."""
    qa, _ = np.linalg.qr(np.asarray(a, dtype=float))
    qb, _ = np.linalg.qr(np.asarray(b, dtype=float))
    sv = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return float(np.arccos(np.clip(sv.min(), -1.0, 1.0)))


def natural_spline_energy(x: np.ndarray, values: np.ndarray) -> float:
    """integral of (f'')^2 for the natural cubic spline through (x_i, values_i).

    f'' is piecewise linear with knot values m_i, so each interval of width h
    contributes h/3 * (m_i^2 + m_i m_{i+1} + m_{i+1}^2) exactly.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    spline = CubicSpline(x, np.asarray(values, dtype=float), bc_type="natural")
    m = spline(x, 2)
    h = np.diff(x)
    return float(np.sum(h / 3.0 * (m[:-1] ** 2 + m[:-1] * m[1:] + m[1:] ** 2)))


def shrinkage_objective(s, phi, lam, sigma2: float, gamma: float) -> float:
    """(1/2)||S - Phi Lam Phi' - sigma2 I||_F^2 + gamma tr(Lam), Lam PSD assumed."""
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    resid = s - phi @ lam @ phi.T - sigma2 * np.eye(s.shape[0])
    return 0.5 * float(np.sum(resid * resid)) + gamma * float(np.trace(lam))


def _project_psd(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    return (v * np.clip(w, 0.0, None)) @ v.T


def minimize_shrinkage_objective(s, phi, gamma: float, iterations: int = 4000):
    """Projected gradient minimizer over (Lam PSD, sigma2 >= 0).

    The objective is jointly convex and, for K < p, strongly convex, so a
    fixed step below 1/(p + 2) converges linearly from any start.  Runs from
    two starts and returns the better (lam, sigma2, value).
    """
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    p, k = phi.shape
    step = 1.0 / (p + 2.0)
    eye_p = np.eye(p)
    m = phi.T @ s @ phi

    starts = [
        (np.zeros((k, k)), 0.0),
        (_project_psd(m), float(np.trace(s)) / p),
    ]
    best = None
    for lam, sigma2 in starts:
        lam = lam.copy()
        for _ in range(iterations):
            resid = s - phi @ lam @ phi.T - sigma2 * eye_p
            grad_lam = -(phi.T @ resid @ phi) + gamma * np.eye(k)
            grad_sigma2 = -float(np.trace(resid))
            lam = _project_psd(lam - step * grad_lam)
            sigma2 = max(0.0, sigma2 - step * grad_sigma2)
        value = shrinkage_objective(s, phi, lam, sigma2, gamma)
        if best is None or value < best[2]:
            best = (lam, sigma2, value)
    return best


def random_orthonormal(rng: np.random.Generator, p: int, k: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((p, k)))
    return q * np.sign(np.diag(r))


def random_psd(rng: np.random.Generator, p: int, rank: int | None = None) -> np.ndarray:
    r = rank if rank is not None else p
    a = rng.standard_normal((p, r))
    return a @ a.T / r


def smooth_rank1_data(
    rng: np.random.Generator,
    x: np.ndarray,
    n: int,
    signal_sd: float = 3.0,
    noise_sd: float = 1.0,
):
    """(y, phi) with y = xi phi' + noise and phi a unit-norm Gaussian bump."""
    x = np.asarray(x, dtype=float).reshape(-1)
    phi = np.exp(-(x**2))
    phi /= np.linalg.norm(phi)
    xi = rng.normal(0.0, signal_sd, size=(n, 1))
    y = xi @ phi[None, :] + rng.normal(0.0, noise_sd, size=(n, x.size))
    return y, phi
