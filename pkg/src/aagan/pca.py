"""Two-component PCA by power iteration with deflation."""

from __future__ import annotations

import numpy as np


class DegenerateDataError(ValueError):
    pass


def _top_eigpair(cov, rng, tol, max_iter):
    v = rng.standard_normal(cov.shape[0])
    v /= np.linalg.norm(v)
    lam = float(v @ cov @ v)
    for _ in range(max_iter):
        w = cov @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, v
        w /= nw
        lam_new = float(w @ cov @ w)
        if np.linalg.norm(w - v) < tol or abs(lam_new - lam) <= tol * abs(lam_new):
            v, lam = w, lam_new
            # a few extra sweeps tighten the vector once the value has settled
            for _ in range(50):
                w = cov @ v
                w /= np.linalg.norm(w)
                v = w
            return float(v @ cov @ v), v
        v, lam = w, lam_new
    return lam, v


def _orient(v):
    # deterministic sign: largest-magnitude coordinate positive
    return v if v[np.argmax(np.abs(v))] >= 0 else -v


def principal_axes(points: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000):
    """Top-2 eigenpairs of the sample covariance, descending.

    Returns ``(eigenvalues[2], components[2, D])``.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise DegenerateDataError(f"pca_2d needs an N x D matrix with N >= 3, got shape {x.shape}")
    if x.shape[1] < 2:
        raise DegenerateDataError("pca_2d needs at least 2 feature dimensions")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (x.shape[0] - 1)
    scale = np.trace(cov)
    if scale <= 0.0:
        raise DegenerateDataError("pca_2d: all points coincide (rank 0 after centering)")
    rng = np.random.default_rng(0)
    lam1, v1 = _top_eigpair(cov, rng, tol, max_iter)
    v1 = _orient(v1)
    deflated = cov - lam1 * np.outer(v1, v1)
    lam2, v2 = _top_eigpair(deflated, rng, tol, max_iter)
    v2 = v2 - (v2 @ v1) * v1
    if lam2 <= 1e-12 * scale or np.linalg.norm(v2) < 1e-8:
        # rank 1: any unit direction orthogonal to v1 gives an all-zero second coordinate
        lam2 = 0.0
        e = np.zeros_like(v1)
        e[np.argmin(np.abs(v1))] = 1.0
        v2 = e - (e @ v1) * v1
    v2 = _orient(v2 / np.linalg.norm(v2))
    return np.array([lam1, max(lam2, 0.0)]), np.stack([v1, v2])


def pca_2d(points: np.ndarray) -> np.ndarray:
    """Project mean-centred ``points`` (N x D) onto their top two principal components."""
    x = np.asarray(points, dtype=np.float64)
    _, comps = principal_axes(x)
    return (x - x.mean(axis=0)) @ comps.T
