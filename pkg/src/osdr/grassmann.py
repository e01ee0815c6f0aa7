"""Subspaces on the Grassmannian: bases, projections and geodesic steps.

A subspace is carried as a ``(D, d)`` numpy array with orthonormal columns.
Every step function here is pure: it returns a new array and never touches
its inputs.

Gradient convention: a :class:`RankOneDirection` ``(sigma, r, w)`` stands for
the Grassmannian gradient ``G = sigma * (r/|r|)(w/|w|)^T`` of a loss, and the
step functions move along the geodesic in the descent direction ``-G``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Norm below which a rank-one direction counts as numerically zero.
DEGENERATE_NORM = 1e-12
# Condition number above which a masked least-squares system is refused.
MAX_MASK_CONDITION = 1e12
# Drift in |U^T U - I|_F that triggers re-orthonormalization.
DRIFT_TOLERANCE = 1e-7


class RankDeficientError(ValueError):
    """Raised when a matrix cannot be turned into an orthonormal basis."""


class InsufficientObservationsError(ValueError):
    """Raised when fewer entries are observed than the subspace dimension."""


class IllConditionedMaskError(ValueError):
    """Raised when the observed rows of a basis are numerically rank deficient."""


@dataclass(frozen=True)
class RankOneDirection:
    sigma: float
    r: np.ndarray
    w: np.ndarray

    @property
    def degenerate(self) -> bool:
        return (np.linalg.norm(self.r) <= DEGENERATE_NORM
                or np.linalg.norm(self.w) <= DEGENERATE_NORM)

    def matrix(self) -> np.ndarray:
        """Dense ``D x d`` gradient matrix encoded by the triple."""
        if self.degenerate:
            return np.zeros((self.r.shape[0], self.w.shape[0]))
        rn = self.r / np.linalg.norm(self.r)
        wn = self.w / np.linalg.norm(self.w)
        return self.sigma * np.outer(rn, wn)


@dataclass(frozen=True)
class SubspaceMetrics:
    eps: float
    angles: np.ndarray


def random_subspace(D: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormalized standard-Gaussian ``D x d`` basis."""
    return orthonormalize(rng.standard_normal((D, d)))


def orthonormalize(M: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Closest orthonormal basis to ``M`` with the same column span.

    Uses the polar factor, so an already orthonormal input comes back
    unchanged up to rounding and a nearly orthonormal one moves as little as
    possible (its coordinate system is kept, which matters for d-form
    coefficients expressed in that basis).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[1] > M.shape[0]:
        raise RankDeficientError(f"expected a tall matrix, got shape {M.shape}")
    left, s, vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[-1] <= rtol * max(s[0], np.finfo(float).tiny):
        raise RankDeficientError(
            f"matrix of shape {M.shape} has numerical rank below {M.shape[1]}")
    return left @ vt


def orthonormality_error(U: np.ndarray) -> float:
    """``|U^T U - I|_F``."""
    G = U.T @ U
    G[np.diag_indices_from(G)] -= 1.0
    return float(np.sqrt(np.sum(G * G)))


def projector(U: np.ndarray) -> np.ndarray:
    return U @ U.T


def projector_distance(U: np.ndarray, V: np.ndarray) -> float:
    """``|U U^T - V V^T|_F``; invariant to the choice of basis."""
    return float(np.linalg.norm(U @ U.T - V @ V.T))


def project_coefficients(U: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Least-squares coefficients of ``x`` in the orthonormal basis ``U``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (U.shape[0],):
        raise ValueError(f"x has shape {x.shape}, expected ({U.shape[0]},)")
    return U.T @ x


def project_coefficients_masked(U: np.ndarray, x_obs: np.ndarray,
                                observed: np.ndarray) -> np.ndarray:
    """Least-squares coefficients using only the observed rows.

    ``observed`` is an index array (strictly increasing, 0-based) or a
    boolean mask of length D. ``x_obs`` holds either the observed entries
    only (same length as the index set) or a full length-D vector whose
    unobserved entries are ignored.
    """
    idx = mask_indices(observed, U.shape[0])
    x_obs = np.asarray(x_obs, dtype=float)
    if x_obs.shape[0] == U.shape[0] and idx.size != U.shape[0]:
        x_obs = x_obs[idx]
    if x_obs.shape != (idx.size,):
        raise ValueError(f"x_obs has shape {x_obs.shape}, expected ({idx.size},)")
    d = U.shape[1]
    if idx.size < d:
        raise InsufficientObservationsError(
            f"{idx.size} observed entries for a {d}-dimensional subspace")
    U_obs = U[idx]
    gram = U_obs.T @ U_obs
    # gram is symmetric PSD, so its condition number is an eigenvalue ratio
    eig = np.linalg.eigvalsh(gram)
    if not eig[0] > 0 or eig[-1] > MAX_MASK_CONDITION * eig[0]:
        raise IllConditionedMaskError("observed rows of U are numerically rank deficient")
    return np.linalg.solve(gram, U_obs.T @ x_obs)


def mask_indices(observed, D: int) -> np.ndarray:
    """Normalize a boolean mask or index list to a sorted 0-based index array."""
    observed = np.asarray(observed)
    if observed.dtype == bool:
        if observed.shape != (D,):
            raise ValueError(f"boolean mask has shape {observed.shape}, expected ({D},)")
        return np.flatnonzero(observed)
    idx = observed.astype(int)
    if idx.size == 0:
        raise InsufficientObservationsError("empty observation mask")
    if np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= D:
        raise ValueError("mask indices must be strictly increasing and within [0, D)")
    return idx


def complete(U: np.ndarray, x: np.ndarray, observed=None):
    """Coefficients ``beta`` and the completed vector for a (masked) sample.

    Missing entries are filled with the subspace reconstruction ``U beta``,
    so ``U^T x_hat = beta`` and ``(I - U U^T) x_hat`` is the observed-row
    residual padded with zeros (the GROUSE residual).
    """
    x = np.asarray(x, dtype=float)
    if observed is None:
        return U.T @ x, x
    idx = mask_indices(observed, U.shape[0])
    beta = project_coefficients_masked(U, x[idx], idx)
    x_hat = U @ beta
    x_hat[idx] = x[idx]
    return beta, x_hat


def tangent_residual(U: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``(I - U U^T) v`` computed in O(Dd)."""
    return v - U @ (U.T @ v)


def geodesic_step_rank1(U: np.ndarray, direction: RankOneDirection, eta: float) -> np.ndarray:
    """Closed-form geodesic step for a rank-one gradient.

    ``U + (cos(sigma eta) - 1) U w w^T/|w|^2 - sin(sigma eta) (r/|r|)(w/|w|)^T``
    """
    rn = np.linalg.norm(direction.r)
    wn = np.linalg.norm(direction.w)
    if rn <= DEGENERATE_NORM or wn <= DEGENERATE_NORM:
        return U
    theta = direction.sigma * eta
    if theta == 0.0:
        return U
    w_unit = direction.w / wn
    Uw = U @ w_unit
    # second projection: rounding left in r would otherwise compound over many large steps
    r = direction.r - U @ (U.T @ direction.r)
    rn = np.linalg.norm(r)
    if rn <= DEGENERATE_NORM:
        return U
    return U + np.outer((np.cos(theta) - 1.0) * Uw - np.sin(theta) * (r / rn), w_unit)


def geodesic_step_rankk(U: np.ndarray, G: np.ndarray, eta: float) -> np.ndarray:
    """Exact geodesic step along ``-G`` through a thin SVD of the tangent part."""
    G = tangent_residual(U, np.asarray(G, dtype=float))
    if not np.any(G):
        return U
    P, s, Qt = np.linalg.svd(-G, full_matrices=False)
    Q = Qt.T
    return (U @ Q) * np.cos(s * eta) @ Qt + P * np.sin(s * eta) @ Qt


def dominant_direction(G: np.ndarray) -> RankOneDirection:
    """Best rank-one approximation of a dense gradient as a direction triple."""
    P, s, Qt = np.linalg.svd(G, full_matrices=False)
    return RankOneDirection(float(s[0]), P[:, 0], Qt[0])


def principal_angle_error(U: np.ndarray, U_star: np.ndarray) -> SubspaceMetrics:
    """Principal angles between two subspaces and ``eps = sum sin^2``.

    When the dimensions differ the ``min(d, d*)`` angles are used, so
    ``eps = min(d, d*) - |U*^T U|_F^2``.
    """
    if U.shape[0] != U_star.shape[0]:
        raise ValueError("subspaces live in different ambient dimensions")
    cosines = np.clip(np.linalg.svd(U_star.T @ U, compute_uv=False), 0.0, 1.0)
    angles = np.arccos(cosines)
    eps = float(np.sum(1.0 - cosines ** 2))
    return SubspaceMetrics(eps=eps, angles=angles)


def subspace_error(U: np.ndarray, U_star: np.ndarray) -> float:
    """``eps`` alone, as ``min(d, d*) - |U*^T U|_F^2`` without an SVD."""
    A = U_star.T @ U
    return max(0.0, float(min(A.shape) - np.sum(A * A)))
