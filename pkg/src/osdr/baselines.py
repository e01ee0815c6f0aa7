"""Unsupervised subspace tracking (ODR) and a flat online logistic regression.

ODR tracks U from the predictors alone by descending the reconstruction
error ``|x - U beta|^2 / 2`` along the same rank-one geodesics OSDR uses.
Its interface has no response argument, so it cannot read labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grassmann import (
    IllConditionedMaskError,
    InsufficientObservationsError,
    RankOneDirection,
    complete,
    geodesic_step_rank1,
    tangent_residual,
)
from .models import sigmoid


@dataclass(frozen=True)
class OdrState:
    U: np.ndarray
    step_count: int = 0
    skipped: int = 0


def odr_direction(U: np.ndarray, x: np.ndarray, observed=None) -> RankOneDirection:
    """Gradient of the reconstruction error with beta held at its least-squares value."""
    beta, x_hat = complete(U, x, observed)
    r = tangent_residual(U, x_hat)
    return RankOneDirection(-float(np.linalg.norm(r) * np.linalg.norm(beta)), r, beta)


def odr_step(state: OdrState, x: np.ndarray, eta: float, observed=None) -> OdrState:
    try:
        direction = odr_direction(state.U, x, observed)
    except (IllConditionedMaskError, InsufficientObservationsError):
        return OdrState(state.U, state.step_count + 1, state.skipped + 1)
    U = geodesic_step_rank1(state.U, direction, eta)
    return OdrState(U, state.step_count + 1, state.skipped)


class FlatLogistic:
    """Online logistic regression on raw features, no dimensionality reduction."""

    def __init__(self, n_features: int, mu: float):
        self.coef = np.zeros(n_features)
        self.intercept = 0.0
        self.mu = mu

    def predict_proba(self, f: np.ndarray) -> float:
        return float(sigmoid(self.coef @ f + self.intercept))

    def update(self, f: np.ndarray, y: float) -> None:
        residual = y - self.predict_proba(f)
        self.coef += self.mu * residual * f
        self.intercept += self.mu * residual


def pair_features(x1, x2, mask1=None, mask2=None) -> np.ndarray:
    """Elementwise product of two predictors with missing entries zeroed.

    A linear model on these features is a diagonal bilinear form
    ``x1^T diag(c) x2``, the flat counterpart of the latent inner product.
    """
    a = np.where(mask1, x1, 0.0) if mask1 is not None else x1
    b = np.where(mask2, x2, 0.0) if mask2 is not None else x2
    return a * b
