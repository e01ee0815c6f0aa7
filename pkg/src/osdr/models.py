"""Per-model predictions, Grassmannian gradient directions and parameter steps.

Every model works in two formulations, picked by the length of its
coefficient vector:

* d-form: coefficients live in the projected space (length ``d``) and the
  model sees ``U^T x``. Directions use ``r = (I - UU^T) x`` and ``w = coef``.
* D-form: coefficients live in the ambient space (length ``D``) and the
  model sees the reconstruction ``U beta``. Directions use
  ``r = (I - UU^T) coef`` and ``w = beta``.

Losses are minimized: half squared error for the regressions, negative
log-likelihood for the logistic models and the hinge loss for the SVM. The
``sigma`` of every returned direction is the signed gradient magnitude, and
:func:`osdr.grassmann.geodesic_step_rank1` steps against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .grassmann import RankOneDirection, dominant_direction, tangent_residual

LOGIT_CLAMP = 700.0


@dataclass(frozen=True)
class AffineParams:
    """Slope and intercept for linear and logistic regression.

    ``coef`` has length d (d-form, the pair ``(a, b)``) or D (D-form, the
    pair ``(c, e)``).
    """

    coef: np.ndarray
    intercept: float = 0.0


@dataclass(frozen=True)
class MultiLinearParams:
    """``coef`` is ``d x m`` (matrix A) or ``D x m`` (matrix C)."""

    coef: np.ndarray


@dataclass(frozen=True)
class MultinomialParams:
    """Slopes ``coef[k]`` and intercepts for classes ``0..K-2``.

    Class ``K-1`` is the reference class with a zero logit.
    """

    coef: np.ndarray
    intercept: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.coef.shape[0] + 1


@dataclass(frozen=True)
class SvmParams:
    coef: np.ndarray


@dataclass(frozen=True)
class RdpParams:
    """Gain ``a`` on the latent inner product and offset ``b``."""

    a: float = 1.0
    b: float = 0.0


def sigmoid(z):
    if np.ndim(z) == 0:
        z = min(max(float(z), -LOGIT_CLAMP), LOGIT_CLAMP)
        return 1.0 / (1.0 + math.exp(-z))
    z = np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


def softmax_with_reference(logits: np.ndarray) -> np.ndarray:
    """Class probabilities for logits of classes ``0..K-2`` plus a zero reference logit."""
    z = np.append(np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP), 0.0)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _is_d_form(coef: np.ndarray, U: np.ndarray) -> bool:
    n = coef.shape[0]
    if n == U.shape[1]:
        return True
    if n == U.shape[0]:
        return False
    raise ValueError(f"coefficient dimension {n} matches neither d={U.shape[1]} nor D={U.shape[0]}")


def features(coef: np.ndarray, U: np.ndarray, x=None, beta=None) -> np.ndarray:
    """What the model sees: ``U^T x`` (d-form) or ``U beta`` (D-form)."""
    if _is_d_form(coef, U):
        if x is None:
            raise ValueError("the d-formulation needs the predictor x")
        return U.T @ x
    if beta is None:
        raise ValueError("the D-formulation needs the projection coefficients beta")
    return U @ beta


def _affine_direction(coef, U, x, beta, residual) -> RankOneDirection:
    # gradient = -residual * r w^T, residual = -dLoss/dScore
    if _is_d_form(coef, U):
        r, w = tangent_residual(U, x), coef
    else:
        r, w = tangent_residual(U, coef), beta
    sigma = -residual * np.linalg.norm(r) * np.linalg.norm(w)
    return RankOneDirection(float(sigma), r, np.array(w, dtype=float))


# ---------------------------------------------------------------- linear

def linear_predict(params: AffineParams, U, x=None, beta=None) -> float:
    return float(params.coef @ features(params.coef, U, x, beta) + params.intercept)


def linear_loss(params: AffineParams, U, y, x=None, beta=None) -> float:
    return 0.5 * (y - linear_predict(params, U, x, beta)) ** 2


def linear_direction(params: AffineParams, U, y, x=None, beta=None) -> RankOneDirection:
    residual = y - linear_predict(params, U, x, beta)
    return _affine_direction(params.coef, U, x, beta, residual)


def linear_param_update(params: AffineParams, U, y, mu, x=None, beta=None) -> AffineParams:
    f = features(params.coef, U, x, beta)
    residual = y - (params.coef @ f + params.intercept)
    return AffineParams(params.coef + mu * residual * f, params.intercept + mu * residual)


# ---------------------------------------------------------------- logistic

def logistic_predict(params: AffineParams, U, x=None, beta=None) -> float:
    return float(sigmoid(params.coef @ features(params.coef, U, x, beta) + params.intercept))


def logistic_loss(params: AffineParams, U, y, x=None, beta=None) -> float:
    """Negative log-likelihood of a 0/1 label."""
    z = float(params.coef @ features(params.coef, U, x, beta) + params.intercept)
    return float(np.logaddexp(0.0, z) - y * z)


def logistic_direction(params: AffineParams, U, y, x=None, beta=None) -> RankOneDirection:
    residual = y - logistic_predict(params, U, x, beta)
    return _affine_direction(params.coef, U, x, beta, residual)


def logistic_param_update(params: AffineParams, U, y, mu, x=None, beta=None) -> AffineParams:
    f = features(params.coef, U, x, beta)
    residual = y - sigmoid(params.coef @ f + params.intercept)
    return AffineParams(params.coef + mu * residual * f, params.intercept + mu * residual)


# ---------------------------------------------------------------- multiple linear

def _multi_form(params: MultiLinearParams, U) -> bool:
    if params.coef.shape[0] == U.shape[1]:
        return True
    if params.coef.shape[0] == U.shape[0]:
        return False
    raise ValueError(f"coefficient matrix has {params.coef.shape[0]} rows; "
                     f"expected d={U.shape[1]} or D={U.shape[0]}")


def multilinear_predict(params: MultiLinearParams, U, x=None, beta=None) -> np.ndarray:
    f = U.T @ x if _multi_form(params, U) else U @ beta
    return params.coef.T @ f


def multilinear_loss(params: MultiLinearParams, U, y, x=None, beta=None) -> float:
    e = np.asarray(y, dtype=float) - multilinear_predict(params, U, x, beta)
    return 0.5 * float(e @ e)


def multilinear_direction(params: MultiLinearParams, U, y, x=None, beta=None) -> RankOneDirection:
    """Still rank one for vector responses: the residual folds into r or w."""
    e = np.asarray(y, dtype=float) - multilinear_predict(params, U, x, beta)
    if _multi_form(params, U):
        r, w = tangent_residual(U, x), params.coef @ e
    else:
        r, w = tangent_residual(U, params.coef @ e), np.array(beta, dtype=float)
    return RankOneDirection(-float(np.linalg.norm(r) * np.linalg.norm(w)), r, w)


def multilinear_param_update(params: MultiLinearParams, U, y, mu, x=None, beta=None) -> MultiLinearParams:
    f = U.T @ x if _multi_form(params, U) else U @ beta
    e = np.asarray(y, dtype=float) - params.coef.T @ f
    return MultiLinearParams(params.coef + mu * np.outer(f, e))


# ---------------------------------------------------------------- multinomial

def _multinomial_features(params: MultinomialParams, U, x, beta):
    return features(params.coef[0], U, x, beta)


def multinomial_predict(params: MultinomialParams, U, x=None, beta=None) -> np.ndarray:
    f = _multinomial_features(params, U, x, beta)
    return softmax_with_reference(params.coef @ f + params.intercept)


def multinomial_loss(params: MultinomialParams, U, y: int, x=None, beta=None) -> float:
    f = _multinomial_features(params, U, x, beta)
    z = np.append(params.coef @ f + params.intercept, 0.0)
    return float(np.logaddexp.reduce(z) - z[int(y)])


def multinomial_scores(params: MultinomialParams, U, y: int, x=None, beta=None) -> np.ndarray:
    """``h_k = 1{y = k} - p_k`` for the non-reference classes."""
    p = multinomial_predict(params, U, x, beta)
    h = -p[:-1]
    y = int(y)  # streams store class labels as floats
    if y < params.n_classes - 1:
        h[y] += 1.0
    return h


def multinomial_gradient(params: MultinomialParams, U, y: int, x=None, beta=None) -> np.ndarray:
    """Dense Grassmannian gradient ``-(I - UU^T) Sigma`` of the negative log-likelihood.

    Sigma is a sum of one term per class. All terms share the factor x (d-form)
    or beta (D-form), so the result has rank at most one even though it is
    assembled from K terms.
    """
    h = multinomial_scores(params, U, y, x, beta)
    if _is_d_form(params.coef[0], U):
        sigma_mat = np.outer(x, h @ params.coef)
    else:
        sigma_mat = np.outer(h @ params.coef, beta)
    return -tangent_residual(U, sigma_mat)


def multinomial_direction(params: MultinomialParams, U, y: int, x=None, beta=None) -> RankOneDirection:
    """Dominant singular triplet of :func:`multinomial_gradient`."""
    G = multinomial_gradient(params, U, y, x, beta)
    if not np.any(G):
        return RankOneDirection(0.0, np.zeros(U.shape[0]), np.zeros(U.shape[1]))
    return dominant_direction(G)


def multinomial_param_update(params: MultinomialParams, U, y: int, mu, x=None, beta=None) -> MultinomialParams:
    f = _multinomial_features(params, U, x, beta)
    h = multinomial_scores(params, U, y, x, beta)
    return MultinomialParams(params.coef + mu * np.outer(h, f), params.intercept + mu * h)


# ---------------------------------------------------------------- SVM

def svm_score(params: SvmParams, U, x=None, beta=None) -> float:
    return float(params.coef @ features(params.coef, U, x, beta))


def svm_loss(params: SvmParams, U, y, x=None, beta=None) -> float:
    return max(0.0, 1.0 - y * svm_score(params, U, x, beta))


def _hinge_weight(margin: float) -> float:
    # 1 when the hinge is active, 0 when satisfied, 1/2 exactly at the kink
    return 0.5 * (np.sign(1.0 - margin) + 1.0)


def svm_direction(params: SvmParams, U, y, x=None, beta=None) -> RankOneDirection:
    """Hinge subgradient; labels are -1/+1."""
    kappa = _hinge_weight(y * svm_score(params, U, x, beta))
    return _affine_direction(params.coef, U, x, beta, kappa * y)


def svm_param_update(params: SvmParams, U, y, mu, x=None, beta=None) -> SvmParams:
    f = features(params.coef, U, x, beta)
    kappa = _hinge_weight(y * float(params.coef @ f))
    if kappa == 0.0:
        return params
    return SvmParams(params.coef + mu * kappa * y * f)


# ---------------------------------------------------------------- random dot product

def rdp_predict(params: RdpParams, beta1, beta2) -> float:
    return float(sigmoid(params.a * float(beta1 @ beta2) + params.b))


def rdp_loss(params: RdpParams, U, y, x_moving, beta_fixed) -> float:
    """Negative log-likelihood with one endpoint's coefficients held fixed."""
    z = params.a * float(x_moving @ (U @ beta_fixed)) + params.b
    return float(np.logaddexp(0.0, z) - y * z)


def rdp_direction(params: RdpParams, U, y, x_moving, beta_fixed) -> RankOneDirection:
    """Gradient in U of the interaction likelihood with ``beta_fixed`` frozen.

    The first half-step passes ``(x1, U^T x2)``; the second passes
    ``(x2, U'^T x1)`` against the subspace produced by the first.
    """
    residual = y - rdp_predict(params, x_moving @ U, beta_fixed)
    r = tangent_residual(U, x_moving)
    w = np.array(beta_fixed, dtype=float)
    sigma = -residual * params.a * np.linalg.norm(r) * np.linalg.norm(w)
    return RankOneDirection(float(sigma), r, w)


def rdp_directions(params: RdpParams, U, y, x1, x2):
    """Both half-step directions evaluated at the same U."""
    return (rdp_direction(params, U, y, x1, U.T @ x2),
            rdp_direction(params, U, y, x2, U.T @ x1))


def rdp_param_update(params: RdpParams, beta1, beta2, y, mu) -> RdpParams:
    ip = float(beta1 @ beta2)
    residual = y - rdp_predict(params, beta1, beta2)
    return replace(params, a=params.a + mu * residual * ip, b=params.b + mu * residual)
