"""Independent reference computations shared by the unit and acceptance tests."""

import mpmath
import numpy as np

from osdr import models as m
from osdr.grassmann import random_subspace, tangent_residual

mpmath.mp.dps = 50

FD_STEP = 1e-6


def fd_grassmann_gradient(loss, U, h=FD_STEP):
    """Central differences of ``loss`` over every entry of U, projected on the tangent space."""
    E = np.zeros_like(U)
    for idx in np.ndindex(*U.shape):
        P = np.zeros_like(U)
        P[idx] = h
        E[idx] = (loss(U + P) - loss(U - P)) / (2 * h)
    return tangent_residual(U, E)


def relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def sigmoid_mp(z):
    return float(1 / (1 + mpmath.exp(-mpmath.mpf(float(z)))))


def softmax_mp(logits):
    z = [mpmath.mpf(float(v)) for v in logits] + [mpmath.mpf(0)]
    e = [mpmath.exp(v) for v in z]
    s = sum(e)
    return np.array([float(v / s) for v in e])


MODEL_FORMS = [(name, form) for name in ("linear", "logistic", "multilinear", "multinomial", "svm")
               for form in ("d", "D")] + [("rdp", "d")]


def gradient_instance(model, form, seed, D=7, d=2):
    """Random instance as ``(U, loss_of_U, gradient_from_code)``.

    In the D-form beta is drawn once and held fixed, matching how the engine
    differentiates with the projection coefficients frozen.
    """
    rng = np.random.default_rng([seed, D, d])
    U = random_subspace(D, d, rng)
    x = rng.standard_normal(D)
    beta = rng.standard_normal(d) if form == "D" else None
    n = d if form == "d" else D
    if model in ("linear", "logistic"):
        params = m.AffineParams(rng.standard_normal(n), float(rng.normal()))
        y = float(rng.normal()) if model == "linear" else float(rng.integers(2))
        loss = getattr(m, f"{model}_loss")
        direction = getattr(m, f"{model}_direction")(params, U, y, x=x, beta=beta)
        return U, lambda V: loss(params, V, y, x=x, beta=beta), direction.matrix()
    if model == "multilinear":
        params = m.MultiLinearParams(rng.standard_normal((n, 3)))
        y = rng.standard_normal(3)
        direction = m.multilinear_direction(params, U, y, x=x, beta=beta)
        return U, lambda V: m.multilinear_loss(params, V, y, x=x, beta=beta), direction.matrix()
    if model == "multinomial":
        params = m.MultinomialParams(rng.standard_normal((3, n)), rng.standard_normal(3))
        y = int(rng.integers(4))
        G = m.multinomial_gradient(params, U, y, x=x, beta=beta)
        return U, lambda V: m.multinomial_loss(params, V, y, x=x, beta=beta), G
    if model == "svm":
        # redraw until the hinge is active and clear of the kink
        while True:
            params = m.SvmParams(rng.standard_normal(n))
            y = float(rng.choice([-1.0, 1.0]))
            margin = y * m.svm_score(params, U, x=x, beta=beta)
            if margin < 1.0 - 1e-3:
                break
            x = rng.standard_normal(D)
        direction = m.svm_direction(params, U, y, x=x, beta=beta)
        return U, lambda V: m.svm_loss(params, V, y, x=x, beta=beta), direction.matrix()
    params = m.RdpParams(float(rng.normal()), float(rng.normal()))
    x1, x2 = x, rng.standard_normal(D)
    y = float(rng.integers(2))
    b2 = U.T @ x2
    direction = m.rdp_direction(params, U, y, x1, b2)
    return U, lambda V: m.rdp_loss(params, V, y, x1, b2), direction.matrix()
