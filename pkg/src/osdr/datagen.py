"""Seeded synthetic streams for the simulated experiments.

Every generator is a pure function of its arguments and seed, and returns
the latent subspace (or its trajectory) alongside the samples so subspace
error can be scored for any run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from .engine import StreamSample
from .grassmann import random_subspace
from .models import sigmoid


@dataclass(frozen=True)
class EllipseSpec:
    r1: float = 1.0
    r2: float = 0.2

    def __post_init__(self):
        if not self.r1 >= self.r2 > 0:
            raise ValueError(f"need r1 >= r2 > 0, got r1={self.r1}, r2={self.r2}")


@dataclass(frozen=True)
class RotationSpec:
    tau: float = 1.0
    onset: int = 500
    horizon: int = 6000

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("rotation speed tau must be positive")


@dataclass(frozen=True)
class SpectrumSpec:
    D: int
    d: int
    N: int = 10_000
    kind: str = "I"

    @property
    def p(self) -> int:
        """1-based index of the labeling eigenvector."""
        if self.kind == "I":
            return self.d + 1
        if self.kind == "II":
            return self.d + (self.D - self.d) // 2
        raise ValueError(f"spectrum labeling type must be 'I' or 'II', got {self.kind!r}")


@dataclass
class Stream:
    """Predictors ``X`` (N x D), responses ``y`` and optional masks.

    Interaction streams also carry ``X2``/``masks2``. ``truth(t)`` returns the
    ground-truth basis at sample index ``t``; ``meta`` holds generator extras.
    """

    X: np.ndarray
    y: np.ndarray
    masks: Optional[np.ndarray] = None
    X2: Optional[np.ndarray] = None
    masks2: Optional[np.ndarray] = None
    truth: Optional[Callable[[int], np.ndarray]] = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def D(self) -> int:
        return self.X.shape[1]

    def __getitem__(self, i: int) -> StreamSample:
        return StreamSample(
            self.X[i], self.y[i],
            None if self.masks is None else self.masks[i],
            None if self.X2 is None else self.X2[i],
            None if self.masks2 is None else self.masks2[i],
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def slice(self, start: int, stop: int) -> "Stream":
        def cut(a):
            return None if a is None else a[start:stop]
        truth = None
        if self.truth is not None:
            base = self.truth
            truth = lambda t: base(t + start)  # noqa: E731
        return Stream(cut(self.X), cut(self.y), cut(self.masks), cut(self.X2), cut(self.masks2),
                      truth, dict(self.meta))

    def split(self, n_train: int):
        return self.slice(0, n_train), self.slice(n_train, len(self))


def sample_ellipse(spec: EllipseSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws of i.i.d. N(0, 1) pairs kept only inside the ellipse."""
    out = np.empty((0, 2))
    while out.shape[0] < n:
        z = rng.standard_normal((2 * (n - out.shape[0]) + 16, 2))
        inside = (z[:, 0] / spec.r1) ** 2 + (z[:, 1] / spec.r2) ** 2 <= 1.0
        out = np.vstack([out, z[inside]])
    return out[:n]


def _logistic_labels(scores: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return (rng.random(scores.shape[0]) < sigmoid(scores)).astype(float)


def gen_static_ellipse(spec: EllipseSpec, D: int, noise_var: float, N: int, seed: int,
                       label_gain: float = 1.0) -> Stream:
    """``x = U beta + noise`` with beta in the ellipse and logistic labels.

    The label coefficient points along the short axis of the ellipse with
    magnitude ``label_gain / r2``, so the logit spans ``[-label_gain, label_gain]``
    across the ellipse whatever its absolute size.
    """
    if D <= 2 or N < 1:
        raise ValueError("need D > 2 and N >= 1")
    rng = np.random.default_rng(seed)
    U = random_subspace(D, 2, rng)
    beta = sample_ellipse(spec, N, rng)
    X = beta @ U.T + np.sqrt(noise_var) * rng.standard_normal((N, D))
    coef = np.array([0.0, label_gain / spec.r2])
    y = _logistic_labels(beta @ coef, rng)
    return Stream(X, y, truth=lambda t: U,
                  meta={"U": U, "beta": beta, "coef": coef, "kind": "static-ellipse"})


def rotation_angle(t: int, spec: RotationSpec) -> float:
    """Piecewise-linear angle schedule; ``t`` is 1-based."""
    if t <= spec.onset:
        return 0.0
    return (2.0 * np.pi / spec.tau) * (t - spec.onset) / (spec.horizon - spec.onset)


def rotation(alpha: float) -> np.ndarray:
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s], [s, c]])


def gen_rotating(rotation_spec: RotationSpec, ellipse: EllipseSpec, D: int, noise_var: float,
                 seed: int, label_gain: float = 1.0) -> Stream:
    """Static-ellipse stream whose basis turns as ``U_t = U_0 R(alpha_t)``.

    The label coefficient stays on the short axis in latent coordinates, so
    it turns with the subspace.
    """
    rng = np.random.default_rng(seed)
    N = rotation_spec.horizon
    U0 = random_subspace(D, 2, rng)
    beta = sample_ellipse(ellipse, N, rng)
    alphas = np.array([rotation_angle(t, rotation_spec) for t in range(1, N + 1)])
    c, s = np.cos(alphas), np.sin(alphas)
    # latent coordinates in the U0 frame: R(alpha_t) beta_t
    lat = np.stack([c * beta[:, 0] - s * beta[:, 1], s * beta[:, 0] + c * beta[:, 1]], axis=1)
    X = lat @ U0.T + np.sqrt(noise_var) * rng.standard_normal((N, D))
    coef = np.array([0.0, label_gain / ellipse.r2])
    y = _logistic_labels(beta @ coef, rng)
    return Stream(X, y, truth=lambda t: U0 @ rotation(alphas[t]),
                  meta={"U0": U0, "alphas": alphas, "coef": coef, "kind": "rotating"})


def gen_linear_response(D: int, d: int, c, b: float, noise_var: float, N: int, seed: int,
                        ellipse: Optional[EllipseSpec] = None, predictor_noise_var: float = 1e-3,
                        latent_coef: bool = False) -> Stream:
    """``y = c^T U beta + b + eps`` with ``eps ~ N(0, noise_var)``.

    ``c`` is an ambient D-vector, or with ``latent_coef=True`` a length-d
    vector of weights on the latent axes (the ambient coefficient is then
    ``U c``). With an ellipse (d = 2) beta is drawn by rejection as in
    :func:`gen_static_ellipse`; otherwise beta ~ N(0, I_d).
    """
    rng = np.random.default_rng(seed)
    U = random_subspace(D, d, rng)
    c = np.asarray(c, dtype=float)
    if latent_coef:
        if c.shape != (d,):
            raise ValueError(f"latent coefficients must have length {d}")
        c = U @ c
    if c.shape != (D,):
        raise ValueError(f"c must have length {D}")
    if ellipse is not None:
        if d != 2:
            raise ValueError("the ellipse latent model is two-dimensional")
        beta = sample_ellipse(ellipse, N, rng)
    else:
        beta = rng.standard_normal((N, d))
    X = beta @ U.T + np.sqrt(predictor_noise_var) * rng.standard_normal((N, D))
    y = beta @ (U.T @ c) + b + np.sqrt(noise_var) * rng.standard_normal(N)
    return Stream(X, y, truth=lambda t: U, meta={"U": U, "c": c, "b": b, "kind": "linear"})


def gen_spectrum_classification(spec: SpectrumSpec, seed: int) -> Stream:
    """Gaussian data with covariance eigenvalues D, D-1, ..., 1.

    Samples are projected on the p-th empirical eigenvector and the lower
    half of the sorted projections is labeled 1, the rest 0.
    """
    if spec.N % 2:
        raise ValueError("N must be even")
    if not 1 <= spec.p <= spec.D:
        raise ValueError(f"labeling index p={spec.p} outside [1, {spec.D}]")
    rng = np.random.default_rng(seed)
    V = np.linalg.qr(rng.standard_normal((spec.D, spec.D)))[0]
    lam = np.arange(spec.D, 0, -1, dtype=float)
    X = (rng.standard_normal((spec.N, spec.D)) * np.sqrt(lam)) @ V.T
    evals, evecs = np.linalg.eigh(np.cov(X, rowvar=False))
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    v = evecs[:, spec.p - 1]
    ranks = np.argsort(np.argsort(X @ v, kind="stable"), kind="stable")
    y = (ranks < spec.N // 2).astype(float)
    top = evecs[:, :spec.d]
    return Stream(X, y, truth=lambda t: top,
                  meta={"eigenvalues": evals, "eigenvectors": evecs, "p": spec.p, "kind": "spectrum"})


def apply_mask(stream: Stream, observe_fraction: float, seed: int, min_observed: int = 1) -> Stream:
    """Attach Bernoulli observation masks, forcing at least ``min_observed`` entries per sample."""
    if not 0.0 < observe_fraction <= 1.0:
        raise ValueError("observe_fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)

    def draw(n, D):
        masks = rng.random((n, D)) < observe_fraction
        for i in np.flatnonzero(masks.sum(axis=1) < min_observed):
            masks[i, rng.choice(D, size=min_observed, replace=False)] = True
        return masks

    out = Stream(stream.X, stream.y, draw(len(stream), stream.D), stream.X2, None, stream.truth, dict(stream.meta))
    if stream.X2 is not None:
        out.masks2 = draw(len(stream), stream.D)
    return out


TREE_STRUCTURE = {(1, 1): None, (2, 1): (1, 1), (2, 2): (1, 1), (3, 1): (2, 1), (3, 2): (2, 1)}
# Each child is its parent turned by exp(sign * R * scale).
TREE_MOTION = {(2, 1): (1.0, (1, 1)), (2, 2): (-1.0, (1, 1)), (3, 1): (0.5, (2, 1)), (3, 2): (-0.5, (2, 1))}


@dataclass(frozen=True)
class TreeNetworkSpec:
    """Interaction stream over the three-leaf tree.

    ``spread`` is the spectral norm of the skew generator ``R`` (the largest
    angle between a parent and a child); the root turns by ``exp(R * drift * t / N)``.
    ``community_a``/``community_b`` hold the true dot-product parameters of the
    nodes in sorted key order: (1,1), (2,1), (2,2), (3,1), (3,2).
    """

    D: int = 100
    d: int = 2
    N: int = 6000
    observe_fraction: float = 0.4
    noise_var: float = 0.01
    spread: float = 0.5
    drift: float = 1.0
    offset_norm: float = 3.0
    shape: tuple = (1.0, 0.5)
    community_a: tuple = (2.0, -4.0, 4.0, 4.0, 4.0)
    community_b: tuple = (-1.0, 0.0, 0.0, 0.0, 0.0)


def skew_generator(D: int, spread: float, rng: np.random.Generator) -> np.ndarray:
    """Random skew-symmetric matrix with spectral norm ``spread``."""
    A = rng.standard_normal((D, D))
    R = A - A.T
    norm = np.linalg.norm(R, 2)
    return R * (spread / norm) if norm > 0 else R


def tree_lca(a, b):
    path = [a]
    while TREE_STRUCTURE[path[-1]] is not None:
        path.append(TREE_STRUCTURE[path[-1]])
    node = b
    while node not in path:
        node = TREE_STRUCTURE[node]
    return node


def gen_tree_network(spec: TreeNetworkSpec, seed: int) -> Stream:
    """Pairs ``(x1, x2)`` drawn from random leaves with logistic interactions.

    ``x = c_leaf + U_leaf(t) beta + noise`` with ``beta ~ N(0, diag(shape))``;
    ``y ~ Bernoulli(h(a beta1^T beta2 + b))`` with ``(a, b)`` from the lowest
    common ancestor of the two leaves. Both predictors are then masked.
    """
    rng = np.random.default_rng(seed)
    D, d, N = spec.D, spec.d, spec.N
    R = skew_generator(D, spec.spread, rng)
    U0 = random_subspace(D, d, rng)
    keys = sorted(TREE_STRUCTURE)
    base = {(1, 1): U0}
    for key in keys[1:]:
        scale, parent = TREE_MOTION[key]
        base[key] = expm(scale * R) @ base[parent]
    leaves = [k for k in keys if k not in TREE_STRUCTURE.values()]
    offsets = {}
    for key in leaves:
        c = rng.standard_normal(D)
        offsets[key] = spec.offset_norm * c / np.linalg.norm(c)
    for key in reversed(keys):
        if key not in offsets:
            offsets[key] = np.mean([offsets[k] for k in keys if TREE_STRUCTURE[k] == key], axis=0)
    shape = np.asarray(spec.shape, dtype=float)
    community = {k: (a, b) for k, a, b in zip(keys, spec.community_a, spec.community_b)}

    step = expm(R * (spec.drift / N))
    pick = rng.integers(len(leaves), size=(N, 2))
    betas = rng.standard_normal((N, 2, d)) * np.sqrt(shape)
    noise = np.sqrt(spec.noise_var) * rng.standard_normal((N, 2, D))
    current = {k: base[k].copy() for k in leaves}
    X = np.empty((N, 2, D))
    scores = np.empty(N)
    for t in range(N):
        for side in range(2):
            leaf = leaves[pick[t, side]]
            X[t, side] = offsets[leaf] + current[leaf] @ betas[t, side] + noise[t, side]
        a, b = community[tree_lca(leaves[pick[t, 0]], leaves[pick[t, 1]])]
        scores[t] = a * betas[t, 0] @ betas[t, 1] + b
        for k in leaves:
            current[k] = step @ current[k]
    y = _logistic_labels(scores, rng)

    # iR is Hermitian, so exp(R s) = V diag(exp(-i lam s)) V^H with V unitary
    lam, V = np.linalg.eigh(1j * R)
    coords = {k: V.conj().T @ base[k] for k in keys}

    def truth(t: int) -> dict:
        phase = np.exp(-1j * lam * (spec.drift * t / N))[:, None]
        return {k: (V @ (phase * coords[k])).real for k in keys}

    stream = Stream(X[:, 0], y, X2=X[:, 1], truth=truth, meta={
        "kind": "tree-network", "R": R, "U0": U0, "offsets": offsets, "shape": shape,
        "community": community, "leaves": [(leaves[i], leaves[j]) for i, j in pick],
        "structure": dict(TREE_STRUCTURE)})
    return apply_mask(stream, spec.observe_fraction, seed=[seed, 1], min_observed=d)
