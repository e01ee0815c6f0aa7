"""Online alternating updates of the subspace and the model parameters.

One tick of :func:`engine_step`:

1. estimate ``beta`` (D-form) from the current subspace, masked or not;
2. compute the model's Grassmannian gradient;
3. take the geodesic step on U;
4. take one SGD step on the parameters with the new U.

An engine built with ``supervised=False`` replaces step 2-3 with the
unsupervised reconstruction step of :mod:`osdr.baselines`, which is how the
ODR contender is run with the same predictive head.
"""

from __future__ import annotations

import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import models as m
from .baselines import odr_direction
from .grassmann import (
    DRIFT_TOLERANCE,
    IllConditionedMaskError,
    InsufficientObservationsError,
    RankOneDirection,
    complete,
    dominant_direction,
    geodesic_step_rank1,
    geodesic_step_rankk,
    orthonormality_error,
    orthonormalize,
    subspace_error,
    random_subspace,
)

MODELS = ("linear", "logistic", "multilinear", "multinomial", "svm", "rdp")
CLASSIFIERS = ("logistic", "multinomial", "svm", "rdp")
INIT_STREAM = 1


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    D: int
    d: int
    model: str = "logistic"
    formulation: str = "d"
    eta: float = 1e-2
    mu: float = 1e-2
    batch_size: int = 1
    rank_policy: str = "exact-svd"
    schedule: str = "constant"
    reorthogonalize_every: int = 1000
    supervised: bool = True
    n_outputs: int = 1
    n_classes: int = 2
    rdp_gain: float = 1.0
    init_coef_norm: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.d < self.D:
            raise ConfigurationError(f"need 1 <= d < D, got d={self.d}, D={self.D}")
        if self.model not in MODELS:
            raise ConfigurationError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.formulation not in ("d", "D"):
            raise ConfigurationError(f"formulation must be 'd' or 'D', got {self.formulation!r}")
        if self.model == "rdp" and self.formulation != "d":
            raise ConfigurationError("the interaction model has no ambient parameters; use formulation 'd'")
        if self.eta < 0 or self.mu < 0:
            raise ConfigurationError("step sizes must be non-negative")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.rank_policy not in ("exact-svd", "rank-one"):
            raise ConfigurationError(f"unknown rank_policy {self.rank_policy!r}")
        if self.schedule not in ("constant", "inv-sqrt"):
            raise ConfigurationError(f"unknown schedule {self.schedule!r}")
        if self.n_classes < 2:
            raise ConfigurationError("n_classes must be >= 2")

    @property
    def coef_dim(self) -> int:
        return self.d if self.formulation == "d" else self.D


@dataclass(frozen=True)
class StreamSample:
    """One tick: predictor (optionally masked) and response.

    ``mask`` is a boolean array of observed entries. Interaction samples
    carry a second endpoint in ``x2``/``mask2``.
    """

    x: np.ndarray
    y: object
    mask: Optional[np.ndarray] = None
    x2: Optional[np.ndarray] = None
    mask2: Optional[np.ndarray] = None


@dataclass(frozen=True)
class EngineState:
    U: np.ndarray
    params: object
    step_count: int = 0
    skipped: int = 0
    pending: tuple = ()


def initial_params(config: EngineConfig):
    n = config.coef_dim
    if config.model in ("linear", "logistic", "svm"):
        coef = np.zeros(n)
        if config.init_coef_norm:
            # with coef = 0 the subspace step is degenerate until coef grows
            v = np.random.default_rng([config.seed, INIT_STREAM, 1]).standard_normal(n)
            coef = config.init_coef_norm * v / np.linalg.norm(v)
        return m.SvmParams(coef) if config.model == "svm" else m.AffineParams(coef, 0.0)
    if config.model == "multilinear":
        return m.MultiLinearParams(np.zeros((n, config.n_outputs)))
    if config.model == "multinomial":
        return m.MultinomialParams(np.zeros((config.n_classes - 1, n)), np.zeros(config.n_classes - 1))
    return m.RdpParams(a=config.rdp_gain, b=0.0)


def init_state(config: EngineConfig, U0: Optional[np.ndarray] = None) -> EngineState:
    if U0 is None:
        # separate stream from the data generators, which seed with the bare seed
        U0 = random_subspace(config.D, config.d, np.random.default_rng([config.seed, INIT_STREAM]))
    return EngineState(U=orthonormalize(U0), params=initial_params(config))


def step_sizes(config: EngineConfig, t: int):
    if config.schedule == "inv-sqrt":
        scale = 1.0 / math.sqrt(t)
        return config.eta * scale, config.mu * scale
    return config.eta, config.mu


# ---------------------------------------------------------------- per-model dispatch

_PREDICT = {
    "linear": m.linear_predict,
    "logistic": m.logistic_predict,
    "multilinear": m.multilinear_predict,
    "multinomial": m.multinomial_predict,
    "svm": m.svm_score,
}
_UPDATE = {
    "linear": m.linear_param_update,
    "logistic": m.logistic_param_update,
    "multilinear": m.multilinear_param_update,
    "multinomial": m.multinomial_param_update,
    "svm": m.svm_param_update,
}
_DIRECTION = {
    "linear": m.linear_direction,
    "logistic": m.logistic_direction,
    "multilinear": m.multilinear_direction,
    "svm": m.svm_direction,
}


def _coefficients(config: EngineConfig, U, x, mask):
    """(beta, completed x) for the D-form; (None, x) for the d-form."""
    if config.formulation == "d":
        if mask is not None and not np.all(mask):
            raise ConfigurationError("the d-formulation cannot use masked predictors")
        return None, x
    return complete(U, x, mask)


def _gradient(config: EngineConfig, params, U, y, x, beta):
    """RankOneDirection, or a dense tangent matrix for the multinomial model."""
    if config.model == "multinomial":
        return m.multinomial_gradient(params, U, int(y), x=x, beta=beta)
    return _DIRECTION[config.model](params, U, y, x=x, beta=beta)


def apply_gradient(U, grad, eta: float, rank_policy: str = "exact-svd"):
    if isinstance(grad, RankOneDirection):
        return geodesic_step_rank1(U, grad, eta)
    if not np.any(grad):
        return U
    if rank_policy == "rank-one":
        return geodesic_step_rank1(U, dominant_direction(grad), eta)
    return geodesic_step_rankk(U, grad, eta)


def _dense(grad) -> np.ndarray:
    return grad.matrix() if isinstance(grad, RankOneDirection) else grad


def _maintain(config: EngineConfig, U, t: int):
    if (config.reorthogonalize_every and t % config.reorthogonalize_every == 0) \
            or orthonormality_error(U) > DRIFT_TOLERANCE:
        return orthonormalize(U)
    return U


# ---------------------------------------------------------------- prediction

def engine_predict(config: EngineConfig, state: EngineState, x, mask=None, x2=None, mask2=None):
    """Test-time prediction: probability, value, vector or class distribution."""
    U = state.U
    if config.model == "rdp":
        b1, _ = complete(U, x, mask)
        b2, _ = complete(U, x2, mask2)
        return m.rdp_predict(state.params, b1, b2)
    beta, x_full = _coefficients(config, U, x, mask)
    return _PREDICT[config.model](state.params, U, x=x_full, beta=beta)


def prediction_error(config: EngineConfig, prediction, y) -> float:
    """0/1 loss for classifiers, squared error for regressions."""
    if config.model in ("logistic", "rdp"):
        return float((prediction > 0.5) != (y > 0.5))
    if config.model == "svm":
        return float((prediction > 0) != (y > 0))
    if config.model == "multinomial":
        return float(int(np.argmax(prediction)) != int(y))
    e = np.asarray(y, dtype=float) - prediction
    return float(np.sum(e * e))


# ---------------------------------------------------------------- updates

def rdp_pair_step(params: m.RdpParams, U1, U2, x1, x2, y, eta, mu,
                  mask1=None, mask2=None, same: bool = True, supervised: bool = True):
    """Two half-steps on the subspace(s) followed by the logistic parameter step.

    ``U1`` hosts ``x1`` and ``U2`` hosts ``x2``; with ``same=True`` they are
    one subspace and the second half-step sees the result of the first.
    Returns ``(params, U1, U2)``.
    """
    if supervised:
        b2, _ = complete(U2, x2, mask2)
        _, xh1 = complete(U1, x1, mask1)
        U1 = geodesic_step_rank1(U1, m.rdp_direction(params, U1, y, xh1, b2), eta)
        if same:
            U2 = U1
        b1, _ = complete(U1, x1, mask1)
        _, xh2 = complete(U2, x2, mask2)
        U2 = geodesic_step_rank1(U2, m.rdp_direction(params, U2, y, xh2, b1), eta)
        if same:
            U1 = U2
    else:
        U1 = geodesic_step_rank1(U1, odr_direction(U1, x1, mask1), eta)
        if same:
            U2 = U1
        U2 = geodesic_step_rank1(U2, odr_direction(U2, x2, mask2), eta)
        if same:
            U1 = U2
    b1, _ = complete(U1, x1, mask1)
    b2, _ = complete(U2, x2, mask2)
    return m.rdp_param_update(params, b1, b2, y, mu), U1, U2


def engine_step(config: EngineConfig, state: EngineState, sample: StreamSample) -> EngineState:
    t = state.step_count + 1
    eta, mu = step_sizes(config, t)
    U = state.U
    try:
        if config.model == "rdp":
            params, U, _ = rdp_pair_step(state.params, U, U, sample.x, sample.x2, sample.y, eta, mu,
                                         sample.mask, sample.mask2, True, config.supervised)
        else:
            beta, x = _coefficients(config, U, sample.x, sample.mask)
            if config.supervised:
                grad = _gradient(config, state.params, U, sample.y, x, beta)
                U = apply_gradient(U, grad, eta, config.rank_policy)
            else:
                U = geodesic_step_rank1(U, odr_direction(U, sample.x, sample.mask), eta)
            params = _UPDATE[config.model](state.params, U, sample.y, mu, x=x, beta=beta)
    except (IllConditionedMaskError, InsufficientObservationsError):
        return replace(state, step_count=t, skipped=state.skipped + 1)
    return EngineState(_maintain(config, U, t), params, t, state.skipped, state.pending)


def engine_step_batch(config: EngineConfig, state: EngineState,
                      samples: Sequence[StreamSample]) -> EngineState:
    """One geodesic step on the averaged gradient, then a parameter step per sample."""
    if len(samples) != config.batch_size:
        raise ConfigurationError(f"batch of {len(samples)} samples, config expects {config.batch_size}")
    if config.model == "rdp":
        raise ConfigurationError("the interaction model is updated one pair at a time")
    t = state.step_count + len(samples)
    eta, mu = step_sizes(config, state.step_count + 1)
    U = state.U
    kept, total = [], np.zeros_like(U)
    skipped = state.skipped
    for s in samples:
        try:
            beta, x = _coefficients(config, U, s.x, s.mask)
            if config.supervised:
                grad = _gradient(config, state.params, U, s.y, x, beta)
            else:
                grad = odr_direction(U, s.x, s.mask)
        except (IllConditionedMaskError, InsufficientObservationsError):
            skipped += 1
            continue
        total += _dense(grad)
        kept.append((s, x, beta))
    params = state.params
    if kept:
        U = apply_gradient(U, total / len(kept), eta, config.rank_policy)
        for s, x, beta in kept:
            params = _UPDATE[config.model](params, U, s.y, mu, x=x, beta=beta)
    return EngineState(_maintain(config, U, t), params, t, skipped, ())


def engine_push(config: EngineConfig, state: EngineState, sample: StreamSample) -> EngineState:
    """Buffer a sample and flush a batch step when the buffer is full."""
    if config.batch_size == 1:
        return engine_step(config, state, sample)
    pending = state.pending + (sample,)
    if len(pending) < config.batch_size:
        return replace(state, pending=pending)
    return engine_step_batch(config, replace(state, pending=()), list(pending))


# ---------------------------------------------------------------- streams and reports

@dataclass
class RunReport:
    config: dict
    seed: int
    metric: str
    steps: list = field(default_factory=list)
    online_error: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    elapsed_ns: list = field(default_factory=list)
    final: float = float("nan")
    train_online: float = float("nan")
    skipped: int = 0
    state: object = field(default=None, repr=False, compare=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,online_error,eps_t,elapsed_ns\n")
        for row in zip(self.steps, self.online_error, self.eps, self.elapsed_ns):
            buf.write(f"{row[0]},{fmt(row[1])},{fmt(row[2])},{row[3]}\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {"metric": self.metric, "final": self.final, "train_online": self.train_online,
                "skipped": self.skipped, "seed": self.seed, "config": self.config}

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2)


def fmt(value: float) -> str:
    """Full double precision, 17 significant digits."""
    if value != value:
        return "nan"
    return format(float(value), ".17g")


def _samples(stream):
    return stream if isinstance(stream, (list, tuple)) else list(stream)


def run_stream(config: EngineConfig, train, test=(), truth: Optional[Callable[[int], np.ndarray]] = None,
               test_mode: str = "frozen", timing: bool = False, state: Optional[EngineState] = None) -> RunReport:
    """Prequential training pass followed by held-out evaluation.

    Every training sample is predicted before it is learned from. With
    ``test_mode="frozen"`` the test samples are only predicted; with
    ``"prequential"`` learning continues through them. ``truth(t)`` returns
    the ground-truth basis for overall sample index ``t`` when available.
    """
    if test_mode not in ("frozen", "prequential"):
        raise ConfigurationError(f"unknown test_mode {test_mode!r}")
    train, test = _samples(train), _samples(test)
    if state is None:
        state = init_state(config)
    report = RunReport(config=asdict(config), seed=config.seed,
                       metric="P_e" if config.model in CLASSIFIERS else "RMSE")
    errors = []
    t = 0
    for phase, samples in (("train", train), ("test", test)):
        learn = phase == "train" or test_mode == "prequential"
        for s in samples:
            start = time.perf_counter_ns() if timing else 0
            pred = engine_predict(config, state, s.x, s.mask, s.x2, s.mask2)
            err = prediction_error(config, pred, s.y)
            if learn:
                state = engine_push(config, state, s)
            elapsed = time.perf_counter_ns() - start if timing else 0
            if phase == "test":
                errors.append(err)
            report.steps.append(t)
            report.online_error.append(err)
            report.eps.append(subspace_error(state.U, truth(t)) if truth is not None else float("nan"))
            report.elapsed_ns.append(elapsed)
            t += 1
    n_train = len(train)
    if n_train:
        report.train_online = float(np.mean(report.online_error[:n_train]))
    if errors:
        mean = float(np.mean(errors))
        report.final = math.sqrt(mean) if report.metric == "RMSE" else mean
    report.skipped = state.skipped
    report.state = state
    return report
