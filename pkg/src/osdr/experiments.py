"""Seeded OSDR / ODR / flat-logistic comparisons.

An experiment is a list of config points (one, or the grid of a sweep). For
every point and contender the step sizes left as ``tune`` are picked on
separate tuning seeds, then the contender runs on every evaluation seed.
All contenders at a point see the same stream for a given seed.

Tuning objective: mean prequential error over whole tuning streams. ODR never
reads the response, so its subspace step size is picked on prequential
reconstruction error and only its head step size on the task error.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import datasets
from .baselines import FlatLogistic, OdrState, odr_step, pair_features
from .config import ExperimentConfig, dump_config, with_overrides
from .datagen import (
    EllipseSpec,
    RotationSpec,
    SpectrumSpec,
    Stream,
    TreeNetworkSpec,
    apply_mask,
    gen_linear_response,
    gen_rotating,
    gen_spectrum_classification,
    gen_static_ellipse,
    gen_tree_network,
)
from .engine import CLASSIFIERS, EngineConfig, RunReport, fmt, init_state, run_stream
from .grassmann import (
    IllConditionedMaskError,
    InsufficientObservationsError,
    complete,
    subspace_error,
    tangent_residual,
)
from .tree import build_tree, tree_interaction_step, tree_predict_interaction, tree_route

MASK_STREAM = 2
NUMERIC_FAILURES = (FloatingPointError, ArithmeticError, np.linalg.LinAlgError, ValueError)


# ---------------------------------------------------------------- streams

def make_stream(cfg: ExperimentConfig, seed: int) -> Stream:
    """The sample stream of ``cfg`` for ``seed``; identical for every contender."""
    g = cfg.data
    if cfg.kind == "static-ellipse":
        stream = gen_static_ellipse(EllipseSpec(g.r1, g.r2), g.D, g.noise_var, g.N, seed, g.label_gain)
    elif cfg.kind == "rotating":
        stream = gen_rotating(RotationSpec(g.tau, g.onset, g.N), EllipseSpec(g.r1, g.r2), g.D,
                              g.noise_var, seed, g.label_gain)
    elif cfg.kind == "linear":
        c = np.ones(g.d_true)
        c[0] = math.exp(g.log_c_ratio)
        ellipse = EllipseSpec(g.r1, g.r2) if g.d_true == 2 else None
        stream = gen_linear_response(g.D, g.d_true, c, g.intercept, g.response_noise_var, g.N, seed,
                                     ellipse=ellipse, predictor_noise_var=g.noise_var, latent_coef=True)
    elif cfg.kind == "spectrum":
        stream = gen_spectrum_classification(SpectrumSpec(g.D, g.d_true, g.N, g.spectrum_type), seed)
    elif cfg.kind == "tree-network":
        return gen_tree_network(TreeNetworkSpec(
            D=g.D, d=g.d_true, N=g.N, observe_fraction=g.observe_fraction, noise_var=g.noise_var,
            spread=g.spread, drift=g.drift, offset_norm=g.offset_norm), seed)
    else:
        stream = datasets.load(g.path)
    if g.observe_fraction < 1.0:
        stream = apply_mask(stream, g.observe_fraction, [seed, MASK_STREAM], min_observed=cfg.engine.d)
    return stream


def n_train(cfg: ExperimentConfig, stream: Stream) -> int:
    n = cfg.n_train or len(stream) // 2
    if n > len(stream):
        raise ValueError(f"n_train={n} exceeds the stream length {len(stream)}")
    return n


def engine_config(cfg: ExperimentConfig, contender: str, eta: float, mu: float, seed: int,
                  D: Optional[int] = None) -> EngineConfig:
    e = cfg.engine
    return EngineConfig(D=D or cfg.data.D, d=e.d, model=e.model, formulation=e.formulation, eta=eta, mu=mu,
                        batch_size=e.batch_size, rank_policy=e.rank_policy, schedule=e.schedule,
                        reorthogonalize_every=e.reorthogonalize_every, supervised=contender == "osdr",
                        n_classes=e.n_classes, init_coef_norm=e.init_coef_norm, seed=seed)


# ---------------------------------------------------------------- contenders

def _loop(report: RunReport, train, test, predict, learn, error, eps, test_mode: str, timing: bool) -> RunReport:
    """Predict-then-learn pass shared by the tree and flat contenders."""
    test_errors = []
    t = 0
    for phase, samples in (("train", train), ("test", test)):
        learning = phase == "train" or test_mode == "prequential"
        for s in samples:
            start = time.perf_counter_ns() if timing else 0
            err = error(predict(s), s.y)
            if learning:
                learn(s)
            report.elapsed_ns.append(time.perf_counter_ns() - start if timing else 0)
            report.steps.append(t)
            report.online_error.append(err)
            report.eps.append(eps(t))
            if phase == "test":
                test_errors.append(err)
            t += 1
    if len(train):
        report.train_online = float(np.mean(report.online_error[:len(train)]))
    if test_errors:
        report.final = float(np.mean(test_errors))
    return report


def _binary_error(p: float, y) -> float:
    return float((p >= 0.5) != (y >= 0.5))


def run_flat(stream: Stream, mu: float, seed: int, n_tr: int, test_mode: str, timing: bool = False) -> RunReport:
    """Online logistic regression on raw (pairwise-product) features."""
    pairs = stream.X2 is not None
    model = FlatLogistic(stream.D, mu)

    def feats(s):
        if pairs:
            return pair_features(s.x, s.x2, s.mask, s.mask2)
        return s.x if s.mask is None else np.where(s.mask, s.x, 0.0)

    report = RunReport(config={"contender": "flat", "mu": mu}, seed=seed, metric="P_e")
    samples = list(stream)
    return _loop(report, samples[:n_tr], samples[n_tr:], lambda s: model.predict_proba(feats(s)),
                 lambda s: model.update(feats(s), s.y), _binary_error, lambda t: float("nan"),
                 test_mode, timing)


def initial_tree(cfg: ExperimentConfig, stream: Stream, seed: int):
    """Known structure, offsets and shapes; leaf subspaces start at random."""
    d = cfg.engine.d
    shape = np.sort(np.asarray(stream.meta["shape"], dtype=float))[::-1]
    shape = np.concatenate([shape, np.full(max(0, d - shape.size), shape[-1])])[:d]
    return build_tree(stream.meta["structure"], stream.D, d, seed, offsets=stream.meta["offsets"],
                      shapes={k: shape for k in stream.meta["structure"]})


def run_tree(cfg: ExperimentConfig, stream: Stream, eta: float, mu: float, seed: int, n_tr: int,
             test_mode: str, supervised: bool = True, timing: bool = False, with_truth: bool = True) -> RunReport:
    kind = cfg.engine.affinity
    state = {"tree": initial_tree(cfg, stream, seed), "route": None}

    def predict(s):
        state["route"] = tree_route(state["tree"], s.x, s.x2, kind, s.mask, s.mask2)
        return tree_predict_interaction(state["tree"], s.x, s.x2, kind, s.mask, s.mask2, route=state["route"])

    def learn(s):
        state["tree"] = tree_interaction_step(state["tree"], s.x, s.x2, s.y, eta, mu, kind, s.mask, s.mask2,
                                              route=state["route"], supervised=supervised)

    def eps(t):
        if not with_truth or stream.truth is None:
            return float("nan")
        truth = stream.truth(t)
        tree = state["tree"]
        return float(np.mean([subspace_error(tree[k].U, truth[k]) for k in tree.leaves]))

    report = RunReport(config={"contender": "osdr" if supervised else "odr", "eta": eta, "mu": mu,
                               "affinity": kind}, seed=seed, metric="P_e")
    samples = list(stream)
    _loop(report, samples[:n_tr], samples[n_tr:], predict, learn, _binary_error, eps, test_mode, timing)
    report.state = state["tree"]
    return report


def run_contender(cfg: ExperimentConfig, contender: str, stream: Stream, eta: float, mu: float, seed: int,
                  tuning: bool = False) -> RunReport:
    """One contender on one stream; with ``tuning`` the whole stream is training."""
    n_tr = len(stream) if tuning else n_train(cfg, stream)
    mode = cfg.resolved_test_mode
    if contender == "flat":
        return run_flat(stream, mu, seed, n_tr, mode, cfg.timing and not tuning)
    if cfg.kind == "tree-network":
        return run_tree(cfg, stream, eta, mu, seed, n_tr, mode, supervised=contender == "osdr",
                        timing=cfg.timing and not tuning, with_truth=not tuning)
    if cfg.engine.model == "svm":
        # hinge labels are -1/+1; the generators emit 0/1
        stream = dataclasses.replace(stream, y=np.where(stream.y > 0, 1.0, -1.0))
    samples = list(stream)
    return run_stream(engine_config(cfg, contender, eta, mu, seed, stream.D), samples[:n_tr], samples[n_tr:],
                      truth=None if tuning else stream.truth, test_mode=mode,
                      timing=cfg.timing and not tuning)


def reconstruction_error(cfg: ExperimentConfig, stream: Stream, eta: float, seed: int) -> float:
    """Mean prequential squared residual per observed entry of subspace tracking alone."""
    state = OdrState(init_state(engine_config(cfg, "odr", eta, 0.0, seed, stream.D)).U)
    total, count = 0.0, 0
    for s in stream:
        try:
            _, x_hat = complete(state.U, s.x, s.mask)
        except (InsufficientObservationsError, IllConditionedMaskError):
            continue
        r = tangent_residual(state.U, x_hat)
        total += float(r @ r) / (stream.D if s.mask is None else int(np.sum(s.mask)))
        count += 1
        state = odr_step(state, s.x, eta, s.mask)
    return total / max(count, 1)


# ---------------------------------------------------------------- jobs

@dataclass(frozen=True)
class Job:
    point: int
    contender: str
    seed: int
    eta: float
    mu: float
    task: str  # "eval", "tune" or "recon"


@dataclass
class JobResult:
    job: Job
    value: float = float("nan")
    train_online: float = float("nan")
    metric: str = ""
    skipped: int = 0
    trace: str = ""
    error: str = ""


def _execute(cfg: ExperimentConfig, job: Job) -> JobResult:
    try:
        stream = make_stream(cfg, job.seed)
        if job.task == "recon":
            return JobResult(job, reconstruction_error(cfg, stream, job.eta, job.seed))
        report = run_contender(cfg, job.contender, stream, job.eta, job.mu, job.seed, tuning=job.task == "tune")
        value = report.train_online if job.task == "tune" else report.final
        if not math.isfinite(value):
            raise FloatingPointError(f"non-finite {report.metric}")
        return JobResult(job, value, report.train_online, report.metric, report.skipped,
                         report.to_csv() if job.task == "eval" else "")
    except datasets.DatasetFormatError:
        raise
    except NUMERIC_FAILURES as exc:
        return JobResult(job, error=f"{type(exc).__name__}: {exc}")


def _execute_packed(args) -> JobResult:
    return _execute(*args)


def _run_jobs(points: Sequence[ExperimentConfig], jobs: List[Job], workers: int) -> List[JobResult]:
    tasks = [(points[j.point], j) for j in jobs]
    if workers <= 1 or len(tasks) <= 1:
        return [_execute_packed(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute_packed, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _grid(values: Optional[float], grid: Sequence[float]) -> Tuple[float, ...]:
    return (values,) if values is not None else tuple(grid)


def _pick(results: List[JobResult], key) -> tuple:
    """Grid point with the smallest mean objective; earlier grid entries win ties."""
    scores = {}
    for r in results:
        scores.setdefault(key(r.job), []).append(r.value if not r.error else math.inf)
    return min(scores, key=lambda k: float(np.mean(scores[k])))


def tune_rates(points: Sequence[ExperimentConfig], workers: int = 1) -> dict:
    """``{(point, contender): (eta, mu)}`` for every point and contender."""
    chosen = {}
    # ODR subspace step first: it only depends on the predictors
    recon_jobs = []
    for p, cfg in enumerate(points):
        if "odr" in cfg.contenders and cfg.kind != "tree-network" and cfg.odr.eta is None:
            recon_jobs += [Job(p, "odr", s, eta, 0.0, "recon")
                           for eta in cfg.tune.eta_grid for s in cfg.tune.seeds]
    recon = _run_jobs(points, recon_jobs, workers)
    odr_eta = {p: _pick([r for r in recon if r.job.point == p], lambda j: j.eta)
               for p in sorted({j.point for j in recon_jobs})}
    tune_jobs = []
    for p, cfg in enumerate(points):
        for name in cfg.contenders:
            rates = cfg.rates(name)
            etas = (0.0,) if name == "flat" else ((odr_eta[p],) if p in odr_eta and name == "odr"
                                                   else _grid(rates.eta, cfg.tune.eta_grid))
            mus = _grid(rates.mu, cfg.tune.mu_grid)
            if len(etas) * len(mus) == 1:
                chosen[(p, name)] = (etas[0], mus[0])
                continue
            tune_jobs += [Job(p, name, s, eta, mu, "tune")
                          for eta, mu in itertools.product(etas, mus) for s in cfg.tune.seeds]
    results = _run_jobs(points, tune_jobs, workers)
    for key in {(j.point, j.contender) for j in tune_jobs}:
        chosen[key] = _pick([r for r in results if (r.job.point, r.job.contender) == key],
                            lambda j: (j.eta, j.mu))
    return chosen


# ---------------------------------------------------------------- experiments

@dataclass
class PointSummary:
    point: int
    label: str
    contender: str
    metric: str
    eta: float
    mu: float
    finals: List[float]
    failures: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.finals)) if self.finals else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.finals, ddof=1)) if len(self.finals) > 1 else 0.0


@dataclass
class ExperimentResult:
    points: List[ExperimentConfig]
    labels: List[str]
    axes: List[str]
    summaries: List[PointSummary]
    runs: List[JobResult]

    @property
    def failures(self) -> List[JobResult]:
        return [r for r in self.runs if r.error]

    def summary(self, point: int, contender: str) -> PointSummary:
        return next(s for s in self.summaries if s.point == point and s.contender == contender)


def sweep_points(cfg: ExperimentConfig) -> Tuple[List[ExperimentConfig], List[str], List[str]]:
    """Config for every grid point of the sweep axes (the base config if none)."""
    base = dataclasses.replace(cfg, sweep=())
    if not cfg.sweep:
        return [base], ["base"], []
    axes = [axis for axis, _ in cfg.sweep]
    points, labels = [], []
    for combo in itertools.product(*(vals for _, vals in cfg.sweep)):
        assignment = dict(zip(axes, combo))
        points.append(with_overrides(base, **assignment))
        labels.append(";".join(f"{a}={v}" for a, v in assignment.items()))
    return points, labels, axes


def run_experiment(cfg: ExperimentConfig, workers: int = 1, sweep: bool = True) -> ExperimentResult:
    if sweep:
        points, labels, axes = sweep_points(cfg)
    else:
        points, labels, axes = [dataclasses.replace(cfg, sweep=())], ["base"], []
    for point in points:
        if point.kind != "external-csv":
            engine_config(point, "osdr", 0.0, 0.0, 0)  # fail fast on invalid engine settings
    rates = tune_rates(points, workers)
    jobs = [Job(p, name, seed, *rates[(p, name)], "eval")
            for p, point in enumerate(points) for name in point.contenders for seed in point.seeds]
    runs = _run_jobs(points, jobs, workers)
    summaries = []
    for p, point in enumerate(points):
        for name in point.contenders:
            mine = [r for r in runs if r.job.point == p and r.job.contender == name]
            ok = [r for r in mine if not r.error]
            metric = "P_e" if name == "flat" or point.engine.model in CLASSIFIERS else "RMSE"
            summaries.append(PointSummary(p, labels[p], name, metric, *rates[(p, name)],
                                          [r.value for r in ok], len(mine) - len(ok)))
    return ExperimentResult(points, labels, axes, summaries, runs)


# ---------------------------------------------------------------- artifacts

AGGREGATE_FIELDS = ["point", "label", "contender", "metric", "eta", "mu", "n", "failures", "mean", "std"]


def aggregate_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(AGGREGATE_FIELDS + result.axes)
    for s in result.summaries:
        point = result.points[s.point]
        axis_values = [_lookup(point, a) for a in result.axes]
        out.writerow([s.point, s.label, s.contender, s.metric, fmt(s.eta), fmt(s.mu), len(s.finals), s.failures,
                      fmt(s.mean), fmt(s.std)] + [fmt(v) if isinstance(v, float) else v for v in axis_values])
    return buf.getvalue()


def _lookup(cfg: ExperimentConfig, dotted: str):
    section, name = dotted.split(".", 1)
    return getattr(getattr(cfg, section), name)


def summary_table(result: ExperimentResult) -> str:
    rows = [("label", "contender", "metric", "mean", "std", "n", "eta", "mu")]
    for s in result.summaries:
        rows.append((s.label, s.contender, s.metric, f"{s.mean:.4f}", f"{s.std:.4f}", str(len(s.finals)),
                     f"{s.eta:g}", f"{s.mu:g}"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _mean_traces(runs: List[JobResult]) -> str:
    """Per-step means over seeds of the online error and subspace error."""
    tables = []
    for r in runs:
        rows = list(csv.reader(io.StringIO(r.trace)))[1:]
        tables.append(np.array([[float(v) for v in row[1:3]] for row in rows]).reshape(-1, 2))
    n = min(t.shape[0] for t in tables)
    stacked = np.stack([t[:n] for t in tables])
    with np.errstate(invalid="ignore"):
        mean = np.mean(stacked, axis=0)
    buf = io.StringIO()
    buf.write("step,online_error_mean,eps_t_mean\n")
    for step, (err, eps) in enumerate(mean):
        buf.write(f"{step},{fmt(err)},{fmt(eps)}\n")
    return buf.getvalue()


def write_artifacts(result: ExperimentResult, out_dir) -> Path:
    out = Path(out_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    (out / "traces").mkdir(exist_ok=True)
    (out / "config.txt").write_text(dump_config(result.points[0]) if len(result.points) == 1
                                    else "".join(f"# point {i}: {lab}\n" for i, lab in enumerate(result.labels))
                                    + dump_config(result.points[0]))
    buf = io.StringIO()
    runs_csv = csv.writer(buf, lineterminator="\n")
    runs_csv.writerow(["point", "contender", "seed", "eta", "mu", "metric", "final", "train_online", "skipped",
                       "error"])
    for r in result.runs:
        j = r.job
        runs_csv.writerow([j.point, j.contender, j.seed, fmt(j.eta), fmt(j.mu), r.metric, fmt(r.value),
                           fmt(r.train_online), r.skipped, r.error])
        if not r.error:
            (out / "runs" / f"p{j.point:03d}_{j.contender}_seed{j.seed}.csv").write_text(r.trace)
    (out / "runs.csv").write_text(buf.getvalue())
    for s in result.summaries:
        ok = [r for r in result.runs if r.job.point == s.point and r.job.contender == s.contender and not r.error]
        if ok:
            (out / "traces" / f"p{s.point:03d}_{s.contender}.csv").write_text(_mean_traces(ok))
    (out / "aggregate.csv").write_text(aggregate_csv(result))
    (out / "summary.txt").write_text(summary_table(result))
    manifest = out / "failures.json"
    if result.failures:
        manifest.write_text(json.dumps([{**dataclasses.asdict(r.job), "error": r.error} for r in result.failures],
                                       indent=2, sort_keys=True) + "\n")
    elif manifest.exists():
        manifest.unlink()
    return out


# ---------------------------------------------------------------- comparison

def read_aggregate(path) -> dict:
    with open(path, newline="") as fh:
        return {(row["label"], row["contender"]): row for row in csv.DictReader(fh)}


def compare(path_a, path_b) -> List[dict]:
    """Rows present in both aggregates with ``delta = mean_b - mean_a``."""
    a, b = read_aggregate(path_a), read_aggregate(path_b)
    rows = []
    for key in sorted(set(a) & set(b)):
        ma, mb = float(a[key]["mean"]), float(b[key]["mean"])
        rows.append({"label": key[0], "contender": key[1], "metric": a[key]["metric"],
                     "mean_a": ma, "mean_b": mb, "delta": mb - ma})
    return rows


def compare_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["label", "contender", "metric", "mean_a", "mean_b", "delta"])
    for r in rows:
        out.writerow([r["label"], r["contender"], r["metric"], fmt(r["mean_a"]), fmt(r["mean_b"]), fmt(r["delta"])])
    return buf.getvalue()
