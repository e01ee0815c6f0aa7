"""Experiment configuration files.

Grammar (one setting per line)::

    # comment to end of line
    kind = static-ellipse            # top-level key
    seeds = 0-9                      # ranges and comma lists
    data.r1 = 2.0                    # dotted section.field
    osdr.eta = tune                  # "tune" picks the value from the grid
    sweep.engine.d = 1,2,5           # sweep axis: any section.field

Keys are ``name`` or ``section.name``; values are numbers, booleans
(``true``/``false``), bare strings, or comma-separated lists for tuple
fields. Each kind starts from its own preset (see :data:`PRESETS`), which
the file then overrides. Unknown keys and malformed values are reported
with their line number.
"""

import dataclasses
import re
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

KINDS = ("static-ellipse", "rotating", "linear", "spectrum", "tree-network", "external-csv")
CONTENDERS = ("osdr", "odr", "flat")
TEST_MODES = ("auto", "frozen", "prequential")


class ConfigError(ValueError):
    """Parse or validation failure; ``lineno`` is set when a line is to blame."""

    def __init__(self, message: str, lineno: Optional[int] = None, source: str = "<config>"):
        self.lineno = lineno
        prefix = f"{source}:{lineno}: " if lineno is not None else f"{source}: "
        super().__init__(prefix + message)


@dataclass(frozen=True)
class DataConfig:
    D: int = 100
    d_true: int = 2
    N: int = 6000
    noise_var: float = 1e-3
    r1: float = 2.0
    r2: float = 0.4
    label_gain: float = 100.0
    tau: float = 1.0
    onset: int = 500
    log_c_ratio: float = 0.0
    intercept: float = 0.0
    response_noise_var: float = 1e-3
    spectrum_type: str = "I"
    observe_fraction: float = 1.0
    spread: float = 0.5
    drift: float = 1.0
    offset_norm: float = 3.0
    path: str = ""


@dataclass(frozen=True)
class EngineSection:
    d: int = 2
    model: str = "logistic"
    formulation: str = "d"
    batch_size: int = 1
    rank_policy: str = "exact-svd"
    schedule: str = "constant"
    reorthogonalize_every: int = 1000
    init_coef_norm: float = 1.0
    n_classes: int = 2
    affinity: str = "mahalanobis"


@dataclass(frozen=True)
class Rates:
    """Step sizes of one contender; ``None`` means tuned on the grid."""

    eta: Optional[float] = None
    mu: Optional[float] = None


@dataclass(frozen=True)
class TuneConfig:
    eta_grid: Tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    mu_grid: Tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    seeds: Tuple[int, ...] = (1000, 1001, 1002)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "static-ellipse"
    seeds: Tuple[int, ...] = tuple(range(10))
    out: str = "runs"
    n_train: int = 3000
    test_mode: str = "auto"
    timing: bool = False
    contenders: Tuple[str, ...] = ("osdr", "odr")
    data: DataConfig = field(default_factory=DataConfig)
    engine: EngineSection = field(default_factory=EngineSection)
    osdr: Rates = field(default_factory=Rates)
    odr: Rates = field(default_factory=Rates)
    flat: Rates = field(default_factory=Rates)
    tune: TuneConfig = field(default_factory=TuneConfig)
    sweep: Tuple[Tuple[str, tuple], ...] = ()

    @property
    def resolved_test_mode(self) -> str:
        if self.test_mode != "auto":
            return self.test_mode
        return "prequential" if self.kind in ("rotating", "tree-network") else "frozen"

    def rates(self, contender: str) -> Rates:
        return getattr(self, contender)


SECTIONS = {"data": DataConfig, "engine": EngineSection, "osdr": Rates, "odr": Rates,
            "flat": Rates, "tune": TuneConfig}

# Per-kind starting points, written as the same dotted keys a file would use.
PRESETS = {
    "static-ellipse": {},
    "rotating": {"data.r1": 4.0, "data.r2": 0.4},
    "linear": {"data.D": 2, "data.r1": 2.0, "data.r2": 1.0, "engine.d": 1, "engine.model": "linear"},
    "spectrum": {"data.D": 3, "data.N": 10_000, "n_train": 5000},
    "tree-network": {"data.noise_var": 0.01, "data.observe_fraction": 0.4, "engine.model": "rdp",
                     "contenders": ("osdr", "flat"), "tune.eta_grid": (1e-1, 1e-2, 1e-3)},
    "external-csv": {"n_train": 0},
}


def _hints(cls):
    return typing.get_type_hints(cls)


def _coerce(text: str, hint, lineno: int, key: str, source: str):
    """Turn a raw string into a value of type ``hint``."""
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is tuple:
        inner = args[0]
        if inner is int:
            return _int_list(text, lineno, key, source)
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise ConfigError(f"{key}: empty list", lineno, source)
        return tuple(_coerce(t, inner, lineno, key, source) for t in items)
    if origin is typing.Union and type(None) in args:
        if text.strip().lower() == "tune":
            return None
        return _coerce(text, next(a for a in args if a is not type(None)), lineno, key, source)
    text = text.strip()
    try:
        if hint is bool:
            lowered = text.lower()
            if lowered not in ("true", "false"):
                raise ValueError(f"expected true or false, got {text!r}")
            return lowered == "true"
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}", lineno, source) from None
    return text


def _int_list(text: str, lineno: Optional[int], key: str, source: str) -> tuple:
    out = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        span = re.fullmatch(r"(\d+)\s*-\s*(\d+)", part)
        try:
            out.extend(range(int(span[1]), int(span[2]) + 1) if span else [int(part)])
        except ValueError:
            raise ConfigError(f"{key}: bad integer list entry {part!r}", lineno, source) from None
    if not out:
        raise ConfigError(f"{key}: empty list", lineno, source)
    return tuple(out)


def parse_seeds(text: str) -> Tuple[int, ...]:
    """``"0-9"``, ``"1,3,5"`` or a mix, as used by ``--seeds``."""
    return _int_list(text, None, "seeds", "--seeds")


def field_hint(key: str):
    """Type hint of a dotted config key, or ``None`` if no such field exists."""
    parts = key.split(".")
    if len(parts) == 1:
        hints = _hints(ExperimentConfig)
        return hints.get(parts[0]) if parts[0] not in SECTIONS and parts[0] != "sweep" else None
    if len(parts) == 2 and parts[0] in SECTIONS:
        return _hints(SECTIONS[parts[0]]).get(parts[1])
    return None


def _assign(values: dict, key: str, raw, lineno: Optional[int], source: str) -> None:
    if key.startswith("sweep."):
        axis = key[len("sweep."):]
        hint = field_hint(axis)
        if hint is None or "." not in axis:
            raise ConfigError(f"sweep axis {axis!r} does not name a config field", lineno, source)
        if isinstance(raw, str):
            items = tuple(_coerce(t, hint, lineno, key, source) for t in raw.split(",") if t.strip())
        else:
            items = tuple(raw)
        if not items:
            raise ConfigError(f"sweep axis {axis!r} has no values", lineno, source)
        values.setdefault("sweep", {})[axis] = items
        return
    hint = field_hint(key)
    if hint is None:
        raise ConfigError(f"unknown field {key!r}", lineno, source)
    values[key] = _coerce(raw, hint, lineno, key, source) if isinstance(raw, str) else raw


def build_config(values: dict, source: str = "<config>", lines: Optional[dict] = None) -> ExperimentConfig:
    """Assemble and validate a config from resolved dotted-key values."""
    lines = lines or {}
    top, sections = {}, {name: {} for name in SECTIONS}
    for key, value in values.items():
        if key == "sweep":
            top["sweep"] = tuple(value.items())
        elif "." in key:
            section, name = key.split(".", 1)
            sections[section][name] = value
        else:
            top[key] = value
    cfg = ExperimentConfig(**top, **{name: SECTIONS[name](**kw) for name, kw in sections.items()})
    validate(cfg, source, lines)
    return cfg


def validate(cfg: ExperimentConfig, source: str = "<config>", lines: Optional[dict] = None) -> None:
    lines = lines or {}

    def fail(message, *keys):
        lineno = next((lines[k] for k in keys if k in lines), None)
        raise ConfigError(message, lineno, source)

    if cfg.kind not in KINDS:
        fail(f"unknown kind {cfg.kind!r}; expected one of {', '.join(KINDS)}", "kind")
    if not cfg.seeds:
        fail("at least one seed is required", "seeds")
    if cfg.test_mode not in TEST_MODES:
        fail(f"test_mode must be one of {TEST_MODES}", "test_mode")
    for name in cfg.contenders:
        if name not in CONTENDERS:
            fail(f"unknown contender {name!r}; expected one of {CONTENDERS}", "contenders")
    if cfg.kind == "linear" and "flat" in cfg.contenders:
        fail("the flat logistic contender needs binary labels", "contenders")
    if cfg.kind == "external-csv" and not cfg.data.path:
        fail("external-csv needs data.path", "data.path")
    if cfg.n_train < 0:
        fail("n_train must be nonnegative (0 means half the stream)", "n_train")
    if cfg.kind != "external-csv" and not 1 <= cfg.engine.d < cfg.data.D:
        fail(f"engine.d must lie in [1, data.D={cfg.data.D})", "engine.d")
    if not cfg.tune.seeds or set(cfg.tune.seeds) & set(cfg.seeds):
        fail("tune.seeds must be nonempty and disjoint from the evaluation seeds", "tune.seeds", "seeds")
    for grid in ("eta_grid", "mu_grid"):
        if any(v < 0 for v in getattr(cfg.tune, grid)):
            fail(f"tune.{grid} entries must be nonnegative", f"tune.{grid}")


def _raw_lines(text: str, source: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno, source)
        key, value = (p.strip() for p in line.split("=", 1))
        if not key or not value:
            raise ConfigError("empty key or value", lineno, source)
        yield lineno, key, value


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    entries = list(_raw_lines(text, source))
    kind = "static-ellipse"
    for lineno, key, value in entries:
        if key == "kind":
            if value not in KINDS:
                raise ConfigError(f"unknown kind {value!r}; expected one of {', '.join(KINDS)}", lineno, source)
            kind = value
    values, lines = {"kind": kind}, {}
    for key, value in PRESETS[kind].items():
        _assign(values, key, value, None, source)
    for lineno, key, value in entries:
        if key in lines and not key.startswith("sweep."):
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", lineno, source)
        _assign(values, key, value, lineno, source)
        lines[key] = lineno
    return build_config(values, source, lines)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy with dotted-key overrides, e.g. ``with_overrides(cfg, **{"data.tau": 2.0})``."""
    top, nested = {}, {}
    for key, value in changes.items():
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SECTIONS or name not in _hints(SECTIONS[section]):
                raise ConfigError(f"unknown field {key!r}")
            nested.setdefault(section, {})[name] = value
        else:
            if key not in _hints(ExperimentConfig):
                raise ConfigError(f"unknown field {key!r}")
            top[key] = value
    for section, kw in nested.items():
        top[section] = dataclasses.replace(getattr(cfg, section), **kw)
    out = dataclasses.replace(cfg, **top)
    validate(out)
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parsing it gives back an equal config."""
    def show(v):
        if isinstance(v, tuple):
            return ",".join(show(x) for x in v)
        if isinstance(v, bool):
            return "true" if v else "false"
        if v is None:
            return "tune"
        return repr(v) if isinstance(v, float) else str(v)

    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if f.name in SECTIONS:
            for g in dataclasses.fields(value):
                if getattr(value, g.name) != "":
                    lines.append(f"{f.name}.{g.name} = {show(getattr(value, g.name))}")
        elif f.name == "sweep":
            lines.extend(f"sweep.{axis} = {show(vals)}" for axis, vals in value)
        else:
            lines.append(f"{f.name} = {show(value)}")
    return "\n".join(lines) + "\n"
