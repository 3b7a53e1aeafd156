"""Run configuration: a flat TOML document with dotted section keys.

Grammar (a strict subset of TOML)::

    system = "point_mass"          # or "pendulum"
    experiment = "train"           # train | lesion | sweep
    seed = 0
    output = "results"
    plant.n = 10
    adaptation.gamma = 0.99
    cost.position = [10.0, 10.0]   # scalar or one value per plant coordinate
    sweep.grid = [0.7, 0.99]

``[section]`` tables are accepted as an equivalent spelling.  Every key has
a default equal to the published experimental setting for the chosen
system; unknown keys and out-of-range values are rejected.
"""

import dataclasses
import json
import re
import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SYSTEMS = ("point_mass", "pendulum")
EXPERIMENTS = ("train", "lesion", "sweep")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.message, self.key, self.line = message, key, line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class PointMassParams:
    n: int = 10
    dt: float = 0.1
    lambda_v: float = 0.25
    target: tuple = (1.0, 0.0)


@dataclass(frozen=True)
class PendulumParams:
    n: int = 10
    dt: float = 0.1
    mass: float = 0.2
    length: float = 0.3
    inertia: float = 0.006
    cart_mass: float = 0.5
    friction: float = 0.1
    gravity: float = 9.8
    theta0: float = 0.1


@dataclass(frozen=True)
class CostParams:
    position: tuple = (10.0, 10.0)
    velocity: tuple = (0.0, 0.0)
    s: float = 2.0
    r: float = 2.0


@dataclass(frozen=True)
class AdaptationParams:
    T: int = 500
    gamma: float = 0.99
    sigma_y2: float = 0.01
    tol: float = 1e-3
    max_episodes: int = 50
    divergence_guard: float = 1e6
    w0: str = "zero"
    w0_perturbation: float = 0.2
    symmetric_features: bool = False
    cond_max: float = 1e8


@dataclass(frozen=True)
class LesionParams:
    n_f: int = 2
    timings: tuple = ("before", "during", "after")
    k1: int = 5
    n_seeds: int = 10
    systems: tuple = SYSTEMS
    success_fraction: float = 0.8


@dataclass(frozen=True)
class SweepParams:
    kind: str = "discount"
    grid: tuple = (0.7, 0.99)
    n_seeds: int = 5


@dataclass(frozen=True)
class RunConfig:
    system: str = "point_mass"
    experiment: str = "train"
    seed: int = 0
    output: str = "results"
    plant: PointMassParams | PendulumParams = field(default_factory=PointMassParams)
    cost: CostParams = field(default_factory=CostParams)
    adaptation: AdaptationParams = field(default_factory=AdaptationParams)
    lesion: LesionParams = field(default_factory=LesionParams)
    sweep: SweepParams = field(default_factory=SweepParams)

    def task_kwargs(self) -> dict:
        kw = dataclasses.asdict(self.plant)
        kw.update(position=self.cost.position, velocity=self.cost.velocity,
                  s=self.cost.s, r=self.cost.r)
        return kw


def default_config(system: str = "point_mass") -> RunConfig:
    if system == "point_mass":
        return RunConfig(system=system)
    if system == "pendulum":
        return RunConfig(
            system=system,
            plant=PendulumParams(),
            cost=CostParams(position=(1.0, 10.0), velocity=(1.0, 10.0)),
            adaptation=AdaptationParams(T=400, w0="oracle"),
        )
    raise ConfigError(f"unknown system {system!r}; expected one of {SYSTEMS}", key="system")


SECTIONS = ("plant", "cost", "adaptation", "lesion", "sweep")
TOP_LEVEL = ("system", "experiment", "seed", "output")


def _flatten(doc: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def _find_line(text: str, key: str) -> int | None:
    leaf = re.escape(key.split(".")[-1])
    pat = re.compile(rf"^\s*(?:[\w.]*\.)?{leaf}\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.match(line):
            return i
    return None


def _coerce(value, default, key: str):
    """Convert a parsed TOML value to the type of ``default``."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", key)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key)
        return value
    if isinstance(default, tuple):
        items = value if isinstance(value, list) else [value]
        if default and isinstance(default[0], str):
            if not all(isinstance(v, str) for v in items):
                raise ConfigError(f"expected a list of strings, got {value!r}", key)
            return tuple(items)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in items):
            raise ConfigError(f"expected a number or list of numbers, got {value!r}", key)
        items = [float(v) for v in items]
        if len(items) == 1 and len(default) > 1 and not isinstance(value, list):
            items = items * len(default)
        return tuple(items)
    raise ConfigError(f"unsupported value {value!r}", key)


def _check(cond: bool, key: str, message: str):
    if not cond:
        raise ConfigError(message, key)


def validate(cfg: RunConfig) -> RunConfig:
    p, a, c, les, sw = cfg.plant, cfg.adaptation, cfg.cost, cfg.lesion, cfg.sweep
    _check(cfg.system in SYSTEMS, "system", f"must be one of {SYSTEMS}")
    _check(cfg.experiment in EXPERIMENTS, "experiment", f"must be one of {EXPERIMENTS}")
    _check(cfg.seed >= 0, "seed", "must be non-negative")
    _check(p.n > 2, "plant.n", "network size must exceed the plant dimension (2)")
    _check(p.dt > 0, "plant.dt", "must be positive")
    if isinstance(p, PointMassParams):
        _check(p.lambda_v >= 0, "plant.lambda_v", "must be non-negative")
        _check(len(p.target) == 2, "plant.target", "must have two coordinates")
    else:
        for name in ("mass", "length", "inertia", "cart_mass"):
            _check(getattr(p, name) > 0, f"plant.{name}", "must be positive")
        _check(p.friction >= 0, "plant.friction", "must be non-negative")
    for name in ("position", "velocity"):
        vals = getattr(c, name)
        _check(len(vals) == 2, f"cost.{name}", "needs one weight per plant coordinate (2)")
        _check(min(vals) >= 0, f"cost.{name}", "weights must be non-negative")
    _check(c.s >= 0, "cost.s", "must be non-negative")
    _check(c.r > 0, "cost.r", "must be positive (R must be positive definite)")
    _check(a.T >= 1, "adaptation.T", "must be >= 1")
    _check(0.0 <= a.gamma <= 1.0, "adaptation.gamma", f"must lie in [0, 1], got {a.gamma}")
    _check(a.sigma_y2 >= 0, "adaptation.sigma_y2", "must be non-negative")
    _check(a.tol > 0, "adaptation.tol", "must be positive")
    _check(a.max_episodes >= 1, "adaptation.max_episodes", "must be >= 1")
    _check(a.divergence_guard > 0, "adaptation.divergence_guard", "must be positive")
    _check(a.w0 in ("zero", "oracle"), "adaptation.w0", "must be 'zero' or 'oracle'")
    _check(a.w0_perturbation >= 0, "adaptation.w0_perturbation", "must be non-negative")
    _check(a.cond_max > 1, "adaptation.cond_max", "must exceed 1")
    _check(0 <= les.n_f <= p.n, "lesion.n_f", f"must lie in [0, {p.n}]")
    _check(set(les.timings) <= {"before", "during", "after"} and les.timings,
           "lesion.timings", "must be a non-empty subset of before/during/after")
    _check(les.k1 >= 1, "lesion.k1", "must be >= 1")
    _check(les.n_seeds >= 1, "lesion.n_seeds", "must be >= 1")
    _check(set(les.systems) <= set(SYSTEMS) and les.systems, "lesion.systems",
           f"must be a non-empty subset of {SYSTEMS}")
    _check(0 < les.success_fraction <= 1, "lesion.success_fraction", "must lie in (0, 1]")
    _check(sw.kind in ("episode_length", "discount", "exploration"), "sweep.kind",
           "must be episode_length, discount or exploration")
    _check(len(sw.grid) > 0, "sweep.grid", "must not be empty")
    _check(sw.n_seeds >= 1, "sweep.n_seeds", "must be >= 1")
    if sw.kind == "episode_length":
        _check(all(v >= 1 and float(v).is_integer() for v in sw.grid), "sweep.grid",
               "episode lengths must be positive integers")
    elif sw.kind == "discount":
        _check(all(0 <= v <= 1 for v in sw.grid), "sweep.grid", "discounts must lie in [0, 1]")
    else:
        _check(all(v >= 0 for v in sw.grid), "sweep.grid", "variances must be non-negative")
    return cfg


def from_mapping(flat: dict, text: str = "") -> RunConfig:
    """Resolve a ``{dotted key: value}`` mapping against the defaults."""
    system = flat.get("system", "point_mass")
    if system not in SYSTEMS:
        raise ConfigError(f"unknown system {system!r}; expected one of {SYSTEMS}", "system",
                          _find_line(text, "system"))
    cfg = default_config(system)
    top, sections = {}, {s: {} for s in SECTIONS}
    for key, value in flat.items():
        try:
            if "." not in key:
                if key not in TOP_LEVEL:
                    raise ConfigError("unknown key", key)
                default = getattr(cfg, key)
                top[key] = _coerce(value, default, key)
                continue
            section, name = key.split(".", 1)
            if section not in SECTIONS:
                raise ConfigError("unknown section", key)
            sub = getattr(cfg, section)
            if name not in {f.name for f in fields(sub)}:
                raise ConfigError(f"unknown key for system {system!r}", key)
            sections[section][name] = _coerce(value, getattr(sub, name), key)
        except ConfigError as exc:
            raise ConfigError(exc.message, key, _find_line(text, key)) from None
    parts = {s: dataclasses.replace(getattr(cfg, s), **kw) for s, kw in sections.items()}
    cfg = dataclasses.replace(cfg, **top, **parts)
    try:
        return validate(cfg)
    except ConfigError as exc:
        raise ConfigError(exc.message, exc.key, _find_line(text, exc.key)) from None


def parse_config(text: str) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    return from_mapping(_flatten(doc), text)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v) if not (isinstance(v, float) and v != v) else "nan"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, tuple):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {v!r}")


def dump_config(cfg: RunConfig) -> str:
    """Fully resolved config in the flat grammar; ``parse_config`` inverts it."""
    lines = [f"{k} = {_toml_value(getattr(cfg, k))}" for k in TOP_LEVEL]
    for section in SECTIONS:
        sub = getattr(cfg, section)
        lines += [f"{section}.{f.name} = {_toml_value(getattr(sub, f.name))}" for f in fields(sub)]
    return "\n".join(lines) + "\n"
