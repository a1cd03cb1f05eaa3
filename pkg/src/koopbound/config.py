"""Declarative experiment configuration.

A config file is a flat, sectioned plain-text format:

    [data]
    train_episodes = 1000
    dt = 0.05

Every key is typed and validated on load with line-precise error messages;
unknown sections or keys are rejected.  ``serialize`` followed by ``parse``
round-trips to an identical configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError


@dataclass
class DataConfig:
    seed: int = 0
    train_episodes: int = 1000
    id_episodes: int = 100
    steps: int = 100
    dt: float = 0.05
    speed: float = 1.5
    position_halfwidth: float = 1.0
    heading_halfwidth: float = 0.5
    resample_interval: int = 10
    input_mode: str = "omega"


@dataclass
class LiftingConfig:
    kind: str = "identity_augmented"
    rbf_count: int = 8
    include_constant: bool = False
    rbf_placement: str = "heading-circle"
    rbf_width: float = 0.8          # 0 -> median-pairwise-distance heuristic
    decoder: str = "projection"
    hidden_width: int = 16
    train_iters: int = 300
    learning_rate: float = 0.01
    loss_alpha: float = 0.1
    loss_beta: float = 0.1


@dataclass
class IdentConfig:
    w_rho: float = 0.5
    w_ctrl: float = 0.2
    lambda_cond: float = 1.0
    epsilon_ctrl: float = 0.01
    ridge: float = 1e-08
    max_iters: int = 8000
    step_size: float = 0.0002
    tol: float = 1e-12
    patience: int = 8000


@dataclass
class ControllerConfig:
    gamma: float = 0.9
    rho: float = 0.073
    c_v: float = 0.01
    q_weight: float = 1.0
    q_lqr: float = 1000000.0
    r_lqr: float = 1.0
    controllability_floor: float = 0.0


@dataclass
class ConformalConfig:
    alpha: float = 0.1
    beta: float = 0.05
    horizon: int = 50
    calib_rollouts: int = 30
    lipschitz_safety: float = 1.2


@dataclass
class RolloutConfig:
    controllers: str = "both"
    steps: int = 50
    n_seeds: int = 20
    radius: float = 0.5
    ref_speed: float = 1.5
    eval_position_halfwidth: float = 0.3
    eval_heading_halfwidth: float = math.pi


@dataclass
class ReportConfig:
    plots: bool = True


@dataclass
class ExperimentConfig:
    preset: str = "dubins-paper"
    data: DataConfig = field(default_factory=DataConfig)
    lifting: LiftingConfig = field(default_factory=LiftingConfig)
    identification: IdentConfig = field(default_factory=IdentConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    conformal: ConformalConfig = field(default_factory=ConformalConfig)
    rollout: RolloutConfig = field(default_factory=RolloutConfig)
    report: ReportConfig = field(default_factory=ReportConfig)


_SECTIONS = {
    "meta": (None, ("preset",)),
    "data": (DataConfig, None),
    "lifting": (LiftingConfig, None),
    "identification": (IdentConfig, None),
    "controller": (ControllerConfig, None),
    "conformal": (ConformalConfig, None),
    "rollout": (RolloutConfig, None),
    "report": (ReportConfig, None),
}

_CHOICES = {
    ("data", "input_mode"): ("omega", "accel-omega"),
    ("lifting", "kind"): ("identity_augmented", "radial_basis", "trained_encoder"),
    ("lifting", "rbf_placement"): ("heading-circle", "origin", "data"),
    ("lifting", "decoder"): ("projection", "linear", "trained"),
    ("rollout", "controllers"): ("both", "nfc", "crdr"),
}

# (section, key) -> (predicate, requirement text)
_RANGES = {
    ("data", "train_episodes"): (lambda v: v >= 1, "must be >= 1"),
    ("data", "id_episodes"): (lambda v: v >= 1, "must be >= 1"),
    ("data", "steps"): (lambda v: v >= 1, "must be >= 1"),
    ("data", "dt"): (lambda v: v > 0, "must be > 0"),
    ("data", "speed"): (lambda v: v > 0, "must be > 0"),
    ("data", "position_halfwidth"): (lambda v: v >= 0, "must be >= 0"),
    ("data", "heading_halfwidth"): (lambda v: 0 <= v <= math.pi, "must be in [0, pi]"),
    ("data", "resample_interval"): (lambda v: v >= 1, "must be >= 1"),
    ("lifting", "rbf_count"): (lambda v: v >= 0, "must be >= 0"),
    ("lifting", "rbf_width"): (lambda v: v >= 0, "must be >= 0"),
    ("lifting", "hidden_width"): (lambda v: 1 <= v <= 32, "must be in [1, 32]"),
    ("lifting", "train_iters"): (lambda v: v >= 1, "must be >= 1"),
    ("lifting", "learning_rate"): (lambda v: v > 0, "must be > 0"),
    ("identification", "w_rho"): (lambda v: v >= 0, "must be >= 0"),
    ("identification", "w_ctrl"): (lambda v: v >= 0, "must be >= 0"),
    ("identification", "epsilon_ctrl"): (lambda v: v > 0, "must be > 0"),
    ("identification", "ridge"): (lambda v: v >= 0, "must be >= 0"),
    ("identification", "max_iters"): (lambda v: v >= 0, "must be >= 0"),
    ("identification", "step_size"): (lambda v: v > 0, "must be > 0"),
    ("identification", "tol"): (lambda v: v > 0, "must be > 0"),
    ("identification", "patience"): (lambda v: v >= 1, "must be >= 1"),
    ("controller", "gamma"): (lambda v: 0 < v < 1, "must be in (0, 1)"),
    ("controller", "rho"): (lambda v: v >= 0, "must be >= 0"),
    ("controller", "c_v"): (lambda v: v > 0, "must be > 0"),
    ("controller", "q_weight"): (lambda v: v > 0, "must be > 0"),
    ("controller", "q_lqr"): (lambda v: v > 0, "must be > 0"),
    ("controller", "r_lqr"): (lambda v: v > 0, "must be > 0"),
    ("conformal", "alpha"): (lambda v: 0 < v < 1, "must be in (0, 1)"),
    ("conformal", "beta"): (lambda v: 0 < v < 1, "must be in (0, 1)"),
    ("conformal", "horizon"): (lambda v: v >= 1, "must be >= 1"),
    ("conformal", "calib_rollouts"): (lambda v: v >= 1, "must be >= 1"),
    ("conformal", "lipschitz_safety"): (lambda v: v >= 1, "must be >= 1"),
    ("rollout", "steps"): (lambda v: v >= 3, "must be >= 3"),
    ("rollout", "n_seeds"): (lambda v: v >= 1, "must be >= 1"),
    ("rollout", "radius"): (lambda v: v > 0, "must be > 0"),
    ("rollout", "ref_speed"): (lambda v: v > 0, "must be > 0"),
    ("rollout", "eval_position_halfwidth"): (lambda v: v >= 0, "must be >= 0"),
    ("rollout", "eval_heading_halfwidth"): (lambda v: 0 <= v <= math.pi, "must be in [0, pi]"),
}


def _parse_value(raw: str, target_type, where: str):
    raw = raw.strip()
    if target_type is bool:
        if raw in ("true", "True"):
            return True
        if raw in ("false", "False"):
            return False
        raise ConfigError("%s: expected true/false, got %r" % (where, raw))
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
    except ValueError:
        raise ConfigError("%s: expected %s, got %r" % (where, target_type.__name__, raw)) from None
    return raw


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Apply the range/choice checks to an in-memory configuration."""
    for section, (cls, extra_keys) in _SECTIONS.items():
        if cls is None:
            continue
        obj = getattr(cfg, section)
        for f in fields(cls):
            val = getattr(obj, f.name)
            where = "[%s] %s" % (section, f.name)
            choice = _CHOICES.get((section, f.name))
            if choice and val not in choice:
                raise ConfigError("%s must be one of %s, got %r" % (where, "/".join(choice), val))
            rng = _RANGES.get((section, f.name))
            if rng and not rng[0](val):
                raise ConfigError("%s %s, got %r" % (where, rng[1], val))
            if isinstance(val, float) and not math.isfinite(val):
                raise ConfigError("%s must be finite" % where)
    if cfg.lifting.kind == "radial_basis" and cfg.lifting.rbf_count < 1:
        raise ConfigError("[lifting] rbf_count must be >= 1 for radial_basis")
    if cfg.rollout.steps != cfg.conformal.horizon:
        raise ConfigError("[conformal] horizon (%d) must equal [rollout] steps (%d)"
                          % (cfg.conformal.horizon, cfg.rollout.steps))
    return cfg


def parse_config(text: str, label: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig()
    section = None
    seen = set()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError("%s:%d: unknown section [%s]" % (label, lineno, section))
            continue
        if "=" not in line:
            raise ConfigError("%s:%d: expected 'key = value', got %r" % (label, lineno, line))
        if section is None:
            raise ConfigError("%s:%d: key outside of any [section]" % (label, lineno))
        key, _, raw_val = line.partition("=")
        key = key.strip()
        cls, extra = _SECTIONS[section]
        where = "%s:%d: [%s] %s" % (label, lineno, section, key)
        if cls is None:
            if key not in extra:
                raise ConfigError("%s:%d: unknown key %r in [%s]" % (label, lineno, key, section))
            setattr(cfg, key, raw_val.strip())
            continue
        valid = {f.name: f.type for f in fields(cls)}
        if key not in valid:
            raise ConfigError("%s:%d: unknown key %r in [%s]" % (label, lineno, key, section))
        if (section, key) in seen:
            raise ConfigError("%s:%d: duplicate key %r in [%s]" % (label, lineno, key, section))
        seen.add((section, key))
        obj = getattr(cfg, section)
        current = getattr(obj, key)
        val = _parse_value(raw_val, type(current), where)
        try:
            setattr(obj, key, val)
            validate_one(section, key, val)
        except ConfigError as exc:
            raise ConfigError("%s:%d: %s" % (label, lineno, exc)) from None
    return validate(cfg)


def validate_one(section: str, key: str, val) -> None:
    choice = _CHOICES.get((section, key))
    if choice and val not in choice:
        raise ConfigError("[%s] %s must be one of %s, got %r" % (section, key, "/".join(choice), val))
    rng = _RANGES.get((section, key))
    if rng and not rng[0](val):
        raise ConfigError("[%s] %s %s, got %r" % (section, key, rng[1], val))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc)) from exc
    return parse_config(text, label=str(path))


def _fmt(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    return str(val)


def serialize(cfg: ExperimentConfig) -> str:
    out = ["[meta]", "preset = %s" % cfg.preset, ""]
    for section, (cls, _) in _SECTIONS.items():
        if cls is None:
            continue
        out.append("[%s]" % section)
        obj = getattr(cfg, section)
        for f in fields(cls):
            out.append("%s = %s" % (f.name, _fmt(getattr(obj, f.name))))
        out.append("")
    return "\n".join(out)


def dubins_paper_preset() -> ExperimentConfig:
    """Circular-tracking study configuration (gamma=0.9, rho=0.073, c_v=0.01)."""
    return validate(ExperimentConfig(preset="dubins-paper"))


def flapper_doc_preset() -> ExperimentConfig:
    """Documentation-only parameter set of the hardware study (c_v=100, rho=1.0).

    Shipped so the reported controller parameters are runnable against the
    simulator; it is not a hardware reproduction.
    """
    cfg = ExperimentConfig(preset="flapper-doc")
    cfg.controller = replace(cfg.controller, c_v=100.0, rho=1.0, gamma=0.9)
    return validate(cfg)


PRESETS = {
    "dubins-paper": dubins_paper_preset,
    "flapper-doc": flapper_doc_preset,
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError("unknown preset %r (have: %s)" % (name, ", ".join(sorted(PRESETS))))
    return PRESETS[name]()
