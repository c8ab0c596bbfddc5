"""Experiment configuration and its YAML file format.

A config file is a YAML mapping; every section and key is optional::

    name: theorem1-noisy
    seed: 7
    episodes: 10000
    parallelism: 1
    iterations: 1
    out_dir: runs/noisy
    repair_threshold: 2
    env: {domain: micro, step_cap: 50, visibility: rules, hide_fraction: 0.0}
    controller: {mode: AEC, tau: 0.5, epsilon: 0.1, max_queries: 10, replan_cap: 10}
    predictor: {accuracy: 0.8, ensemble_size: 5, noise_scale: 1.0, seed: 0}
    oracle:
      error_rates: {"*": 0.01}      # glob over atom text -> flip probability
      side_effect_errors: false
      persistent: false
    rules: {enable: [closed_empty], disable: []}

Unknown keys are rejected with :class:`ConfigError`.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .controller import ControllerConfig, Mode
from .domain import DomainSchema
from .environment import EnvInstanceConfig, OracleConfig, load_domain
from .predictor import SyntheticPredictorConfig

__all__ = ["ConfigError", "ExperimentConfig", "config_from_dict", "load_config"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvInstanceConfig = field(default_factory=EnvInstanceConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    predictor: SyntheticPredictorConfig = field(default_factory=SyntheticPredictorConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    episodes: int = 100
    parallelism: int = 1
    iterations: int = 1
    seed: int = 0
    out_dir: str | None = None
    enable_rules: tuple[str, ...] = ()
    disable_rules: tuple[str, ...] = ()
    repair_threshold: int = 2
    name: str = "experiment"

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("episodes must be at least 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be at least 1")
        if self.repair_threshold < 1:
            raise ConfigError("repair_threshold must be at least 1")
        object.__setattr__(self, "enable_rules", tuple(self.enable_rules))
        object.__setattr__(self, "disable_rules", tuple(self.disable_rules))

    def schema(self) -> DomainSchema:
        schema = load_domain(self.env)
        if self.enable_rules or self.disable_rules:
            schema = schema.with_rules(self.enable_rules, self.disable_rules)
        return schema

    def with_mode(self, mode: Mode | str) -> ExperimentConfig:
        return replace(self, controller=replace(self.controller, mode=Mode(mode)))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "episodes": self.episodes,
            "parallelism": self.parallelism,
            "iterations": self.iterations,
            "out_dir": self.out_dir,
            "repair_threshold": self.repair_threshold,
            "env": dataclasses.asdict(self.env),
            "controller": {**dataclasses.asdict(self.controller),
                           "mode": self.controller.mode.value},
            "predictor": dataclasses.asdict(self.predictor),
            "oracle": {"error_rates": dict(self.oracle.error_rates),
                       "side_effect_errors": self.oracle.side_effect_errors,
                       "persistent": self.oracle.persistent},
            "rules": {"enable": list(self.enable_rules), "disable": list(self.disable_rules)},
        }


def _section(cls, data: Mapping | None, name: str):
    data = dict(data or {})
    allowed = {f.name for f in fields(cls)}
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unknown {name} keys: {', '.join(sorted(extra))}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: {e}") from None


_TOP = {"name", "seed", "episodes", "parallelism", "iterations", "out_dir",
        "repair_threshold", "env", "controller", "predictor", "oracle", "rules"}


def config_from_dict(data: Mapping) -> ExperimentConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a mapping")
    extra = set(data) - _TOP
    if extra:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(extra))}")
    oracle = dict(data.get("oracle") or {})
    if set(oracle) - {"error_rates", "side_effect_errors", "persistent"}:
        raise ConfigError("unknown oracle keys")
    rules = dict(data.get("rules") or {})
    if set(rules) - {"enable", "disable"}:
        raise ConfigError("unknown rules keys")
    try:
        cfg = ExperimentConfig(
            env=_section(EnvInstanceConfig, data.get("env"), "env"),
            controller=_section(ControllerConfig, data.get("controller"), "controller"),
            predictor=_section(SyntheticPredictorConfig, data.get("predictor"), "predictor"),
            oracle=OracleConfig(error_rates=tuple((oracle.get("error_rates") or {}).items()),
                                side_effect_errors=bool(oracle.get("side_effect_errors", False)),
                                persistent=bool(oracle.get("persistent", False))),
            episodes=int(data.get("episodes", 100)),
            parallelism=int(data.get("parallelism", 1)),
            iterations=int(data.get("iterations", 1)),
            seed=int(data.get("seed", 0)),
            out_dir=data.get("out_dir"),
            enable_rules=tuple(rules.get("enable") or ()),
            disable_rules=tuple(rules.get("disable") or ()),
            repair_threshold=int(data.get("repair_threshold", 2)),
            name=str(data.get("name", "experiment")),
        )
        cfg.schema()
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigError(str(e)) from None
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(data or {})
