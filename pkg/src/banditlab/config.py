"""Experiment configuration: YAML file with optional sections, validated into a dataclass.

Example::

    master_seed: 7
    environment:
      N: 10
      M: 10
      T: 30000
      tran_num: 3
      d_max: 10
      delay_kind: uniform
    policies: [mud, amud, ducb, se, oracle, random]
    run:
      replications: 20
      eta_mode: recommended_exact
      output_dir: results/default
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from .policies import POLICY_NAMES

DELAY_KINDS = ("uniform", "constant", "geometric", "custom")
ETA_MODES = ("recommended_exact", "recommended_pessimistic")

ENV_KEYS = {"N", "M", "T", "tran_num", "d_max", "delay_kind", "delay_table", "geometric_p"}
RUN_KEYS = {"replications", "eta_mode", "delta", "output_dir", "trace_stride", "env_id", "workers"}
TOP_KEYS = {"master_seed", "environment", "policies", "run"}
POLICY_PARAMS = {"mud": {"eta", "delta"}, "amud": set(), "ducb": set(), "se": set(), "oracle": set(), "random": set()}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class PolicySpec:
    name: str
    params: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        if not self.params:
            return self.name
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.name}[{inner}]"


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 0
    N: int = 10
    M: int = 10
    T: int = 30000
    tran_num: int = 3
    d_max: int = 10
    delay_kind: str = "uniform"
    delay_table: str | None = None
    geometric_p: float = 0.2
    policies: tuple = tuple(PolicySpec(n) for n in POLICY_NAMES)
    replications: int = 20
    eta_mode: str | float = "recommended_exact"
    delta: int | None = None
    output_dir: str = "results"
    trace_stride: int = 1
    env_id: str | None = None
    workers: int = 1

    def __post_init__(self):
        validate(self)

    @property
    def effective_delta(self) -> int:
        return self.d_max if self.delta is None else self.delta

    @property
    def environment_id(self) -> str:
        if self.env_id:
            return self.env_id
        kind = "stoch" if self.tran_num == 1 else "adv"
        return f"{kind}_N{self.N}_M{self.M}_tran{self.tran_num}_d{self.d_max}_{self.delay_kind}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["policies"] = [{"name": p.name, "params": dict(p.params)} for p in self.policies]
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        for k in ("output_dir", "workers"):
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def validate(cfg: ExperimentConfig):
    for name in ("N", "M", "T", "tran_num", "d_max"):
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ConfigError(f"invalid range: {name} must be a positive integer, got {v!r}")
    if cfg.N < 2:
        raise ConfigError(f"invalid range: N must be at least 2, got {cfg.N}")
    if cfg.tran_num > cfg.T:
        raise ConfigError(f"invalid range: tran_num={cfg.tran_num} exceeds T={cfg.T}")
    if not isinstance(cfg.replications, int) or cfg.replications < 1:
        raise ConfigError(f"invalid range: replications must be >= 1, got {cfg.replications!r}")
    if cfg.trace_stride < 1:
        raise ConfigError(f"invalid range: trace_stride must be >= 1, got {cfg.trace_stride}")
    if cfg.delay_kind not in DELAY_KINDS:
        raise ConfigError(f"unknown delay_kind {cfg.delay_kind!r}; expected one of {', '.join(DELAY_KINDS)}")
    if cfg.delay_kind == "custom" and not cfg.delay_table:
        raise ConfigError("delay_kind 'custom' needs environment.delay_table")
    if not 0 < cfg.geometric_p < 1:
        raise ConfigError(f"invalid range: geometric_p must lie in (0, 1), got {cfg.geometric_p}")
    if isinstance(cfg.eta_mode, str):
        if cfg.eta_mode not in ETA_MODES:
            raise ConfigError(f"unknown eta_mode {cfg.eta_mode!r}; use {' or '.join(ETA_MODES)} or a positive number")
    elif not cfg.eta_mode > 0:
        raise ConfigError(f"invalid range: fixed eta_mode must be positive, got {cfg.eta_mode}")
    if cfg.delta is not None and cfg.delta < 1:
        raise ConfigError(f"invalid range: delta must be >= 1, got {cfg.delta}")
    if not cfg.policies:
        raise ConfigError("policies list is empty")
    for p in cfg.policies:
        if p.name not in POLICY_NAMES:
            raise ConfigError(f"unknown policy name {p.name!r}; expected one of {', '.join(POLICY_NAMES)}")
        extra = set(p.params) - POLICY_PARAMS[p.name]
        if extra:
            raise ConfigError(f"unknown parameter {sorted(extra)[0]!r} for policy {p.name!r}")
    labels = [p.label for p in cfg.policies]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate policy entries: {labels}")


def _parse_policies(raw) -> tuple:
    if not isinstance(raw, list):
        raise ConfigError("policies must be a list")
    out = []
    for item in raw:
        if isinstance(item, str):
            out.append(PolicySpec(item))
        elif isinstance(item, dict):
            unknown = set(item) - {"name", "params"}
            if unknown:
                raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in policy entry")
            if "name" not in item:
                raise ConfigError("policy entry without a name")
            out.append(PolicySpec(str(item["name"]), dict(item.get("params") or {})))
        else:
            raise ConfigError(f"bad policy entry {item!r}")
    return tuple(out)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for key in raw:
        if key not in TOP_KEYS:
            raise ConfigError(f"unknown key {key!r}")
    kwargs = {}
    if "master_seed" in raw:
        kwargs["master_seed"] = int(raw["master_seed"])
    for section, allowed in (("environment", ENV_KEYS), ("run", RUN_KEYS)):
        body = raw.get(section) or {}
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key, value in body.items():
            if key not in allowed:
                raise ConfigError(f"unknown key {section}.{key!r}")
            kwargs[key] = value
    if "policies" in raw:
        kwargs["policies"] = _parse_policies(raw["policies"])
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config syntax in {path}: {exc}") from exc
    cfg = config_from_dict(raw)
    if cfg.delay_table and not Path(cfg.delay_table).is_absolute():
        cfg = cfg.with_(delay_table=str(path.parent / cfg.delay_table))
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    d = cfg.to_dict()
    env = {k: d.pop(k) for k in list(d) if k in ENV_KEYS}
    run = {k: d.pop(k) for k in list(d) if k in RUN_KEYS}
    out = {"master_seed": d["master_seed"], "environment": env, "policies": d["policies"], "run": run}
    return yaml.safe_dump(out, sort_keys=False)
