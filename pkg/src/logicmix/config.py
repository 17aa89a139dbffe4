"""Run configuration: JSON file + dotted-key overrides, exhaustive
validation, and builders that assemble envs, policy, and trainer."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import torch

from . import assets
from .envs import ENV_NAMES, EnvSpec, Modification, VectorEnv, make_env
from .lang import ParseError, parse_language, parse_rules
from .nets import ActorNet, NeuralBlender, ObjectCentricCritic
from .policy import (
    BLENDER_MODES, BlendedPolicy, LogicBlender, LogicPolicy, PolicyConfigError,
)
from .training import PARAM_GROUPS, TrainConfig, Trainer
from .valuation import N_COLUMNS


class ConfigError(ValueError):
    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    env: str = "mini-kangaroo"
    mods: list = field(default_factory=list)
    noise: float = 0.0
    max_episode_steps: int = 512
    language: str | None = None      # file paths; None means packaged asset
    rules: str | None = None
    blend_rules: str | None = None
    blender_mode: str = "logic"
    force_beta: float | None = None
    freeze: list = field(default_factory=list)
    infer_steps: int | None = None   # None: distinct predicates + 1
    reason_gamma: float = 0.01
    valuation: dict = field(default_factory=dict)
    run_name: str | None = None
    out_dir: str = "runs"
    checkpoint_interval: int = 0     # iterations; 0 = final checkpoint only
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        train = d.pop("train", {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError([f"unknown config key {k!r}" for k in sorted(unknown)])
        if isinstance(train, dict):
            tknown = {f.name for f in dataclasses.fields(TrainConfig)}
            tunknown = set(train) - tknown
            if tunknown:
                raise ConfigError(
                    [f"unknown config key train.{k!r}" for k in sorted(tunknown)]
                )
            try:
                train = TrainConfig(**train)
            except (TypeError, ValueError) as exc:
                raise ConfigError([f"train: {exc}"]) from exc
        try:
            return cls(train=train, **d)
        except (TypeError, ValueError) as exc:
            raise ConfigError([str(exc)]) from exc


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: dict) -> dict:
    """Apply dotted-key overrides like {'train.seed': '3'} onto a config dict."""
    for key, raw in overrides.items():
        value = _coerce(raw) if isinstance(raw, str) else raw
        parts = key.replace("-", "_").split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError([f"cannot override {key}: {p} is not a mapping"])
        leaf = parts[-1]
        if leaf == "mods" and isinstance(value, str):
            value = [v for v in value.split(",") if v]
        node[leaf] = value
    return data


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    data = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError([f"config file not found: {p}"])
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config file {p} is not valid JSON: {exc}"])
    if overrides:
        data = apply_overrides(data, overrides)
    return RunConfig.from_dict(data)


def resolve_sources(cfg: RunConfig) -> dict[str, str]:
    """Language/rule texts, from explicit paths or the packaged assets."""
    names = assets.asset_names(cfg.env) if cfg.env in ENV_NAMES else (None,) * 3
    out = {}
    for key, path, default in (
        ("language", cfg.language, names[0]),
        ("rules", cfg.rules, names[1]),
        ("blend_rules", cfg.blend_rules, names[2]),
    ):
        if path is not None:
            p = Path(path)
            if not p.exists():
                raise ConfigError([f"{key} file not found: {p}"])
            out[key] = p.read_text()
        else:
            out[key] = assets.asset_text(default)
    return out


def validate(cfg: RunConfig) -> list[str]:
    """Collect every validation failure; empty list means runnable."""
    errors = []
    if cfg.env not in ENV_NAMES:
        errors.append(f"unknown env {cfg.env!r}; choose from {ENV_NAMES}")
        return errors
    try:
        spec = env_spec(cfg)
        env = make_env(spec)
    except Exception as exc:
        errors.append(str(exc))
        return errors
    if cfg.blender_mode not in BLENDER_MODES:
        errors.append(f"blender_mode {cfg.blender_mode!r} not in {BLENDER_MODES}")
    if cfg.force_beta is not None and not 0.0 <= cfg.force_beta <= 1.0:
        errors.append(f"force_beta {cfg.force_beta} outside [0,1]")
    for g in cfg.freeze:
        if g not in PARAM_GROUPS:
            errors.append(f"unknown freeze group {g!r}")
    try:
        sources = resolve_sources(cfg)
    except ConfigError as exc:
        errors.extend(exc.errors)
        return errors
    try:
        lang = parse_language(sources["language"])
        parse_rules(sources["rules"], lang)
        parse_rules(sources["blend_rules"], lang)
    except ParseError as exc:
        errors.append(f"rule/language parse error: {exc}")
        return errors
    if lang.action_names != list(env.action_names):
        errors.append(
            f"action sets differ: language declares {lang.action_names}, "
            f"env {cfg.env} has {list(env.action_names)}"
        )
    if cfg.valuation:
        reg = assets.default_registry(cfg.env, env.slot_types)
        for pred in cfg.valuation:
            if pred not in reg.entries:
                errors.append(f"valuation override for unknown predicate {pred!r}")
    if cfg.train.total_timesteps < cfg.train.batch_size:
        errors.append(
            f"total_timesteps {cfg.train.total_timesteps} below one batch "
            f"({cfg.train.batch_size})"
        )
    return errors


def env_spec(cfg: RunConfig, seed: int | None = None) -> EnvSpec:
    mods = Modification.from_names(cfg.mods, noise=cfg.noise)
    return EnvSpec(
        name=cfg.env, max_steps=cfg.max_episode_steps, mods=mods,
        seed=cfg.train.seed if seed is None else seed,
    )


def build_policy(cfg: RunConfig, sources: dict[str, str] | None = None,
                 sample_env=None) -> BlendedPolicy:
    """Construct the full agent; net init is seeded by cfg.train.seed."""
    sources = sources or resolve_sources(cfg)
    env = sample_env or make_env(env_spec(cfg))
    lang = parse_language(sources["language"])
    if lang.action_names != list(env.action_names):
        raise PolicyConfigError(
            f"action set mismatch: language declares {lang.action_names}, "
            f"env {cfg.env} has {list(env.action_names)}"
        )
    rules = parse_rules(sources["rules"], lang)
    blend_rules = parse_rules(sources["blend_rules"], lang)
    registry = assets.default_registry(cfg.env, env.slot_types)
    if cfg.valuation:
        registry.apply_overrides(cfg.valuation)

    torch.manual_seed(cfg.train.seed)
    logic = LogicPolicy(rules, registry, env.action_names,
                        infer_steps=cfg.infer_steps, gamma=cfg.reason_gamma)
    raw_dim = 4 * env.W * env.H * len(env.channel_names)
    z_dim = len(env.slot_types) * N_COLUMNS
    actor = ActorNet(raw_dim, len(env.action_names))
    oc_critic = ObjectCentricCritic(z_dim)
    blender = None
    if cfg.force_beta is None:
        if cfg.blender_mode == "neural":
            blender = NeuralBlender(raw_dim)
        else:
            blender = LogicBlender(
                blend_rules, registry, infer_steps=cfg.infer_steps,
                gamma=cfg.reason_gamma, rigid=(cfg.blender_mode == "rigid-logic"),
            )
    return BlendedPolicy(logic, actor, oc_critic, blender,
                         env.slot_types, force_beta=cfg.force_beta)


def build_trainer(cfg: RunConfig, run_dir=None, log_fn=None) -> Trainer:
    errors = validate(cfg)
    if errors:
        raise ConfigError(errors)
    sources = resolve_sources(cfg)
    policy = build_policy(cfg, sources)
    envs = VectorEnv(env_spec(cfg), cfg.train.num_envs)
    return Trainer(policy, envs, cfg.train, freeze=cfg.freeze,
                   run_dir=run_dir, log_fn=log_fn)
