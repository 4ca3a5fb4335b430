"""Run configuration: nested dataclasses loaded from YAML with strict key checking."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import yaml

from .env.env import EnvConfig
from .env.reward import RewardConfig
from .errors import ConfigurationError
from .policy import ActorCriticConfig
from .ppo import PpoConfig
from .quad import QuadParams
from .render import CameraModel
from .world_model import WorldModelConfig

OUTPUT_ROOT_ENV = "DREAMRACE_OUTPUT_ROOT"
ALGORITHMS = ("dreamer", "ppo")


@dataclass(frozen=True)
class RunSettings:
    algorithm: str = "dreamer"
    track: str = "single_gate"
    seeds: tuple[int, ...] = (0,)
    env_steps: int = 150_000
    output_dir: str | None = None
    run_name: str = "run"
    eval_every: int = 10_000
    eval_episodes: int = 10
    checkpoint_every: int = 25_000
    log_every: int = 2_000

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.seeds:
            raise ConfigurationError("seed list must be nonempty")
        if self.env_steps < 0:
            raise ConfigurationError("env_steps must be >= 0")
        if min(self.eval_every, self.eval_episodes, self.checkpoint_every, self.log_every) < 1:
            raise ConfigurationError("cadences and eval_episodes must be >= 1")


@dataclass(frozen=True)
class DreamerSettings:
    num_envs: int = 1
    batch_size: int = 16
    batch_length: int = 32
    train_every: int = 16
    prefill: int = 2_500
    imag_starts: int = 256
    replay_capacity: int = 1_000_000

    def __post_init__(self):
        if min(self.num_envs, self.batch_size, self.batch_length, self.train_every, self.imag_starts, self.replay_capacity) < 1:
            raise ConfigurationError("dreamer sizes must be >= 1")
        if self.prefill < 0:
            raise ConfigurationError("prefill must be >= 0")


SECTIONS = {
    "run": RunSettings,
    "env": EnvConfig,
    "camera": CameraModel,
    "reward": RewardConfig,
    "quad": QuadParams,
    "world_model": WorldModelConfig,
    "actor_critic": ActorCriticConfig,
    "dreamer": DreamerSettings,
    "ppo": PpoConfig,
}
# filled in from other sections, never read from files
DERIVED = {"env": {"track"}, "world_model": {"obs_dim", "action_dim"}, "actor_critic": {"action_dim"}, "ppo": {"action_dim"}}

DESK_ENV = EnvConfig(max_steps=200)
DESK_WORLD_MODEL = WorldModelConfig(hidden=128, units=128)
DESK_ACTOR_CRITIC = ActorCriticConfig(units=128, actor_lr=1e-4, critic_lr=1e-4)


@dataclass(frozen=True)
class RunConfig:
    run: RunSettings = field(default_factory=RunSettings)
    env: EnvConfig = field(default_factory=lambda: DESK_ENV)
    camera: CameraModel = field(default_factory=CameraModel)
    reward: RewardConfig = field(default_factory=RewardConfig)
    quad: QuadParams = field(default_factory=QuadParams)
    world_model: WorldModelConfig = field(default_factory=lambda: DESK_WORLD_MODEL)
    actor_critic: ActorCriticConfig = field(default_factory=lambda: DESK_ACTOR_CRITIC)
    dreamer: DreamerSettings = field(default_factory=DreamerSettings)
    ppo: PpoConfig = field(default_factory=PpoConfig)

    def __post_init__(self):
        obs_dim = self.camera.height * self.camera.width * 3
        object.__setattr__(self, "env", replace(self.env, track=self.run.track))
        object.__setattr__(self, "world_model", replace(self.world_model, obs_dim=obs_dim, action_dim=4))
        object.__setattr__(self, "actor_critic", replace(self.actor_critic, action_dim=4))
        object.__setattr__(self, "ppo", replace(self.ppo, action_dim=4))

    @property
    def obs_dim(self) -> int:
        return self.world_model.obs_dim

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            section = dataclasses.asdict(getattr(self, name))
            for key in DERIVED.get(name, ()):
                section.pop(key, None)
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return out

    def with_overrides(self, **sections) -> RunConfig:
        """``cfg.with_overrides(run={"env_steps": 10})`` returns an updated copy."""
        return config_from_dict(_merge(self.to_dict(), sections))

    def output_root(self) -> Path:
        if self.run.output_dir is not None:
            return Path(self.run.output_dir)
        return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))

    def run_dir(self, seed: int) -> Path:
        return self.output_root() / f"{self.run.run_name}_{self.run.algorithm}_seed{seed}"


def _merge(base: dict, extra: dict) -> dict:
    out = {k: dict(v) for k, v in base.items()}
    for section, values in extra.items():
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown config section {section!r}; expected one of {sorted(SECTIONS)}")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigurationError(f"section {section!r} must be a mapping")
        out.setdefault(section, {}).update(values)
    return out


def _coerce(default, value):
    if isinstance(value, list):
        return tuple(value)
    # YAML 1.1 reads exponent-only floats such as 1e-4 as strings
    if isinstance(value, str) and isinstance(default, float):
        try:
            return float(value)
        except ValueError:
            pass
    return value


def config_from_dict(data: dict) -> RunConfig:
    kwargs = {}
    for section, values in (data or {}).items():
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown config section {section!r}; expected one of {sorted(SECTIONS)}")
        cls = SECTIONS[section]
        known = {f.name for f in fields(cls)} - DERIVED.get(section, set())
        values = values or {}
        for key in values:
            if key not in known:
                raise ConfigurationError(f"unknown key {section}.{key}; expected one of {sorted(known)}")
        defaults = getattr(RunConfig(), section)
        clean = {k: _coerce(getattr(defaults, k), v) for k, v in values.items()}
        try:
            kwargs[section] = replace(defaults, **clean)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"section {section!r}: {exc}") from exc
    return RunConfig(**kwargs)


def load_config(source=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the YAML file (a path or bundled config name), then ``overrides``."""
    data: dict = {}
    if source is not None:
        path = Path(source)
        if path.exists():
            text = path.read_text()
        else:
            bundled = resources.files("dreamrace").joinpath(f"configs/{source}.yaml")
            if not bundled.is_file():
                raise ConfigurationError(f"config {source!r} is neither a file nor a bundled config")
            text = bundled.read_text()
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{source}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{source}: top level must be a mapping of sections")
    base = RunConfig().to_dict()
    merged = _merge(base, data)
    if overrides:
        merged = _merge(merged, overrides)
    return config_from_dict(merged)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
