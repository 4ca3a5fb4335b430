"""Racing environment: tracks, reward, episode lifecycle."""
from .env import (
    CAUSES,
    EnvConfig,
    EnvState,
    RaceEnv,
    collision_check,
    contact_cause,
    gate_pass_check,
)
from .reward import RewardConfig, StepEvents, compute_reward
from .track import PRESETS, Gate, Track, dump_track, load_track, parse_track, save_track

__all__ = [
    "CAUSES",
    "PRESETS",
    "EnvConfig",
    "EnvState",
    "Gate",
    "RaceEnv",
    "RewardConfig",
    "StepEvents",
    "Track",
    "collision_check",
    "compute_reward",
    "contact_cause",
    "dump_track",
    "gate_pass_check",
    "load_track",
    "parse_track",
    "save_track",
]
