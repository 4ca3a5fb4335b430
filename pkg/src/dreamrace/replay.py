"""Episode storage and uniform sampling of fixed-length snippets.

Step ``k`` of an episode holds the observation ``o_k``, the action taken after
seeing it (zeros at the final step), the reward that arrived with ``o_k``
(0 at ``k = 0``), the continue flag, and ``is_first``.
"""
from __future__ import annotations

import json
import struct
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BufferUnavailableError, ValidationError

SPILL_MAGIC = b"DRREPLAY"
SPILL_VERSION = 1
FIELDS = ("observations", "actions", "rewards", "continues", "is_first")


def quantize(obs) -> np.ndarray:
    obs = np.asarray(obs)
    if obs.dtype == np.uint8:
        return obs
    return np.round(np.clip(obs, 0.0, 1.0) * 255.0).astype(np.uint8)


@dataclass
class EpisodeRecord:
    observations: np.ndarray  # (L, H, W, 3) uint8
    actions: np.ndarray  # (L, A)
    rewards: np.ndarray  # (L,)
    continues: np.ndarray  # (L,)
    is_first: np.ndarray  # (L,)

    def __post_init__(self):
        self.observations = quantize(self.observations)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.continues = np.asarray(self.continues, dtype=np.float64)
        self.is_first = np.asarray(self.is_first, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def terminated(self) -> bool:
        return bool(self.continues[-1] == 0.0)

    def validate(self) -> None:
        n = len(self.observations)
        if n < 1:
            raise ValidationError("episode must contain at least one step")
        for name in FIELDS[1:]:
            if len(getattr(self, name)) != n:
                raise ValidationError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if self.actions.ndim != 2:
            raise ValidationError(f"actions must be (L, A), got shape {self.actions.shape}")
        if not np.all(np.isin(self.continues, (0.0, 1.0))):
            raise ValidationError("continues must be 0/1 flags")
        zeros = np.flatnonzero(self.continues == 0.0)
        if len(zeros) > 1 or (len(zeros) == 1 and zeros[0] != n - 1):
            raise ValidationError("a continue flag of 0 may only appear at the final step")
        expected_first = np.zeros(n)
        expected_first[0] = 1.0
        if not np.array_equal(self.is_first, expected_first):
            raise ValidationError("is_first must be 1 at index 0 and 0 elsewhere")
        if not np.all(np.isfinite(self.rewards)) or not np.all(np.isfinite(self.actions)):
            raise ValidationError("rewards and actions must be finite")

    @property
    def num_bytes(self) -> int:
        return sum(getattr(self, f).nbytes for f in FIELDS)


class EpisodeBuilder:
    """Accumulates one episode from environment interaction."""

    def __init__(self, action_dim: int = 4):
        self.action_dim = action_dim
        self._obs, self._act, self._rew = [], [], []
        self._terminated = False

    def start(self, obs) -> None:
        self._obs = [quantize(obs)]
        self._act, self._rew = [], [0.0]
        self._terminated = False

    def add(self, action, reward: float, next_obs, terminated: bool = False, truncated: bool = False) -> None:
        """Record one transition. ``terminated`` without ``truncated`` zeroes the final continue flag."""
        self._act.append(np.asarray(action, dtype=np.float64).reshape(self.action_dim))
        self._rew.append(float(reward))
        self._obs.append(quantize(next_obs))
        self._terminated = bool(terminated and not truncated)

    def __len__(self) -> int:
        return len(self._obs)

    def finish(self) -> EpisodeRecord:
        n = len(self._obs)
        actions = np.zeros((n, self.action_dim))
        if self._act:
            actions[: n - 1] = np.stack(self._act)
        continues = np.ones(n)
        if self._terminated:
            continues[-1] = 0.0
        is_first = np.zeros(n)
        is_first[0] = 1.0
        rec = EpisodeRecord(np.stack(self._obs), actions, np.array(self._rew), continues, is_first)
        rec.validate()
        return rec


@dataclass
class SnippetBatch:
    observations: np.ndarray  # (B, T, H, W, 3) in [0, 1]
    actions: np.ndarray  # (B, T, A)
    rewards: np.ndarray  # (B, T)
    continues: np.ndarray  # (B, T)
    is_first: np.ndarray  # (B, T)
    valid: np.ndarray  # (B, T)
    episode_ids: np.ndarray  # (B,)
    starts: np.ndarray  # (B,)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rewards.shape

    def flat_observations(self) -> np.ndarray:
        b, t = self.shape
        return self.observations.reshape(b, t, -1)


class ReplayBuffer:
    """FIFO episode store bounded by total step count.

    A single lock guards the episode list, so readers always see whole
    episodes and never a half-appended one.
    """

    def __init__(self, capacity: int = 1_000_000):
        if capacity < 1:
            raise ValidationError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._episodes: deque[tuple[int, EpisodeRecord]] = deque()
        self._steps = 0
        self._next_id = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self._steps

    @property
    def num_episodes(self) -> int:
        return len(self._episodes)

    def episodes(self) -> list[EpisodeRecord]:
        with self._lock:
            return [e for _, e in self._episodes]

    def add_episode(self, episode: EpisodeRecord) -> int:
        episode.validate()
        if len(episode) > self.capacity:
            raise ValidationError(f"episode of {len(episode)} steps exceeds capacity {self.capacity}")
        with self._lock:
            self._episodes.append((self._next_id, episode))
            self._next_id += 1
            self._steps += len(episode)
            while self._steps > self.capacity:
                _, old = self._episodes.popleft()
                self._steps -= len(old)
            return self._steps

    def sample(self, batch_size: int, length: int, seed=None) -> SnippetBatch:
        """Uniform over valid (episode, offset) starts; short episodes are zero-padded and masked."""
        if length < 1 or batch_size < 1:
            raise ValueError("batch_size and length must be >= 1")
        with self._lock:
            snapshot = list(self._episodes)
        if not snapshot:
            raise BufferUnavailableError("replay buffer is empty")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        counts = np.array([max(1, len(e) - length + 1) for _, e in snapshot])
        cum = np.cumsum(counts)
        picks = rng.integers(0, cum[-1], size=batch_size)
        which = np.searchsorted(cum, picks, side="right")
        offsets = picks - (cum[which] - counts[which])

        ref = snapshot[0][1]
        obs_shape = ref.observations.shape[1:]
        adim = ref.actions.shape[1]
        obs = np.zeros((batch_size, length) + obs_shape, dtype=np.uint8)
        act = np.zeros((batch_size, length, adim))
        rew = np.zeros((batch_size, length))
        cont = np.zeros((batch_size, length))
        first = np.zeros((batch_size, length))
        valid = np.zeros((batch_size, length))
        ids = np.zeros(batch_size, dtype=np.int64)
        for b, (w, off) in enumerate(zip(which, offsets)):
            eid, ep = snapshot[w]
            n = min(length, len(ep) - off)
            sl = slice(off, off + n)
            obs[b, :n] = ep.observations[sl]
            act[b, :n] = ep.actions[sl]
            rew[b, :n] = ep.rewards[sl]
            cont[b, :n] = ep.continues[sl]
            first[b, :n] = ep.is_first[sl]
            valid[b, :n] = 1.0
            ids[b] = eid
        return SnippetBatch(obs / 255.0, act, rew, cont, first, valid, ids, offsets.astype(np.int64))

    @property
    def next_id(self) -> int:
        return self._next_id

    @next_id.setter
    def next_id(self, value: int) -> None:
        with self._lock:
            self._next_id = max(self._next_id, int(value))

    def episode_ids(self) -> list[int]:
        with self._lock:
            return [eid for eid, _ in self._episodes]

    # -- spill to disk ------------------------------------------------------------
    def spill(self, directory, skip_existing: bool = False) -> list[Path]:
        """Write one file per held episode and delete files of evicted ones.

        Episodes are immutable once added, so ``skip_existing`` safely avoids
        rewriting files from an earlier spill.
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with self._lock:
            snapshot = list(self._episodes)
        paths = []
        for eid, ep in snapshot:
            path = directory / f"episode_{eid:08d}.bin"
            if not (skip_existing and path.exists()):
                save_episode(path, ep)
            paths.append(path)
        held = set(paths)
        for stale in directory.glob("episode_*.bin"):
            if stale not in held:
                stale.unlink()
        return paths

    def load_directory(self, directory, ids=None) -> int:
        """Append spilled episodes in id order, keeping their ids.

        ``ids`` restricts loading to those episodes; a missing one is an error.
        """
        directory = Path(directory)
        if ids is None:
            ids = sorted(int(p.stem.split("_")[1]) for p in directory.glob("episode_*.bin"))
        for eid in sorted(int(i) for i in ids):
            path = directory / f"episode_{eid:08d}.bin"
            if not path.exists():
                raise ValidationError(f"spilled replay episode {path} is missing")
            self.add_episode(load_episode(path))
            with self._lock:
                self._episodes[-1] = (eid, self._episodes[-1][1])
                self._next_id = max(self._next_id, eid + 1)
        return self._steps


def save_episode(path, episode: EpisodeRecord) -> None:
    """Magic, uint32 version, uint32 header length, JSON header, then raw little-endian arrays."""
    arrays = []
    meta = {"length": len(episode), "fields": []}
    for name in FIELDS:
        arr = getattr(episode, name)
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        meta["fields"].append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        arrays.append(np.ascontiguousarray(arr).tobytes())
    header = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SPILL_MAGIC)
        fh.write(struct.pack("<II", SPILL_VERSION, len(header)))
        fh.write(header)
        fh.writelines(arrays)


def load_episode(path) -> EpisodeRecord:
    raw = Path(path).read_bytes()
    if raw[: len(SPILL_MAGIC)] != SPILL_MAGIC:
        raise ValidationError(f"{path}: not a replay episode file")
    pos = len(SPILL_MAGIC)
    version, hlen = struct.unpack_from("<II", raw, pos)
    if version != SPILL_VERSION:
        raise ValidationError(f"{path}: unsupported episode format version {version}")
    pos += 8
    meta = json.loads(raw[pos : pos + hlen].decode("utf-8"))
    pos += hlen
    fields = {}
    for f in meta["fields"]:
        dt = np.dtype(f["dtype"])
        count = int(np.prod(f["shape"])) if f["shape"] else 1
        fields[f["name"]] = np.frombuffer(raw, dtype=dt, count=count, offset=pos).reshape(f["shape"]).copy()
        pos += count * dt.itemsize
    return EpisodeRecord(**fields)
