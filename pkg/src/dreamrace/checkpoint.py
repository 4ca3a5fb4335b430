"""Single-file checkpoints: named array sections plus JSON metadata in one ``.npz``."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import CheckpointVersionError, ValidationError

FORMAT_VERSION = 1
_META_KEY = "__meta__"


def save_checkpoint(path, sections: dict[str, dict[str, np.ndarray]], meta: dict) -> Path:
    """Write atomically: arrays are stored under ``section/name`` keys."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for section, state in sections.items():
        if "/" in section:
            raise ValidationError(f"section name {section!r} may not contain '/'")
        for name, value in state.items():
            arrays[f"{section}/{name}"] = np.asarray(value)
    header = dict(meta, format_version=FORMAT_VERSION, sections=sorted(sections))
    arrays[_META_KEY] = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> tuple[dict[str, dict[str, np.ndarray]], dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} does not exist")
    with np.load(path, allow_pickle=False) as data:
        if _META_KEY not in data.files:
            raise ValidationError(f"{path}: not a checkpoint (no metadata)")
        meta = json.loads(bytes(data[_META_KEY]).decode("utf-8"))
        version = meta.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(
                f"{path}: checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
            )
        sections: dict[str, dict[str, np.ndarray]] = {name: {} for name in meta["sections"]}
        for key in data.files:
            if key == _META_KEY:
                continue
            section, name = key.split("/", 1)
            sections[section][name] = data[key]
    return sections, meta


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def restore_rng(state: dict) -> np.random.Generator:
    bitgen = getattr(np.random, state["bit_generator"])()
    bitgen.state = state
    return np.random.Generator(bitgen)
