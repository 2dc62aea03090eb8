"""Run configuration files and run-directory manifests.

A run configuration is one JSON document with optional sections mirroring
the stage configs (``ppo``, ``shaping``, ``steering``, ``encoder``) plus
top-level scalars. Unknown keys are rejected. CLI flags override fields
after the file loads.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .ppo import PPOConfig
from .predictor import EncoderConfig
from .shaping import ShapingWeights
from .steering import SteeringConfig


@dataclass
class RunConfig:
    layout: str = "cramped-2"
    n: int = 2
    seed: int = 0
    seeds: tuple = (0, 1, 2)
    episodes: int = 4
    m_teams: int = 5
    cycles: int = 6
    chunk_steps: int = 8_000
    total_steps: int = 2_048
    teacher_steps: int = 2_048
    episodes_per_team: int = 10
    dataset_stride: int = 5
    distill_episodes: int = 4
    distill_epochs: int = 50
    distill_lr: float = 1e-3
    predictor_max_epochs: int = 500
    predictor_patience: int = 25
    handoff_bonus: float = 3.0
    handoff_window: int = 4
    k_values: tuple = (1, 4, 7)
    eval_horizon: int = 400
    ppo: PPOConfig = field(default_factory=PPOConfig)
    shaping: ShapingWeights = field(default_factory=ShapingWeights)
    steering: SteeringConfig = field(default_factory=SteeringConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def to_json(self):
        out = asdict(self)
        out["seeds"] = list(self.seeds)
        out["k_values"] = list(self.k_values)
        return out


_SECTIONS = {
    "ppo": PPOConfig,
    "shaping": ShapingWeights,
    "steering": SteeringConfig,
    "encoder": EncoderConfig,
}


class ConfigError(ValueError):
    pass


def load_config(path=None, overrides=None):
    """Build a RunConfig from an optional JSON file plus explicit overrides
    (a flat dict of top-level field names)."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}")
    known = {f.name for f in fields(RunConfig)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if key in _SECTIONS:
            section_fields = {f.name for f in fields(_SECTIONS[key])}
            bad = set(value) - section_fields
            if bad:
                raise ConfigError(f"unknown {key} keys: {sorted(bad)}")
            kwargs[key] = _SECTIONS[key](**value)
        elif key in ("seeds", "k_values"):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    cfg = RunConfig(**kwargs)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise ConfigError(f"unknown override {key!r}")
        setattr(cfg, key, value)
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg.to_json(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_manifest(out_dir, command, cfg, extra=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": __version__,
        "command": command,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "seeds": list(cfg.seeds),
        "config": cfg.to_json(),
    }
    manifest.update(extra or {})
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
