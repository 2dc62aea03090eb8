"""Deterministic n-agent kitchen simulator with batched stepping and replays."""

from .layout import (
    DEFAULT_COOK_TIME,
    Layout,
    LayoutError,
    Tile,
    load_layout,
    parse_layout,
    shipped_layouts,
)
from .state import (
    ACTION_NAMES,
    HORIZON,
    N_ACTIONS,
    Action,
    AgentState,
    Held,
    PotState,
    RewardEvents,
    WorldState,
)
from .sim import reset, step, step_batch
from .observe import encode_observation, joint_features, joint_features_width, obs_width
from .replay import ReplayLog, read_replay, replay, verify_replay, write_replay

__all__ = [
    "ACTION_NAMES",
    "Action",
    "AgentState",
    "DEFAULT_COOK_TIME",
    "HORIZON",
    "Held",
    "Layout",
    "LayoutError",
    "N_ACTIONS",
    "PotState",
    "ReplayLog",
    "RewardEvents",
    "Tile",
    "WorldState",
    "encode_observation",
    "joint_features",
    "joint_features_width",
    "load_layout",
    "obs_width",
    "parse_layout",
    "read_replay",
    "replay",
    "reset",
    "shipped_layouts",
    "step",
    "step_batch",
    "verify_replay",
    "write_replay",
]
