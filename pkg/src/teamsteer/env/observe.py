"""Fixed-width observation encodings for actors and the centralized critic.

Per-agent observation layout (width ``obs_width(layout, n)``):
    ego x, y (normalized)                                # 2
    ego facing one-hot                                   # 4
    ego held one-hot                                     # 4
    per teammate, in ego-relative index order:
        dx, dy (normalized), facing one-hot, held one-hot  # 10 each
    per pot (sorted cell order): fill/3, timer fraction, ready  # 3 each
    normalized offset to nearest onion source, dish source, pot, serve  # 8
    t / HORIZON                                          # 1
"""

from __future__ import annotations

import numpy as np

from .layout import Tile
from .state import HORIZON

_KINDS = (Tile.ONION_SOURCE, Tile.DISH_SOURCE, Tile.POT, Tile.SERVE)


def obs_width(layout, n):
    n_pots = len(layout.pot_cells)
    return 10 + (n - 1) * 10 + 3 * n_pots + 8 + 1


def encode_observation(state, agent):
    """Encode agent ``agent``'s local view as a float32 vector."""
    n = state.n_agents
    if not 0 <= agent < n:
        raise IndexError(f"agent index {agent} out of range for {n} agents")
    layout = state.layout
    wx = max(layout.width - 1, 1)
    wy = max(layout.height - 1, 1)
    ego = state.agents[agent]

    parts = [ego.x / wx, ego.y / wy]
    facing = [0.0] * 4
    facing[int(ego.facing)] = 1.0
    held = [0.0] * 4
    held[int(ego.held)] = 1.0
    parts += facing + held

    for k in range(1, n):
        other = state.agents[(agent + k) % n]
        parts += [(other.x - ego.x) / wx, (other.y - ego.y) / wy]
        facing = [0.0] * 4
        facing[int(other.facing)] = 1.0
        held = [0.0] * 4
        held[int(other.held)] = 1.0
        parts += facing + held

    for cell in sorted(layout.pot_cells):
        pot = state.pots[cell]
        frac = pot.timer / layout.cook_time if pot.timer is not None else 0.0
        parts += [pot.onions / 3.0, frac, 1.0 if pot.ready else 0.0]

    for kind in _KINDS:
        cx, cy = _nearest(layout, kind, ego.x, ego.y)
        parts += [(cx - ego.x) / wx, (cy - ego.y) / wy]

    parts.append(state.t / HORIZON)
    return np.asarray(parts, dtype=np.float32)


def _nearest(layout, kind, x, y):
    cells = layout.cells_of(kind)
    return min(cells, key=lambda c: (abs(c[0] - x) + abs(c[1] - y), c))


def joint_features_width(layout, n):
    return n * obs_width(layout, n) + 3 * len(layout.pot_cells) + 1


def joint_features(state):
    """Centralized-critic input: all agents' observations plus a global
    pot/counter summary. Training-time only; actors never see this."""
    layout = state.layout
    parts = [encode_observation(state, i) for i in range(state.n_agents)]
    summary = []
    for cell in sorted(layout.pot_cells):
        pot = state.pots[cell]
        frac = pot.timer / layout.cook_time if pot.timer is not None else 0.0
        summary += [pot.onions / 3.0, frac, 1.0 if pot.ready else 0.0]
    n_counter = max(len(layout.counter_cells), 1)
    summary.append(len(state.counters) / n_counter)
    parts.append(np.asarray(summary, dtype=np.float32))
    return np.concatenate(parts)
