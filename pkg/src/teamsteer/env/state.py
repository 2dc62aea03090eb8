"""World-state value types and reward-event accounting.

All step rewards come from exactly three events: potting an onion (+3),
taking a cooked soup out of a pot with a dish (+5), and delivering a soup
(+20). Episodes run for at most ``HORIZON`` steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

HORIZON = 400

ONION_POT_REWARD = 3
SOUP_PICKUP_REWARD = 5
DELIVERY_REWARD = 20

POT_CAPACITY = 3


class Action(IntEnum):
    # Canonical order; argmax tie-breaks use this ordering.
    NORTH = 0
    SOUTH = 1
    EAST = 2
    WEST = 3
    STAY = 4
    INTERACT = 5


N_ACTIONS = 6
ACTION_NAMES = ("north", "south", "east", "west", "stay", "interact")
ACTION_BY_NAME = {name: Action(i) for i, name in enumerate(ACTION_NAMES)}

# Grid deltas; north decreases y (row index).
ACTION_DELTAS = {
    Action.NORTH: (0, -1),
    Action.SOUTH: (0, 1),
    Action.EAST: (1, 0),
    Action.WEST: (-1, 0),
}


class Held(IntEnum):
    NOTHING = 0
    ONION = 1
    DISH = 2
    SOUP = 3


HELD_NAMES = ("nothing", "onion", "dish", "soup")


@dataclass(frozen=True)
class AgentState:
    x: int
    y: int
    facing: Action  # NORTH..WEST only
    held: Held

    @property
    def pos(self):
        return (self.x, self.y)

    def faced_cell(self):
        dx, dy = ACTION_DELTAS[self.facing]
        return (self.x + dx, self.y + dy)


@dataclass(frozen=True)
class PotState:
    """One pot: 0..3 onions; timer is None when idle, counts down to 0 once full."""

    onions: int = 0
    timer: int | None = None

    @property
    def cooking(self):
        return self.timer is not None and self.timer > 0

    @property
    def ready(self):
        return self.onions == POT_CAPACITY and self.timer == 0


EMPTY_POT = PotState()


@dataclass(frozen=True)
class RewardEvents:
    """Per-step event record with per-agent attribution.

    ``potted``/``soups_taken``/``delivered`` hold the acting agent index, one
    entry per event. ``placed``/``picked`` record zero-reward counter traffic
    as ``(agent, x, y, held_kind)`` tuples; they carry no reward but make
    handoffs observable.
    """

    potted: tuple = ()
    soups_taken: tuple = ()
    delivered: tuple = ()
    placed: tuple = ()
    picked: tuple = ()

    @property
    def reward(self):
        return (
            ONION_POT_REWARD * len(self.potted)
            + SOUP_PICKUP_REWARD * len(self.soups_taken)
            + DELIVERY_REWARD * len(self.delivered)
        )

    def to_json(self):
        out = {}
        if self.potted:
            out["potted"] = list(self.potted)
        if self.soups_taken:
            out["soups"] = list(self.soups_taken)
        if self.delivered:
            out["delivered"] = list(self.delivered)
        if self.placed:
            out["placed"] = [list(e) for e in self.placed]
        if self.picked:
            out["picked"] = [list(e) for e in self.picked]
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(
            potted=tuple(obj.get("potted", ())),
            soups_taken=tuple(obj.get("soups", ())),
            delivered=tuple(obj.get("delivered", ())),
            placed=tuple(tuple(e) for e in obj.get("placed", ())),
            picked=tuple(tuple(e) for e in obj.get("picked", ())),
        )


NO_EVENTS = RewardEvents()


@dataclass(frozen=True)
class WorldState:
    """Complete simulator state for one kitchen world.

    Values are immutable; :func:`teamsteer.env.sim.step` returns a fresh state.
    ``pots`` maps pot cell -> PotState for every pot in the layout;
    ``counters`` maps counter cell -> Held kind for occupied counters only.
    """

    layout: object
    agents: tuple  # AgentState per index
    pots: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)
    t: int = 0
    score: int = 0

    @property
    def n_agents(self):
        return len(self.agents)

    def agent_at(self, cell):
        for i, a in enumerate(self.agents):
            if (a.x, a.y) == cell:
                return i
        return None
