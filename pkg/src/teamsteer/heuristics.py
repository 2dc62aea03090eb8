"""Scripted controllers: the pipeline passing heuristic and probe teams.

The passing heuristic assigns one role per sealed zone of a pipeline layout:
the upstream fetcher ferries onions from the source to the first shared
counter, passers relay them across their zone, and the downstream cook pots
onions, collects the soup with a dish, and serves. Every role is a
deterministic state machine over the visible world; no randomness, no
memory beyond the current state.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .env.state import ACTION_DELTAS, Action, Held

_DIRS = (Action.NORTH, Action.SOUTH, Action.EAST, Action.WEST)


@dataclass(frozen=True)
class PassingRole:
    kind: str  # fetcher | passer | cook
    source: tuple | None = None
    in_counter: tuple | None = None
    out_counter: tuple | None = None
    pot: tuple | None = None
    dish: tuple | None = None
    serve: tuple | None = None


PASSING_ROLES = {
    "pl-2": (
        PassingRole("fetcher", source=(0, 2), out_counter=(3, 2)),
        PassingRole("cook", in_counter=(3, 2), pot=(7, 3), dish=(7, 1), serve=(7, 2)),
    ),
    "pl-3": (
        PassingRole("fetcher", source=(0, 2), out_counter=(3, 2)),
        PassingRole("passer", in_counter=(3, 2), out_counter=(7, 2)),
        PassingRole("cook", in_counter=(7, 2), pot=(10, 3), dish=(10, 1), serve=(10, 2)),
    ),
    "pl-4": (
        PassingRole("fetcher", source=(0, 2), out_counter=(3, 2)),
        PassingRole("passer", in_counter=(3, 2), out_counter=(7, 2)),
        PassingRole("passer", in_counter=(7, 2), out_counter=(11, 2)),
        PassingRole("cook", in_counter=(11, 2), pot=(14, 3), dish=(14, 1), serve=(14, 2)),
    ),
}


def passing_team(layout_name):
    """Controllers for the full passing team on a pipeline layout."""
    if layout_name not in PASSING_ROLES:
        raise ValueError(f"passing heuristic has no roles for layout {layout_name!r}")
    return [PassingController(role) for role in PASSING_ROLES[layout_name]]


class PassingController:
    name = "scripted:passing"

    def __init__(self, role):
        self.role = role
        self.name = f"scripted:passing-{role.kind}"

    def reset(self):
        pass

    def act(self, state, slot, rng=None):
        me = state.agents[slot]
        role = self.role
        if role.kind == "fetcher":
            if me.held == Held.NOTHING:
                return self._go_face_or(state, me, role.source, Action.INTERACT)
            return self._deposit(state, me, role.out_counter)
        if role.kind == "passer":
            if me.held == Held.NOTHING:
                return self._collect(state, me, role.in_counter)
            return self._deposit(state, me, role.out_counter)
        return self._cook(state, me)

    def _cook(self, state, me):
        role = self.role
        pot = state.pots[role.pot]
        if me.held == Held.SOUP:
            return self._go_face_or(state, me, role.serve, Action.INTERACT)
        if me.held == Held.DISH:
            act = Action.INTERACT if pot.ready else Action.STAY
            return self._go_face_or(state, me, role.pot, act)
        if me.held == Held.ONION:
            act = Action.INTERACT if (pot.onions < 3 and not pot.cooking) else Action.STAY
            return self._go_face_or(state, me, role.pot, act)
        if pot.ready or pot.cooking:
            return self._go_face_or(state, me, role.dish, Action.INTERACT)
        return self._collect(state, me, role.in_counter)

    def _collect(self, state, me, counter):
        act = Action.INTERACT if counter in state.counters else Action.STAY
        return self._go_face_or(state, me, counter, act)

    def _deposit(self, state, me, counter):
        act = Action.STAY if counter in state.counters else Action.INTERACT
        return self._go_face_or(state, me, counter, act)

    def _go_face_or(self, state, me, target, in_position_action):
        """Move toward ``target``, turn to face it, then run the action."""
        move = navigate_to_face(state.layout, (me.x, me.y), me.facing, target)
        return move if move is not None else in_position_action


def navigate_to_face(layout, pos, facing, target):
    """Next movement action to stand adjacent to ``target`` facing it, or
    None when already in position. Deterministic; ignores other agents
    (callers operate in single-agent zones)."""
    goals = {}
    for d in _DIRS:
        dx, dy = ACTION_DELTAS[d]
        cell = (target[0] - dx, target[1] - dy)
        if layout.is_floor(*cell):
            goals[cell] = d  # from cell, moving d faces the target
    if pos in goals:
        needed = goals[pos]
        return None if facing == needed else needed
    # BFS over floor cells to the nearest goal cell.
    seen = {pos}
    queue = deque([(pos, None)])
    while queue:
        cell, first = queue.popleft()
        for d in _DIRS:
            dx, dy = ACTION_DELTAS[d]
            nxt = (cell[0] + dx, cell[1] + dy)
            if not layout.is_floor(*nxt) or nxt in seen:
                continue
            step_first = first if first is not None else d
            if nxt in goals:
                return step_first
            seen.add(nxt)
            queue.append((nxt, step_first))
    return Action.STAY  # unreachable target: stand still


class CycleController:
    """Loops a fixed action pattern; distinct patterns give behaviorally
    distinct probe teams for predictor tests."""

    def __init__(self, pattern, name="scripted:cycle"):
        self.pattern = [Action(a) for a in pattern]
        self.name = name
        self._i = 0

    def reset(self):
        self._i = 0

    def act(self, state, slot, rng=None):
        action = self.pattern[self._i % len(self.pattern)]
        self._i += 1
        return int(action)


CYCLE_STYLES = {
    "ns": (Action.NORTH, Action.SOUTH),
    "ew": (Action.EAST, Action.WEST),
    "cw": (Action.NORTH, Action.EAST, Action.SOUTH, Action.WEST),
    "ccw": (Action.NORTH, Action.WEST, Action.SOUTH, Action.EAST),
    "grab": (Action.INTERACT, Action.WEST, Action.INTERACT, Action.EAST),
}


def cycle_team(style, n):
    pattern = CYCLE_STYLES[style]
    return [CycleController(pattern, name=f"scripted:cycle-{style}") for _ in range(n)]
