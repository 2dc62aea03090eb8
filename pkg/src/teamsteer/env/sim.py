"""World stepping: simultaneous movement, interact semantics, pot cooking.

Step order within one tick:
  1. Movement actions update facing unconditionally, then move the agent if
     the target cell is floor; simultaneous conflicts are resolved to a
     fixpoint (same-target conflicts and swaps block everyone involved;
     chains into vacated cells are allowed).
  2. Interacts resolve in agent-index order against the faced tile.
  3. Pots that were already cooking at the start of the tick count down by 1.

Illegal interacts are silent no-ops, so every joint action is legal whenever
``state.t < HORIZON``.
"""

from __future__ import annotations

from .layout import Tile
from .state import (
    ACTION_DELTAS,
    HORIZON,
    POT_CAPACITY,
    Action,
    AgentState,
    Held,
    PotState,
    RewardEvents,
    WorldState,
)


def reset(layout, n, seed=0):
    """Fresh world on ``layout`` with ``n`` agents at their spawn points.

    Agents face north and hold nothing; pots are empty. Deterministic given
    (layout, n, seed); the seed is recorded by callers for replay, the reset
    itself has no random choices.
    """
    if n > layout.max_agents:
        raise ValueError(f"layout {layout.name!r} supports {layout.max_agents} agents, got n={n}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    agents = tuple(
        AgentState(x=x, y=y, facing=Action.NORTH, held=Held.NOTHING)
        for (x, y) in layout.spawn_points[:n]
    )
    pots = {cell: PotState() for cell in layout.pot_cells}
    return WorldState(layout=layout, agents=agents, pots=pots, counters={}, t=0, score=0)


def _resolve_moves(layout, agents, actions):
    """Final (x, y) per agent after simultaneous-movement conflict resolution.

    Order-independent: each pass collects every offender against the previous
    pass's targets, then reverts them all at once, iterating to a fixpoint.
    """
    n = len(agents)
    pos = [(a.x, a.y) for a in agents]
    target = []
    for i, a in enumerate(agents):
        act = actions[i]
        if act in ACTION_DELTAS:
            dx, dy = ACTION_DELTAS[act]
            cell = (a.x + dx, a.y + dy)
            target.append(cell if layout.is_floor(*cell) else pos[i])
        else:
            target.append(pos[i])

    while True:
        blocked = set()
        for i in range(n):
            if target[i] == pos[i]:
                continue
            for j in range(n):
                if j == i:
                    continue
                # Same-target conflict: everyone aiming at the cell stays.
                if target[j] == target[i]:
                    blocked.add(i)
                    blocked.add(j)
                # Swap: both stay.
                elif target[i] == pos[j] and target[j] == pos[i]:
                    blocked.add(i)
                    blocked.add(j)
                # Moving into a cell whose occupant is not leaving.
                elif target[i] == pos[j] and target[j] == pos[j]:
                    blocked.add(i)
        blocked = {i for i in blocked if target[i] != pos[i]}
        if not blocked:
            return target
        for i in blocked:
            target[i] = pos[i]


def _interact(layout, agent_idx, agent, pots, counters, events):
    """Apply one agent's interact against its faced tile; mutates the dicts."""
    cell = agent.faced_cell()
    x, y = cell
    if not layout.in_bounds(x, y):
        return agent
    kind = layout.tile(x, y)
    held = agent.held

    if kind == Tile.ONION_SOURCE:
        if held == Held.NOTHING:
            return AgentState(agent.x, agent.y, agent.facing, Held.ONION)
    elif kind == Tile.DISH_SOURCE:
        if held == Held.NOTHING:
            return AgentState(agent.x, agent.y, agent.facing, Held.DISH)
    elif kind == Tile.POT:
        pot = pots[cell]
        if held == Held.ONION and pot.onions < POT_CAPACITY:
            onions = pot.onions + 1
            timer = layout.cook_time if onions == POT_CAPACITY else None
            pots[cell] = PotState(onions=onions, timer=timer)
            events["potted"].append(agent_idx)
            return AgentState(agent.x, agent.y, agent.facing, Held.NOTHING)
        if held == Held.DISH and pot.ready:
            pots[cell] = PotState()
            events["soups_taken"].append(agent_idx)
            return AgentState(agent.x, agent.y, agent.facing, Held.SOUP)
    elif kind == Tile.SERVE:
        if held == Held.SOUP:
            events["delivered"].append(agent_idx)
            return AgentState(agent.x, agent.y, agent.facing, Held.NOTHING)
    elif kind == Tile.COUNTER:
        if held != Held.NOTHING and cell not in counters:
            counters[cell] = held
            events["placed"].append((agent_idx, x, y, int(held)))
            return AgentState(agent.x, agent.y, agent.facing, Held.NOTHING)
        if held == Held.NOTHING and cell in counters:
            picked = counters.pop(cell)
            events["picked"].append((agent_idx, x, y, int(picked)))
            return AgentState(agent.x, agent.y, agent.facing, picked)
    return agent


def step(state, actions):
    """Advance one tick; returns ``(next_state, reward_events)``."""
    n = state.n_agents
    if len(actions) != n:
        raise ValueError(f"expected {n} actions, got {len(actions)}")
    if state.t >= HORIZON:
        raise ValueError(f"episode horizon reached (t={state.t})")
    layout = state.layout
    actions = [Action(a) for a in actions]

    final_pos = _resolve_moves(layout, state.agents, actions)
    moved = []
    for i, a in enumerate(state.agents):
        act = actions[i]
        facing = act if act in ACTION_DELTAS else a.facing
        x, y = final_pos[i]
        moved.append(AgentState(x=x, y=y, facing=facing, held=a.held))

    # Pots cooking at the start of the tick count down; a pot filled this
    # tick starts at cook_time and a pot emptied this tick is not ticked.
    cooking_now = [cell for cell, pot in state.pots.items() if pot.cooking]

    pots = dict(state.pots)
    counters = dict(state.counters)
    raw = {"potted": [], "soups_taken": [], "delivered": [], "placed": [], "picked": []}
    for i in range(n):
        if actions[i] == Action.INTERACT:
            moved[i] = _interact(layout, i, moved[i], pots, counters, raw)

    for cell in cooking_now:
        pot = pots[cell]
        if pot.cooking:
            pots[cell] = PotState(onions=pot.onions, timer=pot.timer - 1)

    events = RewardEvents(
        potted=tuple(raw["potted"]),
        soups_taken=tuple(raw["soups_taken"]),
        delivered=tuple(raw["delivered"]),
        placed=tuple(raw["placed"]),
        picked=tuple(raw["picked"]),
    )
    next_state = WorldState(
        layout=layout,
        agents=tuple(moved),
        pots=pots,
        counters=counters,
        t=state.t + 1,
        score=state.score + events.reward,
    )
    return next_state, events


def step_batch(states, actions):
    """Step many worlds sharing one layout; elementwise identical to ``step``.

    Worlds share the layout's cached lookup tables, so per-world overhead is
    the stepping itself. Worlds are independent and may be stepped in any
    order.
    """
    if len(states) != len(actions):
        raise ValueError("states and actions must have equal length")
    if states:
        first = states[0].layout
        for s in states[1:]:
            if s.layout is not first and s.layout != first:
                raise ValueError("step_batch requires all states on the same layout")
    return [step(s, a) for s, a in zip(states, actions)]
