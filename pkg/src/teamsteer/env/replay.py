"""Deterministic, re-simulatable episode logs.

File format: line-delimited JSON. First line is a header record
``{"v": 1, "layout": ..., "seed": ..., "roster": [...]}``, then one record
per step ``{"t": i, "a": [...], "e": {...}}``, then a footer
``{"score": ..., "truncated": ...}``. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .layout import load_layout
from .sim import reset, step
from .state import HORIZON, RewardEvents

REPLAY_VERSION = 1


class ReplayError(ValueError):
    pass


@dataclass(frozen=True)
class ReplayLog:
    layout_name: str
    seed: int
    roster: tuple  # controller identifier per slot, e.g. "human", "random", "pool:2/0"
    actions: tuple  # one joint-action tuple per step
    events: tuple  # one RewardEvents per step
    final_score: int
    truncated: bool = False

    @property
    def n_agents(self):
        return len(self.roster)


def record_episode(layout_name, seed, roster, actions_and_events, final_score, truncated=False):
    actions = tuple(tuple(int(a) for a in acts) for acts, _ in actions_and_events)
    events = tuple(ev for _, ev in actions_and_events)
    return ReplayLog(
        layout_name=layout_name,
        seed=int(seed),
        roster=tuple(roster),
        actions=actions,
        events=events,
        final_score=int(final_score),
        truncated=truncated,
    )


def replay(log):
    """Re-simulate ``log`` from scratch; returns ``(final_score, events)``."""
    layout = load_layout(log.layout_name)
    if len(log.actions) > HORIZON:
        raise ReplayError(f"log has {len(log.actions)} steps, horizon is {HORIZON}")
    state = reset(layout, log.n_agents, log.seed)
    out_events = []
    for acts in log.actions:
        state, ev = step(state, acts)
        out_events.append(ev)
    return state.score, out_events


def verify_replay(log):
    """Mismatches between the stored log and a fresh re-simulation.

    Returns a list of human-readable strings, empty when the log reproduces
    exactly.
    """
    score, events = replay(log)
    issues = []
    for i, (got, want) in enumerate(zip(events, log.events)):
        if got != want:
            issues.append(f"step {i}: events differ: {got} != {want}")
    if score != log.final_score:
        issues.append(f"final score {score} != stored {log.final_score}")
    return issues


def write_replay(log, path):
    with open(path, "w") as f:
        header = {
            "v": REPLAY_VERSION,
            "layout": log.layout_name,
            "seed": log.seed,
            "roster": list(log.roster),
        }
        f.write(json.dumps(header) + "\n")
        for i, (acts, ev) in enumerate(zip(log.actions, log.events)):
            f.write(json.dumps({"t": i, "a": list(acts), "e": ev.to_json()}) + "\n")
        f.write(json.dumps({"score": log.final_score, "truncated": log.truncated}) + "\n")


def read_replay(path):
    with open(path) as f:
        lines = [line for line in f.read().splitlines() if line.strip()]
    if len(lines) < 2:
        raise ReplayError("replay file too short")
    header = json.loads(lines[0])
    if header.get("v") != REPLAY_VERSION:
        raise ReplayError(f"unsupported replay version {header.get('v')!r}")
    footer = json.loads(lines[-1])
    actions = []
    events = []
    for line in lines[1:-1]:
        rec = json.loads(line)
        actions.append(tuple(int(a) for a in rec["a"]))
        events.append(RewardEvents.from_json(rec["e"]))
    return ReplayLog(
        layout_name=header["layout"],
        seed=int(header["seed"]),
        roster=tuple(header["roster"]),
        actions=tuple(actions),
        events=tuple(events),
        final_score=int(footer["score"]),
        truncated=bool(footer.get("truncated", False)),
    )
