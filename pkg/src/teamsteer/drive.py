"""Episode driving with pluggable per-slot controllers.

A controller owns one agent slot for one episode: ``reset()`` is called at
episode start, then ``act(state, slot, rng)`` once per step. Everything that
plays full episodes outside the PPO loop (pool scoring, dataset generation,
evaluation, the session server's machine slots) goes through this interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env.observe import encode_observation
from .env.replay import record_episode
from .env.sim import reset, step
from .env.state import HORIZON
from .nets import sample_actions


class RandomController:
    """Uniform over the six actions."""

    name = "random"

    def reset(self):
        pass

    def act(self, state, slot, rng):
        return int(rng.integers(0, 6))


class PolicyController:
    """Wraps an actor network; samples from its action distribution."""

    def __init__(self, net, name="policy", greedy=False):
        self.net = net
        self.name = name
        self.greedy = greedy

    def reset(self):
        pass

    def act(self, state, slot, rng):
        obs = encode_observation(state, slot)
        probs = self.net.action_probs(obs)
        if self.greedy:
            return int(np.argmax(probs))
        return int(sample_actions(probs[None, :], rng)[0])


class ExternalPartnerAdapter:
    """Base class for partners driven by an outside decision process.

    Subclasses implement :meth:`decide`, receiving the state and slot and
    returning one of the six action indices. No remote client ships here;
    this is the integration point for one.
    """

    name = "external"

    def reset(self):
        pass

    def decide(self, state, slot):
        raise NotImplementedError

    def act(self, state, slot, rng):
        action = int(self.decide(state, slot))
        if not 0 <= action < 6:
            raise ValueError(f"external partner returned invalid action {action}")
        return action


@dataclass
class EpisodeResult:
    score: int
    log: object  # ReplayLog
    records: np.ndarray  # (T, n, 5) int16: x, y, facing, held, action
    n_deliveries: int


def run_episode(layout, n, controllers, seed, horizon=HORIZON, layout_name=None):
    """Play one full episode; deterministic given (layout, controllers, seed).

    Controllers with an ``observe(state, actions)`` method are shown every
    step's pre-step state and the executed joint action, so history-
    conditioned policies can maintain their trajectory window.
    """
    if len(controllers) != n:
        raise ValueError(f"need {n} controllers, got {len(controllers)}")
    rng = np.random.default_rng(seed)
    for c in controllers:
        c.reset()
    state = reset(layout, n, seed)
    pairs = []
    records = []
    deliveries = 0
    for _ in range(min(horizon, HORIZON)):
        actions = tuple(c.act(state, i, rng) for i, c in enumerate(controllers))
        rec = [(a.x, a.y, int(a.facing), int(a.held), actions[i]) for i, a in enumerate(state.agents)]
        prev = state
        state, events = step(state, actions)
        for c in controllers:
            if hasattr(c, "observe"):
                c.observe(prev, actions)
        pairs.append((actions, events))
        records.append(rec)
        deliveries += len(events.delivered)
    log = record_episode(
        layout_name or layout.name,
        seed,
        [getattr(c, "name", "policy") for c in controllers],
        pairs,
        state.score,
        truncated=horizon < HORIZON,
    )
    return EpisodeResult(
        score=state.score,
        log=log,
        records=np.asarray(records, dtype=np.int16),
        n_deliveries=deliveries,
    )
