"""Intrinsic rewards for team-pool construction.

Two shaping signals are combined with the environment reward:

* an influence reward that pays an agent when conditioning on its action
  raises a learned predictor's probability that some teammate executes the
  current salient action within the next K steps, above an observation-only
  baseline (non-negative part, averaged over teammates); and
* a diversity reward equal to the negative log probability of the chosen
  action under the population-mean policy for that agent index.

The salient action at a state is the action identity whose one-step execution
would most change a collaborative feature vector (agent positions, held and
loose objects, pot fills), averaged over which agent hypothetically executes
it, with ties broken in canonical action order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .env.sim import step
from .env.state import HORIZON, Action, N_ACTIONS

CANONICAL_ACTIONS = tuple(Action(i) for i in range(N_ACTIONS))


@dataclass(frozen=True)
class ShapingWeights:
    """Coefficients for the combined Stage-1 actor reward."""

    k_horizon: int = 4
    lambda_inf: float = 5.0
    lambda_div: float = 0.01
    epsilon: float = 1e-8
    diversity_active: bool = True

    def __post_init__(self):
        if self.k_horizon < 1:
            raise ValueError("k_horizon must be >= 1")
        if self.lambda_inf < 0 or self.lambda_div < 0:
            raise ValueError("coefficients must be non-negative")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must be in (0, 1)")


@dataclass(frozen=True)
class SalientActionRecord:
    t: int
    action: Action
    scores: tuple  # mean feature change per candidate, canonical order


@dataclass(frozen=True)
class RewardBreakdown:
    r_env: float
    r_inf: float
    r_div: float
    total: float


def collab_features_width(layout, n):
    return 2 * n + 4 * n + 3 * len(layout.counter_cells) + len(layout.pot_cells)


def collab_features(state):
    """Collaborative feature vector: agent positions, possession flags,
    loose-object placement, and pot fills. Pure function of the state;
    unchanged by facing turns, timer ticks, or the step counter."""
    layout = state.layout
    parts = []
    for a in state.agents:
        parts += [float(a.x), float(a.y)]
    for a in state.agents:
        held = [0.0] * 4
        held[int(a.held)] = 1.0
        parts += held
    for cell in sorted(layout.counter_cells):
        obj = state.counters.get(cell)
        slot = [0.0, 0.0, 0.0]
        if obj is not None:
            slot[int(obj) - 1] = 1.0  # onion/dish/soup
        parts += slot
    for cell in sorted(layout.pot_cells):
        parts.append(float(state.pots[cell].onions))
    return np.asarray(parts, dtype=np.float64)


def salient_action(state):
    """Action identity expected to most change the collaborative features.

    Each candidate is forward-simulated as executed by each agent in turn
    (everyone else stays) and the induced one-step feature change is averaged
    over agents; dynamics are deterministic so the expectation is exact.
    """
    if state.t >= HORIZON:
        raise ValueError("salient_action requires t < horizon")
    n = state.n_agents
    base = collab_features(state)
    scores = []
    for action in CANONICAL_ACTIONS:
        total = 0.0
        for i in range(n):
            joint = [Action.STAY] * n
            joint[i] = action
            nxt, _ = step(state, joint)
            total += float(np.linalg.norm(collab_features(nxt) - base))
        scores.append(total / n)
    best = max(range(N_ACTIONS), key=lambda a: (scores[a], -a))
    return SalientActionRecord(t=state.t, action=Action(best), scores=tuple(scores))


def event_labels(actions, salients, k):
    """Binary follow-up labels.

    ``actions`` is a (T, n) integer array of executed actions, ``salients``
    a (T,) array of per-step salient actions. ``labels[t, j]`` is 1 iff agent
    j executes ``salients[t]`` at some step in t+1..t+k (window truncated at
    the end of the trajectory); repeats within the window still count once.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    actions = np.asarray(actions)
    salients = np.asarray(salients)
    if actions.ndim != 2 or actions.shape[0] == 0:
        raise ValueError("empty trajectory")
    if salients.shape[0] != actions.shape[0]:
        raise ValueError("salients and actions length mismatch")
    T, n = actions.shape
    labels = np.zeros((T, n), dtype=np.uint8)
    for t in range(T):
        hi = min(t + k, T - 1)
        if hi <= t:
            continue
        window = actions[t + 1 : hi + 1]
        labels[t] = (window == salients[t]).any(axis=0)
    return labels


def influence_reward_from_probs(q_probs, omega_probs):
    """Per-agent influence reward from raw predictor probabilities.

    ``q_probs[i, j]`` is the influence-conditioned follow-up probability for
    source i and target j (diagonal ignored); ``omega_probs[j]`` the
    observation-only baseline. Each reward is the mean over targets of the
    non-negative lift, so it lies in [0, 1].
    """
    q_probs = np.asarray(q_probs, dtype=np.float64)
    omega_probs = np.asarray(omega_probs, dtype=np.float64)
    n = q_probs.shape[0]
    if n < 2:
        raise ValueError("influence reward needs at least 2 agents")
    lift = np.maximum(q_probs - omega_probs[None, :], 0.0)
    np.fill_diagonal(lift, 0.0)
    return lift.sum(axis=1) / (n - 1)


def diversity_reward(mean_prob, epsilon=1e-8):
    """Negative log probability of the chosen action under the population
    mean, floored at ``epsilon``."""
    if not 0.0 <= mean_prob <= 1.0:
        raise ValueError(f"mean_prob must be in [0, 1], got {mean_prob}")
    return -math.log(max(mean_prob, epsilon))


def population_mean_policy(teams, obs, agent_index):
    """Arithmetic mean of per-team action distributions for one agent index."""
    if not teams:
        raise ValueError("empty population")
    probs = [team[agent_index].action_probs(obs) for team in teams]
    return np.mean(np.stack(probs, axis=0), axis=0)


def combined_reward(r_env, r_inf, r_div, weights):
    """Exact affine combination of the three reward channels. The diversity
    term is dropped entirely while ``weights.diversity_active`` is False."""
    total = r_env + weights.lambda_inf * r_inf
    if weights.diversity_active:
        total += weights.lambda_div * r_div
    return RewardBreakdown(r_env=r_env, r_inf=r_inf, r_div=r_div, total=total)
