"""Batched rollout collection over parallel worlds with shaping hooks.

The collector gathers raw transitions (observations, actions, log-probs,
values, env rewards, episode flags) plus whatever side channels the active
training stage needs: joint observations and salient actions for influence
shaping, per-agent trajectory records and quality trails for steering.
Reward assembly is delegated to a hook so each stage owns its arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env.observe import encode_observation, joint_features
from .env.sim import reset, step_batch
from .env.state import HORIZON
from .nets import sample_actions
from .ppo import RolloutBuffer
from .shaping import salient_action


class EnvBatch:
    """Parallel worlds on one layout with auto-reset at the horizon."""

    def __init__(self, layout, n, n_envs, seed=0, horizon=HORIZON):
        self.layout = layout
        self.n = n
        self.n_envs = n_envs
        self.horizon = min(horizon, HORIZON)
        self.seed = seed
        self.episode_counts = [0] * n_envs
        self.states = [reset(layout, n, self._ep_seed(e)) for e in range(n_envs)]

    def _ep_seed(self, env_idx):
        return self.seed * 1_000_003 + env_idx * 1_009 + self.episode_counts[env_idx]

    def step(self, joint_actions):
        """Advance every world; returns (events, dones) and auto-resets
        finished episodes."""
        results = step_batch(self.states, joint_actions)
        events = [ev for _, ev in results]
        states = [s for s, _ in results]
        dones = []
        for e, s in enumerate(states):
            if s.t >= self.horizon:
                dones.append(True)
                self.episode_counts[e] += 1
                states[e] = reset(self.layout, self.n, self._ep_seed(e))
            else:
                dones.append(False)
        self.states = states
        return events, np.asarray(dones, dtype=bool)


@dataclass
class RawRollout:
    obs: list  # per agent: (T, E, D_i) float32
    actions: np.ndarray  # (T, E, n) int64
    log_probs: np.ndarray  # (T, E, n) float64
    values: np.ndarray  # (T+1, E) float64
    critic_in: np.ndarray  # (T, E, Dc) float32
    r_env: np.ndarray  # (T, E) float64
    dones: np.ndarray  # (T, E) bool
    events: list  # T lists of E RewardEvents
    joint_obs: np.ndarray | None = None  # (T, E, Dj) float32
    salients: np.ndarray | None = None  # (T, E) int64
    records: np.ndarray | None = None  # (T, E, n, 5) int16: x, y, facing, held, action


def collect_rollout(actors, envs, n_steps, critic, rng, *, reward_hook=None,
                    want_joint=False, want_salients=False, want_records=False):
    """Collect ``n_steps`` transitions per env and assemble a RolloutBuffer.

    ``reward_hook`` maps the raw rollout to ``(team_rewards, breakdown)``;
    without one, rewards are the plain environment reward. Deterministic
    given ``rng`` and the env batch state.
    """
    n, E = envs.n, envs.n_envs
    obs_seq = [[] for _ in range(n)]
    act_seq, logp_seq, val_seq, critic_seq = [], [], [], []
    renv_seq, done_seq, events_seq = [], [], []
    joint_seq, sal_seq, rec_seq = [], [], []

    for _ in range(n_steps):
        states = envs.states
        step_obs = [
            np.stack([encode_observation(s, i) for s in states]) for i in range(n)
        ]
        cin = np.stack([joint_features(s) for s in states])

        actions = np.zeros((E, n), dtype=np.int64)
        logps = np.zeros((E, n))
        for i in range(n):
            probs = actors[i].action_probs(step_obs[i])
            actions[:, i] = sample_actions(probs, rng)
            logps[:, i] = np.log(probs[np.arange(E), actions[:, i]])

        if want_joint:
            joint_seq.append(np.concatenate(step_obs, axis=1))
        if want_salients:
            sal_seq.append(np.asarray([int(salient_action(s).action) for s in states]))
        if want_records:
            rec = np.zeros((E, n, 5), dtype=np.int16)
            for e, s in enumerate(states):
                for i, a in enumerate(s.agents):
                    rec[e, i] = (a.x, a.y, int(a.facing), int(a.held), actions[e, i])
            rec_seq.append(rec)

        values = critic.values(cin)
        events, dones = envs.step([tuple(a) for a in actions])

        for i in range(n):
            obs_seq[i].append(step_obs[i])
        act_seq.append(actions)
        logp_seq.append(logps)
        val_seq.append(values)
        critic_seq.append(cin)
        renv_seq.append(np.asarray([ev.reward for ev in events], dtype=np.float64))
        done_seq.append(dones)
        events_seq.append(events)

    # Bootstrap value for the state after the last transition.
    cin = np.stack([joint_features(s) for s in envs.states])
    val_seq.append(critic.values(cin))

    raw = RawRollout(
        obs=[np.stack(seq).astype(np.float32) for seq in obs_seq],
        actions=np.stack(act_seq),
        log_probs=np.stack(logp_seq),
        values=np.stack(val_seq),
        critic_in=np.stack(critic_seq).astype(np.float32),
        r_env=np.stack(renv_seq),
        dones=np.stack(done_seq),
        events=events_seq,
        joint_obs=np.stack(joint_seq).astype(np.float32) if joint_seq else None,
        salients=np.stack(sal_seq) if sal_seq else None,
        records=np.stack(rec_seq) if rec_seq else None,
    )

    if reward_hook is None:
        rewards, breakdown = raw.r_env.copy(), {}
    else:
        rewards, breakdown = reward_hook(raw)
    return RolloutBuffer(
        obs=raw.obs,
        actions=raw.actions,
        log_probs=raw.log_probs,
        values=raw.values,
        critic_in=raw.critic_in,
        rewards=rewards,
        dones=raw.dones,
        breakdown=breakdown,
    ), raw
