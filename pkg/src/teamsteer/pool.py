"""Round-robin team-pool construction with influence and diversity shaping,
plus quality scoring of the finished pool.

Teams are visited in a fixed order for a fixed chunk of environment steps
each; only the visited team's actors, critic, and influence predictors
change during its chunk. The diversity bonus switches on after the first
full cycle so the population reference is built from trained policies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .checkpoint import load_tensors, save_tensors
from .drive import PolicyController, run_episode
from .env.layout import load_layout
from .env.observe import joint_features_width, obs_width
from .env.state import HORIZON
from .nets import CriticNet, InfluenceNets, PolicyNet, param_hash
from .ppo import PPOConfig, TrainingDiverged, ppo_update
from .rollout import EnvBatch, collect_rollout
from .shaping import ShapingWeights, event_labels


@dataclass
class TeamPool:
    """Frozen teams with normalized quality scores."""

    teams: list  # M lists of n PolicyNets
    layout_name: str
    n: int
    scores: np.ndarray | None = None
    steps_trained: list = field(default_factory=list)

    @property
    def m_teams(self):
        return len(self.teams)

    def controllers(self, m):
        return [PolicyController(net, name=f"pool:{m}/{i}") for i, net in enumerate(self.teams[m])]

    def hashes(self):
        return [[param_hash(net) for net in team] for team in self.teams]


@dataclass
class PoolTrainConfig:
    layout: str = "cramped-2"
    n: int = 2
    m_teams: int = 5
    cycles: int = 6
    chunk_steps: int = 8_000  # paper scale: 5M per chunk, 6 cycles (30M/team)
    seed: int = 0
    ppo: PPOConfig = field(default_factory=PPOConfig)
    shaping: ShapingWeights = field(default_factory=ShapingWeights)


class StageOneShaping:
    """Per-iteration reward assembly for team-pool training.

    Order per update: build follow-up labels from the rollout, take one
    training epoch on the influence predictors, then score the rollout with
    the refreshed predictors, add the diversity bonus when active, and
    reduce per-agent rewards to the team mean.
    """

    def __init__(self, influence_nets, all_teams, active_team, weights):
        self.nets = influence_nets
        self.all_teams = all_teams
        self.active_team = active_team
        self.weights = weights
        self.last_losses = {}
        self.last_means = {}

    def __call__(self, raw):
        w = self.weights
        T, E, n = raw.actions.shape
        labels = np.zeros((T, E, n), dtype=np.uint8)
        for e in range(E):
            labels[:, e, :] = event_labels(raw.actions[:, e, :], raw.salients[:, e], w.k_horizon)

        flat_joint = raw.joint_obs.reshape(T * E, -1)
        flat_actions = raw.actions.reshape(T * E, n)
        self.last_losses = self.nets.update(flat_joint, flat_actions, labels.reshape(T * E, n))

        r_inf = self.nets.influence_rewards(flat_joint, flat_actions).reshape(T, E, n)

        r_div = np.zeros((T, E, n))
        if w.diversity_active:
            for i in range(n):
                flat_obs = raw.obs[i].reshape(T * E, -1)
                mean_probs = np.mean(
                    [team[i].action_probs(flat_obs) for team in self.all_teams], axis=0
                )
                chosen = mean_probs[np.arange(T * E), flat_actions[:, i]]
                r_div[:, :, i] = -np.log(np.maximum(chosen, w.epsilon)).reshape(T, E)

        per_agent = raw.r_env[:, :, None] + w.lambda_inf * r_inf
        if w.diversity_active:
            per_agent = per_agent + w.lambda_div * r_div
        team_reward = per_agent.mean(axis=2)
        self.last_means = {
            "r_inf_mean": float(r_inf.mean()),
            "r_div_mean": float(r_div.mean()) if w.diversity_active else 0.0,
            "r_env_mean": float(raw.r_env.mean()),
        }
        return team_reward, {"r_env": raw.r_env, "r_inf": r_inf, "r_div": r_div}


def train_team_pool(cfg, metrics=None, checkpoint_on_divergence=None, chunk_probe=None):
    """Build an M-team pool per the round-robin schedule; returns the pool
    (unscored) and the emitted metric records.

    ``chunk_probe(cycle, m, teams, critics)`` fires after every chunk; used
    by freeze-contract checks.
    """
    if cfg.m_teams < 2:
        raise ValueError("pool needs at least 2 teams")
    torch.manual_seed(cfg.seed)
    layout = load_layout(cfg.layout)
    n = cfg.n
    d_obs = obs_width(layout, n)
    d_joint = n * d_obs
    d_critic = joint_features_width(layout, n)
    hidden = cfg.ppo.hidden

    teams = [[PolicyNet(d_obs, hidden=hidden) for _ in range(n)] for _ in range(cfg.m_teams)]
    critics = [CriticNet(d_critic, hidden=hidden) for _ in range(cfg.m_teams)]
    influence = [
        InfluenceNets(n, d_joint, hidden=hidden, seed=cfg.seed * 101 + m)
        for m in range(cfg.m_teams)
    ]
    optimizers = [
        torch.optim.Adam(
            [p for net in teams[m] for p in net.parameters()] + list(critics[m].parameters()),
            lr=cfg.ppo.lr,
        )
        for m in range(cfg.m_teams)
    ]

    steps_per_iter = cfg.ppo.n_envs * cfg.ppo.n_steps
    iters_per_chunk = max(1, math.ceil(cfg.chunk_steps / steps_per_iter))
    records = []
    steps_trained = [0] * cfg.m_teams

    for cycle in range(cfg.cycles):
        weights = ShapingWeights(
            k_horizon=cfg.shaping.k_horizon,
            lambda_inf=cfg.shaping.lambda_inf,
            lambda_div=cfg.shaping.lambda_div,
            epsilon=cfg.shaping.epsilon,
            diversity_active=cfg.shaping.diversity_active and cycle >= 1,
        )
        for m in range(cfg.m_teams):
            rng = np.random.default_rng((cfg.seed, cycle, m))
            envs = EnvBatch(layout, n, cfg.ppo.n_envs, seed=cfg.seed * 7 + cycle * 31 + m)
            hook = StageOneShaping(influence[m], teams, m, weights)
            for it in range(iters_per_chunk):
                buffer, _ = collect_rollout(
                    teams[m], envs, cfg.ppo.n_steps, critics[m], rng,
                    reward_hook=hook, want_joint=True, want_salients=True,
                )
                try:
                    stats = ppo_update(teams[m], critics[m], buffer, cfg.ppo, optimizer=optimizers[m])
                except TrainingDiverged as exc:
                    if checkpoint_on_divergence is not None:
                        checkpoint_on_divergence(teams, critics, cycle, m)
                    raise TrainingDiverged(
                        f"team {m} diverged in cycle {cycle}, iteration {it}: {exc}"
                    ) from exc
                steps_trained[m] += steps_per_iter
                rec = {
                    "cycle": cycle,
                    "team": m,
                    "steps": steps_trained[m],
                    "diversity_active": weights.diversity_active,
                    **stats,
                    **hook.last_means,
                    "posterior_loss": float(np.mean(list(hook.last_losses.values()))),
                }
                records.append(rec)
                if metrics is not None:
                    metrics(rec)
            if chunk_probe is not None:
                chunk_probe(cycle, m, teams, critics)

    pool = TeamPool(
        teams=teams,
        layout_name=cfg.layout,
        n=n,
        scores=None,
        steps_trained=steps_trained,
    )
    return pool, records


def save_pool(path, pool):
    """Persist every team's actors (and scores, when present) in one
    checkpoint file."""
    tensors = {}
    for m, team in enumerate(pool.teams):
        for i, net in enumerate(team):
            for name, p in net.state_dict().items():
                tensors[f"team{m}/agent{i}/{name}"] = p.detach().cpu().numpy()
    if pool.scores is not None:
        tensors["scores"] = np.asarray(pool.scores, dtype=np.float64)
    save_tensors(
        path,
        tensors,
        meta={
            "layout": pool.layout_name,
            "n": pool.n,
            "m_teams": pool.m_teams,
            "steps_trained": list(pool.steps_trained),
        },
    )


def load_pool(path):
    from .steering import policy_from_tensors

    tensors, meta = load_tensors(path)
    teams = []
    for m in range(meta["m_teams"]):
        team = [
            policy_from_tensors(tensors, prefix=f"team{m}/agent{i}/")
            for i in range(meta["n"])
        ]
        teams.append(team)
    return TeamPool(
        teams=teams,
        layout_name=meta["layout"],
        n=meta["n"],
        scores=tensors.get("scores"),
        steps_trained=meta.get("steps_trained", []),
    )


def normalize_scores(means):
    """Min-max normalization to [0, 1]; a degenerate all-equal pool maps to
    all ones."""
    means = np.asarray(means, dtype=np.float64)
    lo, hi = means.min(), means.max()
    if hi - lo < 1e-12:
        return np.ones_like(means)
    return (means - lo) / (hi - lo)


def score_team_pool(pool, n_eval_episodes, seeds=None, horizon=HORIZON):
    """Mean self-play return per team over fixed-length rollouts, min-max
    normalized to [0, 1] across the pool."""
    if n_eval_episodes < 1:
        raise ValueError("need at least one evaluation episode")
    if seeds is None:
        seeds = list(range(n_eval_episodes))
    layout = load_layout(pool.layout_name)
    means = []
    for m in range(pool.m_teams):
        controllers = pool.controllers(m)
        scores = [
            run_episode(layout, pool.n, controllers, seed, horizon=horizon).score
            for seed in seeds[:n_eval_episodes]
        ]
        means.append(float(np.mean(scores)))
    pool.scores = normalize_scores(means)
    return pool.scores
