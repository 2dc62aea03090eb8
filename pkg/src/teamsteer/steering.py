"""Predictor-guided teacher training and shared-student distillation.

The quality of an unfolding trajectory is the predictor's team distribution
dotted with the pool's normalized quality scores. A teacher earns a bonus
whenever that quality rises over the next ``delta`` steps (non-negative part;
windows that cross an episode or rollout boundary earn zero). Teachers are
trained one agent index at a time against frozen, uniformly sampled pool
partners, then distilled into a single index-free student by behavior
cloning on pooled (observation, embedding, action) records.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import load_tensors, save_tensors
from .env.layout import load_layout
from .env.observe import encode_observation, joint_features, joint_features_width, obs_width
from .env.sim import reset, step
from .env.state import HORIZON
from .nets import CriticNet, PolicyNet, sample_actions
from .ppo import PPOConfig, RolloutBuffer, ppo_update
from .predictor import build_window
from .rollout import EnvBatch


@dataclass(frozen=True)
class SteeringConfig:
    alpha: float = 0.5
    delta: int = 10

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.delta < 1:
            raise ValueError("delta must be >= 1")


def trajectory_quality(p, scores):
    """Quality-weighted trajectory score: the team distribution dotted with
    the pool quality scores; lies in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if p.shape != scores.shape:
        raise ValueError(f"distribution/scores length mismatch: {p.shape} vs {scores.shape}")
    return float(np.dot(p, scores))


def steering_reward(q_now, q_future, valid=True):
    """Non-negative quality improvement over the offset window; zero when the
    future window is invalid."""
    if not valid:
        return 0.0
    return max(q_future - q_now, 0.0)


def total_reward(r_env, r_steer, config):
    return r_env + config.alpha * r_steer


def sample_partner_team(rng, m_teams):
    return int(rng.integers(0, m_teams))


class OnlineEmbedder:
    """Per-env trajectory windows feeding the frozen predictor.

    ``features`` returns the coordination embedding for each env from the
    history collected so far (zeros before the first step; the team
    distribution defaults to uniform). ``observe`` appends each step's
    records and clears envs whose episode ended.
    """

    def __init__(self, predictor, layout, n_envs, scores=None, window=None):
        self.predictor = predictor
        self.layout = layout
        self.n_envs = n_envs
        self.scores = None if scores is None else np.asarray(scores, dtype=np.float64)
        self.window = window or predictor.config.window
        self.histories = [[] for _ in range(n_envs)]
        self.q_trail = []

    def reset(self):
        self.histories = [[] for _ in range(self.n_envs)]
        self.q_trail = []

    @property
    def d_model(self):
        return self.predictor.config.d_model

    def features(self, states=None):
        """(E, d_model) embeddings; also records the quality trail when
        scores are present."""
        E = self.n_envs
        c = np.zeros((E, self.d_model), dtype=np.float32)
        m = self.predictor.m_teams
        p = np.full((E, m), 1.0 / m)
        live = [e for e in range(E) if self.histories[e]]
        if live:
            feats, masks = [], []
            for e in live:
                rec = np.asarray(self.histories[e], dtype=np.int16)
                f, mk = build_window(rec, self.layout, window=self.window)
                feats.append(f)
                masks.append(mk)
            feats = np.stack(feats)
            masks = np.stack(masks)
            c[live] = self.predictor.embeddings(feats, masks).astype(np.float32)
            p[live] = self.predictor.team_distribution(feats, masks)
        if self.scores is not None:
            self.q_trail.append(p @ self.scores)
        return c

    def observe(self, prev_states, actions, dones):
        actions = np.asarray(actions)
        for e, s in enumerate(prev_states):
            row = [
                (a.x, a.y, int(a.facing), int(a.held), int(actions[e, i]))
                for i, a in enumerate(s.agents)
            ]
            self.histories[e].append(row)
            if len(self.histories[e]) > self.window:
                self.histories[e] = self.histories[e][-self.window :]
        for e, d in enumerate(dones):
            if d:
                self.histories[e] = []


def steering_rewards_from_trail(q_trail, dones, config):
    """Per-step steering rewards from the quality trail.

    ``q_trail`` has T+1 entries (one per pre-step evaluation plus the
    post-rollout tail); entry t+delta is only comparable to entry t when no
    episode ended in between and the future entry exists inside this rollout,
    otherwise the step earns zero.
    """
    q = np.asarray(q_trail, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    T, E = dones.shape
    if q.shape[0] != T + 1:
        raise ValueError(f"quality trail must have {T + 1} entries, got {q.shape[0]}")
    delta = config.delta
    r = np.zeros((T, E))
    valid = np.zeros((T, E), dtype=bool)
    for t in range(T):
        if t + delta > T:
            continue  # future window beyond this rollout: invalid
        ok = ~dones[t : t + delta].any(axis=0)
        valid[t] = ok
        r[t, ok] = np.maximum(q[t + delta, ok] - q[t, ok], 0.0)
    return r, valid


@dataclass
class TeacherPolicy:
    net: PolicyNet
    agent_index: int
    layout_name: str
    d_model: int


@dataclass
class TeacherTrainConfig:
    total_steps: int = 4_096  # paper scale: 50M per teacher
    seed: int = 0
    ppo: PPOConfig = field(default_factory=PPOConfig)
    steering: SteeringConfig = field(default_factory=SteeringConfig)


def collect_teacher_rollout(teacher, teacher_idx, pool, embedder, envs, n_steps,
                            critic, rng, steer_cfg):
    """Stage-3 rollout: the teacher plays slot ``teacher_idx`` conditioned on
    the live embedding; partner slots run a frozen pool team sampled
    uniformly per episode per env."""
    n, E = envs.n, envs.n_envs
    m_teams = pool.m_teams
    partner_team = [sample_partner_team(rng, m_teams) for _ in range(E)]
    obs_seq = [[] for _ in range(n)]
    act_seq, logp_seq, val_seq, critic_seq = [], [], [], []
    renv_seq, done_seq = [], []
    partner_log = []

    for _ in range(n_steps):
        states = envs.states
        c = embedder.features(states)
        base_obs = [np.stack([encode_observation(s, i) for s in states]) for i in range(n)]
        step_obs = list(base_obs)
        step_obs[teacher_idx] = np.concatenate([base_obs[teacher_idx], c], axis=1)
        cin = np.concatenate([np.stack([joint_features(s) for s in states]), c], axis=1)

        actions = np.zeros((E, n), dtype=np.int64)
        logps = np.zeros((E, n))
        probs_t = teacher.action_probs(step_obs[teacher_idx])
        actions[:, teacher_idx] = sample_actions(probs_t, rng)
        logps[:, teacher_idx] = np.log(probs_t[np.arange(E), actions[:, teacher_idx]])
        for i in range(n):
            if i == teacher_idx:
                continue
            by_team = {}
            for e in range(E):
                by_team.setdefault(partner_team[e], []).append(e)
            for team_id, env_ids in sorted(by_team.items()):
                net = pool.teams[team_id][i]
                probs = net.action_probs(base_obs[i][env_ids])
                acts = sample_actions(probs, rng)
                actions[env_ids, i] = acts
                logps[env_ids, i] = np.log(probs[np.arange(len(env_ids)), acts])

        values = critic.values(cin)
        partner_log.append(list(partner_team))
        events, dones = envs.step([tuple(a) for a in actions])
        embedder.observe(states, actions, dones)
        for e, d in enumerate(dones):
            if d:
                partner_team[e] = sample_partner_team(rng, m_teams)

        for i in range(n):
            obs_seq[i].append(step_obs[i])
        act_seq.append(actions)
        logp_seq.append(logps)
        val_seq.append(values)
        critic_seq.append(cin)
        renv_seq.append(np.asarray([ev.reward for ev in events], dtype=np.float64))
        done_seq.append(dones)

    tail_c = embedder.features(envs.states)
    cin = np.concatenate([np.stack([joint_features(s) for s in envs.states]), tail_c], axis=1)
    val_seq.append(critic.values(cin))

    dones = np.stack(done_seq)
    r_env = np.stack(renv_seq)
    r_steer, valid = steering_rewards_from_trail(embedder.q_trail[-(n_steps + 1):], dones, steer_cfg)
    rewards = r_env + steer_cfg.alpha * r_steer
    buf = RolloutBuffer(
        obs=[np.stack(seq).astype(np.float32) for seq in obs_seq],
        actions=np.stack(act_seq),
        log_probs=np.stack(logp_seq),
        values=np.stack(val_seq),
        critic_in=np.stack(critic_seq).astype(np.float32),
        rewards=rewards,
        dones=dones,
        breakdown={"r_env": r_env, "r_steer": r_steer, "steer_valid": valid},
    )
    return buf, np.asarray(partner_log)


def train_teacher(agent_index, pool, predictor, cfg, metrics=None):
    """Train one teacher by PPO on env reward plus the steering bonus; the
    predictor and every pool policy stay frozen."""
    if pool.scores is None:
        raise ValueError("pool must be scored before teacher training")
    torch.manual_seed(cfg.seed * 977 + agent_index)
    layout = load_layout(pool.layout_name)
    n = pool.n
    d_obs = obs_width(layout, n)
    d_model = predictor.config.d_model
    teacher = PolicyNet(d_obs + d_model, hidden=cfg.ppo.hidden)
    critic = CriticNet(joint_features_width(layout, n) + d_model, hidden=cfg.ppo.hidden)
    optimizer = torch.optim.Adam(
        list(teacher.parameters()) + list(critic.parameters()), lr=cfg.ppo.lr
    )
    rng = np.random.default_rng((cfg.seed, agent_index))
    envs = EnvBatch(layout, n, cfg.ppo.n_envs, seed=cfg.seed * 13 + agent_index)
    embedder = OnlineEmbedder(predictor, layout, cfg.ppo.n_envs, scores=pool.scores)

    actors = [teacher if i == agent_index else None for i in range(n)]
    steps = 0
    records = []
    iteration = 0
    while steps < cfg.total_steps:
        embedder.q_trail = []
        buf, _ = collect_teacher_rollout(
            teacher, agent_index, pool, embedder, envs, cfg.ppo.n_steps,
            critic, rng, cfg.steering,
        )
        stats = ppo_update(
            [teacher if i == agent_index else pool.teams[0][i] for i in range(n)],
            critic, buf, cfg.ppo, optimizer=optimizer, update_agents=[agent_index],
        )
        steps += cfg.ppo.n_envs * cfg.ppo.n_steps
        rec = {
            "teacher": agent_index,
            "iteration": iteration,
            "steps": steps,
            "r_steer_mean": float(buf.breakdown["r_steer"].mean()),
            "r_env_mean": float(buf.breakdown["r_env"].mean()),
            **stats,
        }
        records.append(rec)
        if metrics is not None:
            metrics(rec)
        iteration += 1
    return TeacherPolicy(net=teacher, agent_index=agent_index,
                         layout_name=pool.layout_name, d_model=d_model), records


@dataclass
class DistillDataset:
    obs: np.ndarray  # (N, Do) float32
    embeds: np.ndarray  # (N, d_model) float32
    actions: np.ndarray  # (N,) int64
    teacher_idx: np.ndarray  # (N,) int64; metadata only, never a model input
    episode_ids: np.ndarray  # (N,) int64
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.actions)

    def save(self, path):
        save_tensors(
            path,
            {
                "obs": self.obs,
                "embeds": self.embeds,
                "actions": self.actions,
                "teacher_idx": self.teacher_idx,
                "episode_ids": self.episode_ids,
            },
            meta={
                **self.meta,
                "per_teacher_counts": {
                    str(k): int(v)
                    for k, v in zip(*np.unique(self.teacher_idx, return_counts=True))
                },
            },
        )

    @classmethod
    def load(cls, path):
        tensors, meta = load_tensors(path)
        return cls(
            obs=tensors["obs"],
            embeds=tensors["embeds"],
            actions=tensors["actions"],
            teacher_idx=tensors["teacher_idx"],
            episode_ids=tensors["episode_ids"],
            meta=meta,
        )


def export_distill_dataset(teachers, pool, predictor, episodes_per_teacher, seeds=None,
                           horizon=HORIZON, greedy=False):
    """Roll each teacher in its own slot with uniform frozen partners and
    export only the teacher's (observation, embedding, action) records."""
    n = pool.n
    if len(teachers) != n:
        raise ValueError(f"need one teacher per agent index: expected {n}, got {len(teachers)}")
    for i, teacher in enumerate(teachers):
        if teacher.agent_index != i:
            raise ValueError(f"teacher at position {i} has agent_index {teacher.agent_index}")
    layout = load_layout(pool.layout_name)
    if seeds is None:
        seeds = list(range(episodes_per_teacher))
    obs_rows, emb_rows, act_rows, idx_rows, ep_rows = [], [], [], [], []
    episode_counter = 0
    for i, teacher in enumerate(teachers):
        for ep in range(episodes_per_teacher):
            seed = seeds[ep]
            rng = np.random.default_rng((seed, i))
            team_id = sample_partner_team(rng, pool.m_teams)
            embedder = OnlineEmbedder(predictor, layout, 1, scores=pool.scores)
            state = reset(layout, n, seed)
            for _ in range(min(horizon, HORIZON)):
                c = embedder.features([state])[0]
                actions = []
                for slot in range(n):
                    o = encode_observation(state, slot)
                    if slot == i:
                        probs = teacher.net.action_probs(np.concatenate([o, c]))
                    else:
                        probs = pool.teams[team_id][slot].action_probs(o)
                    if greedy and slot == i:
                        actions.append(int(np.argmax(probs)))
                    else:
                        actions.append(int(sample_actions(probs[None, :], rng)[0]))
                obs_rows.append(encode_observation(state, i))
                emb_rows.append(c)
                act_rows.append(actions[i])
                idx_rows.append(i)
                ep_rows.append(episode_counter)
                prev = state
                state, _ = step(state, tuple(actions))
                embedder.observe([prev], np.asarray([actions]), [False])
            episode_counter += 1
    return DistillDataset(
        obs=np.stack(obs_rows).astype(np.float32),
        embeds=np.stack(emb_rows).astype(np.float32),
        actions=np.asarray(act_rows, dtype=np.int64),
        teacher_idx=np.asarray(idx_rows, dtype=np.int64),
        episode_ids=np.asarray(ep_rows, dtype=np.int64),
        meta={
            "layout": pool.layout_name,
            "episodes_per_teacher": episodes_per_teacher,
            "seeds": list(map(int, seeds)),
            "greedy": greedy,
        },
    )


def distill_student(dataset, epochs=50, lr=1e-3, batch_size=256, holdout=0.1,
                    seed=0, hidden=64, optimizer="adam"):
    """Behavior-clone the pooled teacher dataset into one shared student.

    The split is at the episode level; the teacher-index column is never an
    input. Returns ``(student, heldout_agreement, history)``.
    """
    if len(dataset) == 0:
        raise ValueError("empty distillation dataset")
    rng = np.random.default_rng(seed)
    episodes = np.unique(dataset.episode_ids)
    episodes = episodes[rng.permutation(len(episodes))]
    n_hold = max(1, int(round(holdout * len(episodes))))
    hold_eps = set(episodes[:n_hold].tolist())
    hold_mask = np.isin(dataset.episode_ids, list(hold_eps))
    train_idx = np.where(~hold_mask)[0]
    hold_idx = np.where(hold_mask)[0]

    x = np.concatenate([dataset.obs, dataset.embeds], axis=1)
    y = dataset.actions
    torch.manual_seed(seed)
    student = PolicyNet(x.shape[1], hidden=hidden)
    opt_cls = torch.optim.SGD if optimizer == "sgd" else torch.optim.Adam
    opt = opt_cls(student.parameters(), lr=lr)
    x_t = torch.as_tensor(x[train_idx])
    y_t = torch.as_tensor(y[train_idx])
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(train_idx))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = torch.as_tensor(order[start : start + batch_size])
            opt.zero_grad()
            loss = F.cross_entropy(student(x_t[idx]), y_t[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        history.append({"epoch": epoch, "train_loss": total / len(train_idx)})
    with torch.no_grad():
        pred = student(torch.as_tensor(x[hold_idx])).argmax(dim=-1).numpy()
    agreement = float((pred == y[hold_idx]).mean()) if len(hold_idx) else float("nan")
    return student, agreement, history


def policy_from_tensors(tensors, prefix=""):
    """Rebuild a PolicyNet from stored state-dict tensors; dimensions come
    from the tensor shapes."""
    import torch

    layer_ids = sorted(
        {int(k[len(prefix) + 4 :].split(".")[0]) for k in tensors if k.startswith(prefix + "net.")}
    )
    first = tensors[f"{prefix}net.{layer_ids[0]}.weight"]
    last = tensors[f"{prefix}net.{layer_ids[-1]}.weight"]
    net = PolicyNet(
        obs_dim=first.shape[1],
        n_actions=last.shape[0],
        hidden=first.shape[0],
        layers=len(layer_ids) - 1,
    )
    state = {k[len(prefix):]: torch.as_tensor(v) for k, v in tensors.items() if k.startswith(prefix)}
    net.load_state_dict(state)
    return net


def save_teacher(path, teacher):
    from .checkpoint import save_module

    save_module(
        path,
        teacher.net,
        meta={
            "agent_index": teacher.agent_index,
            "layout": teacher.layout_name,
            "d_model": teacher.d_model,
        },
    )


def load_teacher(path):
    tensors, meta = load_tensors(path)
    return TeacherPolicy(
        net=policy_from_tensors(tensors),
        agent_index=meta["agent_index"],
        layout_name=meta["layout"],
        d_model=meta["d_model"],
    )


def save_student(path, student, meta=None):
    from .checkpoint import save_module

    save_module(path, student, meta=meta or {})


def load_student(path):
    tensors, meta = load_tensors(path)
    return policy_from_tensors(tensors), meta


class EmbeddingPolicyController:
    """Deploys an embedding-conditioned policy (student or teacher) as an
    episode controller; maintains its own trajectory window via ``observe``."""

    def __init__(self, net, predictor, layout, name="student", greedy=False):
        self.net = net
        self.predictor = predictor
        self.layout = layout
        self.name = name
        self.greedy = greedy
        self._embedder = None

    def reset(self):
        self._embedder = OnlineEmbedder(self.predictor, self.layout, 1)

    def act(self, state, slot, rng):
        if self._embedder is None:
            self.reset()
        c = self._embedder.features([state])[0]
        obs = np.concatenate([encode_observation(state, slot), c])
        probs = self.net.action_probs(obs)
        if self.greedy:
            return int(np.argmax(probs))
        return int(sample_actions(probs[None, :], rng)[0])

    def observe(self, state, actions):
        self._embedder.observe([state], np.asarray([actions]), [False])
