"""Small feed-forward networks: actors, centralized critics, and the
per-pair influence predictors trained online during team-pool construction."""

from __future__ import annotations

import hashlib

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .shaping import influence_reward_from_probs


def mlp(in_dim, out_dim, hidden=64, layers=2):
    mods = []
    d = in_dim
    for _ in range(layers):
        mods += [nn.Linear(d, hidden), nn.ReLU()]
        d = hidden
    mods.append(nn.Linear(d, out_dim))
    return nn.Sequential(*mods)


class PolicyNet(nn.Module):
    """Actor mapping an observation (optionally with a coordination embedding
    appended) to action logits."""

    def __init__(self, obs_dim, n_actions=6, hidden=64, layers=2):
        super().__init__()
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.net = mlp(obs_dim, n_actions, hidden=hidden, layers=layers)

    def forward(self, obs):
        return self.net(obs)

    @torch.no_grad()
    def action_probs(self, obs):
        x = torch.as_tensor(np.asarray(obs, dtype=np.float32))
        squeeze = x.ndim == 1
        if squeeze:
            x = x.unsqueeze(0)
        probs = F.softmax(self.net(x), dim=-1)
        out = probs.numpy().astype(np.float64)
        out /= out.sum(axis=-1, keepdims=True)
        return out[0] if squeeze else out


class CriticNet(nn.Module):
    """Centralized value network; used during training only."""

    def __init__(self, in_dim, hidden=64, layers=2):
        super().__init__()
        self.in_dim = in_dim
        self.net = mlp(in_dim, 1, hidden=hidden, layers=layers)

    def forward(self, x):
        return self.net(x).squeeze(-1)

    @torch.no_grad()
    def values(self, x):
        t = torch.as_tensor(np.asarray(x, dtype=np.float32))
        return self.forward(t).numpy().astype(np.float64)


def param_hash(module):
    """SHA-256 over the module's parameter bytes; freeze-contract checks."""
    h = hashlib.sha256()
    for name, p in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def sample_actions(probs, rng):
    """Inverse-CDF sampling of one action per row; deterministic given rng."""
    probs = np.asarray(probs, dtype=np.float64)
    cum = np.cumsum(probs, axis=-1)
    cum[..., -1] = 1.0
    u = rng.random(size=probs.shape[:-1] + (1,))
    return (u > cum).sum(axis=-1).astype(np.int64)


class InfluenceNets:
    """Directed follow-up predictors for one team.

    For each ordered pair (i, j), i != j, an influence-conditioned classifier
    scores P(follow-up by j | joint obs, i's action); one observation-only
    baseline per target j scores P(follow-up by j | joint obs). Trained with
    binary cross-entropy, one epoch per update.
    """

    def __init__(self, n, joint_dim, n_actions=6, hidden=64, lr=1e-4,
                 batch_size=2048, max_grad_norm=0.5, seed=0):
        if n < 2:
            raise ValueError("influence predictors need at least 2 agents")
        self.n = n
        self.joint_dim = joint_dim
        self.n_actions = n_actions
        self.batch_size = batch_size
        self.max_grad_norm = max_grad_norm
        gen = torch.Generator().manual_seed(seed)
        self.q = {}
        self.omega = {}
        with torch.random.fork_rng():
            torch.manual_seed(int(torch.randint(0, 2**31 - 1, (1,), generator=gen)))
            for i in range(n):
                for j in range(n):
                    if i != j:
                        self.q[(i, j)] = mlp(joint_dim + n_actions, 1, hidden=hidden)
            for j in range(n):
                self.omega[j] = mlp(joint_dim, 1, hidden=hidden)
        params = [p for net in self.q.values() for p in net.parameters()]
        params += [p for net in self.omega.values() for p in net.parameters()]
        self.optimizer = torch.optim.Adam(params, lr=lr)
        self._rng = np.random.default_rng(seed)

    def _q_input(self, joint_obs, actions, i):
        onehot = torch.zeros(len(actions), self.n_actions)
        onehot[torch.arange(len(actions)), actions[:, i]] = 1.0
        return torch.cat([joint_obs, onehot], dim=-1)

    def update(self, joint_obs, actions, labels):
        """One epoch of BCE over shuffled minibatches; returns mean loss per
        network, keyed 'q:i->j' and 'omega:j'."""
        joint_obs = np.asarray(joint_obs, dtype=np.float32)
        if joint_obs.shape[0] == 0:
            raise ValueError("empty update batch")
        actions = torch.as_tensor(np.asarray(actions, dtype=np.int64))
        labels_t = torch.as_tensor(np.asarray(labels, dtype=np.float32))
        obs_t = torch.as_tensor(joint_obs)
        B = obs_t.shape[0]
        order = self._rng.permutation(B)
        sums = {}
        counts = {}
        for start in range(0, B, self.batch_size):
            idx = torch.as_tensor(order[start : start + self.batch_size])
            mb_obs = obs_t[idx]
            mb_act = actions[idx]
            mb_lab = labels_t[idx]
            self.optimizer.zero_grad()
            total = 0.0
            for (i, j), net in self.q.items():
                logits = net(self._q_input(mb_obs, mb_act, i)).squeeze(-1)
                loss = F.binary_cross_entropy_with_logits(logits, mb_lab[:, j])
                total = total + loss
                key = f"q:{i}->{j}"
                sums[key] = sums.get(key, 0.0) + loss.item() * len(idx)
                counts[key] = counts.get(key, 0) + len(idx)
            for j, net in self.omega.items():
                logits = net(mb_obs).squeeze(-1)
                loss = F.binary_cross_entropy_with_logits(logits, mb_lab[:, j])
                total = total + loss
                key = f"omega:{j}"
                sums[key] = sums.get(key, 0.0) + loss.item() * len(idx)
                counts[key] = counts.get(key, 0) + len(idx)
            total.backward()
            for net in list(self.q.values()) + list(self.omega.values()):
                nn.utils.clip_grad_norm_(net.parameters(), self.max_grad_norm)
            self.optimizer.step()
        return {k: sums[k] / counts[k] for k in sums}

    @torch.no_grad()
    def follow_up_probs(self, joint_obs, actions):
        """(q_probs, omega_probs) for a batch: shapes (B, n, n) and (B, n)."""
        obs_t = torch.as_tensor(np.asarray(joint_obs, dtype=np.float32))
        actions = torch.as_tensor(np.asarray(actions, dtype=np.int64))
        B = obs_t.shape[0]
        q_probs = np.zeros((B, self.n, self.n))
        for (i, j), net in self.q.items():
            logits = net(self._q_input(obs_t, actions, i)).squeeze(-1)
            q_probs[:, i, j] = torch.sigmoid(logits).numpy()
        omega_probs = np.zeros((B, self.n))
        for j, net in self.omega.items():
            omega_probs[:, j] = torch.sigmoid(net(obs_t).squeeze(-1)).numpy()
        return q_probs, omega_probs

    def influence_rewards(self, joint_obs, actions):
        """Per-agent influence rewards for a batch, shape (B, n)."""
        q_probs, omega_probs = self.follow_up_probs(joint_obs, actions)
        return np.stack(
            [influence_reward_from_probs(q_probs[b], omega_probs[b]) for b in range(q_probs.shape[0])]
        )

    def modules(self):
        nets = {f"q:{i}->{j}": net for (i, j), net in self.q.items()}
        nets.update({f"omega:{j}": net for j, net in self.omega.items()})
        return nets
