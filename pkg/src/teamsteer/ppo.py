"""Clipped policy-gradient optimization with GAE for team actors and a
centralized critic.

One update consumes a rollout buffer of team-reduced rewards, recomputes
advantages, and runs up to ``epochs`` passes of minibatch SGD with the
clipped surrogate, an entropy bonus, and a value regression term; the epoch
loop stops early once the approximate KL to the behavior policy exceeds
``target_kl``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


class TrainingDiverged(RuntimeError):
    """Non-finite loss encountered; the update was aborted."""


@dataclass
class PPOConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.15
    entropy_coef: float = 0.05
    value_coef: float = 0.5
    lr: float = 1e-4
    epochs: int = 6
    batch_size: int = 1024
    n_envs: int = 64
    n_steps: int = 1024
    max_grad_norm: float = 0.5
    target_kl: float = 0.025
    hidden: int = 64

    def __post_init__(self):
        if not 0 < self.gamma <= 1 or not 0 < self.gae_lambda <= 1:
            raise ValueError("gamma and gae_lambda must be in (0, 1]")
        if not 0 < self.clip < 1:
            raise ValueError("clip must be in (0, 1)")
        for name in ("entropy_coef", "value_coef", "lr", "epochs", "batch_size",
                     "n_envs", "n_steps", "max_grad_norm", "target_kl"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def compute_gae(rewards, values, dones, gamma, lam):
    """Generalized advantage estimation with episode-boundary masking.

    ``rewards`` and ``dones`` have shape (T, ...) and ``values`` (T+1, ...),
    the final row being the bootstrap value. Returns float64
    ``(advantages, returns)`` with ``returns = advantages + values[:-1]``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    T = rewards.shape[0]
    if values.shape[0] != T + 1:
        raise ValueError(f"values must include a bootstrap row: expected {T + 1}, got {values.shape[0]}")
    if dones.shape != rewards.shape:
        raise ValueError("dones and rewards shape mismatch")
    adv = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0])
    for t in range(T - 1, -1, -1):
        mask = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * mask - values[t]
        last = delta + gamma * lam * mask * last
        adv[t] = last
    return adv, adv + values[:-1]


@dataclass
class RolloutBuffer:
    """Flattened transitions for one update.

    ``obs`` holds one (T, E, D_i) array per agent (widths may differ when some
    agents condition on extra features); ``rewards`` is the team-reduced
    scalar reward stream the critic regresses on.
    """

    obs: list
    actions: np.ndarray  # (T, E, n)
    log_probs: np.ndarray  # (T, E, n)
    values: np.ndarray  # (T+1, E)
    critic_in: np.ndarray  # (T, E, Dc)
    rewards: np.ndarray  # (T, E)
    dones: np.ndarray  # (T, E)
    breakdown: dict = field(default_factory=dict)  # optional (T, E, n) channels

    @property
    def n_agents(self):
        return len(self.obs)

    @property
    def n_transitions(self):
        return self.rewards.shape[0] * self.rewards.shape[1]


def clipped_surrogate(logp_new, logp_old, adv, clip):
    """Per-sample clipped surrogate objective (to be maximized).

    Samples already inside the clipped region for their advantage sign
    (e.g. adv > 0 with ratio > 1 + clip) contribute zero gradient.
    """
    ratio = torch.exp(logp_new - logp_old)
    return torch.minimum(ratio * adv, torch.clamp(ratio, 1 - clip, 1 + clip) * adv)


def ppo_update(actors, critic, buffer, config, optimizer=None, update_agents=None):
    """One clipped-surrogate update of ``update_agents`` (default: all) and
    the critic. Returns stats including per-epoch approximate KL."""
    single = not isinstance(actors, (list, tuple))
    actor_list = [actors] if single else list(actors)
    n = len(actor_list)
    if update_agents is None:
        update_agents = list(range(n))

    adv, ret = compute_gae(buffer.rewards, buffer.values, buffer.dones,
                           config.gamma, config.gae_lambda)
    adv_flat = adv.reshape(-1)
    adv_norm = (adv_flat - adv_flat.mean()) / (adv_flat.std() + 1e-8)

    T, E = buffer.rewards.shape
    N = T * E
    obs_flat = [torch.as_tensor(o.reshape(N, o.shape[-1]), dtype=torch.float32) for o in buffer.obs]
    act_flat = torch.as_tensor(buffer.actions.reshape(N, n))
    old_logp = torch.as_tensor(buffer.log_probs.reshape(N, n), dtype=torch.float32)
    critic_flat = torch.as_tensor(buffer.critic_in.reshape(N, -1), dtype=torch.float32)
    adv_t = torch.as_tensor(adv_norm, dtype=torch.float32)
    ret_t = torch.as_tensor(ret.reshape(-1), dtype=torch.float32)

    params = [p for i in update_agents for p in actor_list[i].parameters()]
    params += list(critic.parameters())
    if optimizer is None:
        optimizer = torch.optim.Adam(params, lr=config.lr)

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
             "approx_kl": 0.0, "clip_frac": 0.0, "epochs_run": 0}
    rng = np.random.default_rng(0)
    for epoch in range(config.epochs):
        order = rng.permutation(N)
        epoch_kl = []
        for start in range(0, N, config.batch_size):
            idx = torch.as_tensor(order[start : start + config.batch_size])
            mb_adv = adv_t[idx]
            policy_loss = torch.zeros(())
            entropy = torch.zeros(())
            kl_terms = []
            clip_hits = []
            for i in update_agents:
                logits = actor_list[i](obs_flat[i][idx])
                logp_all = F.log_softmax(logits, dim=-1)
                logp = logp_all.gather(1, act_flat[idx, i : i + 1]).squeeze(-1)
                ratio = torch.exp(logp - old_logp[idx, i])
                surr = clipped_surrogate(logp, old_logp[idx, i], mb_adv, config.clip)
                policy_loss = policy_loss - surr.mean()
                ent = -(logp_all.exp() * logp_all).sum(-1).mean()
                entropy = entropy + ent
                kl_terms.append((old_logp[idx, i] - logp).mean())
                clip_hits.append(((ratio - 1.0).abs() > config.clip).float().mean())
            value = critic(critic_flat[idx])
            value_loss = F.mse_loss(value, ret_t[idx])
            loss = (
                policy_loss
                + config.value_coef * value_loss
                - config.entropy_coef * entropy
            )
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}: policy={policy_loss.item()} value={value_loss.item()}"
                )
            optimizer.zero_grad()
            loss.backward()
            for i in update_agents:
                nn.utils.clip_grad_norm_(actor_list[i].parameters(), config.max_grad_norm)
            nn.utils.clip_grad_norm_(critic.parameters(), config.max_grad_norm)
            optimizer.step()

            stats["policy_loss"] = policy_loss.item()
            stats["value_loss"] = value_loss.item()
            stats["entropy"] = entropy.item() / max(len(update_agents), 1)
            stats["clip_frac"] = float(np.mean([c.item() for c in clip_hits]))
            epoch_kl.append(float(np.mean([k.item() for k in kl_terms])))
        stats["approx_kl"] = float(np.mean(epoch_kl))
        stats["epochs_run"] = epoch + 1
        if stats["approx_kl"] > config.target_kl:
            break
    return stats
