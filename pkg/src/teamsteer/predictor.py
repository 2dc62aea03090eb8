"""Trajectory-conditioned team classification.

A fixed-length window of per-agent records (x, y, facing, held, action) is
encoded by a small transformer into a coordination embedding; a linear head
projects the embedding to a distribution over the teams that generated the
training rollouts. Windows shorter than the history length are left-padded
and masked; padded rows never influence the embedding.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .checkpoint import load_tensors, save_tensors
from .drive import run_episode
from .env.state import HORIZON

WINDOW = 20
FEATS_PER_AGENT = 2 + 4 + 4 + 6  # x, y, facing 1h, held 1h, action 1h


@dataclass
class EncoderConfig:
    d_model: int = 64
    heads: int = 4
    layers: int = 2
    feedforward: int = 128
    dropout: float = 0.1
    window: int = WINDOW

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")


def window_feature_dim(n_agents):
    return n_agents * FEATS_PER_AGENT


def encode_record_row(records_t, width, height):
    """One step's (n, 5) integer records -> flat float feature row."""
    row = []
    wx, wy = max(width - 1, 1), max(height - 1, 1)
    for x, y, facing, held, action in records_t:
        feats = [x / wx, y / wy]
        one = [0.0] * 4
        one[int(facing)] = 1.0
        feats += one
        one = [0.0] * 4
        one[int(held)] = 1.0
        feats += one
        one = [0.0] * 6
        one[int(action)] = 1.0
        feats += one
        row += feats
    return row


def build_window(records, layout, t=None, window=WINDOW):
    """Left-padded feature window over the last ``window`` steps before ``t``.

    ``records`` is a (T, n, 5) integer array of per-step per-agent
    (x, y, facing, held, action). Returns (features (window, F) float32,
    pad_mask (window,) bool) with True marking padded rows.
    """
    records = np.asarray(records)
    if t is None:
        t = records.shape[0]
    if not 1 <= t <= records.shape[0]:
        raise ValueError(f"t={t} outside history of length {records.shape[0]}")
    chunk = records[max(0, t - window) : t]
    rows = [encode_record_row(step, layout.width, layout.height) for step in chunk]
    n_pad = window - len(rows)
    feat_dim = len(rows[0])
    feats = np.zeros((window, feat_dim), dtype=np.float32)
    mask = np.zeros(window, dtype=bool)
    mask[:n_pad] = True
    feats[n_pad:] = np.asarray(rows, dtype=np.float32)
    return feats, mask


class TeamPredictor(nn.Module):
    """Transformer encoder over trajectory windows with a team classifier
    head. ``encode`` mean-pools unmasked positions into the coordination
    embedding; ``forward`` returns team logits."""

    def __init__(self, n_agents, m_teams, config=None):
        super().__init__()
        self.config = config or EncoderConfig()
        self.n_agents = n_agents
        self.m_teams = m_teams
        cfg = self.config
        self.input_proj = nn.Linear(window_feature_dim(n_agents), cfg.d_model)
        self.pos_embed = nn.Parameter(torch.zeros(cfg.window, cfg.d_model))
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.d_model,
            nhead=cfg.heads,
            dim_feedforward=cfg.feedforward,
            dropout=cfg.dropout,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=cfg.layers, enable_nested_tensor=False)
        self.head = nn.Linear(cfg.d_model, m_teams)

    def encode(self, feats, mask):
        """Coordination embedding, shape (B, d_model)."""
        x = self.input_proj(feats) + self.pos_embed
        out = self.encoder(x, src_key_padding_mask=mask)
        keep = (~mask).float().unsqueeze(-1)
        return (out * keep).sum(dim=1) / keep.sum(dim=1).clamp(min=1.0)

    def forward(self, feats, mask):
        return self.head(self.encode(feats, mask))

    @torch.no_grad()
    def embeddings(self, feats, mask):
        """Inference-mode embeddings for numpy inputs."""
        self.eval()
        f = torch.as_tensor(np.asarray(feats, dtype=np.float32))
        m = torch.as_tensor(np.asarray(mask, dtype=bool))
        return self.encode(f, m).numpy().astype(np.float64)

    @torch.no_grad()
    def team_distribution(self, feats, mask):
        """Inference-mode class probabilities; rows sum to 1."""
        self.eval()
        f = torch.as_tensor(np.asarray(feats, dtype=np.float32))
        m = torch.as_tensor(np.asarray(mask, dtype=bool))
        probs = F.softmax(self.forward(f, m), dim=-1).numpy().astype(np.float64)
        return probs / probs.sum(axis=-1, keepdims=True)


@dataclass
class PredictorDataset:
    windows: np.ndarray  # (N, window, F) float32
    masks: np.ndarray  # (N, window) bool
    labels: np.ndarray  # (N,) int64
    episode_ids: np.ndarray  # (N,) int64, globally unique per episode
    splits: dict = field(default_factory=dict)  # name -> index array
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.labels)

    def subset(self, name):
        idx = self.splits[name]
        return self.windows[idx], self.masks[idx], self.labels[idx]

    def save(self, path):
        save_tensors(
            path,
            {
                "windows": self.windows,
                "masks": self.masks.astype(np.uint8),
                "labels": self.labels,
                "episode_ids": self.episode_ids,
                **{f"split:{k}": np.asarray(v, dtype=np.int64) for k, v in self.splits.items()},
            },
            meta={
                **self.meta,
                "counts_per_label": {
                    str(k): int(v) for k, v in zip(*np.unique(self.labels, return_counts=True))
                },
            },
        )

    @classmethod
    def load(cls, path):
        tensors, meta = load_tensors(path)
        splits = {
            k.split(":", 1)[1]: tensors[k] for k in tensors if k.startswith("split:")
        }
        return cls(
            windows=tensors["windows"],
            masks=tensors["masks"].astype(bool),
            labels=tensors["labels"],
            episode_ids=tensors["episode_ids"],
            splits=splits,
            meta=meta,
        )


def split_episodes(episode_ids, labels, ratios=(0.8, 0.1, 0.1), seed=0):
    """Episode-level train/val/test split, stratified per label so every team
    appears in the training split."""
    rng = np.random.default_rng(seed)
    episode_ids = np.asarray(episode_ids)
    labels = np.asarray(labels)
    split_of_episode = {}
    for team in np.unique(labels):
        eps = np.unique(episode_ids[labels == team])
        eps = eps[rng.permutation(len(eps))]
        n = len(eps)
        if n >= 3:
            # Honor the ratios but keep val and test non-empty.
            n_train = int(np.clip(round(ratios[0] * n), 1, n - 2))
            n_val = int(np.clip(round(ratios[1] * n), 1, n - 1 - n_train))
        else:
            n_train, n_val = max(1, n - 1), 0
        for i, ep in enumerate(eps):
            if i < n_train:
                split_of_episode[ep] = "train"
            elif i < n_train + n_val:
                split_of_episode[ep] = "val"
            else:
                split_of_episode[ep] = "test"
    splits = {"train": [], "val": [], "test": []}
    for idx, ep in enumerate(episode_ids):
        splits[split_of_episode[ep]].append(idx)
    split_arrays = {k: np.asarray(v, dtype=np.int64) for k, v in splits.items()}
    for team in np.unique(labels):
        if not np.any(labels[split_arrays["train"]] == team):
            raise ValueError(f"team label {team} absent from the training split")
    return split_arrays


def generate_predictor_dataset(teams, layout, n, episodes_per_team, seeds=None,
                               stride=5, window=WINDOW, horizon=HORIZON, split_seed=0):
    """Self-play windows from every team, labeled by team id.

    ``teams`` is a sequence of controller lists (one controller per agent).
    The same episode seeds are used for every team. Windows are taken every
    ``stride`` steps; splits are disjoint at the episode level.
    """
    if not teams:
        raise ValueError("empty team collection")
    if seeds is None:
        seeds = list(range(episodes_per_team))
    windows, masks, labels, episode_ids = [], [], [], []
    episode_counter = 0
    for team_id, controllers in enumerate(teams):
        for ep in range(episodes_per_team):
            result = run_episode(layout, n, controllers, seeds[ep], horizon=horizon)
            T = result.records.shape[0]
            for t in range(stride, T + 1, stride):
                feats, mask = build_window(result.records, layout, t=t, window=window)
                windows.append(feats)
                masks.append(mask)
                labels.append(team_id)
                episode_ids.append(episode_counter)
            episode_counter += 1
    windows = np.stack(windows)
    masks = np.stack(masks)
    labels = np.asarray(labels, dtype=np.int64)
    episode_ids = np.asarray(episode_ids, dtype=np.int64)
    splits = split_episodes(episode_ids, labels, seed=split_seed)
    return PredictorDataset(
        windows=windows,
        masks=masks,
        labels=labels,
        episode_ids=episode_ids,
        splits=splits,
        meta={
            "stride": stride,
            "window": window,
            "episodes_per_team": episodes_per_team,
            "seeds": list(map(int, seeds)),
            "layout": layout.name,
            "n_agents": n,
        },
    )


def train_predictor(dataset, m_teams, config=None, batch_size=256, lr=1e-3,
                    weight_decay=1e-4, patience=25, max_epochs=500, seed=0,
                    log=None):
    """Cross-entropy training with early stopping on validation loss.

    Returns ``(model, test_accuracy, history)`` where the model carries the
    best-validation parameters.
    """
    config = config or EncoderConfig()
    labels_all = dataset.labels
    if np.unique(labels_all[dataset.splits["train"]]).size < m_teams:
        raise ValueError("every team label must appear in the training split")
    torch.manual_seed(seed)
    n_agents = dataset.meta.get("n_agents") or dataset.windows.shape[2] // FEATS_PER_AGENT
    model = TeamPredictor(n_agents, m_teams, config)
    opt = torch.optim.Adam(model.parameters(), lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng(seed)

    def tensors(split):
        w, m, y = dataset.subset(split)
        return (
            torch.as_tensor(w),
            torch.as_tensor(m),
            torch.as_tensor(y),
        )

    train_w, train_m, train_y = tensors("train")
    val_w, val_m, val_y = tensors("val")
    has_val = len(val_y) > 0  # tiny datasets may have no val episodes
    best_val = float("inf")
    best_state = copy.deepcopy(model.state_dict())
    stale = 0
    history = []
    for epoch in range(max_epochs):
        model.train()
        order = rng.permutation(len(train_y))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = torch.as_tensor(order[start : start + batch_size])
            opt.zero_grad()
            logits = model(train_w[idx], train_m[idx])
            loss = F.cross_entropy(logits, train_y[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        model.eval()
        with torch.no_grad():
            if has_val:
                val_loss = F.cross_entropy(model(val_w, val_m), val_y).item()
            else:
                val_loss = total / len(train_y)  # fall back to train loss
        rec = {"epoch": epoch, "train_loss": total / len(train_y), "val_loss": val_loss}
        history.append(rec)
        if log is not None:
            log(rec)
        if val_loss < best_val - 1e-6:
            best_val = val_loss
            best_state = copy.deepcopy(model.state_dict())
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    test_w, test_m, test_y = tensors("test")
    with torch.no_grad():
        pred = model(test_w, test_m).argmax(dim=-1)
        test_acc = float((pred == test_y).float().mean())
    return model, test_acc, history


def save_predictor(path, model, extra_meta=None):
    from .checkpoint import save_module

    meta = {
        "n_agents": model.n_agents,
        "m_teams": model.m_teams,
        "config": vars(model.config),
    }
    meta.update(extra_meta or {})
    save_module(path, model, meta)


def load_predictor(path):
    from .checkpoint import load_module

    tensors, meta = load_tensors(path)
    config = EncoderConfig(**meta["config"])
    model = TeamPredictor(meta["n_agents"], meta["m_teams"], config)
    load_module(path, model)
    model.eval()
    return model, meta
