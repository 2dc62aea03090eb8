import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from teamsteer.env import load_layout, parse_layout, reset, step
from teamsteer.env.state import Action, AgentState, Held, PotState, WorldState
from teamsteer.nets import InfluenceNets, PolicyNet
from teamsteer.shaping import (
    RewardBreakdown,
    ShapingWeights,
    collab_features,
    collab_features_width,
    combined_reward,
    diversity_reward,
    event_labels,
    influence_reward_from_probs,
    population_mean_policy,
    salient_action,
)

from conftest import random_episode
from gradcheck import check_gradients

# Every agent is walled into a one-cell pocket; agent 0 can face the pot.
BOXED = """\
XODSX
XP1XX
X2XXX
XXXXX
"""


def boxed_state(held0=Held.NOTHING, pot=PotState(), facing0=Action.WEST):
    lay = parse_layout(BOXED, name="boxed")
    (pot_cell,) = lay.pot_cells
    return WorldState(
        layout=lay,
        agents=(
            AgentState(2, 1, facing0, held0),
            AgentState(1, 2, Action.NORTH, Held.NOTHING),
        ),
        pots={pot_cell: pot},
        counters={},
        t=0,
        score=0,
    )


class TestCollabFeatures:
    def test_stay_step_zero_delta(self):
        lay = load_layout("cramped-2")
        s = reset(lay, 2, 0)
        s2, _ = step(s, [Action.STAY, Action.STAY])
        assert np.array_equal(collab_features(s), collab_features(s2))

    def test_pickup_flips_possession(self):
        lay = load_layout("cramped-2")
        s = reset(lay, 2, 0)
        s1, _ = step(s, [Action.WEST, Action.STAY])
        s2, _ = step(s1, [Action.INTERACT, Action.STAY])
        delta = collab_features(s2) - collab_features(s1)
        assert np.linalg.norm(delta) > 0

    def test_width_constant(self):
        lay = load_layout("fc-3")
        w = collab_features_width(lay, 3)
        for _, _, s2, _ in random_episode("fc-3", 3, seed=2, steps=60):
            assert collab_features(s2).shape == (w,)


class TestSalientAction:
    def test_interact_wins_when_only_mover(self):
        s = boxed_state(held0=Held.DISH, pot=PotState(onions=3, timer=0))
        rec = salient_action(s)
        assert rec.action == Action.INTERACT
        # Independent brute force over candidates x agents.
        base = collab_features(s)
        best = None
        for a in range(6):
            tot = 0.0
            for i in range(2):
                joint = [Action.STAY, Action.STAY]
                joint[i] = Action(a)
                nxt, _ = step(s, joint)
                tot += float(np.linalg.norm(collab_features(nxt) - base))
            mean = tot / 2
            if best is None or mean > best[1] + 1e-12:
                best = (a, mean)
        assert rec.action == best[0]
        assert rec.scores[Action.INTERACT] == pytest.approx(math.sqrt(11.0) / 2)

    def test_all_blocked_tie_breaks_north(self):
        s = boxed_state()
        rec = salient_action(s)
        assert rec.action == Action.NORTH
        assert all(v == 0.0 for v in rec.scores)

    def test_deterministic(self):
        lay = load_layout("cramped-2")
        s = reset(lay, 2, 3)
        assert salient_action(s) == salient_action(s)

    def test_argmax_scale_invariant(self):
        # Scaling the feature space scales every candidate score linearly,
        # so the argmax (with the same tie-break) cannot move.
        for _, _, s2, _ in random_episode("cramped-2", 2, seed=8, steps=30):
            rec = salient_action(s2)
            scaled = tuple(3.7 * v for v in rec.scores)
            best = max(range(6), key=lambda a: (scaled[a], -a))
            assert best == rec.action


class TestEventLabels:
    def test_follow_up_inside_window(self):
        actions = np.full((6, 2), Action.STAY, dtype=int)
        actions[2, 1] = Action.INTERACT
        salients = np.full(6, Action.INTERACT, dtype=int)
        labels = event_labels(actions, salients, k=4)
        assert labels[0, 1] == 1  # interact at t+2
        assert labels[0, 0] == 0

    def test_follow_up_outside_window(self):
        actions = np.full((7, 2), Action.STAY, dtype=int)
        actions[5, 1] = Action.INTERACT
        salients = np.full(7, Action.INTERACT, dtype=int)
        labels = event_labels(actions, salients, k=4)
        assert labels[0, 1] == 0

    def test_binary_not_count(self):
        actions = np.full((6, 2), Action.STAY, dtype=int)
        actions[1, 1] = Action.INTERACT
        actions[3, 1] = Action.INTERACT
        salients = np.full(6, Action.INTERACT, dtype=int)
        labels = event_labels(actions, salients, k=4)
        assert labels[0, 1] == 1

    def test_truncated_window_and_suffix_independence(self):
        rng = np.random.default_rng(0)
        actions = rng.integers(0, 6, size=(12, 3))
        salients = rng.integers(0, 6, size=12)
        labels = event_labels(actions, salients, k=4)
        # Labels at t depend only on steps t+1..t+4: rewrite a post-window
        # suffix and compare.
        mutated = actions.copy()
        mutated[9:] = (mutated[9:] + 1) % 6
        labels2 = event_labels(mutated, salients, k=4)
        assert np.array_equal(labels[:4], labels2[:4])
        # Last step has an empty window.
        assert labels[-1].sum() == 0

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            event_labels(np.zeros((0, 2), dtype=int), np.zeros(0, dtype=int), k=4)


class TestInfluenceReward:
    def test_two_agent_example(self):
        q = np.array([[0.0, 0.7], [0.5, 0.0]])
        omega = np.array([0.2, 0.4])
        r = influence_reward_from_probs(q, omega)
        assert r[0] == pytest.approx(0.3)

    def test_clamped_negative_lift(self):
        q = np.array([[0.0, 0.2], [0.5, 0.0]])
        omega = np.array([0.1, 0.6])
        r = influence_reward_from_probs(q, omega)
        assert r[0] == 0.0

    def test_three_agent_mean(self):
        q = np.zeros((3, 3))
        omega = np.zeros(3)
        q[1, 0], q[1, 2] = 0.3, 0.1
        r = influence_reward_from_probs(q, omega)
        assert r[1] == pytest.approx(0.2)

    def test_single_agent_rejected(self):
        with pytest.raises(ValueError):
            influence_reward_from_probs(np.zeros((1, 1)), np.zeros(1))


class TestDiversityReward:
    def test_certain_action_zero(self):
        assert diversity_reward(1.0) == 0.0

    def test_log_identity(self):
        assert diversity_reward(math.exp(-1)) == pytest.approx(1.0)

    def test_floor(self):
        assert diversity_reward(0.0, epsilon=1e-8) == pytest.approx(-math.log(1e-8))
        assert diversity_reward(0.0, epsilon=1e-8) == pytest.approx(18.42, abs=0.01)

    def test_monotone_nonincreasing(self):
        vals = [diversity_reward(p) for p in np.linspace(0.0, 1.0, 50)]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


class TestPopulationMean:
    def _pool(self, n_teams, obs_dim, seed=0):
        torch.manual_seed(seed)
        return [[PolicyNet(obs_dim) for _ in range(2)] for _ in range(n_teams)]

    def test_identical_policies(self):
        torch.manual_seed(0)
        net = PolicyNet(8)
        obs = np.random.default_rng(0).random(8)
        mean = population_mean_policy([[net, net], [net, net]], obs, 0)
        np.testing.assert_allclose(mean, net.action_probs(obs))

    def test_deterministic_mixture(self):
        class Fixed:
            def __init__(self, a):
                self.a = a

            def action_probs(self, obs):
                p = np.zeros(6)
                p[self.a] = 1.0
                return p

        mean = population_mean_policy([[Fixed(0)], [Fixed(1)]], None, 0)
        assert mean[0] == pytest.approx(0.5)
        assert mean[1] == pytest.approx(0.5)

    def test_normalized(self):
        pool = self._pool(5, 12)
        obs = np.random.default_rng(1).random(12)
        mean = population_mean_policy(pool, obs, 1)
        assert mean.sum() == pytest.approx(1.0, abs=1e-6)

    def test_empty_pool(self):
        with pytest.raises(ValueError, match="empty"):
            population_mean_policy([], None, 0)


class TestCombinedReward:
    def test_scale_example(self):
        w = ShapingWeights()
        b = combined_reward(3.0, 0.002, 1.0, w)
        assert b.total == pytest.approx(3.02)

    def test_identity_when_intrinsics_zero(self):
        b = combined_reward(7.0, 0.0, 0.0, ShapingWeights())
        assert b.total == 7.0

    def test_diversity_gate(self):
        w = ShapingWeights(diversity_active=False)
        b1 = combined_reward(1.0, 0.1, 5.0, w)
        b2 = combined_reward(1.0, 0.1, -3.0, w)
        assert b1.total == b2.total

    def test_exact_affine(self):
        w = ShapingWeights()
        rng = np.random.default_rng(0)
        for _ in range(200):
            e, i, d = rng.random(3)
            b = combined_reward(e, i, d, w)
            assert b.total == e + w.lambda_inf * i + w.lambda_div * d
            assert isinstance(b, RewardBreakdown)


class TestInfluenceNets:
    def test_pair_count(self):
        nets = InfluenceNets(n=3, joint_dim=10, seed=0)
        assert len(nets.q) == 6  # n(n-1)
        assert len(nets.omega) == 3

    def test_outputs_in_unit_interval(self):
        nets = InfluenceNets(n=2, joint_dim=6, seed=0)
        rng = np.random.default_rng(0)
        obs = rng.random((32, 6))
        acts = rng.integers(0, 6, size=(32, 2))
        q, omega = nets.follow_up_probs(obs, acts)
        off_diag = ~np.eye(2, dtype=bool)
        assert np.all((q[:, off_diag] > 0) & (q[:, off_diag] < 1))
        assert np.all((omega > 0) & (omega < 1))
        r = nets.influence_rewards(obs, acts)
        assert np.all((r >= 0) & (r <= 1))

    def test_constant_labels_loss_decreases(self):
        nets = InfluenceNets(n=2, joint_dim=4, lr=1e-2, seed=1)
        rng = np.random.default_rng(1)
        obs = rng.random((64, 4))
        acts = rng.integers(0, 6, size=(64, 2))
        labels = np.ones((64, 2))
        losses = [np.mean(list(nets.update(obs, acts, labels).values())) for _ in range(30)]
        assert losses[-1] < losses[0]
        assert losses[-1] < 0.1

    def test_empty_batch_rejected(self):
        nets = InfluenceNets(n=2, joint_dim=4, seed=0)
        with pytest.raises(ValueError, match="empty"):
            nets.update(np.zeros((0, 4)), np.zeros((0, 2), dtype=int), np.zeros((0, 2)))

    def test_bce_gradcheck_five_param_toy(self):
        torch.manual_seed(0)
        lin = torch.nn.Linear(4, 1).double()
        x = torch.randn(16, 4, dtype=torch.float64)
        y = (torch.rand(16, dtype=torch.float64) > 0.5).double()

        def loss_fn():
            return F.binary_cross_entropy_with_logits(lin(x).squeeze(-1), y)

        err = check_gradients(loss_fn, list(lin.parameters()))
        assert err < 1e-4
