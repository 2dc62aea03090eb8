"""Team-steering pipeline on a deterministic multi-agent kitchen simulator.

Subpackages and modules:
    env        -- kitchen simulator: layouts, stepping, observations, replays
    shaping    -- collaborative features, salient actions, influence/diversity rewards
    nets       -- actor, critic, and influence predictor networks
    ppo        -- GAE and clipped policy-gradient updates
    rollout    -- batched rollout collection with reward shaping hooks
    pool       -- round-robin team-pool training and quality scoring
    predictor  -- trajectory windows and the transformer team classifier
    steering   -- quality-weighted steering rewards, teacher training, distillation
    heuristics -- scripted controllers (passing roles, random agents)
    evalharness-- evaluation runs, score tables, sweeps, baselines
    server     -- synchronous-stepping live-play session server
    cli        -- command-line entry points
"""

__version__ = "0.1.0"
