"""Command-line entry points for the whole pipeline.

Every subcommand reads one optional run-configuration file plus flag
overrides, writes its outputs under ``--out`` with a manifest, exits 0 on
success, and prints a one-line machine-readable JSON error to stderr on
failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import ConfigError, load_config, write_manifest
from .drive import PolicyController, RandomController
from .env.layout import LayoutError, load_layout
from .env.replay import read_replay, replay, verify_replay
from .evalharness import (
    EvalSpec,
    SingleTeamConfig,
    ScoreRow,
    export_table,
    k_sensitivity_sweep,
    reward_hacking_baseline,
    run_eval,
)
from .heuristics import PASSING_ROLES, PassingController
from .pool import PoolTrainConfig, load_pool, save_pool, score_team_pool, train_team_pool
from .predictor import (
    PredictorDataset,
    generate_predictor_dataset,
    load_predictor,
    save_predictor,
    train_predictor,
)
from .steering import (
    EmbeddingPolicyController,
    TeacherTrainConfig,
    distill_student,
    export_distill_dataset,
    load_student,
    load_teacher,
    save_student,
    save_teacher,
    train_teacher,
)


def fail(code, message):
    click.echo(json.dumps({"error": code, "message": message}), err=True)
    sys.exit(2)


def guarded(fn):
    """Convert exceptions into machine-readable errors with exit code 2."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, LayoutError) as exc:
            fail("config", str(exc))
        except FileNotFoundError as exc:
            fail("missing-file", f"{exc.filename or exc}")
        except ValueError as exc:
            fail("invalid", str(exc))

    wrapper.__name__ = fn.__name__
    return wrapper


def common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="Run configuration JSON file.")(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    fn = click.option("--layout", type=str, default=None)(fn)
    fn = click.option("--n", type=int, default=None)(fn)
    fn = click.option("--out", type=click.Path(), default="runs/latest")(fn)
    fn = click.option("--steps", type=int, default=None,
                      help="Override the command's step budget.")(fn)
    fn = click.option("--episodes", type=int, default=None)(fn)
    return fn


def build_config(config_path, seed, layout, n, episodes, steps=None, steps_field=None):
    overrides = {"seed": seed, "layout": layout, "n": n, "episodes": episodes}
    if steps is not None and steps_field is not None:
        overrides[steps_field] = steps
    return load_config(config_path, overrides)


def metrics_writer(out_dir, name):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    f = open(out_dir / name, "a")

    def emit(rec):
        f.write(json.dumps(rec) + "\n")
        f.flush()

    return emit


def resolve_controller(spec, slot, layout_name, base_dir=None):
    """Roster entry -> controller. Forms: ``random``, ``passing``,
    ``pool:<ckpt>:<team>``, ``student:<ckpt>:<predictor-ckpt>``,
    ``teacher:<ckpt>:<predictor-ckpt>``. Relative checkpoint paths resolve
    against ``base_dir`` when given."""

    def locate(p):
        if not p:
            raise FileNotFoundError(p)
        cand = Path(p)
        if cand.exists():
            return cand
        if base_dir is not None and (Path(base_dir) / p).exists():
            return Path(base_dir) / p
        raise FileNotFoundError(p)

    if spec == "random":
        return RandomController()
    if spec == "passing":
        if layout_name not in PASSING_ROLES:
            raise ValueError(f"passing heuristic has no roles for layout {layout_name!r}")
        return PassingController(PASSING_ROLES[layout_name][slot])
    kind, _, rest = spec.partition(":")
    if kind == "pool":
        path, _, team = rest.rpartition(":")
        pool = load_pool(locate(path))
        return PolicyController(pool.teams[int(team)][slot], name=f"pool:{team}/{slot}")
    if kind in ("student", "teacher"):
        net_path, _, pred_path = rest.partition(":")
        predictor, _ = load_predictor(locate(pred_path))
        layout = load_layout(layout_name)
        if kind == "student":
            net, _ = load_student(locate(net_path))
        else:
            net = load_teacher(locate(net_path)).net
        return EmbeddingPolicyController(net, predictor, layout, name=kind)
    raise ValueError(f"unknown roster entry {spec!r}")


@click.group()
def main():
    """Influence-shaped team pools, team prediction, steering, distillation,
    evaluation, and live play."""


@main.command("train-pool")
@common_options
@guarded
def cmd_train_pool(config_path, seed, layout, n, out, steps, episodes):
    """Stage 1: build the influence-shaped team pool."""
    cfg = build_config(config_path, seed, layout, n, episodes, steps, "chunk_steps")
    write_manifest(out, "train-pool", cfg)
    emit = metrics_writer(out, "train-pool.metrics.jsonl")
    pool_cfg = PoolTrainConfig(
        layout=cfg.layout, n=cfg.n, m_teams=cfg.m_teams, cycles=cfg.cycles,
        chunk_steps=cfg.chunk_steps, seed=cfg.seed, ppo=cfg.ppo, shaping=cfg.shaping,
    )
    ckpt_dir = Path(out) / "pool"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    chunk_files = []

    def probe(cycle, m, teams, critics):
        from .checkpoint import save_tensors

        tensors = {
            f"agent{i}/{k}": v.detach().cpu().numpy()
            for i, net in enumerate(teams[m])
            for k, v in net.state_dict().items()
        }
        f = ckpt_dir / f"team{m}-cycle{cycle}.ckpt"
        save_tensors(f, tensors, meta={"team": m, "cycle": cycle})
        chunk_files.append(f.name)

    pool, records = train_team_pool(pool_cfg, metrics=emit, chunk_probe=probe)
    save_pool(ckpt_dir / "pool.ckpt", pool)
    (ckpt_dir / "manifest.json").write_text(
        json.dumps({"chunks": chunk_files, "final": "pool.ckpt"}, indent=2) + "\n"
    )
    click.echo(f"pool trained: {ckpt_dir / 'pool.ckpt'} ({len(records)} updates)")


@main.command("score-pool")
@common_options
@click.option("--pool", "pool_path", type=click.Path(), required=True)
@guarded
def cmd_score_pool(config_path, seed, layout, n, out, steps, episodes, pool_path):
    """Evaluate and normalize per-team quality scores."""
    cfg = build_config(config_path, seed, layout, n, episodes)
    if not Path(pool_path).exists():
        raise FileNotFoundError(pool_path)
    pool = load_pool(pool_path)
    scores = score_team_pool(pool, cfg.episodes, seeds=list(cfg.seeds) * cfg.episodes,
                             horizon=cfg.eval_horizon)
    save_pool(pool_path, pool)
    write_manifest(out, "score-pool", cfg, extra={"scores": scores.tolist()})
    click.echo(json.dumps({"scores": scores.tolist()}))


@main.command("gen-predictor-data")
@common_options
@click.option("--pool", "pool_path", type=click.Path(), required=True)
@guarded
def cmd_gen_predictor_data(config_path, seed, layout, n, out, steps, episodes, pool_path):
    """Stage 2 data: labeled self-play windows from the pool."""
    cfg = build_config(config_path, seed, layout, n, episodes)
    if not Path(pool_path).exists():
        raise FileNotFoundError(pool_path)
    pool = load_pool(pool_path)
    layout_obj = load_layout(pool.layout_name)
    teams = [pool.controllers(m) for m in range(pool.m_teams)]
    ds = generate_predictor_dataset(
        teams, layout_obj, pool.n, cfg.episodes_per_team,
        seeds=[cfg.seed + i for i in range(cfg.episodes_per_team)],
        stride=cfg.dataset_stride, window=cfg.encoder.window,
        horizon=cfg.eval_horizon, split_seed=cfg.seed,
    )
    out_path = Path(out) / "predictor-data.bin"
    Path(out).mkdir(parents=True, exist_ok=True)
    ds.save(out_path)
    write_manifest(out, "gen-predictor-data", cfg, extra={"dataset": str(out_path),
                                                          "windows": len(ds)})
    click.echo(f"dataset: {out_path} ({len(ds)} windows)")


@main.command("train-predictor")
@common_options
@click.option("--data", "data_path", type=click.Path(), required=True)
@click.option("--m-teams", type=int, default=None)
@guarded
def cmd_train_predictor(config_path, seed, layout, n, out, steps, episodes, data_path, m_teams):
    """Stage 2: fit the trajectory-window team classifier."""
    cfg = build_config(config_path, seed, layout, n, episodes)
    if not Path(data_path).exists():
        raise FileNotFoundError(data_path)
    ds = PredictorDataset.load(data_path)
    m = m_teams or cfg.m_teams
    emit = metrics_writer(out, "train-predictor.metrics.jsonl")
    model, test_acc, history = train_predictor(
        ds, m, config=cfg.encoder, seed=cfg.seed, log=emit,
        max_epochs=cfg.predictor_max_epochs, patience=cfg.predictor_patience,
    )
    out_path = Path(out) / "predictor.ckpt"
    save_predictor(out_path, model, extra_meta={"test_accuracy": test_acc})
    write_manifest(out, "train-predictor", cfg,
                   extra={"test_accuracy": test_acc, "epochs": len(history)})
    click.echo(json.dumps({"test_accuracy": test_acc, "checkpoint": str(out_path)}))


@main.command("train-teacher")
@common_options
@click.option("--pool", "pool_path", type=click.Path(), required=True)
@click.option("--predictor", "pred_path", type=click.Path(), required=True)
@click.option("--agent-index", type=int, required=True)
@guarded
def cmd_train_teacher(config_path, seed, layout, n, out, steps, episodes,
                      pool_path, pred_path, agent_index):
    """Stage 3: steering-trained best response for one agent index."""
    cfg = build_config(config_path, seed, layout, n, episodes, steps, "teacher_steps")
    for p in (pool_path, pred_path):
        if not Path(p).exists():
            raise FileNotFoundError(p)
    pool = load_pool(pool_path)
    predictor, _ = load_predictor(pred_path)
    emit = metrics_writer(out, f"train-teacher-{agent_index}.metrics.jsonl")
    tcfg = TeacherTrainConfig(total_steps=cfg.teacher_steps, seed=cfg.seed,
                              ppo=cfg.ppo, steering=cfg.steering)
    teacher, records = train_teacher(agent_index, pool, predictor, tcfg, metrics=emit)
    out_path = Path(out) / f"teacher-{agent_index}.ckpt"
    save_teacher(out_path, teacher)
    write_manifest(out, "train-teacher", cfg,
                   extra={"agent_index": agent_index, "updates": len(records)})
    click.echo(f"teacher {agent_index}: {out_path}")


@main.command("distill")
@common_options
@click.option("--pool", "pool_path", type=click.Path(), required=True)
@click.option("--predictor", "pred_path", type=click.Path(), required=True)
@click.option("--teachers", "teacher_paths", type=str, required=True,
              help="Comma-separated teacher checkpoints, one per agent index.")
@guarded
def cmd_distill(config_path, seed, layout, n, out, steps, episodes,
                pool_path, pred_path, teacher_paths):
    """Stage 4: pool teacher records and clone them into one student."""
    cfg = build_config(config_path, seed, layout, n, episodes)
    paths = teacher_paths.split(",")
    for p in [pool_path, pred_path, *paths]:
        if not Path(p).exists():
            raise FileNotFoundError(p)
    pool = load_pool(pool_path)
    predictor, _ = load_predictor(pred_path)
    teachers = [load_teacher(p) for p in paths]
    ds = export_distill_dataset(
        teachers, pool, predictor, cfg.distill_episodes,
        seeds=[cfg.seed + i for i in range(cfg.distill_episodes)],
        horizon=cfg.eval_horizon,
    )
    Path(out).mkdir(parents=True, exist_ok=True)
    ds.save(Path(out) / "distill-data.bin")
    student, agreement, _ = distill_student(
        ds, epochs=cfg.distill_epochs, lr=cfg.distill_lr, seed=cfg.seed,
        hidden=cfg.ppo.hidden,
    )
    out_path = Path(out) / "student.ckpt"
    save_student(out_path, student, meta={"layout": pool.layout_name,
                                          "heldout_agreement": agreement})
    write_manifest(out, "distill", cfg, extra={"heldout_agreement": agreement,
                                               "records": len(ds)})
    click.echo(json.dumps({"heldout_agreement": agreement, "checkpoint": str(out_path)}))


@main.command("eval")
@common_options
@click.option("--roster", type=str, required=True,
              help="Comma-separated controllers, e.g. 'student:s.ckpt:p.ckpt,random'.")
@click.option("--method", type=str, default="custom")
@guarded
def cmd_eval(config_path, seed, layout, n, out, steps, episodes, roster, method):
    """Evaluate a roster over seeds; persists replays and a score row."""
    cfg = build_config(config_path, seed, layout, n, episodes)
    entries = roster.split(",")
    controllers = [resolve_controller(e.strip(), i, cfg.layout) for i, e in enumerate(entries)]
    spec = EvalSpec(layout=cfg.layout, n=cfg.n, controllers=controllers, method=method,
                    episodes=cfg.episodes, seeds=cfg.seeds, horizon=cfg.eval_horizon)
    row, logs = run_eval(spec, out_dir=Path(out) / "replays")
    write_manifest(out, "eval", cfg, extra={"row": row.to_json()})
    rows_path = Path(out) / "rows.jsonl"
    with open(rows_path, "a") as f:
        f.write(json.dumps(row.to_json()) + "\n")
    click.echo(json.dumps(row.to_json()))


@main.command("sweep-k")
@common_options
@guarded
def cmd_sweep_k(config_path, seed, layout, n, out, steps, episodes):
    """Event-horizon sensitivity sweep with matched seeds."""
    cfg = build_config(config_path, seed, layout, n, episodes, steps, "total_steps")
    base = SingleTeamConfig(layout=cfg.layout, n=cfg.n, total_steps=cfg.total_steps,
                            seed=cfg.seed, ppo=cfg.ppo, shaping=cfg.shaping)
    emit = metrics_writer(out, "sweep-k.metrics.jsonl")
    rows = k_sensitivity_sweep(cfg.k_values, base, seeds=cfg.seeds,
                               eval_episodes=cfg.episodes, eval_horizon=cfg.eval_horizon,
                               metrics=emit)
    table = export_table(rows, Path(out) / "k-sweep.table.txt")
    write_manifest(out, "sweep-k", cfg, extra={"rows": [r.to_json() for r in rows]})
    click.echo(f"table: {table}")


@main.command("baseline-hack")
@common_options
@guarded
def cmd_baseline_hack(config_path, seed, layout, n, out, steps, episodes):
    """Dense-handoff-bonus baseline, trained and scored."""
    cfg = build_config(config_path, seed, layout, n, episodes, steps, "total_steps")
    base = SingleTeamConfig(layout=cfg.layout, n=cfg.n, total_steps=cfg.total_steps,
                            seed=cfg.seed, ppo=cfg.ppo,
                            handoff_bonus=cfg.handoff_bonus,
                            handoff_window=cfg.handoff_window)
    _, row, _ = reward_hacking_baseline(base, eval_seeds=cfg.seeds,
                                        eval_episodes=cfg.episodes,
                                        out_dir=Path(out) / "replays")
    write_manifest(out, "baseline-hack", cfg, extra={
        "row": row.to_json(),
        "handoff_bonus": cfg.handoff_bonus,
        "handoff_window": cfg.handoff_window,
        "note": "bonus size and window are artifact defaults, not reported values",
    })
    click.echo(json.dumps(row.to_json()))


@main.command("replay")
@click.argument("replay_file", type=click.Path())
@guarded
def cmd_replay(replay_file):
    """Re-simulate a stored replay and verify it reproduces exactly."""
    if not Path(replay_file).exists():
        raise FileNotFoundError(replay_file)
    log = read_replay(replay_file)
    issues = verify_replay(log)
    score, _ = replay(log)
    if issues:
        fail("replay-mismatch", "; ".join(issues))
    click.echo(json.dumps({"score": score, "steps": len(log.actions),
                           "layout": log.layout_name}))


@main.command("export-table")
@click.option("--rows", "rows_path", type=click.Path(), required=True,
              help="JSONL of score rows (written by eval).")
@click.option("--out", type=click.Path(), default="table.txt")
@guarded
def cmd_export_table(rows_path, out):
    """Format accumulated score rows as a mean +- std (max) table."""
    if not Path(rows_path).exists():
        raise FileNotFoundError(rows_path)
    rows = []
    for line in Path(rows_path).read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        rows.append(ScoreRow(
            layout=d["layout"], method=d["method"], mean=d["mean"], std=d["std"],
            max=d["max"], per_seed=d["per_seed"], seeds=d["seeds"],
            episodes=d["episodes"],
        ))
    path = export_table(rows, out)
    click.echo(f"table: {path}")


@main.command("serve")
@click.option("--port", type=int, default=8765)
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--checkpoint-dir", type=click.Path(), default=None)
@click.option("--replay-dir", type=click.Path(), default="replays")
@click.option("--step-timeout", type=float, default=None,
              help="Seconds before absent humans default to stay (off by default).")
@guarded
def cmd_serve(port, host, checkpoint_dir, replay_dir, step_timeout):
    """Run the live-play session server (synchronous stepping)."""
    from .server import serve_forever

    serve_forever(host=host, port=port, checkpoint_dir=checkpoint_dir,
                  replay_dir=replay_dir, step_timeout=step_timeout)


if __name__ == "__main__":
    main()
