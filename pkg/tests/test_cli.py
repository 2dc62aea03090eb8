import json

import pytest
from click.testing import CliRunner

from teamsteer.cli import main
from teamsteer.drive import RandomController, run_episode
from teamsteer.env import load_layout
from teamsteer.env.replay import write_replay


@pytest.fixture
def runner():
    return CliRunner()


TINY_CONFIG = {
    "layout": "cramped-2",
    "n": 2,
    "seed": 0,
    "seeds": [0, 1],
    "episodes": 1,
    "m_teams": 2,
    "cycles": 1,
    "chunk_steps": 32,
    "total_steps": 32,
    "teacher_steps": 32,
    "episodes_per_team": 4,
    "distill_episodes": 2,
    "distill_epochs": 5,
    "predictor_max_epochs": 12,
    "predictor_patience": 6,
    "eval_horizon": 40,
    "k_values": [1, 4],
    "ppo": {"n_envs": 2, "n_steps": 16, "batch_size": 32, "epochs": 1,
            "lr": 3e-4, "hidden": 32},
    "encoder": {"d_model": 16, "heads": 2, "layers": 1, "feedforward": 32,
                "dropout": 0.1, "window": 10},
}


def write_config(tmp_path, **overrides):
    cfg = dict(TINY_CONFIG)
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestErrors:
    def test_eval_missing_checkpoint(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        result = runner.invoke(main, [
            "eval", "--config", str(cfg), "--out", str(tmp_path / "out"),
            "--roster", "pool:/no/such/pool.ckpt:0,random",
        ])
        assert result.exit_code != 0
        err = json.loads(result.output.strip().splitlines()[-1])
        assert err["error"] == "missing-file"
        assert "/no/such/pool.ckpt" in err["message"]

    def test_unknown_config_key(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"no_such_key": 1}))
        result = runner.invoke(main, ["train-pool", "--config", str(path),
                                      "--out", str(tmp_path / "out")])
        assert result.exit_code != 0
        err = json.loads(result.output.strip().splitlines()[-1])
        assert err["error"] == "config"

    def test_unknown_roster_entry(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        result = runner.invoke(main, [
            "eval", "--config", str(cfg), "--out", str(tmp_path / "out"),
            "--roster", "wizard,random",
        ])
        assert result.exit_code != 0
        err = json.loads(result.output.strip().splitlines()[-1])
        assert err["error"] == "invalid"


class TestReplayCommand:
    def test_replay_prints_stored_score(self, runner, tmp_path):
        layout = load_layout("cramped-2")
        res = run_episode(layout, 2, [RandomController(), RandomController()], seed=5,
                          horizon=60)
        path = tmp_path / "ep.replay"
        write_replay(res.log, path)
        result = runner.invoke(main, ["replay", str(path)])
        assert result.exit_code == 0, result.output
        out = json.loads(result.output)
        assert out["score"] == res.score
        assert out["steps"] == 60

    def test_replay_missing_file(self, runner):
        result = runner.invoke(main, ["replay", "/no/such.replay"])
        assert result.exit_code != 0


class TestPipeline:
    def test_full_pipeline_through_cli(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "run"

        r = runner.invoke(main, ["train-pool", "--config", str(cfg), "--out", str(out)])
        assert r.exit_code == 0, r.output
        pool_path = out / "pool" / "pool.ckpt"
        assert pool_path.exists()
        assert (out / "pool" / "manifest.json").exists()
        assert (out / "manifest.json").exists()

        r = runner.invoke(main, ["score-pool", "--config", str(cfg), "--out", str(out),
                                 "--pool", str(pool_path)])
        assert r.exit_code == 0, r.output
        scores = json.loads(r.output.strip().splitlines()[-1])["scores"]
        assert len(scores) == 2 and max(scores) == 1.0

        r = runner.invoke(main, ["gen-predictor-data", "--config", str(cfg),
                                 "--out", str(out), "--pool", str(pool_path)])
        assert r.exit_code == 0, r.output
        data_path = out / "predictor-data.bin"
        assert data_path.exists()

        r = runner.invoke(main, ["train-predictor", "--config", str(cfg),
                                 "--out", str(out), "--data", str(data_path)])
        assert r.exit_code == 0, r.output
        pred_path = out / "predictor.ckpt"
        assert pred_path.exists()

        r = runner.invoke(main, ["train-teacher", "--config", str(cfg),
                                 "--out", str(out), "--pool", str(pool_path),
                                 "--predictor", str(pred_path), "--agent-index", "0"])
        assert r.exit_code == 0, r.output
        r = runner.invoke(main, ["train-teacher", "--config", str(cfg),
                                 "--out", str(out), "--pool", str(pool_path),
                                 "--predictor", str(pred_path), "--agent-index", "1"])
        assert r.exit_code == 0, r.output
        t0, t1 = out / "teacher-0.ckpt", out / "teacher-1.ckpt"
        assert t0.exists() and t1.exists()

        r = runner.invoke(main, ["distill", "--config", str(cfg), "--out", str(out),
                                 "--pool", str(pool_path), "--predictor", str(pred_path),
                                 "--teachers", f"{t0},{t1}"])
        assert r.exit_code == 0, r.output
        student_path = out / "student.ckpt"
        assert student_path.exists()

        r = runner.invoke(main, ["eval", "--config", str(cfg), "--out", str(out),
                                 "--roster", f"student:{student_path}:{pred_path},random",
                                 "--method", "student-vs-random"])
        assert r.exit_code == 0, r.output
        row = json.loads(r.output.strip().splitlines()[-1])
        assert row["method"] == "student-vs-random"
        replays = list((out / "replays").glob("*.replay"))
        assert replays

        r = runner.invoke(main, ["export-table", "--rows", str(out / "rows.jsonl"),
                                 "--out", str(out / "table.txt")])
        assert r.exit_code == 0, r.output
        assert (out / "table.txt").exists()

    def test_sweep_and_baseline(self, runner, tmp_path):
        cfg = write_config(tmp_path, seeds=[0, 1])
        out = tmp_path / "sweep"
        r = runner.invoke(main, ["sweep-k", "--config", str(cfg), "--out", str(out)])
        assert r.exit_code == 0, r.output
        table = (out / "k-sweep.table.txt").read_text()
        assert "K=1" in table and "K=4" in table

        out2 = tmp_path / "hack"
        r = runner.invoke(main, ["baseline-hack", "--config", str(cfg), "--out", str(out2)])
        assert r.exit_code == 0, r.output
        row = json.loads(r.output.strip().splitlines()[-1])
        assert row["method"] == "reward-hacking"
        manifest = json.loads((out2 / "manifest.json").read_text())
        assert manifest["handoff_bonus"] == 3.0
