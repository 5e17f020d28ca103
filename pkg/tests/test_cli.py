import json
import os

import numpy as np
import pytest
import yaml

from boxloco.cli import main
from boxloco.config import ConfigError, load_run_config
from boxloco.policy import save_checkpoint
from boxloco.ppo import TrainConfig, init_policy
from boxloco.world import SkillId


def write_yaml(path, payload):
    with open(path, "w") as fh:
        yaml.safe_dump(payload, fh)
    return str(path)


class TestConfig:
    def test_valid_config_merges_sections(self, tmp_path):
        path = write_yaml(tmp_path / "run.yaml", {
            "train": {"iterations": 3, "steps_per_iteration": 50, "workers": 1},
            "world_params": {"table_height": 0.75},
            "reward_weights": {"cop": 0.2},
            "pickup_ranges": {"mass": [1.0, 3.0]},
            "seed": 42,
            "out_dir": str(tmp_path / "out"),
        })
        config = load_run_config(path, {"skill": "PickUp"})
        assert config.iterations == 3
        assert config.seed == 42
        assert config.world_param_overrides == {"table_height": 0.75}
        assert config.reward_weight_overrides == {"cop": 0.2}
        assert config.pickup_ranges == {"mass": [1.0, 3.0]}

    def test_unknown_key_rejected_with_path(self, tmp_path):
        path = write_yaml(tmp_path / "bad.yaml", {"train": {"learning_rat": 1e-3}})
        with pytest.raises(ConfigError) as e:
            load_run_config(path)
        assert "train.learning_rat" in str(e.value)

    def test_unknown_reward_weight_rejected(self, tmp_path):
        path = write_yaml(tmp_path / "bad2.yaml", {"reward_weights": {"zap": 1.0}})
        with pytest.raises(ConfigError) as e:
            load_run_config(path)
        assert "reward_weights.zap" in str(e.value)


class TestCLI:
    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as e:
            main(["train", "--skill", "Stand", "--bogus"])
        assert e.value.code == 2

    def test_train_smoke_emits_artifacts(self, tmp_path, capsys):
        cfg = write_yaml(tmp_path / "cfg.yaml", {
            "train": {"iterations": 2, "steps_per_iteration": 30, "workers": 1,
                      "checkpoint_every": 1},
        })
        out = str(tmp_path / "run")
        code = main(["train", "--skill", "Stand", "--config", cfg, "--out", out,
                     "--seed", "5"])
        assert code == 0
        assert os.path.exists(os.path.join(out, "resolved_config.json"))
        assert os.path.exists(os.path.join(out, "reward_curve.csv"))
        assert os.path.exists(os.path.join(out, "checkpoint_final.bin"))
        resolved = json.load(open(os.path.join(out, "resolved_config.json")))
        assert resolved["seed"] == 5
        lines = open(os.path.join(out, "reward_curve.csv")).read().strip().splitlines()
        assert len(lines) == 3

    def test_invalid_config_exits_3_with_error_line(self, tmp_path, capsys):
        cfg = write_yaml(tmp_path / "bad.yaml", {"train": {"gamma": -1.0}})
        code = main(["train", "--skill", "Stand", "--config", cfg])
        assert code == 3
        err = capsys.readouterr().err
        assert err.startswith("ERROR ")
        payload = json.loads(err.split(" ", 1)[1])
        assert payload["kind"] == "invalid_config"

    def test_eval_fixture_policy(self, tmp_path, capsys):
        config = TrainConfig(skill=SkillId.Stand, workers=1, seed=1)
        params = init_policy(config)
        ck = str(tmp_path / "p.bin")
        save_checkpoint(params, ck)
        code = main(["eval", "--checkpoint", ck, "--skill", "Stand", "--episodes", "10",
                     "--seed", "0"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["episodes"] == 10
        assert 0.0 <= report["success_rate"] <= 1.0
        assert sum(report["termination_reasons"].values()) == 10

    def test_run_task_rejects_illegal_edge(self, tmp_path, capsys):
        script = write_yaml(tmp_path / "task.yaml", {
            "phases": [{"skill": "Walk", "steps": 5},
                       {"skill": "PickUp", "command": {"target": [0.4, 0.0, 0.9]}}],
        })
        code = main(["run-task", "--script", script])
        assert code == 3
        err = capsys.readouterr().err
        assert "Walk->PickUp" in err

    def test_run_task_nominal(self, tmp_path, capsys):
        script = write_yaml(tmp_path / "task.yaml", {
            "phases": [{"skill": "Stand", "steps": 5}],
        })
        code = main(["run-task", "--script", script, "--seed", "2"])
        assert code == 0
        log = json.loads(capsys.readouterr().out)
        assert log["phases"][0]["skill"] == "Stand"

    def test_limits_subcommand_with_fixture_checkpoint(self, tmp_path, capsys):
        config = TrainConfig(skill=SkillId.PickUp, workers=1, seed=2)
        params = init_policy(config)
        ck = str(tmp_path / "p.bin")
        save_checkpoint(params, ck)
        code = main(["limits", "--param", "mass", "--checkpoint", ck,
                     "--step-size", "4.0"])
        assert code == 0
        result = json.loads(capsys.readouterr().out)
        assert result["parameter"] == "mass"
        assert "max_passing_value" in result

    def test_gen_states_subcommand(self, tmp_path, capsys):
        config = TrainConfig(skill=SkillId.Stand, workers=1, seed=3)
        params = init_policy(config)
        ck = str(tmp_path / "p.bin")
        save_checkpoint(params, ck)
        out = str(tmp_path / "states.jsonl")
        code = main(["gen-states", "--from-skill", "Stand", "--checkpoint", ck,
                     "--n", "3", "--out", out, "--max-speed", "5.0"])
        assert code == 0
        from boxloco.skills import StateDataset
        ds = StateDataset.load(out)
        assert len(ds.entries) == 3

    def test_ablate_variant_runs(self, tmp_path, capsys):
        cfg = write_yaml(tmp_path / "cfg.yaml", {
            "train": {"iterations": 1, "steps_per_iteration": 20, "workers": 1},
        })
        out = str(tmp_path / "abl")
        code = main(["ablate", "--variant", "absolute-action", "--config", cfg,
                     "--out", out, "--seed", "1"])
        assert code == 0
        resolved = json.load(open(os.path.join(out, "resolved_config.json")))
        assert resolved["absolute_action_space"] is True
