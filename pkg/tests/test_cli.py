"""CLI commands, exit codes, and run-directory layout."""

import json

import pytest

from logicmix.cli import main

TINY = [
    "--train.num_envs", "2", "--train.num_steps", "16",
    "--train.num_minibatches", "2", "--train.update_epochs", "1",
    "--train.total_timesteps", "64", "--infer_steps", "2",
]


def _train(tmp_path, name, extra=()):
    rc = main([
        "train", "--env", "mini-kangaroo", "--seed", "0",
        "--run-name", name, "--out-dir", str(tmp_path), *TINY, *extra,
    ])
    assert rc == 0
    return tmp_path / name


class TestTrain:
    def test_smoke_run_directory(self, tmp_path, capsys):
        run_dir = _train(tmp_path, "smoke")
        assert (run_dir / "config.json").exists()
        assert (run_dir / "metrics.jsonl").exists()
        ckpts = list(run_dir.glob("ckpt_*.bin"))
        assert len(ckpts) >= 1
        lines = (run_dir / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == 2
        record = json.loads(lines[0])
        assert record["iteration"] == 1

    def test_missing_rule_file_exits_2(self, tmp_path, capsys):
        rc = main([
            "train", "--env", "mini-kangaroo",
            "--rules", str(tmp_path / "missing.rules"),
            "--out-dir", str(tmp_path / "runs"), *TINY,
        ])
        assert rc == 2
        assert "missing.rules" in capsys.readouterr().err
        assert not (tmp_path / "runs").exists()  # no partial run directory

    def test_validation_is_exhaustive(self, tmp_path, capsys):
        rc = main([
            "train", "--env", "mini-kangaroo",
            "--rules", str(tmp_path / "missing.rules"),
            "--force-beta", "3.0",
            "--out-dir", str(tmp_path / "runs"), *TINY,
        ])
        assert rc == 2
        err = capsys.readouterr().err
        assert "missing.rules" in err
        assert "force_beta" in err

    def test_force_beta_one_logic_usage_zero(self, tmp_path):
        run_dir = _train(tmp_path, "forced", extra=["--force-beta", "1.0"])
        for line in (run_dir / "metrics.jsonl").read_text().splitlines():
            assert json.loads(line)["logic_usage_frac"] == 0.0

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        rc = main([
            "train", "--env", "mini-kangaroo",
            "--out-dir", str(tmp_path), "--warp_speed", "9",
        ])
        assert rc == 2
        assert "warp_speed" in capsys.readouterr().err

    def test_config_file_plus_overrides(self, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({
            "env": "mini-kangaroo", "infer_steps": 2,
            "train": {"num_envs": 2, "num_steps": 16, "num_minibatches": 2,
                      "update_epochs": 1, "total_timesteps": 32},
        }))
        rc = main([
            "train", "--config", str(cfg_path), "--run-name", "fromfile",
            "--out-dir", str(tmp_path), "--train.seed", "7",
        ])
        assert rc == 0
        saved = json.loads((tmp_path / "fromfile" / "config.json").read_text())
        assert saved["train"]["seed"] == 7


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("ckpt")
    run_dir = _train(tmp, "base")
    return next(run_dir.glob("ckpt_*.bin"))


class TestEval:
    def test_deterministic_summary(self, checkpoint, capsys):
        args = ["eval", "--checkpoint", str(checkpoint), "--episodes", "3",
                "--seed", "0"]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args) == 0
        assert capsys.readouterr().out == first
        assert "return=" in first

    def test_zero_noise_equals_no_flag(self, checkpoint, capsys):
        base = ["eval", "--checkpoint", str(checkpoint), "--episodes", "3"]
        assert main(base) == 0
        plain = capsys.readouterr().out
        assert main(base + ["--noise", "0.0"]) == 0
        noisy = capsys.readouterr().out
        assert plain == noisy

    def test_noise_sweep_rows(self, checkpoint, tmp_path, capsys):
        out = tmp_path / "sweep.jsonl"
        rc = main([
            "eval", "--checkpoint", str(checkpoint), "--episodes", "2",
            "--noise", "0,0.1,0.3", "--out", str(out),
        ])
        assert rc == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert [r["noise"] for r in rows] == [0.0, 0.1, 0.3]
        assert all("mean_return" in r for r in rows)

    def test_mod_flags(self, checkpoint, capsys):
        rc = main([
            "eval", "--checkpoint", str(checkpoint), "--episodes", "2",
            "--mod", "no_enemies,relocated_ladders",
        ])
        assert rc == 0
        assert "no_enemies,relocated_ladders" in capsys.readouterr().out

    def test_action_set_mismatch_exits_2(self, checkpoint, capsys):
        rc = main([
            "eval", "--checkpoint", str(checkpoint), "--env", "mini-seaquest",
        ])
        assert rc == 2
        assert "action set" in capsys.readouterr().err

    def test_corrupt_checkpoint_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"JUNKJUNKJUNK")
        assert main(["eval", "--checkpoint", str(bad)]) == 2


class TestExplain:
    def test_report_directory(self, tmp_path):
        run_dir = _train(tmp_path, "exp")
        ckpt = next(run_dir.glob("ckpt_*.bin"))
        out = tmp_path / "reports"
        rc = main([
            "explain", "--checkpoint", str(ckpt), "--steps", "4",
            "--out", str(out), "--ig-steps", "8",
        ])
        assert rc == 0
        steps = sorted(p.name for p in out.glob("step_*"))
        assert len(steps) == 4
        for s in steps:
            assert (out / s / "report.txt").exists()
            assert (out / s / "logic_attrib.csv").exists()
            assert (out / s / "neural_attrib.csv").exists()
        timeline = (out / "timeline.csv").read_text().splitlines()
        assert timeline[0] == "step,beta,max_logic_prob,max_neural_prob"
        assert len(timeline) == 5
        for line in timeline[1:]:
            beta = float(line.split(",")[1])
            assert 0.0 <= beta <= 1.0


class TestInspectAndDispatch:
    def test_inspect_rules_env(self, capsys):
        assert main(["inspect-rules", "--env", "mini-kangaroo"]) == 0
        out = capsys.readouterr().out
        assert "ground rules" in out
        assert "action: noop/1" in out

    def test_inspect_requires_input(self, capsys):
        assert main(["inspect-rules"]) == 2

    def test_no_command_prints_help(self, capsys):
        assert main([]) == 2

    def test_runtime_error_exits_3(self, tmp_path, monkeypatch, capsys):
        import logicmix.cli as cli

        def boom(cfg, run_dir=None, log_fn=None):
            raise RuntimeError("exploded mid-run")

        monkeypatch.setattr(cli, "build_trainer", boom)
        rc = main([
            "train", "--env", "mini-kangaroo", "--out-dir", str(tmp_path), *TINY,
        ])
        assert rc == 3
        assert "exploded" in capsys.readouterr().err


class TestValuationOverrides:
    def test_override_reaches_registry(self):
        from logicmix.config import load_config, build_policy

        cfg = load_config(None, {
            "env": "mini-kangaroo", "infer_steps": "2",
            "valuation.closeby_monkey.d": "3.5",
        })
        policy = build_policy(cfg)
        assert policy.logic_policy.registry.entries["closeby_monkey"][1]["d"] == 3.5

    def test_override_unknown_predicate_rejected(self, tmp_path, capsys):
        rc = main([
            "train", "--env", "mini-kangaroo", "--out-dir", str(tmp_path),
            "--valuation.telepathy.d", "1.0", *TINY,
        ])
        assert rc == 2
        assert "telepathy" in capsys.readouterr().err


class TestConfigFileHandling:
    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(["train", "--config", str(tmp_path / "nope.json"), *TINY])
        assert rc == 2
        assert "nope.json" in capsys.readouterr().err

    def test_invalid_json_config(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        rc = main(["train", "--config", str(p), *TINY])
        assert rc == 2
        assert "JSON" in capsys.readouterr().err

    def test_inspect_rules_explicit_files(self, tmp_path, capsys):
        lang = tmp_path / "toy.lang"
        lang.write_text(
            "type image. type player. type ladder.\n"
            "const img:image. const player:player. const ladder1:ladder.\n"
            "pred up/1 action (image).\n"
            "pred on_ladder/2 state (player,ladder).\n"
        )
        rules = tmp_path / "toy.rules"
        rules.write_text("0.9 up(X):-on_ladder(P,L).\n")
        rc = main([
            "inspect-rules", "--language", str(lang), "--rules", str(rules),
            "--dump-graph",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "1 rules -> 1 ground rules" in out
        assert "edge c0 -> a0 w0" in out
