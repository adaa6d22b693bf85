"""CLI: pipeline artifacts, config validation, exit codes, determinism."""

import json
import shutil

import pytest

from earl import cli
from earl.errors import ConfigError


def mini_config(tmp_path, **overrides):
    data = {
        "seed": 3,
        "out_dir": str(tmp_path / "run"),
        "policy_k": 4,
        "corpus": {"counts": {"combinational-easy": 10},
                   "heldout_fraction": 0.2},
        "sft": {"peak_lr": 2.0, "warmup_steps": 5, "total_steps": 30,
                "batch_contexts": 128},
        "rl": {"steps": 2, "batch_prompts": 2, "group_size": 3,
               "max_resample_attempts": 1, "max_response_len": 30},
        "eval": {"n": 5, "ks": [1, 5], "max_len": 30},
        "analyze": {"heatmap_tasks": 1, "min_frequency": 2},
        "ablate": {"rhos": [0.0, 0.8], "seeds": [0]},
    }
    data.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path, data


def run(args):
    return cli.main([str(a) for a in args])


def test_full_pipeline_artifacts(tmp_path):
    path, data = mini_config(tmp_path)
    out = tmp_path / "run"
    for sub in ("gen-data", "sft", "train", "eval", "analyze", "ablate"):
        assert run([sub, "--config", path]) == 0, sub
    for name in ("corpus.json", "sft.ckpt", "rl.ckpt", "metrics.csv",
                 "eval.csv", "entropy_hist.csv", "entropy_hist.svg",
                 "token_classes.csv", "top_tokens.csv", "ablation.csv"):
        assert (out / name).exists(), name
    assert list(out.glob("heatmap_*.csv")) and list(out.glob("heatmap_*.svg"))
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == ("step,mean_reward,pass_rate,clip_rate,gated_fraction,"
                      "mean_kl,mean_entropy,retained_groups")
    assert (out / "ablation.csv").read_text().splitlines()[0] == \
        "rho,pass@1,pass@5,syn@5,func@5"


def test_score_reference_is_full_reward(tmp_path):
    path, data = mini_config(tmp_path)
    assert run(["gen-data", "--config", path]) == 0
    corpus = json.loads((tmp_path / "run" / "corpus.json").read_text())
    rec = corpus[0]
    cand = tmp_path / "cand.txt"
    cand.write_text(rec["reference_text"])
    assert run(["score", "--config", path, "--task-id", rec["id"],
                "--candidate", cand]) == 0


def test_score_output_json(tmp_path, capsys):
    path, data = mini_config(tmp_path)
    run(["gen-data", "--config", path])
    corpus = json.loads((tmp_path / "run" / "corpus.json").read_text())
    rec = corpus[0]
    cand = tmp_path / "cand.txt"
    cand.write_text(rec["reference_text"])
    capsys.readouterr()
    run(["score", "--config", path, "--task-id", rec["id"],
         "--candidate", cand])
    payload = json.loads(capsys.readouterr().out.strip())
    assert payload["reward"] == 1.0 and payload["functional_pass"] is True


def test_missing_config_file_is_usage_error(tmp_path, capsys):
    assert run(["gen-data", "--config", tmp_path / "nope.json"]) == 1
    assert capsys.readouterr().err.startswith("error:usage:")


def test_unknown_subcommand_is_usage_error(capsys):
    assert run(["frobnicate"]) == 1
    assert capsys.readouterr().err.startswith("error:usage:")


def test_unknown_config_key_is_validation_error(tmp_path, capsys):
    path, _ = mini_config(tmp_path, bogus_section={"x": 1})
    assert run(["gen-data", "--config", path]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:validation:") and "bogus_section" in err


def test_nested_unknown_key_reports_key_path(tmp_path, capsys):
    path, _ = mini_config(tmp_path,
                          rl={"steps": 1, "warp_factor": 9})
    assert run(["gen-data", "--config", path]) == 2
    assert "rl.warp_factor" in capsys.readouterr().err


def test_invalid_value_is_validation_error(tmp_path, capsys):
    path, _ = mini_config(tmp_path, rl={"group_size": 1})
    assert run(["gen-data", "--config", path]) == 2
    assert capsys.readouterr().err.startswith("error:validation:")


def test_malformed_json_is_validation_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert run(["gen-data", "--config", path]) == 2


def test_missing_artifact_is_runtime_error(tmp_path, capsys):
    path, _ = mini_config(tmp_path)
    assert run(["eval", "--config", path]) == 3
    assert capsys.readouterr().err.startswith("error:runtime:")


def test_seed_and_out_overrides(tmp_path):
    path, _ = mini_config(tmp_path)
    alt = tmp_path / "alt"
    assert run(["gen-data", "--config", path, "--out", alt,
                "--seed", "11"]) == 0
    assert (alt / "corpus.json").exists()


def test_pipeline_determinism_byte_identical(tmp_path):
    path, data = mini_config(tmp_path)
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        for sub in ("gen-data", "sft", "train", "eval"):
            assert run([sub, "--config", path, "--out", out]) == 0
        outs.append(out)
    for artifact in ("corpus.json", "metrics.csv", "eval.csv", "sft.ckpt",
                     "rl.ckpt"):
        a = (outs[0] / artifact).read_bytes()
        b = (outs[1] / artifact).read_bytes()
        assert a == b, artifact


def test_default_config_validates():
    cli.RunConfig().validate()


def test_config_round_trip_identical(tmp_path):
    path, data = mini_config(tmp_path)
    cfg = cli.load_config(path)
    # rebuilding from the same dict yields an equal config
    assert cli.config_from_dict(json.loads(path.read_text())) == cfg
