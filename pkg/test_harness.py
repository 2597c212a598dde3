"""
실험 하네스 테스트: RunConfig 병합/해시, CLI exit code, generate → train → evaluate
"""
import json
import math

import pandas as pd
import pytest
import torch

from app.api.experiment_router import dispatch
from app.config.presets import NSE_RE_VARIANTS
from app.domain.repository.dataset_repository import dataset_repository
from app.domain.schema.dataset_schema import TrajectoryDataset
from app.domain.schema.error_schema import ConfigError
from app.domain.schema.run_schema import build_run_config, load_document

SMALL_RUN = {
    "system": {"tag": "burgers"},
    "seed": 1,
    "data": {
        "fine_shape": [16, 16], "domain_length": [1.0, 1.0], "dt": 1e-3,
        "n_train": 2, "n_test": 1, "space_factor": 2, "time_stride": 5, "n_snapshots": 6,
    },
    "model": {
        "correction": {"width": 4, "modes": 3, "layers": 1, "projection": 4},
        "minn": {"width": 4, "modes": 3, "layers": 1, "projection": 4},
        "mann_hidden": [4, 4],
        "mann_blocks": 1,
    },
    "train": {"epochs": 1, "rollout": 2, "lr": 1e-3},
    "evaluate": {"horizon_steps": 5},
}

SMALL_NSE = {
    **SMALL_RUN,
    "system": {"tag": "nse"},
    "data": {
        "fine_shape": [16, 16], "domain_length": [2 * math.pi, 2 * math.pi], "dt": 1e-3,
        "n_train": 1, "n_test": 1, "space_factor": 2, "time_stride": 2, "n_snapshots": 2,
    },
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(SMALL_RUN))
    return str(path)


@pytest.fixture
def generated(config_path, tmp_path):
    out = tmp_path / "gen"
    assert dispatch(["generate", "--config", config_path, "--out", str(out)]) == 0
    return out / "dataset.mpd"


def _train(config_path, data, out, *extra) -> int:
    return dispatch(["train", "--config", config_path, "--data", str(data), "--out", str(out), *extra])


# ---------- RunConfig ----------

def test_config_hash_ignores_key_order():
    reordered = dict(reversed(list(SMALL_RUN.items())))
    assert build_run_config(SMALL_RUN).config_hash() == build_run_config(reordered).config_hash()
    assert build_run_config(SMALL_RUN).config_hash() != build_run_config({**SMALL_RUN, "seed": 2}).config_hash()


def test_overrides_win_over_document_and_preset():
    config = build_run_config(SMALL_RUN, preset="paper", system="burgers", overrides={"train": {"epochs": 7}})
    assert config.train.epochs == 7
    assert config.data.fine_shape == [16, 16]
    assert config.evaluate.horizon_steps == 5
    paper = build_run_config(preset="paper", system="burgers")
    assert paper.data.n_snapshots == 140


@pytest.mark.parametrize(
    "document, preset, system",
    [
        ({**SMALL_RUN, "unknown_key": 1}, None, None),
        ({**SMALL_RUN, "model": {"variant": "model-z"}}, None, None),
        ({**SMALL_RUN, "system": {"tag": "burgers", "viscosity": 0.01}}, None, None),
        ({**SMALL_RUN, "system": {"tag": "nse", "forcing": {"trig": "sin", "wavenumbr": 8}}}, None, None),
        (None, "paper", None),
        (None, "no-such-preset", None),
    ],
)
def test_bad_run_configs_raise_config_error(document, preset, system):
    with pytest.raises(ConfigError):
        build_run_config(document, preset, system)


def test_load_document_toml_and_missing(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('seed = 4\n[system]\ntag = "gs"\n')
    assert load_document(path) == {"seed": 4, "system": {"tag": "gs"}}
    with pytest.raises(ConfigError):
        load_document(tmp_path / "missing.toml")


# ---------- exit code ----------

def test_missing_config_exits_2(tmp_path):
    assert dispatch(["generate", "--out", str(tmp_path)]) == 2
    assert dispatch(["generate", "--config", str(tmp_path / "nope.json")]) == 2


def test_forcing_on_non_nse_exits_2(config_path, tmp_path):
    assert dispatch(["generate", "--config", config_path, "--forcing-variant", "f1", "--out", str(tmp_path)]) == 2


def test_argparse_rejects_unknown_variant(config_path, tmp_path):
    with pytest.raises(SystemExit) as info:
        dispatch(["train", "--config", config_path, "--data", "x", "--ablate", "model-z"])
    assert info.value.code == 2


# ---------- generate → train → evaluate ----------

def test_generate_writes_dataset_and_run_record(generated, config_path):
    meta = dataset_repository.read_meta(generated)
    assert meta.shape == [3, 6, 2, 8, 8]
    assert meta.config_hash == build_run_config(load_document(config_path)).config_hash()
    record = json.loads((generated.parent / "run.json").read_text())
    assert record["command"] == "generate"
    assert record["seed"] == 1


def test_generate_re_sweep_writes_one_dataset_per_re(tmp_path):
    path = tmp_path / "nse.json"
    path.write_text(json.dumps(SMALL_NSE))
    out = tmp_path / "sweep"
    assert dispatch(["generate", "--config", str(path), "--re-sweep", "--out", str(out)]) == 0
    for re in NSE_RE_VARIANTS:
        meta = dataset_repository.read_meta(out / f"re{re:g}" / "dataset.mpd")
        assert meta.system.re == re
        assert meta.shape == [2, 2, 2, 8, 8]


def test_re_sweep_rejects_non_nse_and_explicit_re(config_path, tmp_path):
    assert dispatch(["generate", "--config", config_path, "--re-sweep", "--out", str(tmp_path / "a")]) == 2
    path = tmp_path / "nse.json"
    path.write_text(json.dumps(SMALL_NSE))
    argv = ["generate", "--config", str(path), "--re-sweep", "--re", "900", "--out", str(tmp_path / "b")]
    assert dispatch(argv) == 2


def test_train_then_evaluate(config_path, generated, tmp_path):
    train_dir = tmp_path / "train"
    assert _train(config_path, generated, train_dir) == 0
    history = pd.read_csv(train_dir / "history.csv")
    assert list(history.columns) == ["epoch", "loss", "lr", "val_loss"]
    assert len(history) == 1
    assert (train_dir / "checkpoint.mpk").exists()

    eval_dir = tmp_path / "eval"
    argv = ["evaluate", "--checkpoint", str(train_dir / "checkpoint.mpk"), "--data", str(generated),
            "--out", str(eval_dir), "--spectrum"]
    assert dispatch(argv) == 0
    metrics = json.loads((eval_dir / "metrics.json").read_text())
    assert {"rmse", "mae", "mnad", "hct", "config_hash", "seed", "variant"} <= set(metrics)
    assert metrics["horizon_steps"] == 5
    assert (eval_dir / "pcc.csv").exists()
    assert (eval_dir / "spectrum.csv").exists()


def test_pipeline_is_deterministic(config_path, tmp_path):
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert dispatch(["generate", "--config", config_path, "--out", str(out)]) == 0
        assert _train(config_path, out / "dataset.mpd", out) == 0
        assert dispatch(["evaluate", "--checkpoint", str(out / "checkpoint.mpk"), "--data",
                         str(out / "dataset.mpd"), "--out", str(out)]) == 0
        outputs.append((out / "metrics.json").read_bytes())
    assert outputs[0] == outputs[1]


def test_train_ablation_variant(config_path, generated, tmp_path):
    out = tmp_path / "model-c"
    assert _train(config_path, generated, out, "--ablate", "model-c") == 0
    record = json.loads((out / "run.json").read_text())
    assert record["variant"] == "model-c"
    assert dispatch(["evaluate", "--checkpoint", str(out / "checkpoint.mpk"), "--data", str(generated),
                     "--out", str(out)]) == 0
    assert json.loads((out / "metrics.json").read_text())["variant"] == "model-c"


def test_train_resumes_from_checkpoint(config_path, generated, tmp_path):
    first = tmp_path / "first"
    assert _train(config_path, generated, first) == 0
    second = tmp_path / "second"
    assert _train(config_path, generated, second, "--from-checkpoint", str(first / "checkpoint.mpk"),
                  "--epochs", "2") == 0
    history = pd.read_csv(second / "history.csv")
    assert list(history["epoch"]) == [1, 2]


def test_ablate_command(config_path, generated, tmp_path):
    out = tmp_path / "ablate"
    argv = ["ablate", "--config", config_path, "--data", str(generated), "--out", str(out),
            "--variants", "full", "model-c"]
    assert dispatch(argv) == 0
    frame = pd.read_csv(out / "ablation.csv")
    assert list(frame["variant"]) == ["full", "model-c"]
    assert list(frame.columns) == ["variant", "rmse", "mae", "mnad", "hct", "diverged"]
    assert (out / "model-c" / "metrics.json").exists()


def test_run_command(config_path, tmp_path):
    out = tmp_path / "run"
    assert dispatch(["run", "--config", config_path, "--out", str(out)]) == 0
    for name in ("dataset.mpd", "checkpoint.mpk", "history.csv", "metrics.json", "run.json"):
        assert (out / name).exists(), name
    assert json.loads((out / "run.json").read_text())["command"] == "run"


# ---------- 발산 ----------

def _blowup_copy(src, dst, trajectories):
    ds = dataset_repository.load(src)
    data = ds.data.clone()
    for i in trajectories:
        data[i] = 1e200
        data[i, :, :, ::2] = -1e200
    dataset_repository.save(TrajectoryDataset(meta=ds.meta, data=data), dst)
    return dst


def test_evaluate_diverging_dataset_still_succeeds(config_path, generated, tmp_path):
    train_dir = tmp_path / "train"
    assert _train(config_path, generated, train_dir) == 0
    bad = _blowup_copy(generated, tmp_path / "bad.mpd", [2])
    out = tmp_path / "eval"
    assert dispatch(["evaluate", "--checkpoint", str(train_dir / "checkpoint.mpk"), "--data", str(bad),
                     "--out", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["diverged"] == 1
    assert metrics["rmse"] is None
    assert metrics["trajectories"][0]["steps_completed"] == 0


def test_training_divergence_exits_3(config_path, generated, tmp_path):
    bad = _blowup_copy(generated, tmp_path / "bad.mpd", [0, 1])
    assert _train(config_path, bad, tmp_path / "train") == 3
