"""
학습 루프 테스트: loss, 윈도우, 분할, 재개, 발산 처리, MPK1
"""
import pytest
import torch

from app.config.settings import DTYPE
from app.domain.model.multipde_model import MultiPdeModel
from app.domain.repository.checkpoint_repository import Checkpoint, checkpoint_repository
from app.domain.schema.dataset_schema import TrajectoryDataset
from app.domain.schema.error_schema import ContainerError, ShapeError, TrainingDivergedError
from app.domain.schema.physics_schema import ModelConfig, SystemTag
from app.domain.schema.train_schema import CheckpointMeta, TrainConfig
from app.domain.service.train_service import default_rollout, train_service
from conftest import model_dataset, tiny_model_config


def _config(**kwargs) -> TrainConfig:
    params = dict(epochs=1, rollout=2, lr=1e-3, checkpoint_every=1)
    params.update(kwargs)
    return TrainConfig(**params)


# ---------- loss ----------

def test_loss_examples():
    assert float(train_service.loss(torch.zeros(2, 3), torch.ones(2, 3))) == 1.0
    assert float(train_service.loss(torch.tensor([1.0, 2.0]), torch.zeros(2))) == 2.5


def test_loss_matches_naive_mean():
    g = torch.Generator().manual_seed(0)
    pred = torch.randn((3, 2, 2, 4, 4), generator=g, dtype=DTYPE)
    truth = torch.randn((3, 2, 2, 4, 4), generator=g, dtype=DTYPE)
    total, count = 0.0, 0
    for p, t in zip(pred.flatten().tolist(), truth.flatten().tolist()):
        total += (p - t) ** 2
        count += 1
    assert abs(float(train_service.loss(pred, truth)) - total / count) < 1e-12


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError):
        train_service.loss(torch.zeros(2, 3), torch.zeros(3, 2))


# ---------- 샘플 ----------

def test_windows_cut_input_and_labels():
    traj = torch.arange(2 * 5, dtype=DTYPE).reshape(2, 5, 1, 1)
    samples = train_service.windows(traj, rollout=2)
    assert len(samples) == 6
    assert samples.labels.shape == (6, 2, 1, 1)
    assert torch.equal(samples.inputs[0], traj[0, 0])
    assert torch.equal(samples.labels[0], traj[0, 1:3])
    assert torch.equal(samples.inputs[1], traj[1, 0])
    strided = train_service.windows(traj, rollout=2, stride=2)
    assert len(strided) == 4
    with pytest.raises(ShapeError):
        train_service.windows(traj, rollout=5)


def test_default_rollout_per_system():
    assert default_rollout(SystemTag.KDV) == 10
    assert default_rollout(SystemTag.BURGERS) == 10
    assert default_rollout(SystemTag.GS) == 1
    assert default_rollout(SystemTag.NSE) == 1


def test_prepare_splits_and_drops(burgers_model):
    ds = model_dataset(burgers_model, n_train=5, n_test=1, snapshots=6)
    # 윈도우 4개 x 궤적 5개 = 20 샘플
    train_set, val_set = train_service.prepare(ds, _config(), rollout=2)
    assert len(train_set) == 18 and len(val_set) == 2
    dropped, _ = train_service.prepare(ds, _config(drop_fraction=0.5, val_fraction=0.0), rollout=2)
    assert len(dropped) == 10
    again, _ = train_service.prepare(ds, _config(), rollout=2)
    assert torch.equal(again.inputs, train_set.inputs)


def test_prepare_noise_is_relative_to_data_std(burgers_model):
    # 윈도우 1개라 순서 섞임 없음
    ds = model_dataset(burgers_model, n_train=1, n_test=1, snapshots=2)
    clean, _ = train_service.prepare(ds, _config(val_fraction=0.0), rollout=1)
    noisy, _ = train_service.prepare(ds, _config(val_fraction=0.0, noise_level=0.01), rollout=1)
    ratio = float((noisy.inputs - clean.inputs).std()) / float(ds.train().std())
    assert 0.005 < ratio < 0.02


def test_lr_step_decay(burgers_model):
    opt, scheduler = train_service.optimizer(burgers_model, _config(lr=1e-2, lr_decay_every=3))
    lrs = []
    for _ in range(7):
        opt.step()
        scheduler.step()
        lrs.append(scheduler.get_last_lr()[0])
    assert lrs[1] == pytest.approx(1e-2)
    assert lrs[2] == pytest.approx(1e-2 * 0.96)
    assert lrs[6] == pytest.approx(1e-2 * 0.96 ** 2)


# ---------- fit ----------

def test_zero_epochs_leaves_model_unchanged(burgers_model, burgers_dataset, tmp_path):
    before = {k: v.clone() for k, v in burgers_model.state_dict().items()}
    result = train_service.fit(burgers_model, burgers_dataset, _config(epochs=0), tmp_path)
    assert result.history == []
    assert result.checkpoint_path.exists()
    for key, value in burgers_model.state_dict().items():
        assert torch.equal(value, before[key]), key


def test_self_generated_data_has_zero_loss(burgers_model, burgers_dataset):
    result = train_service.fit(burgers_model, burgers_dataset, _config())
    assert len(result.history) == 1
    assert result.history[0].loss < 1e-20
    assert result.history[0].val_loss is None
    assert list(result.history_frame().columns) == ["epoch", "loss", "lr", "val_loss"]


def test_training_updates_parameters(burgers_model, burgers_dataset):
    head = burgers_model.correction.proj_out.weight
    assert float(head.abs().max()) == 0.0
    train_service.fit(burgers_model, burgers_dataset, _config(noise_level=0.1))
    assert float(head.abs().max()) > 0.0


def test_resume_is_bit_identical(burgers_dataset, tmp_path):
    config = tiny_model_config("burgers")
    straight = MultiPdeModel(config)
    full = train_service.fit(straight, burgers_dataset, _config(epochs=2, noise_level=0.1), tmp_path / "a", "h")

    first = MultiPdeModel(config)
    partial = train_service.fit(first, burgers_dataset, _config(epochs=1, noise_level=0.1), tmp_path / "b", "h")
    ckpt = checkpoint_repository.load(partial.checkpoint_path)
    assert ckpt.meta.epoch == 1
    resumed_model = MultiPdeModel(ModelConfig.model_validate(ckpt.meta.network_config))
    resumed = train_service.fit(resumed_model, burgers_dataset, _config(epochs=2, noise_level=0.1), tmp_path / "c", "h", ckpt)

    assert [r.loss for r in resumed.history] == [r.loss for r in full.history]
    for key, value in straight.state_dict().items():
        assert torch.equal(resumed_model.state_dict()[key], value), key


def test_divergence_raises_training_error(burgers_model, burgers_dataset):
    data = torch.full(burgers_dataset.data.shape, 1e200, dtype=DTYPE)
    data[..., ::2, :] = -1e200
    ds = TrajectoryDataset(meta=burgers_dataset.meta, data=data)
    with pytest.raises(TrainingDivergedError) as info:
        train_service.fit(burgers_model, ds, _config())
    assert info.value.exit_code == 3
    assert info.value.checkpoint_path is None


def test_fit_rejects_other_system(burgers_dataset, gs_model):
    with pytest.raises(ShapeError):
        train_service.fit(gs_model, burgers_dataset, _config())


# ---------- MPK1 ----------

def test_checkpoint_round_trip(tmp_path):
    meta = CheckpointMeta(config_hash="abc", epoch=3, step=12, network_config={"a": 1}, trainer_config={"lr": 0.1})
    ckpt = Checkpoint(
        meta=meta,
        model_state={"w": torch.randn(3, 2, dtype=DTYPE), "spec": torch.randn(2, 2, dtype=torch.complex128)},
        optimizer_state={0: {"step": torch.tensor(4.0), "exp_avg": torch.ones(3, dtype=DTYPE)}},
        rng_state=torch.Generator().manual_seed(1).get_state(),
    )
    path = checkpoint_repository.save(ckpt, tmp_path / "ckpt.mpk")
    assert path.read_bytes()[:4] == b"MPK1"
    loaded = checkpoint_repository.load(path)
    assert loaded.meta == meta
    for key in ckpt.model_state:
        assert torch.equal(loaded.model_state[key], ckpt.model_state[key])
    assert loaded.optimizer_state[0]["step"].dtype == torch.float32
    assert torch.equal(loaded.rng_state, ckpt.rng_state)


def test_checkpoint_rejects_unsupported_dtype(tmp_path):
    meta = CheckpointMeta(config_hash="", epoch=0, step=0, network_config={}, trainer_config={})
    ckpt = Checkpoint(meta=meta, model_state={"x": torch.zeros(2, dtype=torch.int32)}, optimizer_state={},
                      rng_state=torch.Generator().get_state())
    with pytest.raises(ContainerError):
        checkpoint_repository.save(ckpt, tmp_path / "bad.mpk")
