"""
학습 루프: 롤아웃 MSE, Adam + step-decay LR, gradient clipping, 체크포인트
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import pandas as pd
import torch

from app.domain.model.multipde_model import MultiPdeModel
from app.domain.repository.checkpoint_repository import Checkpoint, checkpoint_repository
from app.domain.schema.dataset_schema import TrajectoryDataset
from app.domain.schema.error_schema import ShapeError, SolverDivergedError, TrainingDivergedError
from app.domain.schema.physics_schema import SystemTag
from app.domain.schema.train_schema import CheckpointMeta, EpochRecord, TrainConfig
from app.domain.service.autodiff_service import Tape

logger = logging.getLogger(__name__)


@dataclass
class SampleSet:
    """입력 x0 [N, C, *space], 라벨 [N, R, C, *space]"""
    inputs: torch.Tensor
    labels: torch.Tensor

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    def subset(self, index: torch.Tensor) -> "SampleSet":
        return SampleSet(self.inputs[index], self.labels[index])


@dataclass
class FitResult:
    model: MultiPdeModel
    history: List[EpochRecord]
    checkpoint_path: Optional[Path] = None

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.history], columns=["epoch", "loss", "lr", "val_loss"])


def default_rollout(tag: SystemTag) -> int:
    return 10 if tag in (SystemTag.KDV, SystemTag.BURGERS) else 1


class TrainService:
    """MultiPdeModel 학습"""

    # ---------- loss ----------

    def loss(self, pred: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
        """J = 배치·롤아웃·채널·공간 전체의 평균 제곱 오차"""
        if pred.shape != truth.shape:
            raise ShapeError(f"prediction shape {tuple(pred.shape)} != truth shape {tuple(truth.shape)}")
        return torch.mean((pred - truth) ** 2)

    # ---------- 샘플 ----------

    def windows(self, trajectories: torch.Tensor, rollout: int, stride: int = 1) -> SampleSet:
        """각 궤적을 rollout+1 길이 윈도우로 자름: 첫 스냅샷 입력, 나머지 라벨"""
        n_time = trajectories.shape[1]
        if n_time < rollout + 1:
            raise ShapeError(f"trajectories of {n_time} snapshots are too short for rollout {rollout}")
        starts = range(0, n_time - rollout, stride)
        inputs = torch.cat([trajectories[:, s] for s in starts])
        labels = torch.cat([trajectories[:, s + 1:s + 1 + rollout] for s in starts])
        return SampleSet(inputs, labels)

    def prepare(self, dataset: TrajectoryDataset, config: TrainConfig, rollout: int) -> Tuple[SampleSet, Optional[SampleSet]]:
        """train/val 분할, 잡음 추가, 샘플 제거 (모두 seed 고정)"""
        g = torch.Generator().manual_seed(config.seed)
        data = dataset.train()
        if config.noise_level > 0:
            std = float(data.std())
            data = data + config.noise_level * std * torch.randn(data.shape, generator=g, dtype=data.dtype)
        samples = self.windows(data, rollout, config.window_stride)
        order = torch.randperm(len(samples), generator=g)
        if config.drop_fraction > 0:
            keep = max(1, int(round(len(order) * (1.0 - config.drop_fraction))))
            order = order[:keep]
        n_val = int(math.floor(len(order) * config.val_fraction))
        if n_val == 0 or n_val == len(order):
            return samples.subset(order), None
        return samples.subset(order[n_val:]), samples.subset(order[:n_val])

    # ---------- 옵티마이저 ----------

    def optimizer(self, model: MultiPdeModel, config: TrainConfig) -> Tuple[torch.optim.Adam, torch.optim.lr_scheduler.LambdaLR]:
        params = [p for _, _, p in model.param_set().trainable()]
        opt = torch.optim.Adam(params, lr=config.lr, betas=config.betas, eps=config.eps)
        decay, every = config.lr_decay, config.lr_decay_every
        scheduler = torch.optim.lr_scheduler.LambdaLR(opt, lambda step: decay ** (step // every))
        return opt, scheduler

    def _batch_loss(self, model: MultiPdeModel, batch: SampleSet) -> torch.Tensor:
        rollout = batch.labels.shape[1]
        with Tape(strict=True):
            pred = model.rollout(batch.inputs, rollout, truncate=False).states
            return self.loss(pred, batch.labels)

    def evaluate_loss(self, model: MultiPdeModel, samples: SampleSet, batch_size: int) -> float:
        total, count = 0.0, 0
        with torch.no_grad():
            for start in range(0, len(samples), batch_size):
                batch = samples.subset(torch.arange(start, min(start + batch_size, len(samples))))
                pred = model.rollout(batch.inputs, batch.labels.shape[1], truncate=True).states
                if pred.shape[1] < batch.labels.shape[1]:
                    return float("nan")
                total += float(self.loss(pred, batch.labels)) * len(batch)
                count += len(batch)
        return total / max(count, 1)

    # ---------- fit ----------

    def fit(
        self,
        model: MultiPdeModel,
        dataset: TrajectoryDataset,
        config: TrainConfig,
        out_dir: Optional[Path] = None,
        config_hash: str = "",
        resume: Optional[Checkpoint] = None,
    ) -> FitResult:
        if dataset.meta.system.tag != model.config.system.tag:
            raise ShapeError(
                f"dataset system {dataset.meta.system.tag.value} does not match model {model.config.system.tag.value}"
            )
        rollout = config.rollout or default_rollout(model.config.system.tag)
        train_set, val_set = self.prepare(dataset, config, rollout)
        batch_size = min(config.batch_size, len(train_set))
        opt, scheduler = self.optimizer(model, config)
        g = torch.Generator().manual_seed(config.seed + 1)
        history: List[EpochRecord] = []
        start_epoch, step = 0, 0
        ckpt_path = Path(out_dir) / "checkpoint.mpk" if out_dir else None

        if resume is not None:
            start_epoch, step = self._restore(model, opt, scheduler, g, resume)
            history = list(resume.meta.history)
            logger.info(f"🔄 체크포인트에서 재개: epoch {start_epoch}, step {step}")

        logger.info(
            f"🔧 학습 시작: 샘플 {len(train_set)}개 (val {len(val_set) if val_set else 0}), "
            f"batch {batch_size}, rollout {rollout}, epochs {config.epochs}"
        )
        for epoch in range(start_epoch, config.epochs):
            model.train()
            order = torch.randperm(len(train_set), generator=g)
            epoch_loss, seen = 0.0, 0
            for start in range(0, len(order), batch_size):
                batch = train_set.subset(order[start:start + batch_size])
                opt.zero_grad()
                try:
                    loss = self._batch_loss(model, batch)
                except SolverDivergedError as e:
                    raise TrainingDivergedError(f"rollout diverged at epoch {epoch + 1}: {e}", self._existing(ckpt_path)) from e
                if not bool(torch.isfinite(loss)):
                    raise TrainingDivergedError(f"loss is NaN at epoch {epoch + 1}", self._existing(ckpt_path))
                loss.backward()
                if config.grad_clip is not None:
                    torch.nn.utils.clip_grad_norm_(opt.param_groups[0]["params"], config.grad_clip, foreach=False)
                opt.step()
                scheduler.step()
                step += 1
                epoch_loss += float(loss) * len(batch)
                seen += len(batch)

            model.eval()
            val_loss = self.evaluate_loss(model, val_set, batch_size) if val_set is not None else None
            record = EpochRecord(epoch=epoch + 1, loss=epoch_loss / seen, lr=scheduler.get_last_lr()[0], val_loss=val_loss)
            history.append(record)
            logger.info(
                f"📊 epoch {record.epoch}/{config.epochs} loss={record.loss:.6e} lr={record.lr:.3e}"
                + (f" val={val_loss:.6e}" if val_loss is not None else "")
            )
            if ckpt_path and ((epoch + 1) % config.checkpoint_every == 0 or epoch + 1 == config.epochs):
                self.save_checkpoint(ckpt_path, model, opt, scheduler, g, config, epoch + 1, step, history, config_hash)

        if ckpt_path and config.epochs == start_epoch:
            self.save_checkpoint(ckpt_path, model, opt, scheduler, g, config, start_epoch, step, history, config_hash)
        model.eval()
        logger.info("✅ 학습 완료")
        return FitResult(model=model, history=history, checkpoint_path=ckpt_path)

    # ---------- 체크포인트 ----------

    @staticmethod
    def _existing(path: Optional[Path]) -> Optional[str]:
        return str(path) if path is not None and path.exists() else None

    def save_checkpoint(self, path: Path, model: MultiPdeModel, opt, scheduler, g: torch.Generator,
                        config: TrainConfig, epoch: int, step: int, history: List[EpochRecord], config_hash: str) -> Path:
        opt_state = opt.state_dict()
        meta = CheckpointMeta(
            config_hash=config_hash,
            epoch=epoch,
            step=step,
            network_config=model.config.model_dump(mode="json"),
            trainer_config=config.model_dump(mode="json"),
            optimizer_groups=opt_state["param_groups"],
            scheduler_state={k: v for k, v in scheduler.state_dict().items() if k != "lr_lambdas"},
            history=history,
        )
        ckpt = Checkpoint(
            meta=meta,
            model_state=model.state_dict(),
            optimizer_state={int(k): v for k, v in opt_state["state"].items()},
            rng_state=g.get_state(),
        )
        return checkpoint_repository.save(ckpt, path)

    def _restore(self, model: MultiPdeModel, opt, scheduler, g: torch.Generator, ckpt: Checkpoint) -> Tuple[int, int]:
        model.load_state_dict(ckpt.model_state)
        opt.load_state_dict({"state": ckpt.optimizer_state, "param_groups": ckpt.meta.optimizer_groups})
        scheduler_state = dict(ckpt.meta.scheduler_state)
        scheduler_state["lr_lambdas"] = [None] * len(opt.param_groups)
        scheduler.load_state_dict(scheduler_state)
        g.set_state(ckpt.rng_state)
        return ckpt.meta.epoch, ckpt.meta.step


# 싱글톤 인스턴스
train_service = TrainService()
