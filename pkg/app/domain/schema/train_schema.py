from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from app.config.settings import (
    DEFAULT_EPOCHS,
    DEFAULT_LR,
    LR_DECAY_EVERY,
    LR_DECAY_FACTOR,
    MAX_BATCH_SIZE,
)


# === 학습 설정 ===
class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(DEFAULT_LR, gt=0.0, description="Adam 학습률")
    epochs: int = Field(DEFAULT_EPOCHS, ge=0)
    batch_size: int = Field(MAX_BATCH_SIZE, ge=1, description="실제 배치 = min(batch_size, 샘플 수)")
    lr_decay: float = Field(LR_DECAY_FACTOR, gt=0.0, le=1.0)
    lr_decay_every: int = Field(LR_DECAY_EVERY, ge=1, description="optimizer step 단위")
    betas: Tuple[float, float] = Field((0.9, 0.999))
    eps: float = Field(1e-8, gt=0.0)
    rollout: Optional[int] = Field(None, ge=1, description="None 이면 KdV/Burgers 10, GS/NSE 1")
    window_stride: int = Field(1, ge=1, description="샘플 윈도우 시작 간격")
    val_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    grad_clip: Optional[float] = Field(1.0, gt=0.0, description="None 이면 clipping 끔")
    noise_level: float = Field(0.0, ge=0.0, description="데이터 std 대비 가우시안 잡음")
    drop_fraction: float = Field(0.0, ge=0.0, lt=1.0, description="무작위로 버리는 학습 샘플 비율")
    checkpoint_every: int = Field(50, ge=1, description="epoch 단위 체크포인트 주기")
    seed: int = 0


class EpochRecord(BaseModel):
    epoch: int
    loss: float
    lr: float
    val_loss: Optional[float] = None


# === 체크포인트 ===
class TensorEntry(BaseModel):
    name: str
    dtype: str
    shape: List[int]
    offset: int
    nbytes: int


class CheckpointMeta(BaseModel):
    """MPK1 헤더 JSON 중 텐서 목록을 제외한 부분"""
    config_hash: str = Field(..., description="RunConfig SHA-256")
    epoch: int = Field(..., ge=0, description="완료된 epoch 수")
    step: int = Field(..., ge=0, description="누적 optimizer step")
    network_config: Dict[str, Any] = Field(..., description="ModelConfig JSON")
    trainer_config: Dict[str, Any] = Field(..., description="TrainConfig JSON")
    optimizer_groups: List[Dict[str, Any]] = Field(default_factory=list)
    scheduler_state: Dict[str, Any] = Field(default_factory=dict)
    history: List[EpochRecord] = Field(default_factory=list)
