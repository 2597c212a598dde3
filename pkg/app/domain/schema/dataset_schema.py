from typing import List, Literal, Optional, Tuple

import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.domain.schema.field_schema import Grid
from app.domain.schema.physics_schema import PdeSystem, SystemTag


# === 초기조건 옵션 ===
class IcOptions(BaseModel):
    """시스템별 초기조건 샘플러 파라미터"""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["random", "soliton"] = Field("random", description="soliton 은 KdV 전용")
    kdv_terms: int = Field(5, ge=1, description="KdV 사인 항 개수 J")
    kdv_amplitude: float = Field(0.5, gt=0.0, description="A ∈ [-a, a]")
    kdv_max_wavenumber: int = Field(3, ge=1, description="l ∈ {1..l_max}")
    soliton_speed: float = Field(1.0, gt=0.0, description="soliton 속도 c")
    soliton_center: Optional[float] = Field(None, description="None 이면 도메인 1/4 지점")
    burgers_max_wavenumber: int = Field(4, ge=1, description="band-limit |k| ≤ k_max")
    burgers_peak: float = Field(1.0, gt=0.0, description="max|u| 정규화 값")
    gs_patches: int = Field(3, ge=0, description="(0.5, 0.25) 사각 패치 수")
    gs_patch_fraction: float = Field(0.1, gt=0.0, le=1.0, description="패치 한 변 / 격자 한 변")
    gs_noise: float = Field(0.05, ge=0.0, description="가우시안 잡음 표준편차")
    nse_peak_wavenumber: float = Field(4.0, gt=0.0, description="필터 스펙트럼 중심 파수")
    nse_max_velocity: float = Field(4.0, gt=0.0, description="max|u| 정규화 값")


# === 생성 명세 ===
class GenSpec(BaseModel):
    """고해상도 기준해 생성 + 다운샘플 레시피"""
    model_config = ConfigDict(extra="forbid")

    system: PdeSystem
    fine_shape: Tuple[int, ...] = Field(..., description="fine 격자 [y, x] (1D 는 [x])")
    domain_length: Tuple[float, ...] = Field(..., description="축별 도메인 길이")
    dt: float = Field(..., gt=0.0, description="fine 시뮬레이션 dt")
    warmup: float = Field(0.0, ge=0.0, description="버리는 초기 구간 (초)")
    n_train: int = Field(..., ge=0)
    n_test: int = Field(..., ge=0)
    space_factor: int = Field(..., ge=1, description="공간 다운샘플 배수")
    time_stride: int = Field(..., ge=1, description="시간 다운샘플 배수 (Δt = stride·dt)")
    n_snapshots: int = Field(..., ge=1, description="궤적당 coarse 스냅샷 수")
    seed: int = Field(0, description="궤적 i 의 seed = seed + i")
    ic: IcOptions = Field(default_factory=IcOptions)

    @model_validator(mode="after")
    def _check(self) -> "GenSpec":
        if len(self.fine_shape) != self.system.ndim:
            raise ValueError(f"{self.system.tag.value} needs {self.system.ndim}D fine_shape, got {self.fine_shape}")
        if any(n % self.space_factor for n in self.fine_shape):
            raise ValueError(f"space_factor {self.space_factor} does not divide fine grid {self.fine_shape}")
        if self.ic.kind == "soliton" and self.system.tag != SystemTag.KDV:
            raise ValueError("soliton initial condition is only defined for KdV")
        if self.n_train + self.n_test < 1:
            raise ValueError("at least one trajectory is required")
        return self

    @property
    def fine_grid(self) -> Grid:
        return Grid(shape=self.fine_shape, domain_length=self.domain_length)

    @property
    def coarse_grid(self) -> Grid:
        return self.fine_grid.coarsen(self.space_factor)

    @property
    def dt_macro(self) -> float:
        return self.dt * self.time_stride

    @property
    def warmup_steps(self) -> int:
        return int(round(self.warmup / self.dt))

    @property
    def total_fine_steps(self) -> int:
        return (self.n_snapshots - 1) * self.time_stride


# === 데이터셋 ===
class DatasetMeta(BaseModel):
    """MPD1 헤더 JSON"""
    model_config = ConfigDict(extra="forbid")

    system: PdeSystem
    shape: List[int] = Field(..., description="[traj, time, channel, *space]")
    dt: float = Field(..., gt=0.0, description="스냅샷 간격 Δt")
    dx: List[float]
    domain_length: List[float]
    n_train: int = Field(..., ge=0)
    n_test: int = Field(..., ge=0)
    seed: int = 0
    config_hash: Optional[str] = None

    @property
    def grid(self) -> Grid:
        return Grid(shape=tuple(self.shape[3:]), domain_length=tuple(self.domain_length))


class TrajectoryDataset(BaseModel):
    """array [n_traj, n_time, channels, *space] + 메타데이터"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    meta: DatasetMeta
    data: torch.Tensor

    @model_validator(mode="after")
    def _check(self) -> "TrajectoryDataset":
        if list(self.data.shape) != list(self.meta.shape):
            raise ValueError(f"data shape {list(self.data.shape)} != metadata shape {self.meta.shape}")
        if self.meta.n_train + self.meta.n_test != self.meta.shape[0]:
            raise ValueError("n_train + n_test must equal the trajectory count")
        if self.data.shape[2] != self.meta.system.channels:
            raise ValueError(f"{self.meta.system.tag.value} has {self.meta.system.channels} channels, got {self.data.shape[2]}")
        if not bool(torch.isfinite(self.data).all()):
            raise ValueError("dataset values must be finite")
        return self

    @property
    def grid(self) -> Grid:
        return self.meta.grid

    def train(self) -> torch.Tensor:
        return self.data[: self.meta.n_train]

    def test(self) -> torch.Tensor:
        return self.data[self.meta.n_train:]
