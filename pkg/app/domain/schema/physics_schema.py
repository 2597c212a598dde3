import math
from enum import Enum
from typing import Dict, List, Literal, Optional

import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config.settings import CFL_LIMIT, DTYPE
from app.domain.schema.field_schema import Grid


class SystemTag(str, Enum):
    KDV = "kdv"
    BURGERS = "burgers"
    GS = "gs"
    NSE = "nse"


# === 외력 ===
class ForcingSpec(BaseModel):
    """f = A·trig(k·y)·η_x − γ·u"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    amplitude: float = Field(1.0, description="외력 진폭 A", examples=[1.0])
    trig: Literal["sin", "cos"] = Field("sin", description="y 방향 삼각함수")
    wavenumber: int = Field(4, ge=0, description="외력 파수 k", examples=[4])
    drag: float = Field(0.1, ge=0.0, description="선형 감쇠 계수 γ", examples=[0.1])

    def static_field(self, grid: Grid) -> torch.Tensor:
        """A·trig(k·y)·η_x 부분 [2, ny, nx] (두 번째 채널 0)"""
        y, _ = grid.mesh()
        fn = torch.sin if self.trig == "sin" else torch.cos
        out = torch.zeros((2,) + tuple(grid.shape), dtype=DTYPE)
        out[0] = self.amplitude * fn(self.wavenumber * y)
        return out

    def evaluate(self, grid: Grid, velocity: torch.Tensor) -> torch.Tensor:
        """velocity [..., 2, ny, nx] 에 대한 전체 외력"""
        return self.static_field(grid) - self.drag * velocity


# === PDE 시스템 ===
class PdeSystem(BaseModel):
    """시스템 태그 + PDE 파라미터 λ"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    tag: SystemTag = Field(..., description="kdv | burgers | gs | nse")
    nu: float = Field(0.002, gt=0.0, description="Burgers 점성 계수 ν")
    d_u: float = Field(2.0e-5, gt=0.0, description="GS 확산 계수 D_u")
    d_v: float = Field(5.0e-6, gt=0.0, description="GS 확산 계수 D_v")
    alpha: float = Field(0.04, gt=0.0, description="GS feed rate α")
    kappa: float = Field(0.06, gt=0.0, description="GS decay rate κ")
    re: float = Field(1000.0, gt=0.0, description="NSE 레이놀즈 수")
    forcing: Optional[ForcingSpec] = Field(None, description="NSE 외력 (없으면 기본 Kolmogorov 외력)")

    @model_validator(mode="after")
    def _default_forcing(self) -> "PdeSystem":
        if self.tag == SystemTag.NSE and self.forcing is None:
            object.__setattr__(self, "forcing", ForcingSpec())
        return self

    @property
    def channels(self) -> int:
        return 1 if self.tag == SystemTag.KDV else 2

    @property
    def ndim(self) -> int:
        return 1 if self.tag == SystemTag.KDV else 2

    @property
    def advective(self) -> bool:
        return self.tag in (SystemTag.KDV, SystemTag.BURGERS, SystemTag.NSE)

    def lambdas(self) -> Dict[str, float]:
        """학습 가능 PDE 파라미터 후보"""
        if self.tag == SystemTag.BURGERS:
            return {"nu": self.nu}
        if self.tag == SystemTag.GS:
            return {"d_u": self.d_u, "d_v": self.d_v, "alpha": self.alpha, "kappa": self.kappa}
        if self.tag == SystemTag.NSE:
            return {"re_scale": 1.0}
        return {}


# === 시간 적분 ===
class StepScheme(BaseModel):
    """Δt 매크로 스텝을 M 개의 마이크로 스텝 δt = Δt/M 으로 분할"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    integrator: Literal["rk4", "euler"] = Field("rk4", description="마이크로 적분기")
    dt_macro: float = Field(..., gt=0.0, description="매크로 스텝 Δt")
    micro_steps: int = Field(4, ge=1, description="마이크로 스텝 수 M")

    @model_validator(mode="after")
    def _check(self) -> "StepScheme":
        if not math.isclose(self.dt_micro * self.micro_steps, self.dt_macro, rel_tol=1e-15, abs_tol=0.0):
            raise ValueError(f"δt·M != Δt for Δt={self.dt_macro}, M={self.micro_steps}")
        return self

    @property
    def dt_micro(self) -> float:
        return self.dt_macro / self.micro_steps


# === Ablation ===
ABLATION_VARIANTS: Dict[str, str] = {
    "model-a": "no_poisson",
    "model-b": "unconstrained_filter",
    "model-c": "physics_only",
    "model-d": "fixed_fd",
    "model-e": "no_correction",
    "model-f": "no_minn",
    "model-g": "no_mann",
    "model-h": "no_physics",
    "model-i": "euler",
}


class AblationFlags(BaseModel):
    """모든 flag off == 전체 모델"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    no_poisson: bool = Field(False, description="Model A: Poisson Block 제거 (p = 0)")
    unconstrained_filter: bool = Field(False, description="Model B: 대칭 제약 없는 필터")
    physics_only: bool = Field(False, description="Model C: Physics Block 만으로 예측")
    fixed_fd: bool = Field(False, description="Model D: 고정 중앙차분 필터")
    no_correction: bool = Field(False, description="Model E: Correction Block 제거")
    no_minn: bool = Field(False, description="Model F: M_iNN 제거")
    no_mann: bool = Field(False, description="Model G: M_aNN 제거")
    no_physics: bool = Field(False, description="Model H: Physics Block 제거")
    euler: bool = Field(False, description="Model I: RK4 대신 Euler")

    @classmethod
    def from_variant(cls, variant: str) -> "AblationFlags":
        if variant == "full":
            return cls()
        if variant not in ABLATION_VARIANTS:
            raise ValueError(f"unknown ablation variant: {variant} (full, {', '.join(ABLATION_VARIANTS)})")
        return cls(**{ABLATION_VARIANTS[variant]: True})

    @property
    def variant(self) -> str:
        for name, flag in ABLATION_VARIANTS.items():
            if getattr(self, flag):
                return name
        return "full"


# === 모델 설정 ===
class NetConfig(BaseModel):
    """SpectralConvNet 하이퍼파라미터"""
    model_config = ConfigDict(extra="forbid")

    width: int = Field(16, ge=1)
    modes: int = Field(12, ge=1)
    layers: int = Field(4, ge=1)
    projection: int = Field(64, ge=1)


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    system: PdeSystem
    grid: Grid
    scheme: StepScheme
    flags: AblationFlags = Field(default_factory=AblationFlags)
    correction: NetConfig = Field(default_factory=lambda: NetConfig(width=12, modes=12, layers=2, projection=50))
    minn: NetConfig = Field(default_factory=NetConfig)
    mann_hidden: List[int] = Field(default_factory=lambda: [32, 32, 64, 128], description="M_aNN level 별 채널")
    mann_blocks: int = Field(2, ge=1)
    activation: Optional[Literal["gelu", "relu"]] = Field(None, description="None 이면 KdV=relu, 나머지 gelu")
    independent_axis_filters: bool = Field(False, description="y 축 전용 g′/g″ 필터 사용")
    pressure_source: Literal["spectral", "stencil"] = Field("spectral", description="ψ 계산용 미분")
    poisson_stop_gradient: bool = Field(False, description="p 를 상수 입력으로 취급")
    leray_projection: Optional[bool] = Field(None, description="None 이면 NSE 에서만 켬")
    trainable_lambda: bool = Field(False, description="PDE 파라미터 λ 학습")
    cfl_limit: float = Field(CFL_LIMIT, gt=0.0)
    seed: int = Field(0, description="가중치 초기화 seed")

    @model_validator(mode="after")
    def _check(self) -> "ModelConfig":
        if self.grid.ndim != self.system.ndim:
            raise ValueError(f"{self.system.tag.value} needs a {self.system.ndim}D grid, got {self.grid.ndim}D")
        return self

    @property
    def act(self) -> str:
        if self.activation:
            return self.activation
        return "relu" if self.system.tag == SystemTag.KDV else "gelu"

    @property
    def use_leray(self) -> bool:
        if self.system.tag != SystemTag.NSE:
            return False
        return True if self.leray_projection is None else self.leray_projection

    @property
    def stencil_mode(self) -> str:
        if self.flags.fixed_fd:
            return "fixed"
        if self.flags.unconstrained_filter:
            return "free"
        return "symmetric"
