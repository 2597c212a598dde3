from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from app.config.settings import HCT_THRESHOLD, SPECTRUM_K_SCALE


# === 평가 설정 ===
class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    horizon_steps: Optional[int] = Field(None, ge=1, description="롤아웃 스텝 수 (None 이면 테스트 궤적 전체)")
    hct_threshold: float = Field(HCT_THRESHOLD, description="HCT 의 PCC 임계값")
    per_channel: bool = Field(False, description="PCC 를 채널별로 구해 평균")
    spectrum: bool = Field(False, description="spectrum.csv 생성 (2D 2채널 시스템)")
    spectrum_window: Tuple[int, Optional[int]] = Field((0, None), description="시간평균 스텝 구간 [start, end)")
    k_scale: int = Field(SPECTRUM_K_SCALE, description="k^s·E(k) 스케일 지수")


# === 지표 ===
class TrajectoryMetrics(BaseModel):
    index: int = Field(..., description="테스트 궤적 번호")
    rmse: Optional[float] = Field(None, description="발산 시 None")
    mae: Optional[float] = None
    mnad: Optional[float] = None
    hct: float = Field(..., ge=0.0, description="초 단위, 발산 전까지만 합산")
    steps_completed: int
    diverged: bool = False
    pcc: List[float] = Field(default_factory=list, description="스텝별 PCC")


class MetricsReport(BaseModel):
    """metrics.json 본문"""
    config_hash: str = ""
    seed: int = 0
    system: str
    variant: str = "full"
    n_trajectories: int
    horizon_steps: int
    dt: float
    rmse: Optional[float] = Field(None, description="sqrt(평균 MSE_i), 발산 궤적 제외")
    mae: Optional[float] = None
    mnad: Optional[float] = None
    hct: float = Field(..., ge=0.0, description="궤적 평균 HCT (초)")
    diverged: int = Field(0, description="발산한 궤적 수")
    trajectories: List[TrajectoryMetrics] = Field(default_factory=list)
