import copy
import hashlib
import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.config.presets import PAPER_ALIASES, PRESETS
from app.config.settings import CFL_LIMIT, DEFAULT_OUTPUT_DIR
from app.domain.schema.dataset_schema import GenSpec, IcOptions
from app.domain.schema.error_schema import ConfigError
from app.domain.schema.field_schema import Grid
from app.domain.schema.metrics_schema import EvalConfig
from app.domain.schema.physics_schema import AblationFlags, ModelConfig, NetConfig, PdeSystem, StepScheme
from app.domain.schema.train_schema import TrainConfig


# === 섹션 ===
class DataSection(BaseModel):
    """GenSpec 중 system/seed 를 제외한 부분"""
    model_config = ConfigDict(extra="forbid")

    fine_shape: List[int]
    domain_length: List[float]
    dt: float = Field(..., gt=0.0)
    warmup: float = Field(0.0, ge=0.0)
    n_train: int = Field(..., ge=0)
    n_test: int = Field(..., ge=0)
    space_factor: int = Field(..., ge=1)
    time_stride: int = Field(..., ge=1)
    n_snapshots: int = Field(..., ge=1)
    ic: IcOptions = Field(default_factory=IcOptions)


class ModelSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    variant: str = Field("full", description="full 또는 model-a … model-i")
    integrator: Literal["rk4", "euler"] = "rk4"
    micro_steps: int = Field(4, ge=1)
    correction: NetConfig = Field(default_factory=lambda: NetConfig(width=12, modes=12, layers=2, projection=50))
    minn: NetConfig = Field(default_factory=NetConfig)
    mann_hidden: List[int] = Field(default_factory=lambda: [32, 32, 64, 128])
    mann_blocks: int = Field(2, ge=1)
    activation: Optional[Literal["gelu", "relu"]] = None
    independent_axis_filters: bool = False
    pressure_source: Literal["spectral", "stencil"] = "spectral"
    poisson_stop_gradient: bool = False
    leray_projection: Optional[bool] = None
    trainable_lambda: bool = False
    cfl_limit: float = Field(CFL_LIMIT, gt=0.0)

    @field_validator("variant")
    @classmethod
    def _known_variant(cls, v: str) -> str:
        AblationFlags.from_variant(v)
        return v


# === 실행 설정 ===
class RunConfig(BaseModel):
    """generate → train → evaluate 를 한 문서로 기술 (알 수 없는 키는 거부)"""
    model_config = ConfigDict(extra="forbid")

    system: PdeSystem
    seed: int = Field(0, description="데이터/가중치/학습 seed")
    output_dir: str = Field(DEFAULT_OUTPUT_DIR)
    data: DataSection
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainConfig = Field(default_factory=TrainConfig)
    evaluate: EvalConfig = Field(default_factory=EvalConfig)

    def config_hash(self) -> str:
        """정렬된 compact JSON 의 SHA-256"""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def gen_spec(self) -> GenSpec:
        return GenSpec(system=self.system, seed=self.seed, **self.data.model_dump())

    def model_config_for(self, grid: Grid, dt_macro: float, variant: Optional[str] = None,
                         system: Optional[PdeSystem] = None) -> ModelConfig:
        """system 을 주면 (데이터셋 메타데이터의 λ) RunConfig.system 대신 사용"""
        m = self.model
        flags = AblationFlags.from_variant(variant or m.variant)
        return ModelConfig(
            system=system or self.system,
            grid=grid,
            scheme=StepScheme(integrator=m.integrator, dt_macro=dt_macro, micro_steps=m.micro_steps),
            flags=flags,
            correction=m.correction,
            minn=m.minn,
            mann_hidden=m.mann_hidden,
            mann_blocks=m.mann_blocks,
            activation=m.activation,
            independent_axis_filters=m.independent_axis_filters,
            pressure_source=m.pressure_source,
            poisson_stop_gradient=m.poisson_stop_gradient,
            leray_projection=m.leray_projection,
            trainable_lambda=m.trainable_lambda,
            cfl_limit=m.cfl_limit,
            seed=self.seed,
        )


# === 로딩 ===
def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """override 가 우선, dict 는 재귀 병합"""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_document(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        return json.loads(path.read_text(encoding="utf-8"))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e


def resolve_preset(name: Optional[str], system: Optional[str] = None) -> Dict[str, Any]:
    if name is None:
        return {}
    if name == "paper":
        if system is None:
            raise ConfigError("--preset paper requires --system")
        name = PAPER_ALIASES.get(system)
        if name is None:
            raise ConfigError(f"no paper preset for system {system}")
    if name not in PRESETS:
        raise ConfigError(f"unknown preset: {name} (available: {', '.join(PRESETS)})")
    return PRESETS[name]


def build_run_config(
    document: Optional[Dict[str, Any]] = None,
    preset: Optional[str] = None,
    system: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """preset ← 문서 ← CLI override 순으로 병합 후 검증"""
    merged = deep_merge(resolve_preset(preset, system), document or {})
    if system is not None:
        merged = deep_merge(merged, {"system": {"tag": system}})
    if overrides:
        merged = deep_merge(merged, overrides)
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"invalid run config: {e}") from e
