"""
공용 pytest fixture 와 hypothesis 프로파일
"""
import math
import os
import sys

import pytest
import torch
from hypothesis import settings

# 프로젝트 루트 추가
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from app.config.settings import DTYPE
from app.domain.model.multipde_model import MultiPdeModel
from app.domain.schema.dataset_schema import DatasetMeta, TrajectoryDataset
from app.domain.schema.field_schema import Grid
from app.domain.schema.physics_schema import AblationFlags, ModelConfig, NetConfig, PdeSystem, StepScheme

settings.register_profile("dev", max_examples=25, deadline=None)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dev"))

TINY_NET = NetConfig(width=4, modes=3, layers=1, projection=4)


def tiny_model_config(
    tag: str = "burgers",
    shape=(8, 8),
    length: float = 1.0,
    dt_macro: float = 0.01,
    variant: str = "full",
    **kwargs,
) -> ModelConfig:
    """작은 격자 + 작은 네트워크 모델 설정"""
    system = kwargs.pop("system", None) or PdeSystem(tag=tag)
    grid = Grid(shape=tuple(shape), domain_length=(length,) * len(shape))
    return ModelConfig(
        system=system,
        grid=grid,
        scheme=StepScheme(dt_macro=dt_macro, micro_steps=kwargs.pop("micro_steps", 4)),
        flags=AblationFlags.from_variant(variant),
        correction=TINY_NET,
        minn=TINY_NET,
        mann_hidden=kwargs.pop("mann_hidden", [4, 4]),
        mann_blocks=1,
        **kwargs,
    )


def smooth_burgers_state(grid: Grid, batch: int = 1, amplitude: float = 0.5) -> torch.Tensor:
    """[B, 2, ny, nx] 매끄러운 주기 속도장"""
    y, x = grid.mesh()
    two_pi = 2 * math.pi
    u = amplitude * torch.sin(two_pi * x / grid.domain_length[1]) * torch.cos(two_pi * y / grid.domain_length[0])
    v = amplitude * torch.cos(two_pi * x / grid.domain_length[1]) * torch.sin(two_pi * y / grid.domain_length[0]) * 0.5
    state = torch.stack([u, v]).unsqueeze(0)
    scales = torch.linspace(1.0, 0.6, batch, dtype=DTYPE).reshape(-1, 1, 1, 1)
    return state * scales


def model_dataset(model: MultiPdeModel, n_train: int = 2, n_test: int = 1, snapshots: int = 6) -> TrajectoryDataset:
    """모델 자신의 롤아웃으로 만든 데이터셋 (physics-only 타깃)"""
    grid = model.config.grid
    u0 = smooth_burgers_state(grid, n_train + n_test)
    with torch.no_grad():
        states = model.rollout(u0, snapshots - 1).states
    data = torch.cat([u0.unsqueeze(1), states], dim=1)
    meta = DatasetMeta(
        system=model.config.system,
        shape=list(data.shape),
        dt=model.config.scheme.dt_macro,
        dx=list(grid.dx),
        domain_length=list(grid.domain_length),
        n_train=n_train,
        n_test=n_test,
    )
    return TrajectoryDataset(meta=meta, data=data)


@pytest.fixture
def grid_1d() -> Grid:
    return Grid(shape=(64,), domain_length=(2 * math.pi,))


@pytest.fixture
def grid_2d() -> Grid:
    return Grid(shape=(32, 32), domain_length=(2 * math.pi, 2 * math.pi))


@pytest.fixture
def burgers_model() -> MultiPdeModel:
    return MultiPdeModel(tiny_model_config("burgers"))


@pytest.fixture
def burgers_dataset(burgers_model) -> TrajectoryDataset:
    return model_dataset(burgers_model)


@pytest.fixture
def nse_model() -> MultiPdeModel:
    return MultiPdeModel(tiny_model_config("nse", shape=(16, 16), length=2 * math.pi, dt_macro=0.01))


@pytest.fixture
def gs_model() -> MultiPdeModel:
    return MultiPdeModel(tiny_model_config("gs", dt_macro=10.0))
