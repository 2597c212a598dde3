import math
from typing import Tuple

import torch
from pydantic import BaseModel, ConfigDict, Field as PydField, model_validator

from app.config.settings import DTYPE


class Grid(BaseModel):
    """균일 주기 격자 (cell-centered, x_i = i·dx)"""
    model_config = ConfigDict(frozen=True)

    shape: Tuple[int, ...] = PydField(..., description="축별 셀 수, 배열 순서 [y, x]", examples=[(64, 64)])
    domain_length: Tuple[float, ...] = PydField(..., description="축별 물리 길이", examples=[(2 * math.pi, 2 * math.pi)])

    @model_validator(mode="after")
    def _check(self) -> "Grid":
        if len(self.shape) not in (1, 2):
            raise ValueError(f"grid ndim must be 1 or 2, got {len(self.shape)}")
        if len(self.domain_length) != len(self.shape):
            raise ValueError("domain_length and shape must have the same length")
        if any(n <= 0 for n in self.shape):
            raise ValueError(f"shape must be positive, got {self.shape}")
        if any(length <= 0 for length in self.domain_length):
            raise ValueError(f"domain_length must be positive, got {self.domain_length}")
        return self

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def dx(self) -> Tuple[float, ...]:
        return tuple(length / n for length, n in zip(self.domain_length, self.shape))

    @property
    def min_dx(self) -> float:
        return min(self.dx)

    def coords(self, axis: int) -> torch.Tensor:
        return torch.arange(self.shape[axis], dtype=DTYPE) * self.dx[axis]

    def mesh(self) -> Tuple[torch.Tensor, ...]:
        """배열 축 순서의 좌표 메쉬 (2D: (y, x))"""
        return torch.meshgrid(*[self.coords(a) for a in range(self.ndim)], indexing="ij")

    def coarsen(self, factor: int) -> "Grid":
        return Grid(shape=tuple(n // factor for n in self.shape), domain_length=self.domain_length)


class Field(BaseModel):
    """격자 위의 다채널 값 [channels, *shape]"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    values: torch.Tensor
    diverged: bool = PydField(False, description="발산 표시 - True면 NaN/Inf 허용")

    @model_validator(mode="after")
    def _check(self) -> "Field":
        if self.values.dim() != self.grid.ndim + 1:
            raise ValueError(f"values must be [channels, *shape], got {tuple(self.values.shape)}")
        if tuple(self.values.shape[1:]) != tuple(self.grid.shape):
            raise ValueError(f"values shape {tuple(self.values.shape[1:])} != grid {self.grid.shape}")
        if not self.diverged and not bool(torch.isfinite(self.values).all()):
            raise ValueError("field values must be finite unless flagged diverged")
        return self

    @property
    def channels(self) -> int:
        return int(self.values.shape[0])

    def with_values(self, values: torch.Tensor, grid: Grid = None) -> "Field":
        """diverged 표시는 그대로 유지"""
        return Field(grid=grid or self.grid, values=values, diverged=self.diverged)
