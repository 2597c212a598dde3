from typing import List, Sequence, Union

import torch

from app.domain.schema.error_schema import GridError
from app.domain.service.autodiff_service import primitive
from app.domain.schema.field_schema import Field


class FieldService:
    """주기 패딩과 시공간 다운샘플링"""

    @primitive("periodic_pad")
    def pad_tensor(self, values: torch.Tensor, width: int, ndim: int) -> torch.Tensor:
        """마지막 ndim개 축을 주기적으로 패딩 (배치/채널 축은 그대로)"""
        if width < 0:
            raise GridError(f"pad width must be >= 0, got {width}")
        if width == 0:
            return values
        for axis in range(values.dim() - ndim, values.dim()):
            n = values.shape[axis]
            if width > n:
                raise GridError(f"pad exceeds grid: width {width} > {n}")
            head = values.narrow(axis, n - width, width)
            tail = values.narrow(axis, 0, width)
            values = torch.cat([head, values, tail], dim=axis)
        return values

    def crop_tensor(self, values: torch.Tensor, width: int, ndim: int) -> torch.Tensor:
        for axis in range(values.dim() - ndim, values.dim()):
            values = values.narrow(axis, width, values.shape[axis] - 2 * width)
        return values

    def pad_periodic(self, f: Field, width: int) -> torch.Tensor:
        return self.pad_tensor(f.values, width, f.grid.ndim)

    def coarsen_tensor(self, values: torch.Tensor, factor: int, ndim: int) -> torch.Tensor:
        if factor < 1:
            raise GridError(f"coarsening factor must be >= 1, got {factor}")
        spatial = values.shape[values.dim() - ndim:]
        if any(n % factor for n in spatial):
            raise GridError(f"factor {factor} does not divide grid {tuple(spatial)}")
        index = (Ellipsis,) + (slice(None, None, factor),) * ndim
        return values[index].contiguous()

    def coarsen_space(self, f: Field, factor: int) -> Field:
        """offset 0 에서 stride 서브샘플링 (평균 아님)"""
        values = self.coarsen_tensor(f.values, factor, f.grid.ndim)
        return Field(grid=f.grid.coarsen(factor), values=values)

    def coarsen_time(self, series: Union[Sequence[Field], torch.Tensor], stride: int) -> Union[List[Field], torch.Tensor]:
        """인덱스 0, stride, 2·stride, ... 유지 (텐서면 dim 0 이 시간축)"""
        if stride < 1:
            raise GridError(f"time stride must be >= 1, got {stride}")
        if len(series) == 0:
            raise GridError("empty series")
        return series[::stride]


# 싱글톤 인스턴스
field_service = FieldService()
