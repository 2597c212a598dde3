import logging
import math
from pathlib import Path

import numpy as np
import torch
from pydantic import ValidationError

from app.config.settings import DATASET_MAGIC
from app.domain.repository.container_repository import ContainerRepository, PathLike
from app.domain.schema.dataset_schema import DatasetMeta, TrajectoryDataset
from app.domain.schema.error_schema import ContainerError

logger = logging.getLogger(__name__)

_F64 = np.dtype("<f8")


class DatasetRepository:
    """TrajectoryDataset ↔ MPD1 파일 (little-endian float64, [traj, time, channel, y, x])"""

    def __init__(self):
        self.container = ContainerRepository(DATASET_MAGIC)

    def save(self, ds: TrajectoryDataset, path: PathLike) -> Path:
        array = ds.data.detach().cpu().numpy().astype(_F64, copy=False)
        path = self.container.write(path, ds.meta.model_dump(mode="json"), np.ascontiguousarray(array).tobytes())
        logger.info(f"💾 데이터셋 저장: {path} shape={ds.meta.shape}")
        return path

    def _meta(self, header) -> DatasetMeta:
        try:
            return DatasetMeta.model_validate(header)
        except ValidationError as e:
            raise ContainerError(f"invalid dataset metadata: {e}") from e

    def read_meta(self, path: PathLike) -> DatasetMeta:
        """배열을 읽지 않고 헤더만 파싱"""
        with open(path, "rb") as fh:
            header, _ = self.container.read_header(fh)
        return self._meta(header)

    def load(self, path: PathLike) -> TrajectoryDataset:
        with open(path, "rb") as fh:
            header, _ = self.container.read_header(fh)
            meta = self._meta(header)
            count = math.prod(meta.shape)
            raw = self.container.read_exact(fh, count * _F64.itemsize)
            self.container.expect_end(fh)
        array = np.frombuffer(raw, dtype=_F64).reshape(meta.shape)
        try:
            ds = TrajectoryDataset(meta=meta, data=torch.from_numpy(array.copy()))
        except ValidationError as e:
            raise ContainerError(f"inconsistent dataset: {e}") from e
        logger.info(f"📂 데이터셋 로드: {path} shape={meta.shape}")
        return ds


# 싱글톤 인스턴스
dataset_repository = DatasetRepository()
