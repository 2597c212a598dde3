import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

import numpy as np
import torch
from pydantic import ValidationError

from app.config.settings import CHECKPOINT_MAGIC
from app.domain.repository.container_repository import ContainerRepository, PathLike
from app.domain.schema.error_schema import ContainerError
from app.domain.schema.train_schema import CheckpointMeta, TensorEntry

logger = logging.getLogger(__name__)

# dtype 태그 -> (torch, little-endian numpy)
_DTYPES = {
    "f64": (torch.float64, np.dtype("<f8")),
    "f32": (torch.float32, np.dtype("<f4")),
    "c128": (torch.complex128, np.dtype("<c16")),
    "i64": (torch.int64, np.dtype("<i8")),
    "u8": (torch.uint8, np.dtype("u1")),
}
_TAGS = {torch_dtype: tag for tag, (torch_dtype, _) in _DTYPES.items()}


@dataclass
class Checkpoint:
    meta: CheckpointMeta
    model_state: Dict[str, torch.Tensor]
    optimizer_state: Dict[int, Dict[str, torch.Tensor]]
    rng_state: torch.Tensor


class CheckpointRepository:
    """MPK1 컨테이너: 이름 있는 텐서 + JSON 메타데이터"""

    def __init__(self):
        self.container = ContainerRepository(CHECKPOINT_MAGIC)

    def save(self, ckpt: Checkpoint, path: PathLike) -> Path:
        named: Dict[str, torch.Tensor] = {f"model/{k}": v for k, v in ckpt.model_state.items()}
        for idx, state in ckpt.optimizer_state.items():
            for key, value in state.items():
                named[f"optim/{idx}/{key}"] = value
        named["rng"] = ckpt.rng_state

        entries: List[dict] = []
        chunks: List[bytes] = []
        offset = 0
        for name, tensor in named.items():
            tensor = torch.as_tensor(tensor).detach().cpu()
            if tensor.dtype not in _TAGS:
                raise ContainerError(f"unsupported tensor dtype {tensor.dtype} for {name}")
            tag = _TAGS[tensor.dtype]
            raw = np.ascontiguousarray(tensor.numpy().astype(_DTYPES[tag][1], copy=False)).tobytes()
            entries.append(TensorEntry(name=name, dtype=tag, shape=list(tensor.shape), offset=offset, nbytes=len(raw)).model_dump())
            chunks.append(raw)
            offset += len(raw)

        header = {"meta": ckpt.meta.model_dump(mode="json"), "tensors": entries}
        path = self.container.write(path, header, b"".join(chunks))
        logger.info(f"💾 체크포인트 저장: {path} (epoch {ckpt.meta.epoch}, step {ckpt.meta.step})")
        return path

    def load(self, path: PathLike) -> Checkpoint:
        with open(path, "rb") as fh:
            header, _ = self.container.read_header(fh)
            try:
                meta = CheckpointMeta.model_validate(header["meta"])
                entries = [TensorEntry.model_validate(e) for e in header["tensors"]]
            except (KeyError, ValidationError) as e:
                raise ContainerError(f"invalid checkpoint metadata: {e}") from e
            total = sum(e.nbytes for e in entries)
            payload = self.container.read_exact(fh, total)
            self.container.expect_end(fh)

        model_state: Dict[str, torch.Tensor] = {}
        optimizer_state: Dict[int, Dict[str, torch.Tensor]] = {}
        rng_state = None
        for e in entries:
            if e.dtype not in _DTYPES:
                raise ContainerError(f"unknown dtype tag {e.dtype} for {e.name}")
            torch_dtype, np_dtype = _DTYPES[e.dtype]
            if e.nbytes != math.prod(e.shape) * np_dtype.itemsize:
                raise ContainerError(f"shape mismatch for {e.name}")
            array = np.frombuffer(payload[e.offset:e.offset + e.nbytes], dtype=np_dtype).reshape(e.shape)
            tensor = torch.from_numpy(array.copy()).to(torch_dtype)
            kind, _, rest = e.name.partition("/")
            if kind == "model":
                model_state[rest] = tensor
            elif kind == "optim":
                idx, _, key = rest.partition("/")
                optimizer_state.setdefault(int(idx), {})[key] = tensor
            elif kind == "rng":
                rng_state = tensor
        if rng_state is None:
            raise ContainerError("checkpoint has no RNG state")
        logger.info(f"📂 체크포인트 로드: {path} (epoch {meta.epoch})")
        return Checkpoint(meta=meta, model_state=model_state, optimizer_state=optimizer_state, rng_state=rng_state)


# 싱글톤 인스턴스
checkpoint_repository = CheckpointRepository()
