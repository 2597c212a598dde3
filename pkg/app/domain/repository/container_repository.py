import json
import os
import struct
from pathlib import Path
from typing import Any, BinaryIO, Dict, Tuple, Union

from app.config.settings import CONTAINER_VERSION
from app.domain.schema.error_schema import ContainerError

PathLike = Union[str, Path]

# magic(4) + u32 version + u64 JSON 길이
_PREFIX = struct.Struct("<4sIQ")


class ContainerRepository:
    """MPD1/MPK1 공통 프레이밍: magic, version, JSON 헤더, 바이너리 payload"""

    def __init__(self, magic: bytes):
        self.magic = magic

    def write(self, path: PathLike, header: Dict[str, Any], payload: bytes) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(_PREFIX.pack(self.magic, CONTAINER_VERSION, len(encoded)))
            fh.write(encoded)
            fh.write(payload)
        os.replace(tmp, path)
        return path

    def read_header(self, fh: BinaryIO) -> Tuple[Dict[str, Any], int]:
        """헤더 JSON 과 payload 시작 offset"""
        prefix = fh.read(_PREFIX.size)
        if len(prefix) < _PREFIX.size:
            raise ContainerError("unexpected EOF while reading container prefix")
        magic, version, length = _PREFIX.unpack(prefix)
        if magic != self.magic:
            raise ContainerError(f"bad magic {magic!r}, expected {self.magic!r}")
        if version != CONTAINER_VERSION:
            raise ContainerError(f"unsupported container version {version}")
        raw = fh.read(length)
        if len(raw) < length:
            raise ContainerError("unexpected EOF while reading metadata")
        try:
            header = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ContainerError(f"corrupt metadata: {e}") from e
        return header, _PREFIX.size + length

    @staticmethod
    def read_exact(fh: BinaryIO, n_bytes: int) -> bytes:
        data = fh.read(n_bytes)
        if len(data) < n_bytes:
            raise ContainerError(f"unexpected EOF: expected {n_bytes} payload bytes, got {len(data)}")
        return data

    @staticmethod
    def expect_end(fh: BinaryIO) -> None:
        if fh.read(1):
            raise ContainerError("shape mismatch: trailing bytes after payload")
