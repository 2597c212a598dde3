from typing import Optional

import torch


class MultiPdeError(Exception):
    """MultiPDE 공통 예외"""
    exit_code = 1


class ConfigError(MultiPdeError):
    """설정 파일/프리셋 오류"""
    exit_code = 2


class GridError(MultiPdeError):
    """격자 크기/패딩/다운샘플 오류"""
    exit_code = 2


class ShapeError(MultiPdeError):
    """채널 수 또는 배열 shape 불일치"""
    exit_code = 1


class ContainerError(MultiPdeError):
    """MPD1/MPK1 파일 포맷 오류"""
    exit_code = 2


class MetricError(MultiPdeError):
    """지표 계산 불가 (zero range 등)"""
    exit_code = 1


class UnregisteredPrimitiveError(MultiPdeError):
    """gradient tape 위에서 미분 불가능한 연산 감지"""

    def __init__(self, op_name: str):
        super().__init__(f"unregistered primitive on tape: {op_name}")
        self.op_name = op_name


class SolverDivergedError(MultiPdeError):
    """NaN/Inf 발생 - 마지막 유한 상태를 함께 전달"""
    exit_code = 3

    def __init__(self, message: str, last_state: Optional[torch.Tensor] = None, step: Optional[int] = None):
        super().__init__(message)
        self.last_state = last_state
        self.step = step


class TrainingDivergedError(MultiPdeError):
    """학습 loss NaN - 마지막 체크포인트 경로 보존"""
    exit_code = 3

    def __init__(self, message: str, checkpoint_path: Optional[str] = None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
