"""
데이터 생성/학습 프리셋 (RunConfig 부분 문서)
"""
import math
from typing import Any, Dict, List

# 네트워크 크기는 데스크톱 규모로 축소한 기본값
PRESETS: Dict[str, Dict[str, Any]] = {
    "paper-kdv": {
        "system": {"tag": "kdv"},
        "data": {
            "fine_shape": [256], "domain_length": [64.0], "dt": 0.01, "warmup": 0.0,
            "n_train": 3, "n_test": 10, "space_factor": 4, "time_stride": 5, "n_snapshots": 2000,
        },
        "model": {
            "correction": {"width": 32, "modes": 16, "layers": 2, "projection": 64},
            "minn": {"width": 32, "modes": 16, "layers": 4, "projection": 64},
            "mann_hidden": [32, 32, 64, 128],
        },
        "train": {"rollout": 10},
        "evaluate": {"horizon_steps": 1000},
    },
    "paper-burgers": {
        "system": {"tag": "burgers", "nu": 0.002},
        "data": {
            "fine_shape": [100, 100], "domain_length": [1.0, 1.0], "dt": 1.0e-3, "warmup": 0.1,
            "n_train": 5, "n_test": 10, "space_factor": 4, "time_stride": 10, "n_snapshots": 140,
        },
        "model": {
            "correction": {"width": 12, "modes": 12, "layers": 2, "projection": 50},
            "minn": {"width": 12, "modes": 12, "layers": 4, "projection": 32},
            "mann_hidden": [32, 32, 64, 128],
        },
        "train": {"rollout": 10},
        "evaluate": {"horizon_steps": 139},
    },
    "paper-gs": {
        "system": {"tag": "gs", "d_u": 2.0e-5, "d_v": 5.0e-6, "alpha": 0.04, "kappa": 0.06},
        "data": {
            "fine_shape": [128, 128], "domain_length": [1.0, 1.0], "dt": 0.5, "warmup": 0.0,
            "n_train": 3, "n_test": 10, "space_factor": 4, "time_stride": 20, "n_snapshots": 180,
        },
        "model": {
            "correction": {"width": 20, "modes": 12, "layers": 2, "projection": 50},
            "minn": {"width": 22, "modes": 12, "layers": 4, "projection": 32},
            "mann_hidden": [32, 32, 64, 128],
        },
        "train": {"rollout": 1},
        "evaluate": {"horizon_steps": 140},
    },
    "desk-nse": {
        "system": {"tag": "nse", "re": 1000.0,
                   "forcing": {"amplitude": 1.0, "trig": "sin", "wavenumber": 4, "drag": 0.1}},
        "data": {
            "fine_shape": [256, 256], "domain_length": [2 * math.pi, 2 * math.pi], "dt": 1.75e-3, "warmup": 10.0,
            "n_train": 5, "n_test": 10, "space_factor": 4, "time_stride": 16, "n_snapshots": 360,
        },
        "model": {
            "correction": {"width": 20, "modes": 16, "layers": 2, "projection": 64},
            "minn": {"width": 16, "modes": 12, "layers": 4, "projection": 64},
            "mann_hidden": [32, 32, 64, 128],
        },
        "train": {"rollout": 1},
        "evaluate": {"spectrum_window": [100, None]},
    },
}

PRESET_NAMES: List[str] = list(PRESETS.keys())

# "--preset paper" 를 system 별 프리셋으로 해석
PAPER_ALIASES: Dict[str, str] = {
    "kdv": "paper-kdv",
    "burgers": "paper-burgers",
    "gs": "paper-gs",
    "nse": "desk-nse",
}

# NSE 일반화 실험 (외력/Re 변형)
NSE_FORCING_VARIANTS: Dict[str, Dict[str, Any]] = {
    "f1": {"amplitude": 1.0, "trig": "cos", "wavenumber": 2, "drag": 0.1},
    "f2": {"amplitude": 1.0, "trig": "sin", "wavenumber": 1, "drag": 0.1},
    "f3": {"amplitude": 1.0, "trig": "sin", "wavenumber": 8, "drag": 0.1},
    "f4": {"amplitude": 1.0, "trig": "cos", "wavenumber": 4, "drag": 0.1},
}
NSE_RE_VARIANTS: List[float] = [500.0, 800.0, 1600.0, 2000.0]
