#!/usr/bin/env python3
"""
실행 환경 점검 스크립트 (.env 설정값, torch 스레드/정밀도, 프리셋)
"""
import os
import sys

import torch
from dotenv import load_dotenv

load_dotenv()

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from app.config.presets import PAPER_ALIASES, PRESETS
from app.config.settings import CFL_LIMIT, DEFAULT_OUTPUT_DIR, DTYPE, LOG_LEVEL, MPD_THREADS
from app.domain.schema.error_schema import ConfigError
from app.domain.schema.run_schema import build_run_config

print("🔍 환경 변수 상세 분석:")
for key in ("LOG_LEVEL", "MPD_THREADS", "MPD_CFL_LIMIT", "MPD_OUTPUT_DIR"):
    raw = os.getenv(key)
    print(f"  - {key}: [{raw}]" + (" (앞/뒤 공백 있음)" if raw and raw.strip() != raw else ""))
print()
print("🔧 적용된 설정:")
print(f"  - 로그 레벨: {LOG_LEVEL}")
print(f"  - 스레드: {MPD_THREADS} (torch 기본 {torch.get_num_threads()})")
print(f"  - dtype: {DTYPE}")
print(f"  - CFL 경고 임계값: {CFL_LIMIT}")
print(f"  - 출력 디렉토리: {DEFAULT_OUTPUT_DIR}")

print("\n📂 프리셋 검증:")
for system, name in PAPER_ALIASES.items():
    try:
        config = build_run_config(preset="paper", system=system)
        spec = config.gen_spec()
        print(
            f"✅ {name}: fine {list(spec.fine_shape)} → coarse {list(spec.coarse_grid.shape)}, "
            f"Δt={spec.dt_macro:g}, 스냅샷 {spec.n_snapshots}, hash={config.config_hash()[:12]}"
        )
    except ConfigError as e:
        print(f"❌ {name}: {e}")
print(f"\n📋 등록된 프리셋: {', '.join(PRESETS)}")
