"""
MultiPDE 실행 환경 설정
"""
import os

import torch
from dotenv import load_dotenv

load_dotenv()

# 로그 설정
LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO").upper()

# 워커 수 (torch intra-op 스레드 + 동시 생성 궤적 수)
MPD_THREADS = max(1, int(os.environ.get("MPD_THREADS", os.cpu_count() or 1)))

# 솔버 내부 연산은 항상 float64
DTYPE = torch.float64
CDTYPE = torch.complex128

# CFL 경고 임계값 (max|u|·δt/dx)
CFL_LIMIT = float(os.environ.get("MPD_CFL_LIMIT", "1.0"))

# 출력 디렉토리 기본값
DEFAULT_OUTPUT_DIR = os.environ.get("MPD_OUTPUT_DIR", "./runs")

# 파일 포맷
DATASET_MAGIC = b"MPD1"
CHECKPOINT_MAGIC = b"MPK1"
CONTAINER_VERSION = 1

# 학습 기본값 (Adam + step decay)
DEFAULT_LR = 5e-3
DEFAULT_EPOCHS = 1000
MAX_BATCH_SIZE = 90
LR_DECAY_FACTOR = 0.96
LR_DECAY_EVERY = 200

# 평가 기본값
HCT_THRESHOLD = 0.8
SPECTRUM_K_SCALE = 5
