import logging
import os
import sys

import torch

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from app.api.experiment_router import dispatch
from app.config.settings import LOG_LEVEL, MPD_THREADS

logging.basicConfig(
    level=LOG_LEVEL,
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)
logger = logging.getLogger(__name__)


def main() -> int:
    torch.set_num_threads(MPD_THREADS)
    logger.info(f"🔧 MultiPDE 시작 (threads={MPD_THREADS})")
    return dispatch()


if __name__ == "__main__":
    sys.exit(main())
