# src/core/logger.py
import logging
import os
from datetime import datetime
from config.settings import LOG_DIR, LOG_LEVEL

os.makedirs(LOG_DIR, exist_ok=True)

LOG_FILE = os.path.join(LOG_DIR, f"bia_{datetime.now().strftime('%Y-%m-%d')}.log")

logger = logging.getLogger("BIA")
logger.setLevel(getattr(logging, LOG_LEVEL, logging.INFO))
formatter = logging.Formatter("%(asctime)s | %(levelname)-8s | %(message)s")

# 清除已有的处理器
logger.handlers.clear()

# 控制台处理器
ch = logging.StreamHandler()
ch.setFormatter(formatter)
logger.addHandler(ch)

# 文件处理器
fh = logging.FileHandler(LOG_FILE, encoding="utf-8")
fh.setFormatter(formatter)
logger.addHandler(fh)


def set_verbose(verbose: bool):
    """CLI --verbose 切换到 DEBUG"""
    logger.setLevel(logging.DEBUG if verbose else getattr(logging, LOG_LEVEL, logging.INFO))


# 导出函数
log = logger.info
warn = logger.warning
error = logger.error
debug = logger.debug
