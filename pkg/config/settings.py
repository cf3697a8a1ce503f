# config/settings.py
import os
from enum import Enum
from dotenv import load_dotenv

# 加载 .env 文件
load_dotenv()

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))  #根目录
STORAGE_DIR = os.getenv("BIA_STORAGE_DIR", os.path.join(BASE_DIR, "storage"))
LOG_DIR = os.path.join(STORAGE_DIR, "logs")
REPORT_CACHE_DIR = os.path.join(STORAGE_DIR, "report_cache")
RESULTS_DIR = os.getenv("BIA_RESULTS_DIR", os.path.join(BASE_DIR, "results"))


class FieldMode(Enum):
    """
    标量域
    - real: 实数信道与实数码本，速率带 1/2 因子
    - complex: 循环对称复高斯信道
    """
    REAL = "real"
    COMPLEX = "complex"


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


class SchemeId(Enum):
    """五个盲对齐方案 + TDMA 基线"""
    MISO_BC_ONE_SIDED = "MISO_BC_ONE_SIDED"  # 单边 CSIT，3/2
    MISO_BC_NO_CSIT = "MISO_BC_NO_CSIT"  # 无 CSIT，4/3
    X_CHANNEL = "X_CHANNEL"  # X 信道，4/3
    MIMO_IC_1324 = "MIMO_IC_1324"  # (1,2)x(3,4) MIMO 干扰信道，(1, 3/2)
    K_USER_IC = "K_USER_IC"  # K 用户干扰信道，K/2
    TDMA_BASELINE = "TDMA_BASELINE"  # 正交时分，1

    @classmethod
    def parse(cls, value: str) -> "SchemeId":
        return cls(value.strip().upper().replace("-", "_"))


def _csv_floats(raw: str) -> list[float]:
    return [float(x) for x in raw.split(",") if x.strip()]


# ==================== 仿真默认参数 ====================
FIELD_MODE = FieldMode(os.getenv("FIELD_MODE", "complex").lower())
DEFAULT_SNR_DB = _csv_floats(os.getenv("DEFAULT_SNR_DB", "30,40,50"))
DEFAULT_TRIALS = int(os.getenv("DEFAULT_TRIALS", "10000"))
DEFAULT_K = int(os.getenv("DEFAULT_K", "3"))
MASTER_SEED = int(os.getenv("MASTER_SEED", "2009"))
NOISE_VARIANCE = float(os.getenv("NOISE_VARIANCE", "1.0"))

# 奇异值相对阈值 τ：σᵢ > τ·σ₁ 才计入秩
RANK_TOL = float(os.getenv("RANK_TOL", "1e-9"))

# 低于该 SNR 的点会让常数项拖偏斜率
SNR_FLOOR_DB = float(os.getenv("SNR_FLOOR_DB", "30"))

# ε=0 时退化试验占比上限
DEGENERATE_RATE_LIMIT = float(os.getenv("DEGENERATE_RATE_LIMIT", "1e-3"))

# ==================== 并发 / 缓存 ====================
BIA_WORKERS = max(1, int(os.getenv("BIA_WORKERS", "1")))
TRIAL_CHUNK_SIZE = max(1, int(os.getenv("TRIAL_CHUNK_SIZE", "250")))
CACHE_REPORTS = os.getenv("CACHE_REPORTS", "false").lower() == "true"

# ==================== 日志 ====================
LOG_LEVEL = os.getenv("BIA_LOG_LEVEL", "INFO").upper()

# 确保目录存在
os.makedirs(STORAGE_DIR, exist_ok=True)
os.makedirs(LOG_DIR, exist_ok=True)
os.makedirs(REPORT_CACHE_DIR, exist_ok=True)
os.makedirs(RESULTS_DIR, exist_ok=True)
