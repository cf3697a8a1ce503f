# src/experiments/config_loader.py
import os
from typing import Any, Dict, List, Mapping, Optional
from dotenv import dotenv_values
from src.experiments.models import CoherenceSpec, ConfigError, ExperimentConfig
from src.core.logger import log, error

# 配置文件键 -> ExperimentConfig 字段
FILE_KEYS = {
    "SCHEME": "scheme",
    "K": "k",
    "FIELD": "field",
    "SNR_DB": "snr_db",
    "TRIALS": "trials",
    "EPSILON": "epsilon",
    "TOL": "tol",
    "SEED": "seed",
    "NOISE_VARIANCE": "noise_variance",
    "OUT": "out",
    "FORMAT": "format",
    "SYNCHRONIZED": "synchronized",
    "COHERENCE": "coherence",
    "HORIZON": "horizon",
}


def parse_float_list(raw: str) -> List[float]:
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"无法解析数值列表 '{raw}'") from e


def parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"无法解析布尔值 '{raw}'")


def parse_coherence(raw: str) -> List[CoherenceSpec]:
    """
    "0-0:2:0;0-1:2:1" -> 每条链路的 (T, offset)
    offset 可省略："0-0:4"
    """
    specs = []
    for item in raw.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(f"相干模式 '{item}' 应为 tx-rx:T[:offset]")
        try:
            specs.append(CoherenceSpec(
                link=parts[0],
                coherence_length=int(parts[1]),
                offset=int(parts[2]) if len(parts) == 3 else 0,
            ))
        except ValueError as e:
            raise ConfigError(f"相干模式 '{item}' 非法: {e}") from e
    return specs


def _convert(field: str, raw: str) -> Any:
    raw = raw.strip()
    if field == "snr_db":
        return parse_float_list(raw)
    if field == "synchronized":
        return parse_bool(raw)
    if field == "coherence":
        return parse_coherence(raw)
    if field in ("k", "horizon", "out") and raw == "":
        return None
    return raw


def read_config_file(path: str) -> Dict[str, Any]:
    """读取扁平 KEY=value 配置文件（dotenv 语法）"""
    if not os.path.isfile(path):
        raise ConfigError(f"配置文件不存在: {path}")
    raw = dotenv_values(path)
    unknown = sorted(set(raw) - set(FILE_KEYS))
    if unknown:
        raise ConfigError(f"未知的配置键: {', '.join(unknown)}")
    values = {}
    for key, value in raw.items():
        if value is None:
            continue
        values[FILE_KEYS[key]] = _convert(FILE_KEYS[key], value)
    log(f"已读取配置文件 {path}: {len(values)} 项")
    return values


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """
    配置文件 + 命令行覆盖（值为 None 的覆盖项忽略）
    """
    values = read_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    if "scheme" not in values:
        raise ConfigError("缺少方案 (SCHEME / --scheme)")
    try:
        return ExperimentConfig.build(**values)
    except ConfigError as e:
        error(f"❌ 配置无效: {e}")
        raise
