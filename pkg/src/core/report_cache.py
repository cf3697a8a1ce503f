# src/core/report_cache.py
import glob
import hashlib
import json
import os
import threading
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Type, TypeVar
from pydantic import BaseModel, ValidationError
from config.settings import REPORT_CACHE_DIR
from src.core.logger import log, error

M = TypeVar("M", bound=BaseModel)


def cache_key(payload: dict) -> str:
    """决定结果的配置字段 -> SHA-256"""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CacheEntry:
    key: str
    summary: Dict[str, Any]


class ReportCache:
    """
    实验报告缓存

    - 每个配置一个 <key>.json：{"summary": 简要信息, "report": 报告 JSON}
    - 内存一级缓存 + 磁盘按需加载，按模型类校验读回
    - 写入先落 .tmp 再原子替换；读不回的文件改名为 .corrupt
    - 支持按键前缀定位（CLI cache 子命令）
    """

    _instance: Optional['ReportCache'] = None
    _init_lock = threading.Lock()

    def __new__(cls):
        """双重检查锁定的单例模式"""
        if cls._instance is None:
            with cls._init_lock:
                if cls._instance is None:
                    instance = super().__new__(cls)
                    cls._instance = instance
                    instance._initialize()
        return cls._instance

    def _initialize(self, cache_dir: str = REPORT_CACHE_DIR):
        self.cache_dir = cache_dir
        os.makedirs(self.cache_dir, exist_ok=True)
        self.rw_lock = threading.RLock()
        self.mem_cache: Dict[str, BaseModel] = {}
        log(f"报告缓存已就绪，存储目录: {self.cache_dir}")

    def use_directory(self, cache_dir: str):
        """切换存储目录并清空内存缓存"""
        with self.rw_lock:
            self._initialize(cache_dir)

    @staticmethod
    def _is_key(name: str) -> bool:
        return bool(name) and all(c in "0123456789abcdef" for c in name)

    def _entry_path(self, key: str) -> str:
        if not self._is_key(key):
            raise KeyError(f"非法缓存键: {key!r}")
        return os.path.join(self.cache_dir, f"{key}.json")

    def _quarantine(self, path: str, reason: Exception):
        error(f"❌ 报告缓存文件损坏 ({os.path.basename(path)}): {reason}")
        try:
            os.replace(path, path + ".corrupt")
        except OSError:
            pass

    def get(self, key: str, model: Type[M]) -> Optional[M]:
        with self.rw_lock:
            cached = self.mem_cache.get(key)
            if isinstance(cached, model):
                return cached

            path = self._entry_path(key)
            if not os.path.exists(path):
                return None
            try:
                with open(path, "r", encoding="utf-8") as f:
                    payload = json.load(f)
                report = model.model_validate(payload["report"])
            except (ValueError, KeyError, TypeError, ValidationError) as e:
                self._quarantine(path, e)
                return None
            self.mem_cache[key] = report
            log(f"命中报告缓存: {key[:12]}")
            return report

    def set(self, key: str, report: BaseModel, summary: Optional[Dict[str, Any]] = None) -> bool:
        with self.rw_lock:
            path = self._entry_path(key)
            temp_path = path + ".tmp"
            payload = {"summary": summary or {}, "report": report.model_dump(mode="json")}
            try:
                with open(temp_path, "w", encoding="utf-8", newline="\n") as f:
                    json.dump(payload, f, ensure_ascii=False)
                os.replace(temp_path, path)
            except (OSError, TypeError) as e:
                error(f"❌ 缓存报告失败 ({key[:12]}): {e}")
                return False
            self.mem_cache[key] = report
            log(f"💾 已缓存报告: {key[:12]}")
            return True

    def resolve(self, prefix: str) -> str:
        """键前缀 -> 完整键；无匹配或有歧义时抛 KeyError"""
        matches = [k for k in self.keys() if k.startswith(prefix.strip().lower())]
        if not matches:
            raise KeyError(f"没有以 {prefix!r} 开头的缓存报告")
        if len(matches) > 1:
            raise KeyError(f"前缀 {prefix!r} 匹配到 {len(matches)} 个缓存报告，请写长一些")
        return matches[0]

    def delete(self, key: str) -> bool:
        with self.rw_lock:
            self.mem_cache.pop(key, None)
            path = self._entry_path(key)
            if not os.path.exists(path):
                return False
            os.remove(path)
            log(f"🗑️ 已删除缓存报告: {key[:12]}")
            return True

    def clear(self) -> int:
        """删除全部缓存，返回删除的条数"""
        with self.rw_lock:
            self.mem_cache.clear()
            keys = self.keys()
            for key in keys:
                os.remove(self._entry_path(key))
            log(f"✅ 已清空报告缓存 ({len(keys)} 条)")
            return len(keys)

    def keys(self) -> List[str]:
        files = glob.glob(os.path.join(self.cache_dir, "*.json"))
        names = (os.path.splitext(os.path.basename(f))[0] for f in files)
        return sorted(n for n in names if self._is_key(n))

    def entries(self) -> List[CacheEntry]:
        """按键排序的缓存清单（只读 summary，不校验报告体）"""
        out = []
        for key in self.keys():
            try:
                with open(self._entry_path(key), "r", encoding="utf-8") as f:
                    summary = json.load(f).get("summary", {})
            except (OSError, ValueError, AttributeError):
                summary = {"status": "unreadable"}
            out.append(CacheEntry(key, summary))
        return out


def get_cache() -> ReportCache:
    return ReportCache()
