# src/core/worker_pool.py
import atexit
import threading
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool
from typing import Callable, Iterable, List, Optional, TypeVar
from config.settings import BIA_WORKERS
from src.core.logger import log, error, warn

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    """
    试验分块的进程池（线程安全的单例模式）
    功能:
    - 按需创建 ProcessPoolExecutor，worker 数变化时重建
    - workers == 1 时在当前进程内顺序执行
    - map 保持输入顺序，归约由调用方按试验顺序完成
    - 进程池损坏时重建一次并重试
    - 自动资源清理
    """
    _instance: Optional['WorkerPool'] = None
    _init_lock = threading.Lock()

    def __new__(cls):
        """双重检查锁定的单例模式"""
        if cls._instance is None:
            with cls._init_lock:
                if cls._instance is None:
                    instance = super().__new__(cls)
                    instance._initialized = False
                    cls._instance = instance
        return cls._instance

    def __init__(self):
        """初始化（只执行一次）"""
        if self._initialized:
            return

        with self._init_lock:
            if self._initialized:
                return

            self._executor: Optional[ProcessPoolExecutor] = None
            self._workers = 0
            self._lock = threading.RLock()
            self._initialized = True
            atexit.register(self._atexit_cleanup)

    def _atexit_cleanup(self):
        if self._executor is not None:
            self.shutdown()

    def _ensure_executor(self, workers: int) -> ProcessPoolExecutor:
        with self._lock:
            if self._executor is not None and self._workers != workers:
                log(f"worker 数 {self._workers} -> {workers}，重建进程池")
                self._executor.shutdown(wait=True)
                self._executor = None
            if self._executor is None:
                self._executor = ProcessPoolExecutor(max_workers=workers)
                self._workers = workers
                log(f"✅ 进程池已启动: {workers} workers")
            return self._executor

    def map(self, fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
        """
        按输入顺序返回 fn(item) 的结果
        fn 与 items 必须可 pickle（workers > 1 时）
        """
        items = list(items)
        workers = BIA_WORKERS if workers is None else max(1, int(workers))

        if workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]

        for attempt in (1, 2):
            executor = self._ensure_executor(workers)
            try:
                return list(executor.map(fn, items))
            except BrokenProcessPool as e:
                error(f"❌ 进程池损坏 (尝试 {attempt}/2): {e}")
                with self._lock:
                    self._executor = None
                if attempt == 2:
                    raise
        return []

    def shutdown(self):
        """关闭进程池（幂等，之后再次 map 会重新创建）"""
        with self._lock:
            if self._executor is None:
                return
            try:
                self._executor.shutdown(wait=True)
                log("✅ 进程池已关闭")
            except Exception as e:
                warn(f"关闭进程池时出错: {e}")
            finally:
                self._executor = None
                self._workers = 0


# ============================================================
# 全局访问点
# ============================================================
worker_pool = WorkerPool()


def get_worker_pool() -> WorkerPool:
    return worker_pool
