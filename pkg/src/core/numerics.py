# src/core/numerics.py
"""
小尺寸稠密矩阵内核（实数 / 复数）

下游所有模块都把这里当作"足够精确"的线性代数：
- rank / column_space_basis 基于 SVD + 相对阈值 τ
- determinant 基于部分主元 LU，仅用于诊断，不参与秩判决
- solve 先做秩检查，秩亏抛 SingularMatrixError（对应退化信道样本）

矩阵即 numpy.ndarray；实数模式下 dtype 为 float64，虚部按类型恒为零。
"""
import warnings
from typing import Optional, Sequence
import numpy as np
import scipy.linalg as spla
from config.settings import FieldMode, RANK_TOL


class ShapeError(ValueError):
    """矩阵形状不满足运算前提"""


class SingularMatrixError(np.linalg.LinAlgError):
    """方阵秩亏（退化的信道样本）"""


def field_dtype(field: FieldMode) -> type:
    return np.float64 if field == FieldMode.REAL else np.complex128


def frozen(m: np.ndarray) -> np.ndarray:
    """返回只读副本，矩阵构造后不可变"""
    out = np.array(m, copy=True)
    out.flags.writeable = False
    return out


def _check_tol(tol: float):
    if not 0.0 < tol < 1.0:
        raise ValueError(f"秩阈值 τ 必须在 (0, 1) 内: {tol}")


def _as_2d(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ShapeError(f"需要二维矩阵，得到 ndim={m.ndim}")
    return m


def singular_values(m: np.ndarray) -> np.ndarray:
    m = _as_2d(m)
    if m.size == 0:
        return np.zeros(0)
    return np.linalg.svd(m, compute_uv=False)


def _threshold(s: np.ndarray, tol: float, reference: Optional[float]) -> float:
    scale = s[0] if s.size else 0.0
    if reference is not None:
        scale = max(scale, float(reference))
    return tol * scale


def rank(m: np.ndarray, tol: float = RANK_TOL, reference: Optional[float] = None) -> int:
    """
    数值秩：σᵢ > τ·σ₁ 的奇异值个数；全零矩阵秩为 0。
    reference 给定时阈值改为 τ·max(σ₁, reference)，
    用于在整个接收信号尺度下判断一个"舍入级别"的子矩阵。
    """
    _check_tol(tol)
    m = _as_2d(m)
    if m.size == 0:
        return 0
    s = singular_values(m)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > _threshold(s, tol, reference)))


def determinant(m: np.ndarray):
    """部分主元 LU 行列式：主元乘积再乘置换符号"""
    m = _as_2d(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"行列式需要方阵，得到 {m.shape}")
    if m.shape[0] == 0:
        return m.dtype.type(1)
    with warnings.catch_warnings():
        # 奇异输入的零主元是合法结果
        warnings.simplefilter("ignore", spla.LinAlgWarning)
        lu, piv = spla.lu_factor(m, check_finite=True)
    swaps = np.count_nonzero(piv != np.arange(piv.size))
    det = np.prod(np.diag(lu))
    return -det if swaps % 2 else det


def solve(m: np.ndarray, y: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """求解 m·x = y；m 必须是满秩方阵"""
    m = _as_2d(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"solve 需要方阵，得到 {m.shape}")
    y = np.asarray(y)
    if y.shape[0] != m.shape[0]:
        raise ShapeError(f"右端维度 {y.shape} 与矩阵 {m.shape} 不匹配")
    n = m.shape[0]
    if rank(m, tol) < n:
        raise SingularMatrixError(f"{n}x{n} 矩阵秩亏")
    lu_piv = spla.lu_factor(m)
    return spla.lu_solve(lu_piv, y)


def column_space_basis(
        m: np.ndarray,
        tol: float = RANK_TOL,
        reference: Optional[float] = None,
        max_rank: Optional[int] = None
) -> np.ndarray:
    """
    数值列空间的标准正交基（列数 = 数值秩）
    max_rank: 最多保留的主奇异方向数
    """
    _check_tol(tol)
    m = _as_2d(m)
    n_rows = m.shape[0]
    if m.size == 0:
        return np.zeros((n_rows, 0), dtype=m.dtype)
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    r = 0 if s[0] == 0.0 else int(np.count_nonzero(s > _threshold(s, tol, reference)))
    if max_rank is not None:
        r = min(r, max(0, max_rank))
    return u[:, :r]


def block_diagonal(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """按时隙堆叠的块对角信道"""
    return spla.block_diag(*blocks)


def spectral_norm(m: np.ndarray) -> float:
    s = singular_values(m)
    return float(s[0]) if s.size else 0.0
