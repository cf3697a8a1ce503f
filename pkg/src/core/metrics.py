# src/core/metrics.py
"""
对齐报告、ZF 速率、互信息诊断与 DoF 斜率拟合
"""
import math
from fractions import Fraction
from typing import Dict, List, Optional, Sequence
import numpy as np
from pydantic import BaseModel, Field
from config.settings import FieldMode, NOISE_VARIANCE, RANK_TOL, SNR_FLOOR_DB
from src.core.numerics import ShapeError, column_space_basis, rank, singular_values
from src.core.schemes import EffectiveChannels, LinearDecoder, SchemeDescriptor
from src.core.logger import warn


class DofFitError(ValueError):
    """SNR 点不足以拟合斜率"""


# ==================== 报告模型 ====================

class ReceiverAlignment(BaseModel):
    receiver: int
    interference_dim: int = Field(ge=0)
    expected_dim: int = Field(ge=0)
    separable: bool
    min_singular_value: float = Field(ge=0)

    @property
    def matches(self) -> bool:
        return self.interference_dim == self.expected_dim


class AlignmentReport(BaseModel):
    receivers: List[ReceiverAlignment]

    @property
    def aligned(self) -> bool:
        return all(r.matches and r.separable for r in self.receivers)


class RatePoint(BaseModel):
    snr_db: float
    message_rates: Dict[str, float]
    mean_rate: float = Field(ge=0)
    mean_mi_rate: float = Field(default=0.0, ge=0)
    trials: int = Field(ge=0)
    degenerate: int = Field(default=0, ge=0)

    @property
    def degenerate_rate(self) -> float:
        return self.degenerate / self.trials if self.trials else 0.0


class DofEstimate(BaseModel):
    per_message: Dict[str, float]
    total: float
    residual: float = Field(ge=0)
    snr_db: List[float]


class MessageVerdict(BaseModel):
    message: str
    claimed: str
    measured: float
    tolerance: float
    passed: bool


class AcceptanceVerdict(BaseModel):
    claimed_total: str
    measured_total: float
    tolerance: float
    total_passed: bool
    messages: List[MessageVerdict]

    @property
    def passed(self) -> bool:
        return self.total_passed and all(m.passed for m in self.messages)


# ==================== 对齐检查 ====================

def receiver_alignment(ch: EffectiveChannels, expected_dim: int, tol: float = RANK_TOL) -> ReceiverAlignment:
    scale = ch.scale
    dim = rank(ch.interference, tol, reference=scale) if ch.interference.size else 0
    basis = column_space_basis(ch.interference, tol, reference=scale)
    combined = np.hstack([ch.desired, basis])
    n_rows, n_cols = combined.shape
    sv = singular_values(combined)
    if n_cols == 0:
        min_sv = 0.0
    elif n_cols > n_rows:
        min_sv = 0.0  # 列数超过接收维数，没有空间
    else:
        min_sv = float(sv[-1])
    separable = n_cols <= n_rows and rank(combined, tol) == n_cols
    return ReceiverAlignment(
        receiver=ch.receiver,
        interference_dim=dim,
        expected_dim=expected_dim,
        separable=separable,
        min_singular_value=min_sv,
    )


def verify_alignment(
        channels: Sequence[EffectiveChannels],
        expected_dims: Sequence[int],
        tol: float = RANK_TOL
) -> AlignmentReport:
    if len(channels) != len(expected_dims):
        raise ShapeError(f"接收机数 {len(channels)} 与期望维数个数 {len(expected_dims)} 不符")
    return AlignmentReport(receivers=[
        receiver_alignment(ch, dim, tol) for ch, dim in zip(channels, expected_dims)
    ])


# ==================== 速率 ====================

def _rate_factor(field: FieldMode, length: int) -> float:
    half = 0.5 if field == FieldMode.REAL else 1.0
    return half / length


def zf_rates(
        decoder: LinearDecoder,
        ch: EffectiveChannels,
        powers: np.ndarray,
        noise_variance: float = NOISE_VARIANCE,
        field: FieldMode = FieldMode.COMPLEX
) -> np.ndarray:
    """
    每个期望流的 ZF 速率（bits/slot），顺序同 decoder.desired_streams
    powers: 全部流的功率（按 PrecodedTransmission.streams 编号）
    """
    if noise_variance <= 0:
        raise ValueError(f"噪声方差必须为正: {noise_variance}")
    powers = np.asarray(powers, dtype=float)
    d = decoder.matrix
    p_d = powers[list(ch.desired_streams)]
    p_i = powers[list(ch.interfering_streams)]

    gains_d = np.abs(d @ ch.desired) ** 2  # (期望流, 期望流)
    gains_i = np.abs(d @ ch.interference) ** 2 if ch.interference.size else np.zeros((d.shape[0], 0))
    signal = np.diag(gains_d) * p_d
    leakage = gains_d @ p_d - signal + gains_i @ p_i
    noise = noise_variance * np.sum(np.abs(d) ** 2, axis=1)
    denom = leakage + noise

    sinr = np.divide(signal, denom, out=np.zeros_like(signal), where=denom > 0)
    return _rate_factor(field, ch.length) * np.log2(1.0 + sinr)


def mi_rate(
        g_d: np.ndarray,
        g_i: np.ndarray,
        p_d: Sequence[float],
        p_i: Sequence[float],
        noise_variance: float = NOISE_VARIANCE,
        length: int = 1,
        field: FieldMode = FieldMode.COMPLEX
) -> float:
    """干扰当噪声的高斯互信息 log₂det(I + (N₀I + G_iP_iG_iᴴ)⁻¹ G_dP_dG_dᴴ) / L"""
    g_d = np.atleast_2d(g_d)
    n = g_d.shape[0]
    cov_n = noise_variance * np.eye(n, dtype=complex)
    if g_i is not None and np.size(g_i):
        g_i = np.atleast_2d(g_i)
        if g_i.shape[0] != n:
            raise ShapeError(f"G_i 行数 {g_i.shape[0]} 与 G_d 行数 {n} 不符")
        cov_n = cov_n + (g_i * np.asarray(p_i, dtype=float)) @ g_i.conj().T
    signal = (g_d * np.asarray(p_d, dtype=float)) @ g_d.conj().T
    _, logdet_total = np.linalg.slogdet(cov_n + signal)
    _, logdet_noise = np.linalg.slogdet(cov_n)
    value = (logdet_total - logdet_noise) / math.log(2.0)
    return max(0.0, float(value)) * _rate_factor(field, length)


def receiver_mi_rate(ch: EffectiveChannels, powers: np.ndarray, noise_variance: float = NOISE_VARIANCE,
                     field: FieldMode = FieldMode.COMPLEX) -> float:
    powers = np.asarray(powers, dtype=float)
    return mi_rate(ch.desired, ch.interference, powers[list(ch.desired_streams)],
                   powers[list(ch.interfering_streams)], noise_variance, ch.length, field)


# ==================== DoF ====================

def snr_axis(snr_db: Sequence[float], field: FieldMode = FieldMode.COMPLEX) -> np.ndarray:
    """log₂(SNR)；实数模式取 ½·log₂(SNR)，使斜率按实维数计数"""
    x = np.asarray(snr_db, dtype=float) / 10.0 * math.log2(10.0)
    return 0.5 * x if field == FieldMode.REAL else x


def dof_slope(
        points: Sequence[RatePoint],
        field: FieldMode = FieldMode.COMPLEX,
        messages: Optional[Sequence[str]] = None
) -> DofEstimate:
    """平均速率对 log₂ SNR 的最小二乘斜率；总斜率 = 各消息斜率之和"""
    snrs = [p.snr_db for p in points]
    if len(set(snrs)) < 2:
        raise DofFitError(f"至少需要 2 个不同的 SNR 点，得到 {snrs}")
    low = [s for s in snrs if s < SNR_FLOOR_DB]
    if low:
        warn(f"⚠️ SNR 点 {low} dB 低于 {SNR_FLOOR_DB} dB，常数项可能拖偏斜率")

    if messages is None:
        messages = list(points[0].message_rates)
    x = snr_axis(snrs, field)
    per_message = {}
    fitted_total = np.zeros(len(points))
    for m in messages:
        y = np.array([p.message_rates[m] for p in points])
        slope, intercept = np.polyfit(x, y, 1)
        per_message[m] = float(slope)
        fitted_total += slope * x + intercept

    totals = np.array([sum(p.message_rates[m] for m in messages) for p in points])
    residual = float(np.sqrt(np.mean((totals - fitted_total) ** 2)))
    return DofEstimate(
        per_message=per_message,
        total=float(sum(per_message.values())),
        residual=residual,
        snr_db=[float(s) for s in snrs],
    )


def _message_tolerance(claim: Fraction) -> float:
    return 0.05 if claim <= 1 else 0.07


def total_tolerance(d: SchemeDescriptor) -> float:
    if d.k is not None:
        return 0.05 * d.k
    return 0.07


def acceptance(d: SchemeDescriptor, estimate: DofEstimate) -> AcceptanceVerdict:
    """拟合斜率与方案声明的 DoF 比较"""
    claims = d.claimed_dof
    verdicts = []
    for name, claim in claims.items():
        measured = estimate.per_message.get(name, float("nan"))
        tol = _message_tolerance(claim)
        verdicts.append(MessageVerdict(
            message=name,
            claimed=str(claim),
            measured=measured,
            tolerance=tol,
            passed=bool(abs(measured - float(claim)) <= tol),
        ))
    tol = total_tolerance(d)
    return AcceptanceVerdict(
        claimed_total=str(d.claimed_total),
        measured_total=estimate.total,
        tolerance=tol,
        total_passed=bool(abs(estimate.total - float(d.claimed_total)) <= tol),
        messages=verdicts,
    )
