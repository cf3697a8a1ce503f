# src/experiments/models.py
"""
实验配置与报告（pydantic 模型，JSON 序列化即输出格式）
"""
from typing import Dict, List, Optional
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from config.settings import (
    DEFAULT_K,
    DEFAULT_SNR_DB,
    DEFAULT_TRIALS,
    FIELD_MODE,
    MASTER_SEED,
    NOISE_VARIANCE,
    RANK_TOL,
    FieldMode,
    OutputFormat,
    SchemeId,
)
from src.core.channel import CoherencePattern, LinkId
from src.core.metrics import AcceptanceVerdict, DofEstimate, RatePoint


class ConfigError(ValueError):
    """实验配置非法（CLI 退出码 2）"""


class CoherenceSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    link: str = Field(description="链路，格式 tx-rx（0 起）")
    coherence_length: int = Field(ge=1, description="相干长度 T（时隙）")
    offset: int = Field(default=0, ge=0, description="块边界偏移")

    @field_validator("link")
    @classmethod
    def _check_link(cls, v: str) -> str:
        try:
            return str(LinkId.parse(v))
        except ValueError as e:
            raise ValueError(f"非法链路 '{v}'，应为 tx-rx") from e

    @model_validator(mode="after")
    def _check_offset(self):
        if self.offset >= self.coherence_length:
            raise ValueError(f"偏移 {self.offset} 必须小于相干长度 {self.coherence_length}")
        return self

    def to_pattern(self) -> CoherencePattern:
        return CoherencePattern(LinkId.parse(self.link), self.coherence_length, self.offset)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    scheme: SchemeId = Field(description="方案 id")
    k: Optional[int] = Field(default=None, description="K 用户干扰信道的用户数")
    field: FieldMode = Field(default=FIELD_MODE, description="实数 / 复数")
    snr_db: List[float] = Field(default_factory=lambda: list(DEFAULT_SNR_DB), description="SNR 列表 (dB)")
    trials: int = Field(default=DEFAULT_TRIALS, ge=1, description="每个 SNR 点的试验数")
    epsilon: float = Field(default=0.0, ge=0.0, description="逐时隙微扰强度")
    tol: float = Field(default=RANK_TOL, gt=0.0, lt=1.0, description="秩阈值 τ")
    seed: int = Field(default=MASTER_SEED, description="主种子")
    noise_variance: float = Field(default=NOISE_VARIANCE, gt=0.0, description="噪声方差 N₀")
    out: Optional[str] = Field(default=None, description="输出路径")
    format: OutputFormat = Field(default=OutputFormat.CSV, description="csv | json")
    synchronized: bool = Field(default=False, description="强制同步（非交错）块衰落")
    coherence: List[CoherenceSpec] = Field(default_factory=list, description="自定义相干模式，空则用方案默认")
    horizon: Optional[int] = Field(default=None, ge=1, description="超符号搜索窗")

    @field_validator("scheme", mode="before")
    @classmethod
    def _parse_scheme(cls, v):
        return SchemeId.parse(v) if isinstance(v, str) else v

    @field_validator("field", "format", mode="before")
    @classmethod
    def _lower(cls, v):
        return v.strip().lower() if isinstance(v, str) else v

    @field_validator("snr_db")
    @classmethod
    def _check_snr(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("SNR 列表不能为空")
        if len(set(v)) != len(v):
            raise ValueError(f"SNR 点不能重复: {v}")
        return [float(x) for x in v]

    @model_validator(mode="after")
    def _check_k(self):
        if self.scheme == SchemeId.K_USER_IC:
            if self.k is None:
                object.__setattr__(self, "k", DEFAULT_K)
            elif self.k < 2:
                raise ValueError(f"K_USER_IC 需要 K ≥ 2，得到 {self.k}")
        elif self.k is not None:
            object.__setattr__(self, "k", None)
        return self

    @classmethod
    def build(cls, **values) -> "ExperimentConfig":
        """校验失败统一转为 ConfigError"""
        try:
            return cls(**values)
        except ValidationError as e:
            raise ConfigError(str(e)) from e

    def with_updates(self, **values) -> "ExperimentConfig":
        return self.build(**{**self.model_dump(), **values})

    def patterns(self) -> List[CoherencePattern]:
        return [c.to_pattern() for c in self.coherence]

    def result_key(self) -> dict:
        """决定结果的字段（输出路径 / 格式除外）"""
        return self.model_dump(mode="json", exclude={"out", "format"})


class ReceiverSummary(BaseModel):
    receiver: int
    expected_dim: int
    match_fraction: float = Field(ge=0, le=1)
    separable_fraction: float = Field(ge=0, le=1)
    observed_dims: Dict[str, int] = Field(default_factory=dict, description="维数 -> 试验数")


class AlignmentSummary(BaseModel):
    receivers: List[ReceiverSummary]
    checked_trials: int = Field(ge=0)
    degenerate_trials: int = Field(ge=0)

    @property
    def degenerate_rate(self) -> float:
        total = self.checked_trials + self.degenerate_trials
        return self.degenerate_trials / total if total else 0.0

    @property
    def fully_aligned(self) -> bool:
        return all(r.match_fraction == 1.0 and r.separable_fraction == 1.0 for r in self.receivers)


class ExperimentReport(BaseModel):
    config: ExperimentConfig
    claimed_dof: Dict[str, str]
    power_normalization: str = Field(default="per_transmitter_total",
                                     description="SNR = 每个发射机每时隙总功率 / N₀")
    supersymbol_slots: List[int]
    points: List[RatePoint]
    dof: Optional[DofEstimate] = None
    alignment: AlignmentSummary
    acceptance: Optional[AcceptanceVerdict] = None
    # 只在内存里保留，写文件时排除，保证同配置输出逐字节相同
    elapsed_seconds: float = Field(default=0.0, exclude=True)

    @property
    def messages(self) -> List[str]:
        return list(self.claimed_dof)

    def is_nominal(self) -> bool:
        """ε=0 且交错：声明的 DoF 与对齐结论只在这种条件下适用"""
        return self.config.epsilon == 0.0 and not self.config.synchronized

    def degeneracy_breached(self, limit: float) -> bool:
        return self.is_nominal() and self.alignment.degenerate_rate > limit


class CheckResult(BaseModel):
    name: str
    passed: int = 0
    failed: int = 0
    skipped: int = 0
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.failed == 0 and self.passed > 0


class VerificationSummary(BaseModel):
    scheme: SchemeId
    k: Optional[int] = None
    trials: int
    checks: List[CheckResult]
    negative_control: Optional[CheckResult] = None

    @property
    def passed(self) -> bool:
        ok = all(c.ok or (c.passed == 0 and c.failed == 0) for c in self.checks)
        if self.negative_control is not None:
            ok = ok and self.negative_control.ok
        return ok
