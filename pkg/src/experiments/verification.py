# src/experiments/verification.py
"""
结构性检查（ε=0，交错相干模式）：

- alignment_dimension: 每个接收机干扰维数等于设计值，且期望信号可分
- zero_forcing:        D·G_d = I、D·G_i = 0（相对接收信号尺度 < 1e-9）
- no_csit_contract:    预编码只依赖声明过的 CSIT（其余信道换掉后逐位相同）
- transmitter_support: 每个流只由一个发射机发送
- block_equality:      同一等价类的时隙信道逐位相等，不同类不相等
- determinism:         同种子两次评估结果逐位相同

negative_control 在同步衰落下运行，对齐检查必须失败。
"""
from typing import Dict, List, Optional
import numpy as np
from config.settings import FieldMode, MASTER_SEED, RANK_TOL
from src.core.channel import ChannelRealization, SupersymbolPlan, sample_realization, trial_seed
from src.core.metrics import verify_alignment
from src.core.schemes import (
    DegenerateRealization,
    SchemeDescriptor,
    build_decoder,
    csit_view,
    effective_channels,
    matches_no_csit_contract,
    precode,
    support_violations,
)
from src.experiments.models import CheckResult, ExperimentConfig, VerificationSummary
from src.experiments.runner import descriptor_for, evaluate_trial, plan_for
from src.core.logger import log, warn

ZF_RESIDUAL_LIMIT = 1e-9

CHECKS = (
    "alignment_dimension",
    "zero_forcing",
    "no_csit_contract",
    "transmitter_support",
    "block_equality",
    "determinism",
)


def _swap_undeclared(r: ChannelRealization, other: ChannelRealization, d: SchemeDescriptor) -> ChannelRealization:
    """声明的 (链路, 时隙) 取自 r，其余全部取自 other"""
    gains = {}
    for link in r.links:
        h = np.array(other.gains[link], copy=True)
        for slot in range(r.length):
            if (link, slot) in d.csit:
                h[slot] = r.at(link, slot)
        gains[link] = h
    return ChannelRealization(gains=gains, epsilon=r.epsilon, field=r.field)


def _block_equality_holds(plan: SupersymbolPlan, r: ChannelRealization) -> bool:
    for link, partition in plan.partitions.items():
        h = r.gains[link]
        for cls in partition:
            if any(not np.array_equal(h[cls[0]], h[pos]) for pos in cls[1:]):
                return False
        reps = [h[cls[0]] for cls in partition]
        for i in range(len(reps)):
            for j in range(i + 1, len(reps)):
                if np.array_equal(reps[i], reps[j]):
                    return False
    return True


def _zero_forcing_residual(d: SchemeDescriptor, tx, r, channels, tol: float) -> float:
    worst = 0.0
    for k, ch in enumerate(channels):
        dec = build_decoder(d, tx, r, k, tol, ch)
        scale = max(ch.scale, 1e-300)
        norm_d = max(np.linalg.norm(dec.matrix, 2), 1e-300)
        identity = np.linalg.norm(dec.matrix @ ch.desired - np.eye(ch.desired.shape[1]), 2)
        leak = np.linalg.norm(dec.matrix @ ch.interference, 2) / (norm_d * scale) if ch.interference.size else 0.0
        worst = max(worst, identity, leak)
    return worst


class Verifier:
    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.d = descriptor_for(config)
        self.results: Dict[str, CheckResult] = {name: CheckResult(name=name) for name in CHECKS}

    def _record(self, name: str, ok: Optional[bool], detail: str = ""):
        res = self.results[name]
        if ok is None:
            res.skipped += 1
        elif ok:
            res.passed += 1
        else:
            res.failed += 1
            if detail and not res.detail:
                res.detail = detail

    def check_trial(self, plan: SupersymbolPlan, index: int):
        cfg, d = self.config, self.d
        seed = trial_seed(cfg.seed, index)
        r = sample_realization(plan, d.link_dims, 0.0, seed, cfg.field)
        tx = precode(d, csit_view(d, r), 1.0)
        channels = effective_channels(d, tx, r)

        report = verify_alignment(channels, d.expected_interference_dims, cfg.tol)
        self._record("alignment_dimension", report.aligned,
                     f"试验 {index}: 维数 {[x.interference_dim for x in report.receivers]}")

        try:
            residual = _zero_forcing_residual(d, tx, r, channels, cfg.tol)
            self._record("zero_forcing", residual < ZF_RESIDUAL_LIMIT, f"试验 {index}: 残差 {residual:.2e}")
        except DegenerateRealization:
            self._record("zero_forcing", None)

        other = sample_realization(plan, d.link_dims, 0.0, trial_seed(cfg.seed + 1, index), cfg.field)
        swapped = _swap_undeclared(r, other, d)
        tx_swapped = precode(d, csit_view(d, swapped), 1.0)
        self._record("no_csit_contract", matches_no_csit_contract(tx, tx_swapped),
                     f"试验 {index}: 预编码依赖了未声明的信道")

        bad = support_violations(d, tx)
        self._record("transmitter_support", not bad, f"流 {bad} 跨越多个发射机")

        self._record("block_equality", _block_equality_holds(plan, r), f"试验 {index}: 块内信道不一致")

        a = evaluate_trial(cfg, d, plan, index)
        b = evaluate_trial(cfg, d, plan, index)
        same = a.degenerate == b.degenerate and (
                a.degenerate or (np.array_equal(a.message_rates, b.message_rates)
                                 and np.array_equal(a.mi_rates, b.mi_rates))
        )
        self._record("determinism", same, f"试验 {index}: 两次评估结果不同")

    def run(self, trials: int) -> List[CheckResult]:
        plan = plan_for(self.config, self.d)
        for i in range(trials):
            self.check_trial(plan, i)
        return [self.results[name] for name in CHECKS]


def negative_control(config: ExperimentConfig, trials: int) -> CheckResult:
    """
    同步衰落下每个非退化试验都应当失去对齐。
    没有相等性模板的方案（TDMA）不适用，记为跳过。
    """
    cfg = config.with_updates(synchronized=True, epsilon=0.0)
    d = descriptor_for(cfg)
    result = CheckResult(name="negative_control")
    if not d.requirement.templates:
        result.skipped = trials
        result.detail = "方案没有相干结构要求"
        return result

    plan = plan_for(cfg, d)
    for i in range(trials):
        r = sample_realization(plan, d.link_dims, 0.0, trial_seed(cfg.seed, i), cfg.field)
        tx = precode(d, csit_view(d, r), 1.0)
        report = verify_alignment(effective_channels(d, tx, r), d.expected_interference_dims, cfg.tol)
        if report.aligned:
            result.failed += 1
            result.detail = result.detail or f"试验 {i}: 同步衰落下仍然对齐"
        else:
            result.passed += 1
    log(f"负对照 {cfg.scheme.value}: 对齐失败 {result.passed}/{trials}（预期全部失败）")
    return result


def verify(
        scheme,
        trials: int,
        k: Optional[int] = None,
        seed: int = MASTER_SEED,
        tol: float = RANK_TOL,
        field: FieldMode = FieldMode.COMPLEX,
        with_negative_control: bool = False
) -> VerificationSummary:
    config = ExperimentConfig.build(scheme=scheme, k=k, seed=seed, tol=tol, field=field, trials=max(1, trials))
    log(f"开始结构检查: {config.scheme.value}, {trials} 次试验")
    checks = Verifier(config).run(trials)
    control = negative_control(config, trials) if with_negative_control else None
    summary = VerificationSummary(scheme=config.scheme, k=config.k, trials=trials, checks=checks,
                                  negative_control=control)
    for c in checks:
        mark = "✅" if c.failed == 0 else "❌"
        log(f"{mark} {c.name}: 通过 {c.passed}, 失败 {c.failed}, 跳过 {c.skipped}")
    if not summary.passed:
        warn(f"⚠️ {config.scheme.value} 结构检查未通过")
    return summary
