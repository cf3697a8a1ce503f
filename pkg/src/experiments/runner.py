# src/experiments/runner.py
"""
蒙特卡洛实验

每个试验只抽样一次信道：预编码列为单位范数、功率单独存放，解码器与 SNR 无关，
因此所有 SNR 点在同一组实现上评估（公共随机数）。
归约始终按试验编号顺序进行，任意 worker 数下结果逐位相同。
"""
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
import numpy as np
import pandas as pd
from tqdm import tqdm
from config.settings import BIA_WORKERS, TRIAL_CHUNK_SIZE
from src.core.channel import (
    SupersymbolPlan,
    find_supersymbol,
    sample_realization,
    synchronized_plan,
    trial_seed,
)
from src.core.metrics import (
    RatePoint,
    acceptance,
    dof_slope,
    receiver_mi_rate,
    verify_alignment,
    zf_rates,
)
from src.core.report_cache import cache_key, get_cache
from src.core.schemes import (
    DegenerateRealization,
    SchemeDescriptor,
    build_decoder,
    csit_view,
    describe,
    effective_channels,
    precode,
)
from src.core.worker_pool import get_worker_pool
from src.experiments.models import (
    AlignmentSummary,
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    ReceiverSummary,
)
from src.core.logger import log, warn


@dataclass(frozen=True)
class TrialOutcome:
    index: int
    degenerate: bool
    message_rates: Optional[np.ndarray]  # (SNR 点, 消息)
    mi_rates: Optional[np.ndarray]  # (SNR 点,)
    interference_dims: Tuple[int, ...]
    separable: Tuple[bool, ...]


@dataclass(frozen=True)
class ChunkTask:
    config: ExperimentConfig
    plan: SupersymbolPlan
    start: int
    stop: int


def descriptor_for(config: ExperimentConfig) -> SchemeDescriptor:
    return describe(config.scheme, config.k)


def plan_for(config: ExperimentConfig, d: Optional[SchemeDescriptor] = None) -> SupersymbolPlan:
    """交错模式下搜索超符号；同步对照下按锚链路选时隙"""
    d = d or descriptor_for(config)
    try:
        if config.synchronized:
            return synchronized_plan(d.requirement, d.links, search_horizon=config.horizon)
        patterns = config.patterns() or list(d.default_patterns())
        return find_supersymbol(patterns, d.requirement, config.horizon)
    except ValueError as e:
        raise ConfigError(f"相干模式与方案 {config.scheme.value} 不匹配: {e}") from e


def snr_powers(config: ExperimentConfig) -> np.ndarray:
    """SNR ≡ P / N₀"""
    return config.noise_variance * 10.0 ** (np.asarray(config.snr_db) / 10.0)


def evaluate_trial(config: ExperimentConfig, d: SchemeDescriptor, plan: SupersymbolPlan, index: int) -> TrialOutcome:
    r = sample_realization(plan, d.link_dims, config.epsilon, trial_seed(config.seed, index), config.field)
    tx = precode(d, csit_view(d, r), 1.0)
    channels = effective_channels(d, tx, r)
    report = verify_alignment(channels, d.expected_interference_dims, config.tol)
    dims = tuple(rx.interference_dim for rx in report.receivers)
    separable = tuple(rx.separable for rx in report.receivers)

    try:
        decoders = [build_decoder(d, tx, r, k, config.tol, channels[k]) for k in range(d.n_rx)]
    except DegenerateRealization:
        return TrialOutcome(index, True, None, None, dims, separable)

    names = d.message_names
    col = {name: i for i, name in enumerate(names)}
    powers = snr_powers(config)
    rates = np.zeros((len(powers), len(names)))
    mi = np.zeros(len(powers))
    for p_idx, power in enumerate(powers):
        scaled = tx.scaled(power)
        for k, (dec, ch) in enumerate(zip(decoders, channels)):
            stream_rates = zf_rates(dec, ch, scaled.stream_powers, config.noise_variance, config.field)
            for s, rate in zip(dec.desired_streams, stream_rates):
                rates[p_idx, col[tx.streams[s].message]] += rate
            mi[p_idx] += receiver_mi_rate(ch, scaled.stream_powers, config.noise_variance, config.field)
    return TrialOutcome(index, False, rates, mi, dims, separable)


def evaluate_chunk(task: ChunkTask) -> List[TrialOutcome]:
    """进程池入口（顶层函数，可 pickle）"""
    d = descriptor_for(task.config)
    return [evaluate_trial(task.config, d, task.plan, i) for i in range(task.start, task.stop)]


class ExperimentRunner:
    """实验编排：超符号 → 分块试验 → 顺序归约 → DoF 拟合"""

    def __init__(self, workers: Optional[int] = None, chunk_size: int = TRIAL_CHUNK_SIZE,
                 show_progress: bool = True):
        self.workers = BIA_WORKERS if workers is None else max(1, workers)
        self.chunk_size = max(1, chunk_size)
        self.show_progress = show_progress
        self.pool = get_worker_pool()

    def _chunks(self, config: ExperimentConfig, plan: SupersymbolPlan) -> List[ChunkTask]:
        return [
            ChunkTask(config, plan, start, min(start + self.chunk_size, config.trials))
            for start in range(0, config.trials, self.chunk_size)
        ]

    def _evaluate(self, config: ExperimentConfig, plan: SupersymbolPlan) -> List[TrialOutcome]:
        tasks = self._chunks(config, plan)
        outcomes: List[TrialOutcome] = []
        batch = max(1, self.workers)
        with tqdm(total=config.trials, desc=f"{config.scheme.value} ε={config.epsilon:g}",
                  disable=not self.show_progress, leave=False) as bar:
            for i in range(0, len(tasks), batch):
                for chunk in self.pool.map(evaluate_chunk, tasks[i:i + batch], self.workers):
                    outcomes.extend(chunk)
                    bar.update(len(chunk))
        return outcomes

    def run(self, config: ExperimentConfig, use_cache: bool = False) -> ExperimentReport:
        cache = get_cache() if use_cache else None
        key = cache_key(config.result_key())
        if cache is not None:
            cached = cache.get(key, ExperimentReport)
            if cached is not None:
                log(f"♻️ 使用缓存报告: {config.scheme.value} ε={config.epsilon:g}")
                return cached.model_copy(update={"config": config})

        started = time.perf_counter()
        d = descriptor_for(config)
        plan = plan_for(config, d)
        log(f"开始实验: {config.scheme.value}"
            f"{f' K={d.k}' if d.k else ''}, 时隙 {plan.slots}, {config.trials} 次试验, "
            f"SNR {config.snr_db} dB, ε={config.epsilon:g}, 场={config.field.value}")

        outcomes = self._evaluate(config, plan)
        report = self._reduce(config, d, plan, outcomes)
        report.elapsed_seconds = time.perf_counter() - started
        log(f"✅ 实验完成: {config.scheme.value}，耗时 {report.elapsed_seconds:.1f}s")

        if cache is not None:
            cache.set(key, report, summary={
                "scheme": config.scheme.value, "k": d.k, "trials": config.trials,
                "snr_db": list(config.snr_db), "epsilon": config.epsilon,
                "synchronized": config.synchronized, "field": config.field.value,
            })
        return report

    @staticmethod
    def _reduce(config: ExperimentConfig, d: SchemeDescriptor, plan: SupersymbolPlan,
                outcomes: Sequence[TrialOutcome]) -> ExperimentReport:
        names = list(d.message_names)
        n_snr = len(config.snr_db)
        rate_sum = np.zeros((n_snr, len(names)))
        mi_sum = np.zeros(n_snr)
        valid = 0
        matches = np.zeros(d.n_rx, dtype=int)
        separable = np.zeros(d.n_rx, dtype=int)
        observed: List[Dict[str, int]] = [{} for _ in range(d.n_rx)]

        for o in sorted(outcomes, key=lambda o: o.index):
            if o.degenerate:
                continue
            valid += 1
            rate_sum += o.message_rates
            mi_sum += o.mi_rates
            for k in range(d.n_rx):
                dim = o.interference_dims[k]
                matches[k] += dim == d.expected_interference_dims[k]
                separable[k] += o.separable[k]
                observed[k][str(dim)] = observed[k].get(str(dim), 0) + 1

        degenerate = len(outcomes) - valid
        if valid == 0:
            warn(f"⚠️ {config.scheme.value}: 所有 {len(outcomes)} 次试验都退化")
        mean = rate_sum / valid if valid else rate_sum
        mean_mi = mi_sum / valid if valid else mi_sum

        points = [
            RatePoint(
                snr_db=snr,
                message_rates={m: float(mean[i, j]) for j, m in enumerate(names)},
                mean_rate=float(mean[i].sum()),
                mean_mi_rate=float(mean_mi[i]),
                trials=len(outcomes),
                degenerate=degenerate,
            )
            for i, snr in enumerate(config.snr_db)
        ]

        alignment = AlignmentSummary(
            receivers=[
                ReceiverSummary(
                    receiver=k,
                    expected_dim=d.expected_interference_dims[k],
                    match_fraction=float(matches[k] / valid) if valid else 0.0,
                    separable_fraction=float(separable[k] / valid) if valid else 0.0,
                    observed_dims=dict(sorted(observed[k].items())),
                )
                for k in range(d.n_rx)
            ],
            checked_trials=valid,
            degenerate_trials=degenerate,
        )
        if degenerate:
            log(f"退化试验: {degenerate}/{len(outcomes)} ({alignment.degenerate_rate:.2%})")

        dof = verdict = None
        if len(set(config.snr_db)) >= 2:
            dof = dof_slope(points, config.field, names)
            verdict = acceptance(d, dof)
            log(f"DoF 斜率: 总计 {dof.total:.3f} (声明 {d.claimed_total}), "
                + ", ".join(f"{m}={v:.3f}" for m, v in dof.per_message.items()))
        else:
            warn("⚠️ 只有一个 SNR 点，跳过 DoF 拟合")

        return ExperimentReport(
            config=config,
            claimed_dof={m: str(c) for m, c in d.claimed_dof.items()},
            supersymbol_slots=list(plan.slots),
            points=points,
            dof=dof,
            alignment=alignment,
            acceptance=verdict,
        )

    def sweep_epsilon(self, config: ExperimentConfig, epsilons: Sequence[float],
                      use_cache: bool = False) -> Tuple[List[ExperimentReport], pd.DataFrame]:
        """
        同一种子、同一 SNR 网格下依次跑各 ε（降序），返回报告和 rate-vs-ε 表
        relative_deviation 以 ε=0（若无则取最小 ε）为基准
        """
        epsilons = [float(e) for e in epsilons]
        if not epsilons:
            raise ConfigError("ε 列表不能为空")
        if any(e < 0 for e in epsilons):
            raise ConfigError(f"ε 必须非负: {epsilons}")
        if any(b > a for a, b in zip(epsilons, epsilons[1:])):
            raise ConfigError(f"ε 列表必须降序: {epsilons}")

        reports = [self.run(config.with_updates(epsilon=e), use_cache=use_cache) for e in epsilons]
        return reports, sweep_table(reports)


def sweep_table(reports: Sequence[ExperimentReport]) -> pd.DataFrame:
    rows = []
    for rep in reports:
        for p in rep.points:
            for m, rate in list(p.message_rates.items()) + [("total", p.mean_rate)]:
                rows.append({
                    "epsilon": rep.config.epsilon,
                    "snr_db": p.snr_db,
                    "message": m,
                    "mean_rate_bits_per_slot": rate,
                })
    table = pd.DataFrame(rows, columns=["epsilon", "snr_db", "message", "mean_rate_bits_per_slot"])
    if table.empty:
        table["relative_deviation"] = []
        return table

    base_eps = table["epsilon"].min()
    base = (table[table["epsilon"] == base_eps][["snr_db", "message", "mean_rate_bits_per_slot"]]
            .rename(columns={"mean_rate_bits_per_slot": "reference"}))
    table = table.merge(base, on=["snr_db", "message"], how="left")
    ref = table["reference"]
    deviation = (table["mean_rate_bits_per_slot"] - ref).abs() / ref.where(ref > 0, 1.0)
    table["relative_deviation"] = deviation.where(ref > 0, 0.0)
    return table.drop(columns="reference")


# ============================================================
# 便捷函数
# ============================================================

def run(config: ExperimentConfig, use_cache: bool = False, workers: Optional[int] = None) -> ExperimentReport:
    return ExperimentRunner(workers=workers).run(config, use_cache=use_cache)


def sweep_epsilon(config: ExperimentConfig, epsilons: Sequence[float], use_cache: bool = False,
                  workers: Optional[int] = None) -> Tuple[List[ExperimentReport], pd.DataFrame]:
    return ExperimentRunner(workers=workers).sweep_epsilon(config, epsilons, use_cache=use_cache)
