# cli.py
"""
命令行入口

    python cli.py run --scheme MISO_BC_ONE_SIDED --snr 30,40,50 --trials 10000
    python cli.py sweep --scheme MISO_BC_ONE_SIDED --epsilons 1e-1,1e-2,1e-3,0
    python cli.py verify --scheme X_CHANNEL --trials 1000
    python cli.py list-schemes
    python cli.py cache list | delete KEY | clear

退出码: 0 成功, 1 I/O 错误, 2 配置错误, 3 退化率超限, 4 DoF 验收失败, 5 结构检查失败
"""
import argparse
import os
import sys
from typing import List, Optional
from config.settings import (
    DEGENERATE_RATE_LIMIT,
    CACHE_REPORTS,
    RESULTS_DIR,
    FieldMode,
    OutputFormat,
    SchemeId,
)
from src.core.channel import NoSupersymbolFound
from src.core.report_cache import get_cache
from src.core.worker_pool import get_worker_pool
from src.core.schemes import UnknownScheme, describe, list_schemes
from src.experiments.config_loader import load_config, parse_float_list
from src.experiments.models import ConfigError, ExperimentConfig, ExperimentReport
from src.experiments.report_writer import sweep_path, write_report, write_sweep_table
from src.experiments.runner import ExperimentRunner
from src.experiments.verification import verify
from src.core.logger import log, error, warn, set_verbose

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_ACCEPTANCE = 4
EXIT_VERIFY = 5


def _add_experiment_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="扁平 KEY=value 配置文件")
    p.add_argument("--scheme", help="方案 id（见 list-schemes）")
    p.add_argument("--k", type=int, help="K_USER_IC 的用户数")
    p.add_argument("--snr", help="SNR 列表 (dB)，如 30,40,50")
    p.add_argument("--trials", type=int, help="每个 SNR 点的试验数")
    p.add_argument("--epsilon", type=float, help="逐时隙微扰强度 ε")
    p.add_argument("--seed", type=int, help="主种子")
    p.add_argument("--field", choices=[m.value for m in FieldMode])
    p.add_argument("--out", help="输出路径")
    p.add_argument("--format", choices=[f.value for f in OutputFormat])
    p.add_argument("--tol", type=float, help="秩阈值 τ")
    p.add_argument("--synchronized", action="store_true", default=None, help="强制同步块衰落（对照）")
    p.add_argument("--cache", action="store_true", default=CACHE_REPORTS, help="使用报告缓存")
    p.add_argument("--workers", type=int, help="进程数（默认 BIA_WORKERS）")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bia", description="交错块衰落下的盲干扰对齐仿真")
    parser.add_argument("--verbose", action="store_true", help="DEBUG 日志")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="蒙特卡洛实验 + DoF 拟合")
    _add_experiment_args(run_p)

    sweep_p = sub.add_parser("sweep", help="ε 鲁棒性扫描")
    _add_experiment_args(sweep_p)
    sweep_p.add_argument("--epsilons", default="1e-1,1e-2,1e-3,0", help="降序 ε 列表")

    verify_p = sub.add_parser("verify", help="结构性检查")
    verify_p.add_argument("--scheme", required=True)
    verify_p.add_argument("--k", type=int)
    verify_p.add_argument("--trials", type=int, default=1000)
    verify_p.add_argument("--seed", type=int)
    verify_p.add_argument("--tol", type=float)
    verify_p.add_argument("--field", choices=[m.value for m in FieldMode])
    verify_p.add_argument("--negative-control", action="store_true", help="同时运行同步衰落负对照")

    sub.add_parser("list-schemes", help="列出方案及声明的 DoF")

    cache_p = sub.add_parser("cache", help="管理报告缓存")
    cache_p.add_argument("action", choices=["list", "delete", "clear"])
    cache_p.add_argument("key", nargs="?", help="delete 的缓存键（前缀即可）")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        "scheme": args.scheme,
        "k": args.k,
        "snr_db": parse_float_list(args.snr) if args.snr else None,
        "trials": args.trials,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "field": args.field,
        "out": args.out,
        "format": args.format,
        "tol": args.tol,
        "synchronized": args.synchronized,
    }
    return load_config(args.config, overrides)


def default_out(config: ExperimentConfig) -> str:
    name = config.scheme.value.lower()
    if config.k:
        name += f"_k{config.k}"
    return os.path.join(RESULTS_DIR, f"{name}.{config.format.value}")


def _report_status(report: ExperimentReport) -> int:
    if report.degeneracy_breached(DEGENERATE_RATE_LIMIT):
        error(f"❌ 退化试验占比 {report.alignment.degenerate_rate:.2%} 超过上限 {DEGENERATE_RATE_LIMIT:.2%}")
        return EXIT_DEGENERATE
    if report.is_nominal() and report.acceptance is not None:
        verdict = report.acceptance
        if not verdict.passed:
            error(f"❌ DoF 验收失败: 总计 {verdict.measured_total:.3f}，声明 {verdict.claimed_total} ± {verdict.tolerance}")
            return EXIT_ACCEPTANCE
        log(f"✅ DoF 验收通过: 总计 {verdict.measured_total:.3f}，声明 {verdict.claimed_total}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = config_from_args(args)
    runner = ExperimentRunner(workers=args.workers)
    report = runner.run(config, use_cache=args.cache)
    write_report(report, config.out or default_out(config), config.format)
    return _report_status(report)


def cmd_sweep(args) -> int:
    config = config_from_args(args)
    runner = ExperimentRunner(workers=args.workers)
    reports, table = runner.sweep_epsilon(config, parse_float_list(args.epsilons), use_cache=args.cache)
    out = config.out or default_out(config)
    stem, ext = os.path.splitext(out)
    for rep in reports:
        write_report(rep, f"{stem}_eps{rep.config.epsilon:g}{ext}", config.format)
    write_sweep_table(table, sweep_path(out))
    for row in table[table["message"] == "total"].itertuples():
        log(f"ε={row.epsilon:g} SNR={row.snr_db:g} dB: {row.mean_rate_bits_per_slot:.4f} bits/slot "
            f"(偏差 {row.relative_deviation:.2%})")
    return EXIT_OK


def cmd_verify(args) -> int:
    kwargs = {k: v for k, v in {"seed": args.seed, "tol": args.tol}.items() if v is not None}
    if args.field:
        kwargs["field"] = FieldMode(args.field)
    summary = verify(args.scheme, args.trials, k=args.k, with_negative_control=args.negative_control, **kwargs)
    if not summary.passed:
        for c in summary.checks:
            if c.failed:
                error(f"❌ {c.name}: {c.detail}")
        if summary.negative_control is not None and not summary.negative_control.ok:
            error(f"❌ 负对照未按预期失败: {summary.negative_control.detail}")
        return EXIT_VERIFY
    log(f"✅ {summary.scheme.value}: 全部结构检查通过")
    return EXIT_OK


def cmd_list_schemes(args) -> int:
    for scheme_id in list_schemes():
        d = describe(scheme_id, 3 if scheme_id == SchemeId.K_USER_IC else None)
        claims = ", ".join(f"{m}={c}" for m, c in d.claimed_dof.items())
        total = "K/2" if scheme_id == SchemeId.K_USER_IC else str(d.claimed_total)
        print(f"{scheme_id.value:<20} L={d.length}  总 DoF {total:<5} {claims}")
    return EXIT_OK


def cmd_cache(args) -> int:
    cache = get_cache()
    if args.action == "list":
        entries = cache.entries()
        for entry in entries:
            s = entry.summary
            if "scheme" not in s:
                print(f"{entry.key[:12]}  (无摘要)")
                continue
            k = f" K={s['k']}" if s.get("k") else ""
            sync = " 同步" if s.get("synchronized") else ""
            print(f"{entry.key[:12]}  {s['scheme']}{k}  trials={s.get('trials')}  "
                  f"SNR={s.get('snr_db')}  ε={s.get('epsilon')}  {s.get('field')}{sync}")
        log(f"共 {len(entries)} 个缓存报告 ({cache.cache_dir})")
        return EXIT_OK
    if args.action == "delete":
        if not args.key:
            raise ConfigError("cache delete 需要缓存键")
        try:
            key = cache.resolve(args.key)
        except KeyError as e:
            raise ConfigError(e.args[0]) from e
        cache.delete(key)
        return EXIT_OK
    cache.clear()
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "list-schemes": cmd_list_schemes,
    "cache": cmd_cache,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    set_verbose(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UnknownScheme, NoSupersymbolFound) as e:
        error(f"❌ 配置错误: {e}")
        return EXIT_CONFIG
    except OSError as e:
        error(f"❌ I/O 错误: {e}")
        return EXIT_IO
    except KeyboardInterrupt:
        warn("已中断")
        return 130
    finally:
        get_worker_pool().shutdown()


if __name__ == "__main__":
    sys.exit(main())
