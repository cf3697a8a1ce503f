# src/experiments/report_writer.py
"""
报告输出：CSV（固定表头，元数据写入同名 .meta.json）与 JSON（报告结构原样）
两种格式读回后都能还原完整报告。
"""
import json
import os
from typing import List, Optional
import pandas as pd
from config.settings import OutputFormat
from src.core.metrics import RatePoint
from src.experiments.models import ExperimentReport
from src.core.logger import log, error

CSV_COLUMNS = [
    "scheme", "field", "K", "snr_db", "epsilon", "trials", "degenerate",
    "message", "mean_rate_bits_per_slot", "dof_slope", "dof_total",
]
TOTAL_ROW = "total"


def infer_format(path: str, fmt: Optional[OutputFormat] = None) -> OutputFormat:
    if fmt is not None:
        return fmt
    return OutputFormat.JSON if path.lower().endswith(".json") else OutputFormat.CSV


def report_rows(report: ExperimentReport) -> pd.DataFrame:
    """每个 (SNR, 消息) 一行，外加每个 SNR 一行 total"""
    cfg = report.config
    dof = report.dof
    rows = []
    for p in report.points:
        base = {
            "scheme": cfg.scheme.value,
            "field": cfg.field.value,
            "K": cfg.k,
            "snr_db": p.snr_db,
            "epsilon": cfg.epsilon,
            "trials": p.trials,
            "degenerate": p.degenerate,
        }
        for m, rate in p.message_rates.items():
            rows.append({**base, "message": m, "mean_rate_bits_per_slot": rate,
                         "dof_slope": dof.per_message.get(m) if dof else None,
                         "dof_total": dof.total if dof else None})
        rows.append({**base, "message": TOTAL_ROW, "mean_rate_bits_per_slot": p.mean_rate,
                     "dof_slope": dof.total if dof else None,
                     "dof_total": dof.total if dof else None})
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def _meta(report: ExperimentReport) -> dict:
    data = report.model_dump(mode="json", exclude={"points"})
    data["mean_mi_rate"] = [p.mean_mi_rate for p in report.points]
    return data


def meta_path(path: str) -> str:
    """CSV 的元数据旁路文件：<stem>.meta.json"""
    stem, _ = os.path.splitext(path)
    return f"{stem}.meta.json"


def write_report(report: ExperimentReport, path: str, fmt: Optional[OutputFormat] = None) -> str:
    fmt = infer_format(path, fmt)
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    try:
        if fmt == OutputFormat.JSON:
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                f.write(report.model_dump_json(indent=2))
                f.write("\n")
        else:
            report_rows(report).to_csv(path, index=False, lineterminator="\n")
            with open(meta_path(path), "w", encoding="utf-8", newline="\n") as f:
                json.dump(_meta(report), f, ensure_ascii=False, indent=2)
                f.write("\n")
    except OSError as e:
        error(f"❌ 写入报告失败 {path}: {e}")
        raise
    log(f"💾 报告已写入: {path} ({fmt.value})")
    return path


def read_report(path: str, fmt: Optional[OutputFormat] = None) -> ExperimentReport:
    fmt = infer_format(path, fmt)
    if fmt == OutputFormat.JSON:
        with open(path, "r", encoding="utf-8") as f:
            return ExperimentReport.model_validate_json(f.read())

    with open(meta_path(path), "r", encoding="utf-8") as f:
        meta = json.load(f)
    mi_rates: List[float] = meta.pop("mean_mi_rate")

    table = pd.read_csv(path, float_precision="round_trip", keep_default_na=False,
                        dtype={"message": str, "scheme": str, "field": str})
    # 每个点以 total 行结束，按行序切分
    is_total = table["message"] == TOTAL_ROW
    point_index = is_total.shift(fill_value=False).cumsum()
    points = []
    for i, group in table.groupby(point_index, sort=True):
        messages = group[group["message"] != TOTAL_ROW]
        total = group[group["message"] == TOTAL_ROW].iloc[0]
        points.append(RatePoint(
            snr_db=float(total["snr_db"]),
            message_rates={m: float(r) for m, r in zip(messages["message"], messages["mean_rate_bits_per_slot"])},
            mean_rate=float(total["mean_rate_bits_per_slot"]),
            mean_mi_rate=mi_rates[i],
            trials=int(total["trials"]),
            degenerate=int(total["degenerate"]),
        ))
    return ExperimentReport.model_validate({**meta, "points": [p.model_dump() for p in points]})


def sweep_path(out: str) -> str:
    stem, _ = os.path.splitext(out)
    return f"{stem}_sweep.csv"


def write_sweep_table(table: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    table.to_csv(path, index=False, lineterminator="\n")
    log(f"💾 ε 扫描表已写入: {path}")
    return path
