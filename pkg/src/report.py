"""
报告模块
把学习报告、验证结论和有效宽度整理成对齐的文本表格与JSON
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from policy import Verdict, VerdictKind, WidthResult
from strips_model import format_atom
from wrapper import RunReport

SUCCESS_HEADERS = ["Domain", "|Q|", "|S|", "|F|", "Strat.", "Outer", "Inner", "|Q'|", "Inner*",
                   "|X+|", "|X-|", "|H|", "|G|", "|π|", "Prep.", "GenEx", "Verif.", "Total"]
FAILURE_HEADERS = ["Domain", "|Q|", "|S|", "|F|", "Strat.", "Outer", "Inner", "|Q'|", "Inner*",
                   "|X+|", "|X-|", "|H|", "Reason", "Prep.", "GenEx", "Verif.", "Total"]


def _seconds(value: float) -> str:
    return f"{value:.2f}"


def _align(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """第一列左对齐，其余右对齐"""
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]

    def line(cells: Sequence[str]) -> str:
        parts = [cells[0].ljust(widths[0])]
        parts.extend(cell.rjust(w) for cell, w in zip(cells[1:], widths[1:]))
        return "  ".join(parts).rstrip()

    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(row) for row in rows)
    return "\n".join(out) + "\n"


def report_row(report: RunReport) -> List[str]:
    head = [report.domain, str(report.Q), str(report.S), str(report.F), report.strategy or "-",
            str(report.outer), str(report.inner), str(report.Q_prime), str(report.inner_star),
            str(report.X_plus), str(report.X_minus), str(report.H)]
    middle = [str(report.G), str(report.pi)] if report.success else [report.outcome]
    tail = [_seconds(report.prep), _seconds(report.genex), _seconds(report.verify), _seconds(report.total)]
    return head + middle + tail


def format_table(reports: Sequence[RunReport]) -> str:
    """
    学习报告表格；成功与失败分成两张表

    Args:
        reports: 学习报告列表

    Returns:
        对齐的文本表格
    """
    found = [r for r in reports if r.success]
    failed = [r for r in reports if not r.success]
    parts = []
    if found:
        parts.append(_align(SUCCESS_HEADERS, [report_row(r) for r in found]))
    if failed:
        parts.append(_align(FAILURE_HEADERS, [report_row(r) for r in failed]))
    return "\n".join(parts)


def _witness(verdict: Verdict) -> str:
    if verdict.kind == VerdictKind.SOLVES:
        return ""
    if verdict.kind == VerdictKind.CYCLIC:
        return f"lasso of length {len(verdict.trajectory) - 1}"
    if verdict.state is None:
        return ""
    atoms = " ".join(format_atom(a) for a in sorted(verdict.state.fluent_atoms()))
    return f"at depth {len(verdict.trajectory) - 1}: {atoms}"


def format_verdicts(rows: Sequence[Tuple[str, Optional[Verdict]]]) -> str:
    """逐实例验证结论，末尾附覆盖率；None 表示超出预算"""
    body = [[name, "Budget", "-", ""] if v is None else [name, v.kind.value, str(v.visited), _witness(v)]
            for name, v in rows]
    text = _align(["Instance", "Verdict", "Visited", "Witness"], body)
    solved = sum(1 for _, v in rows if v is not None and v.solves)
    coverage = 100.0 * solved / len(rows) if rows else 0.0
    return text + f"Coverage: {solved}/{len(rows)} ({coverage:.1f}%)\n"


def format_widths(results: Sequence[WidthResult]) -> str:
    """有效宽度表格；类别级最大宽度取各实例最大值"""
    body = []
    for r in results:
        status = "budget" if r.budget_exceeded else ("yes" if r.solved else "no")
        max_w = "-" if r.max_width is None else f"{r.max_width:.2f}"
        avg_w = "-" if r.avg_width is None else f"{r.avg_width:.2f}"
        body.append([r.instance, status, max_w, avg_w, str(r.length)])
    text = _align(["Instance", "Solved", "Max width", "Avg width", "Length"], body)
    solved = [r for r in results if r.solved]
    coverage = 100.0 * len(solved) / len(results) if results else 0.0
    max_width = max((r.max_width for r in solved), default=0)
    avg_width = max((r.avg_width for r in solved), default=0.0)
    return text + f"Coverage: {coverage:.1f}%  Max width: {max_width:.2f}  Avg width: {avg_width:.2f}\n"


def report_to_json(report: RunReport) -> Dict[str, Any]:
    return report.to_dict()


def save_report(reports: Union[RunReport, Sequence[RunReport]], path: Union[str, Path]):
    """单个报告写成对象，多个写成数组"""
    if isinstance(reports, RunReport):
        data: Any = report_to_json(reports)
    else:
        data = [report_to_json(r) for r in reports]
    Path(path).write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
