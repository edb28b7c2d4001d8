"""Result CSVs, aggregation over repetitions and the plain-text table."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

from ..metrics import COMPONENTS, summarize
from .experiment import CellTiming, ResultRow

RESULT_COLUMNS = ["method", "setting", "lambda", "ratio", "rep", "ap_all", "ap_global", "ap_local",
                  "uploads", "downloads", "status", "error"]
BEST, SECOND = "*", "^"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _parse(v: str) -> float | None:
    return None if v == "" else float(v)


def write_results_csv(path, rows: Iterable[ResultRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([r.method, r.setting, r.lam, _fmt(float(r.ratio)), r.rep, _fmt(r.ap_all), _fmt(r.ap_global),
                        _fmt(r.ap_local), r.uploads, r.downloads, r.status, r.error])


def read_results_csv(path) -> list[ResultRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            ResultRow(d["method"], d["setting"], int(d["lambda"]), float(d["ratio"]), int(d["rep"]),
                      _parse(d["ap_all"]), _parse(d["ap_global"]), _parse(d["ap_local"]),
                      int(d["uploads"]), int(d["downloads"]), d["status"], d["error"])
            for d in reader
        ]


def write_timings_csv(path, timings: Iterable[CellTiming]) -> None:
    names = [f.name for f in fields(CellTiming)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for t in timings:
            w.writerow([f"{v:.3f}" if isinstance(v, float) else v for v in (getattr(t, n) for n in names)])


@dataclass(frozen=True)
class AggregateRow:
    method: str
    setting: str
    lam: int
    ratio: float
    n: int
    failures: int
    mean: dict
    std: dict
    marks: dict  # component -> "", BEST or SECOND


def _rank_marks(group: list[AggregateRow], component: str) -> dict[str, str]:
    """Best and second-best mean among methods other than CA."""
    ranked = [r for r in group if r.method != "CA" and r.mean[component] is not None]
    if len(ranked) < 2:
        return {}
    ranked.sort(key=lambda r: -r.mean[component])
    top = ranked[0].mean[component]
    marks = {r.method: BEST for r in ranked if r.mean[component] == top}
    rest = [r for r in ranked if r.method not in marks]
    if rest:
        second = rest[0].mean[component]
        marks.update({r.method: SECOND for r in rest if r.mean[component] == second})
    return marks


def aggregate(rows: Sequence[ResultRow]) -> list[AggregateRow]:
    groups: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.method, r.setting, r.lam, r.ratio), []).append(r)
    out = []
    for (method, setting, lam, ratio), members in groups.items():
        ok = [r for r in members if r.status == "ok"]
        stats = {c: summarize([getattr(r, c) for r in ok]) for c in COMPONENTS}
        out.append(AggregateRow(method, setting, lam, ratio, len(ok), len(members) - len(ok),
                                {c: s.mean for c, s in stats.items()}, {c: s.std for c, s in stats.items()}, {}))
    ranked = []
    cells: dict[tuple, list[AggregateRow]] = {}
    for a in out:
        cells.setdefault((a.setting, a.lam, a.ratio), []).append(a)
    for group in cells.values():
        marks = {c: _rank_marks(group, c) for c in COMPONENTS}
        for a in group:
            ranked.append(AggregateRow(a.method, a.setting, a.lam, a.ratio, a.n, a.failures, a.mean, a.std,
                                       {c: marks[c].get(a.method, "") for c in COMPONENTS}))
    order = list(dict.fromkeys(r.method for r in rows))
    ranked.sort(key=lambda a: (a.setting, a.lam, -a.ratio, order.index(a.method)))
    return ranked


def _annotation(a: AggregateRow) -> str:
    parts = []
    for mark, word in ((BEST, "best"), (SECOND, "second")):
        comps = [c for c in COMPONENTS if a.marks[c] == mark]
        if comps:
            parts.append(f"{word}:{'+'.join(comps)}")
    return ";".join(parts)


def write_aggregate_csv(path, agg: Iterable[AggregateRow]) -> None:
    header = ["method", "setting", "lambda", "ratio", "n", "failures"]
    for c in COMPONENTS:
        header += [f"mean_{c}", f"std_{c}"]
    header.append("annotation")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for a in agg:
            row = [a.method, a.setting, a.lam, _fmt(float(a.ratio)), a.n, a.failures]
            for c in COMPONENTS:
                row += [_fmt(a.mean[c]), _fmt(a.std[c])]
            row.append(_annotation(a))
            w.writerow(row)


def _cell(a: AggregateRow, c: str) -> str:
    m, s = a.mean[c], a.std[c]
    if m is None:
        return "-"
    spread = "-" if s is None or math.isnan(s) else f"{s:.3f}"
    return f"{m:.3f} ({spread}){a.marks[c]}"


def format_table(agg: Sequence[AggregateRow]) -> str:
    """One block per (setting, ratio): methods down, AP components per lambda across."""
    blocks = []
    keys = list(dict.fromkeys((a.setting, a.ratio) for a in agg))
    for setting, ratio in keys:
        part = [a for a in agg if a.setting == setting and a.ratio == ratio]
        lams = sorted({a.lam for a in part})
        methods = list(dict.fromkeys(a.method for a in part))
        header = ["method"] + [f"l={lam} {c}" for lam in lams for c in COMPONENTS]
        lines = [header]
        for m in methods:
            row = [m]
            for lam in lams:
                match = [a for a in part if a.method == m and a.lam == lam]
                row += [_cell(match[0], c) if match else "" for c in COMPONENTS]
            lines.append(row)
        widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
        text = "\n".join("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in lines)
        blocks.append(f"setting={setting} ratio={ratio:g}\n{text}")
    legend = f"{BEST} best, {SECOND} second best among methods other than CA; (std over repetitions)"
    return "\n\n".join(blocks) + "\n\n" + legend + "\n"


def write_report(out_dir, rows: Sequence[ResultRow], timings: Sequence[CellTiming] | None = None) -> list[AggregateRow]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(out / "results.csv", rows)
    agg = aggregate(rows)
    write_aggregate_csv(out / "summary.csv", agg)
    (out / "table.txt").write_text(format_table(agg))
    if timings is not None:
        write_timings_csv(out / "timings.csv", timings)
    return agg
