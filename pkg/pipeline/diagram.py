"""
Диаграмма конвейера: строка на инструкцию, столбец на такт.
Для коротких трасс (отладка, тесты таймингов).
"""

from typing import Dict, Iterable, List, Optional

from pipeline.trace import STAGES, InstrRecord

CELL = 4
MAX_COLUMNS = 80


def stage_map(record: InstrRecord) -> Dict[int, str]:
    """Такт -> стадия, в которой инструкция находилась в этом такте"""
    cycles = record.stage_cycles()
    cells: Dict[int, str] = {}
    last: Optional[int] = None
    for position, (stage, start) in enumerate(zip(STAGES, cycles)):
        if start is None:
            break
        following = next((c for c in cycles[position + 1:] if c is not None), None)
        if following is not None:
            end = following - 1
        elif stage == "ME":
            end = start + max(record.me_cycles, 1) - 1
        else:
            end = start
        for cycle in range(start, end + 1):
            cells[cycle] = stage
        last = end
    if record.squashed and last is not None:
        cells[last + 1] = "x"
    return cells


def render_pipeline_diagram(records: Iterable[InstrRecord], max_columns: int = MAX_COLUMNS) -> str:
    rows = sorted(records, key=lambda r: r.seq)
    if not rows:
        return ""
    maps = [stage_map(record) for record in rows]
    first = min(min(cells) for cells in maps if cells)
    last = max(max(cells) for cells in maps if cells)
    last = min(last, first + max_columns - 1)
    label_width = max(len(record.text) for record in rows) + 2

    lines: List[str] = ["".ljust(label_width) + "".join(f"{c:>{CELL}}" for c in range(first, last + 1))]
    for record, cells in zip(rows, maps):
        row = "".join(f"{cells.get(c, '.'):>{CELL}}" for c in range(first, last + 1))
        lines.append(record.text.ljust(label_width) + row)
    return "\n".join(lines) + "\n"
