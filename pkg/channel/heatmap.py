"""
Тепловая карта проб в CSV: sample,set,latency_cycles.
Строки идут по выборкам, внутри выборки по наборам; выборки нумеруются с 1.
"""

import csv
import io
from pathlib import Path
from typing import Union

import numpy as np

from channel.prime_probe import ProbeMap

HEATMAP_COLUMNS = ("sample", "set", "latency_cycles")


def emit_heatmap(probe_map: ProbeMap) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(HEATMAP_COLUMNS)
    for sample, row in enumerate(probe_map.latency.tolist(), start=1):
        writer.writerows((sample, index, value) for index, value in enumerate(row))
    return buffer.getvalue()


def write_heatmap(probe_map: ProbeMap, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(emit_heatmap(probe_map))
    return path


def parse_heatmap(text: str) -> ProbeMap:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != HEATMAP_COLUMNS:
        raise ValueError(f"unexpected heatmap header {header}")
    rows = np.array([[int(field) for field in row] for row in reader if row], dtype=np.int64)
    if rows.size == 0:
        raise ValueError("heatmap has no data rows")
    samples = int(rows[:, 0].max())
    nsets = int(rows[:, 1].max()) + 1
    if rows.shape[0] != samples * nsets:
        raise ValueError(f"heatmap has {rows.shape[0]} rows, expected {samples} x {nsets}")
    latency = np.zeros((samples, nsets), dtype=np.int64)
    latency[rows[:, 0] - 1, rows[:, 1]] = rows[:, 2]
    return ProbeMap(latency)


def read_heatmap(path: Union[str, Path]) -> ProbeMap:
    return parse_heatmap(Path(path).read_text())


def column_means(probe_map: ProbeMap) -> np.ndarray:
    """Средняя задержка по каждому набору (столбцу карты)"""
    return probe_map.latency.mean(axis=0)
