"""
Сетка оценок накладных расходов: частоты ядра × механизмы × частоты очистки.
CSV: clock_hz,mechanism,flush_hz,overhead.
"""

import csv
import io
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np

from config import settings
from config.logging import get_logger
from overhead.measure import FlushCosts, WorkloadStats
from overhead.model import CurveValidationError, Mechanism, OverheadCurve, OverheadParams, estimate_overhead

logger = get_logger("overhead.sweep")

OVERHEAD_COLUMNS = ("clock_hz", "mechanism", "flush_hz", "overhead")


def frequency_grid(
    fmin: int = settings.OVERHEAD_FMIN_HZ,
    fmax: int = settings.OVERHEAD_FMAX_HZ,
    points: int = settings.OVERHEAD_GRID_POINTS,
) -> List[int]:
    """Целые частоты, равномерные в логарифме, без повторов, с обеими границами"""
    if not 0 < fmin < fmax:
        raise ValueError(f"bad frequency range [{fmin}, {fmax}]")
    grid = np.unique(np.rint(np.geomspace(fmin, fmax, points)).astype(np.int64))
    grid[0], grid[-1] = fmin, fmax
    return [int(f) for f in grid]


def sweep(
    stats: WorkloadStats,
    clocks: Sequence[int],
    grid: Sequence[int],
    costs: FlushCosts,
    mechanisms: Iterable[Mechanism] = (Mechanism.OPT, Mechanism.NORM),
) -> List[OverheadCurve]:
    mechanisms = tuple(mechanisms)
    curves = []
    for clock in clocks:
        for mechanism in mechanisms:
            cost = costs.instructions(mechanism)
            points = [
                (f, estimate_overhead(OverheadParams(
                    clock_hz=clock,
                    flush_hz=f,
                    flush_instr_cost=cost,
                    base_cycles=stats.cycles,
                    base_instrs=stats.instructions,
                )))
                for f in grid
            ]
            curves.append(OverheadCurve(clock_hz=clock, mechanism=mechanism, flush_instr_cost=cost, points=points))
    logger.info(f"Sweep: {len(curves)} series x {len(grid)} points for workload {stats.name}")
    return curves


def validate_curves(curves: Sequence[OverheadCurve]) -> None:
    """Монотонность каждой серии и постоянное отношение opt/norm = C_opt/C_norm"""
    for curve in curves:
        curve.validate_monotonic()
    by_clock = {}
    for curve in curves:
        by_clock.setdefault(curve.clock_hz, {})[curve.mechanism] = curve
    for clock, pair in by_clock.items():
        opt, norm = pair.get(Mechanism.OPT), pair.get(Mechanism.NORM)
        if opt is None or norm is None:
            continue
        for (f, a), (g, b) in zip(opt.points, norm.points):
            if f != g or a * norm.flush_instr_cost != b * opt.flush_instr_cost:
                raise CurveValidationError(f"opt/norm ratio breaks at {f} Hz for clock {clock}")


def emit_overhead_csv(curves: Sequence[OverheadCurve]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(OVERHEAD_COLUMNS)
    for curve in curves:
        for f, overhead in curve.points:
            writer.writerow((curve.clock_hz, curve.mechanism.value, f, repr(float(overhead))))
    return buffer.getvalue()


def write_overhead_csv(curves: Sequence[OverheadCurve], path: Union[str, Path]) -> Path:
    """Проверяет кривые и только потом пишет файл"""
    validate_curves(curves)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(emit_overhead_csv(curves))
    return path
