# pytest tests/test_overhead.py -v
from fractions import Fraction

import pytest
from pydantic import ValidationError

from machine.errors import SimulatorError
from overhead.measure import (
    FlushCosts, WorkloadStats, measure_flush_costs, measure_switch_overhead, measure_workload, workload_source,
)
from overhead.model import (
    CurveValidationError, Mechanism, OverheadCurve, OverheadParams, crossing_frequency, estimate_overhead, slope,
)
from overhead.sweep import OVERHEAD_COLUMNS, emit_overhead_csv, frequency_grid, sweep, validate_curves, write_overhead_csv

# C · N_cyc / N_ins = 10^4
ANCHOR = dict(clock_hz=100_000_000, flush_hz=1_000, flush_instr_cost=2_000, base_cycles=5_000_000, base_instrs=1_000_000)

COSTS = FlushCosts(c_opt=1, cyc_opt=4611, c_norm=2090, cyc_norm=40_000, c_l1_only=2085, cyc_l1_only=39_000, dirty_lines=512)
STATS = WorkloadStats(name="synthetic", cycles=150_000, instructions=100_000)


class TestEstimate:
    """Оценка доли инструкций очистки"""

    def test_anchor_is_exactly_ten_percent(self):
        assert estimate_overhead(OverheadParams(**ANCHOR)) == Fraction(1, 10)

    def test_faster_clock_means_fewer_flushes(self):
        assert estimate_overhead(OverheadParams(**{**ANCHOR, 'clock_hz': 10 ** 9})) == Fraction(1, 100)

    def test_zero_frequency(self):
        assert estimate_overhead(OverheadParams(**{**ANCHOR, 'flush_hz': 0})) == 0

    def test_linear_in_frequency(self):
        params = OverheadParams(**ANCHOR)
        doubled = OverheadParams(**{**ANCHOR, 'flush_hz': 2_000})
        assert estimate_overhead(doubled) == 2 * estimate_overhead(params)
        assert slope(params) * 1_000 == estimate_overhead(params)

    def test_crossing_frequency(self):
        """Оценка доходит до 100% при 10 кГц"""
        assert crossing_frequency(OverheadParams(**ANCHOR)) == 10_000

    @pytest.mark.parametrize("field, value", [
        ('flush_hz', -1),
        ('clock_hz', 0),
        ('base_instrs', 0),
        ('flush_hz', 200_000_000),
        ('flush_instr_cost', True),
    ])
    def test_domain_errors(self, field, value):
        with pytest.raises(ValidationError):
            OverheadParams(**{**ANCHOR, field: value})

    def test_float_inputs_are_exact(self):
        params = OverheadParams(**{**ANCHOR, 'flush_hz': 0.5})
        assert params.flush_hz == Fraction(1, 2)


class TestSweep:
    """Сетка частот и серии"""

    def test_grid_bounds_and_order(self):
        grid = frequency_grid(100, 50_000, 25)
        assert grid[0] == 100 and grid[-1] == 50_000
        assert grid == sorted(set(grid))

    def test_grid_deduplicates(self):
        assert frequency_grid(1, 3, 50) == [1, 2, 3]

    def test_bad_range(self):
        with pytest.raises(ValueError):
            frequency_grid(100, 100)

    def test_ratio_holds_everywhere(self):
        curves = sweep(STATS, [100_000_000, 1_000_000_000], frequency_grid(), COSTS)
        assert len(curves) == 4
        validate_curves(curves)
        opt, norm = curves[0], curves[1]
        for (_, a), (_, b) in zip(opt.points, norm.points):
            assert a <= b
            assert b == a * 2090

    def test_decreasing_curve_rejected(self):
        curve = OverheadCurve(
            clock_hz=100, mechanism=Mechanism.OPT, flush_instr_cost=Fraction(1),
            points=[(1, Fraction(2)), (2, Fraction(1))],
        )
        with pytest.raises(CurveValidationError, match="decreases"):
            validate_curves([curve])

    def test_broken_ratio_rejected(self):
        curves = sweep(STATS, [100_000_000], [100, 200], COSTS)
        tampered = curves[1].model_copy(update={'points': [(100, Fraction(1)), (200, Fraction(3))]})
        with pytest.raises(CurveValidationError, match="ratio"):
            validate_curves([curves[0], tampered])

    def test_csv(self, tmp_path):
        curves = sweep(STATS, [100_000_000], [100, 1_000], COSTS)
        text = emit_overhead_csv(curves)
        lines = text.splitlines()
        assert lines[0] == ",".join(OVERHEAD_COLUMNS)
        assert len(lines) == 1 + 2 * 2
        assert lines[1].startswith("100000000,opt,100,")
        path = write_overhead_csv(curves, tmp_path / "overhead.csv")
        assert path.read_text() == text


class TestMeasurements:
    """Стоимости и нагрузки, измеренные на ядре"""

    @pytest.fixture(scope="class")
    def costs(self):
        return measure_flush_costs()

    def test_flushx_is_one_instruction(self, costs):
        assert costs.c_opt == 1
        assert costs.dirty_lines == 512
        # слив, 512 тактов массива, запись 512 грязных линий, WB
        assert costs.cyc_opt > 512 + 8 * 512

    def test_software_loop_costs(self, costs):
        assert costs.c_norm == 2090
        assert costs.c_l1_only < costs.c_norm
        assert costs.cyc_norm > costs.cyc_opt
        assert costs.instruction_reduction == 2090

    def test_cost_table_and_csv(self, costs):
        assert costs.csv_text().splitlines()[1] == f"flushx,{costs.cyc_opt},1"
        assert "baseline/flushx" in costs.table()

    def test_workload_stats(self):
        stats = measure_workload("mix", iterations=50)
        assert stats.instructions > 50 * 10
        assert stats.cpi >= 1.0

    def test_unknown_workload(self):
        with pytest.raises(SimulatorError, match="unknown workload"):
            workload_source("nonexistent")

    def test_switch_closure(self):
        """Измеренная доля при очистке на каждом переключении сходится с оценкой"""
        closure = measure_switch_overhead()
        assert closure.flushes > 0
        assert closure.within_tolerance, closure.relative_error
