# pytest tests/test_flushx.py -v
import pytest

from machine.assembler import assemble
from machine.generator import random_program
from pipeline.core import Core
from pipeline.cosim import cosimulate
from pipeline.trace import StopReason, check_serialization
from tests.fixtures import core_settings, machine_source, run_on_core, run_source, traced_settings

CLEAN_DCACHE_LINES = 64 * 8
WRITEBACK_CYCLES = 8

SCHEDULE_BODY = """
    add  t0, t1, t2
    flushx
    add  t3, t4, t5
"""

DIRTY_BODY = """
    la   s0, buf
    li   t0, 0x5a5a
    sw   t0, 0(s0)
    sw   t0, 64(s0)
    sw   t0, 128(s0)
    flushx
"""

FLUSHX_SEEDS = range(0, 30, 3)
PRE_STATE_SEEDS = range(100)
WRITEBACK_SEEDS = range(100)
ORDERING_SEEDS = range(50)


class TestFlushxSchedule:
    """Расписание flushx в конвейере"""

    @pytest.fixture
    def traced(self):
        core, event = run_source(machine_source(SCHEDULE_BODY), traced_settings())
        assert event.reason is StopReason.HALT
        return core

    def test_drain_clean_flush_and_single_wb(self, traced):
        """Слив старших, по такту на линию в ME, остальная очистка в одном такте WB"""
        trace, = traced.flushx_traces
        assert trace.drain_cycles == 4
        assert trace.ex_cycle == trace.id_cycle + 3
        assert trace.me_cycles == CLEAN_DCACHE_LINES
        assert trace.wb_cycle == trace.me_start + trace.me_cycles
        assert trace.total_cycles == 4 + CLEAN_DCACHE_LINES + 1
        assert not trace.injected

    def test_younger_fetched_after_wb(self, traced):
        trace = traced.flushx_traces[0]
        younger = next(r for r in traced.records if r.text == "add x28, x29, x30" and not r.squashed)
        assert younger.if_cycle == trace.wb_cycle + 1

    def test_older_retired_before_ex(self, traced):
        older = next(r for r in traced.records if r.text == "add x5, x6, x7")
        assert older.wb_cycle < traced.flushx_traces[0].ex_cycle

    def test_no_serialization_violations(self, traced):
        assert check_serialization(traced.records) == []


class TestFlushxCost:
    """Стоимость ME: линии массива плюс запись грязных"""

    def test_dirty_lines_are_written_back(self):
        program = assemble(machine_source(DIRTY_BODY))
        core, _ = run_on_core(program)
        trace = core.flushx_traces[0]
        assert trace.dirty_lines == 3
        assert trace.me_cycles == CLEAN_DCACHE_LINES + 3 * WRITEBACK_CYCLES
        buf = program.symbols['buf']
        assert [core.memory.read_word(buf + offset) for offset in (0, 64, 128)] == [0x5A5A] * 3

    def test_register_file_cleared_when_enabled(self):
        core, _ = run_source(machine_source("    li t0, 9\n    flushx\n"), core_settings(rf_flush_enabled=True))
        assert core.regs[5] == 0
        assert core.flushx_traces[0].rf_flushed

    def test_register_file_kept_by_default(self):
        core, _ = run_source(machine_source("    li t0, 9\n    flushx\n"))
        assert core.regs[5] == 9


class TestSphereOfFlush:
    """После flushx сфера очистки в состоянии сброса, независимо от истории"""

    @pytest.mark.parametrize("seed", range(5))
    def test_injected_flushx_resets_state(self, seed):
        core, _ = run_on_core(random_program(seed))
        assert not core.sof_is_reset()
        dirty = core.dcache.dirty_count()
        trace = core.execute_flushx()
        assert trace.injected
        assert trace.dirty_lines == dirty
        assert trace.me_cycles == CLEAN_DCACHE_LINES + WRITEBACK_CYCLES * dirty
        assert core.sof_is_reset()

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", PRE_STATE_SEEDS)
    def test_reset_from_many_pre_states(self, seed):
        core, _ = run_on_core(random_program(seed))
        dirty = core.dcache.dirty_count()
        trace = core.execute_flushx()
        assert trace.me_cycles == CLEAN_DCACHE_LINES + WRITEBACK_CYCLES * dirty
        assert core.sof_is_reset()

    def test_snapshots_equal_after_different_histories(self):
        first, _ = run_on_core(random_program(1))
        second, _ = run_on_core(random_program(2))
        assert first.sof_snapshot() != second.sof_snapshot()
        first.execute_flushx()
        second.execute_flushx()
        assert first.sof_snapshot() == second.sof_snapshot()


class TestFlushxPrograms:
    """Программы с flushx: архитектурный результат и упорядочение"""

    @pytest.mark.parametrize("seed", FLUSHX_SEEDS)
    def test_writeback_preserves_memory(self, seed):
        """Ко-симуляция сравнивает память после всех очисток"""
        result = cosimulate(random_program(seed, flushx=True))
        assert result.fault is None

    @pytest.mark.parametrize("seed", FLUSHX_SEEDS)
    def test_traced_ordering(self, seed):
        core, event = run_on_core(random_program(seed, flushx=True), traced_settings())
        assert event.reason is StopReason.HALT
        assert core.flushes >= 1
        assert check_serialization(core.records) == []

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", WRITEBACK_SEEDS)
    def test_writeback_on_many_programs(self, seed):
        assert cosimulate(random_program(seed, flushx=True)).fault is None

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", ORDERING_SEEDS)
    def test_ordering_on_many_programs(self, seed):
        core, event = run_on_core(random_program(seed, flushx=True), traced_settings())
        assert event.reason is StopReason.HALT
        assert len(core.flushx_traces) == core.flushes >= 1
        assert check_serialization(core.records) == []


def test_execute_flushx_operation_matches_method():
    from pipeline.core import execute_flushx

    first, _ = run_on_core(random_program(7))
    second, _ = run_on_core(random_program(7))
    assert execute_flushx(first) == second.execute_flushx()
    assert first.cycle == second.cycle


@pytest.mark.parametrize("seed", range(3))
def test_cycle_trace_does_not_change_timing(seed):
    """Потактовая трасса и промотка простоев дают одно и то же расписание"""
    plain = Core()
    plain.bind(plain.load(random_program(seed)))
    plain.run()

    traced = Core()
    cycles = []
    traced.trace_sink = cycles.append
    traced.bind(traced.load(random_program(seed)))
    traced.run()

    assert plain.execute_flushx() == traced.execute_flushx()
    assert plain.cycle == traced.cycle == len(cycles)
    assert plain.ledger.as_dict() == traced.ledger.as_dict()
