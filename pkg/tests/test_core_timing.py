# pytest tests/test_core_timing.py -v
import pytest

from machine.assembler import assemble
from machine.errors import IllegalInstruction
from pipeline.diagram import render_pipeline_diagram, stage_map
from pipeline.trace import LedgerCategory, StopReason
from tests.fixtures import machine_source, run_on_core, run_source, traced_settings

# Вся измеряемая программа умещается в одну линию I-cache (16 инструкций)
LOAD_LATENCY = """
    la   s0, buf
    lw   t1, 0(s0)
    csrr t0, cycle
    lw   t1, {offset}(s0)
    csrr t2, cycle
    sub  a0, t2, t0
"""

LOAD_USE = """
    la   s0, buf
    lw   t1, 0(s0)
    csrr t0, cycle
    lw   t1, 0(s0)
    {consumer}
    csrr t2, cycle
    sub  a0, t2, t0
"""


# Переход вперёд на первом исполнении предсказан как невзятый
MISPREDICT = """
    li   t0, 1
    bnez t0, target
    addi t1, t1, 1
    addi t2, t2, 1
    addi t3, t3, 1
target:
    nop
"""

# Горячий цикл из ALU-операций между двумя парами csrr
ALU_LOOP = """
    li   t0, 500
    csrr s2, cycle
    csrr s3, instret
loop:
    add  t1, t1, t2
    xor  t3, t3, t1
    addi t4, t4, 1
    sub  t5, t5, t4
    addi t0, t0, -1
    bnez t0, loop
    csrr s4, cycle
    csrr s5, instret
    sub  a0, s4, s2
    sub  a1, s5, s3
"""

FLUSH_ONLY = """
    la   s0, buf
    li   t0, 3
    sw   t0, 0(s0)
    flushx
    flushx
"""


def measured(body: str) -> int:
    core, event = run_source(machine_source(body))
    assert event.reason is StopReason.HALT
    return core.regs[10]


class TestLoadTiming:
    """Задержки загрузок, видимые через csrr cycle"""

    def test_hit_and_miss_latency(self):
        """Попадание и промах различаются на штраф промаха"""
        assert measured(LOAD_LATENCY.format(offset=0)) == 2
        assert measured(LOAD_LATENCY.format(offset=2048)) == 50

    def test_load_use_costs_one_cycle(self):
        independent = measured(LOAD_USE.format(consumer="add t3, t4, t5"))
        dependent = measured(LOAD_USE.format(consumer="add t3, t1, t1"))
        assert (independent, dependent) == (3, 4)


class TestControlFlow:
    """Промах предсказания и пропускная способность цикла"""

    def test_mispredict_squashes_two_younger_fetches(self):
        core, _ = run_source(machine_source(MISPREDICT), traced_settings())
        assert core.mispredicts == 1
        branch = next(r for r in core.records if r.text.startswith("bne")).pc
        assert sorted(r.pc for r in core.records if r.squashed) == [branch + 4, branch + 8]
        assert core.regs[6] == core.regs[7] == core.regs[28] == 0

    def test_warm_alu_loop_retires_one_per_cycle(self):
        core, _ = run_source(machine_source(ALU_LOOP))
        cycles, instructions = core.regs[10], core.regs[11]
        assert instructions == 500 * 6 + 2
        assert 1.0 <= cycles / instructions < 1.05


class TestCoreAccounting:
    """Счётчики и бухгалтерия тактов"""

    def test_ledger_matches_independent_counters(self):
        """Такты очистки из бухгалтерии равны занятости ME по трассам flushx"""
        core, _ = run_source(machine_source(FLUSH_ONLY))
        traces = core.flushx_traces
        assert [trace.dirty_lines for trace in traces] == [1, 0]
        assert core.ledger[LedgerCategory.FLUSH] == sum(trace.me_cycles for trace in traces) == 2 * 512 + 8
        assert core.ledger[LedgerCategory.RETIRE] == core.retired
        assert core.ledger.total() == core.cycle

    def test_retired_counts_instructions(self):
        core, _ = run_source(machine_source("    nop\n    nop\n"))
        assert core.retired == 3
        assert core.state.csr_instret == 3

    def test_user_program_exits_through_syscall(self):
        core, event = run_source("li a0, 7\nli a7, 0\necall\n")
        assert event.reason is StopReason.SYSCALL
        assert core.regs[10] == 7


class TestCoreFaults:
    def test_privileged_instruction_in_user_mode(self):
        """Исключение несёт такт, на котором инструкция дошла до EX"""
        with pytest.raises(IllegalInstruction) as info:
            run_source("nop\nflushx\n")
        assert info.value.cycle is not None and info.value.cycle > 0
        assert info.value.pc == 0x10004


class TestDiagram:
    def test_diagram_rows_follow_stages(self):
        core, _ = run_source(machine_source("    add t0, t1, t2\n"), traced_settings())
        retired = [record for record in core.records if not record.squashed]
        first = retired[0]
        cells = stage_map(first)
        assert cells[first.id_cycle] == "ID"
        assert cells[first.wb_cycle] == "WB"

        text = render_pipeline_diagram(retired)
        assert "add x5, x6, x7" in text
        assert len(text.splitlines()) == len(retired) + 1

    def test_empty_diagram(self):
        assert render_pipeline_diagram([]) == ""


def test_assembled_program_is_reused():
    """Одна сборка, два ядра: результаты совпадают"""
    program = assemble(machine_source(LOAD_LATENCY.format(offset=2048)))
    first, _ = run_on_core(program)
    second, _ = run_on_core(program)
    assert first.cycle == second.cycle
    assert first.regs == second.regs


def test_step_cycle_reports_occupancy_at_cycle_start():
    from config.typed_settings import CoreSettings
    from pipeline.core import Core, step_cycle

    core = Core(CoreSettings())
    core.bind(core.load(assemble("_start:\n    nop\n    halt\n")))
    start = core.cycle
    trace = step_cycle(core)
    assert trace.cycle == start
    assert trace.stages == (None,) * 5
    assert core.cycle == start + 1
