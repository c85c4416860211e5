# pytest tests/test_scheduler.py -v
import pytest

from machine.assembler import assemble
from pipeline.core import Core
from pipeline.scheduler import REPORT_COLUMNS, Scheduler, SchedulerConfig, TrapOutcome, run_scheduled


def exiting(code: int) -> str:
    return f"li a0, {code}\nli a7, 0\necall\n"


def counting(iterations: int, code: int) -> str:
    """Цикл на iterations итераций, затем выход с кодом"""
    return (
        f"li t0, {iterations}\n"
        "loop:\n"
        "addi t0, t0, -1\n"
        "bnez t0, loop\n"
        + exiting(code)
    )


YIELDING = "li a7, 1\necall\n" + exiting(1)
SPINNING = "spin:\nj spin\n"

TRAP_HANDLER_BASE = 0x20000
TRAP_HANDLER = f""".mode machine
.text 0x{TRAP_HANDLER_BASE:x}
_start:
    bnez a0, stop
    mret
stop:
    halt
"""
# Первый ecall возвращается через mret, второй останавливает контекст
TRAPPING = "li a0, 0\necall\nli t1, 1\nli a0, 1\necall\n"


class TestRoundRobin:
    """Очередь контекстов и кванты"""

    def test_programs_run_to_exit(self):
        report = run_scheduled([assemble(exiting(3)), assemble(exiting(4))])
        assert [row.exit_code for row in report.contexts] == [3, 4]
        assert all(row.halted for row in report.contexts)
        assert report.total_instructions == 6

    def test_small_quantum_interleaves(self):
        programs = [assemble(counting(3000, 0)), assemble(counting(3000, 1))]
        report = run_scheduled(programs, SchedulerConfig(quantum_cycles=500))
        assert report.switches > 4
        assert report.flushes == 0
        assert [row.exit_code for row in report.contexts] == [0, 1]

    def test_cycles_are_attributed_to_contexts(self):
        programs = [assemble(counting(500, 0)), assemble(counting(500, 0))]
        report = run_scheduled(programs, SchedulerConfig(quantum_cycles=300))
        assert sum(row.cycles for row in report.contexts) == report.total_cycles

    def test_yield_passes_control(self):
        core = Core()
        scheduler = Scheduler(core)
        first = scheduler.add_program(assemble(YIELDING), name="yielder")
        second = scheduler.add_program(assemble(exiting(2)))
        report = scheduler.run()
        assert report.switches >= 2
        assert (first.state.exit_code, second.state.exit_code) == (1, 2)
        assert first.name == "yielder" and second.name == "ctx1"

    def test_cycle_limit_stops_spinning_context(self):
        report = run_scheduled([assemble(SPINNING)], SchedulerConfig(quantum_cycles=1000), max_cycles=5000)
        assert not report.contexts[0].halted
        assert report.total_cycles >= 5000

    def test_single_context_longer_than_quantum(self):
        """Конец кванта без другого кандидата продолжает тот же контекст"""
        report = run_scheduled([assemble(counting(3000, 5))], SchedulerConfig(quantum_cycles=500))
        row, = report.contexts
        assert row.halted and row.exit_code == 5
        assert report.switches == 0
        assert report.total_cycles < SchedulerConfig().max_cycles

    def test_survivor_continues_after_short_context_exits(self):
        programs = [assemble(exiting(7)), assemble(counting(3000, 8))]
        report = run_scheduled(programs, SchedulerConfig(quantum_cycles=500))
        assert [row.exit_code for row in report.contexts] == [7, 8]
        assert all(row.halted for row in report.contexts)
        assert report.switches == 1

    def test_empty_scheduler(self):
        with pytest.raises(ValueError):
            Scheduler(Core()).run()


class TestFlushPolicies:
    """Очистка на переключении и на каждом переходе в ядро"""

    def test_flush_on_switch(self):
        programs = [assemble(counting(2000, 0)), assemble(counting(2000, 0))]
        report = run_scheduled(programs, SchedulerConfig(quantum_cycles=1000, flush_on_switch=True))
        assert report.flushes > 0
        assert report.flushes == sum(row.flushes for row in report.contexts)
        assert report.flush_cycles >= report.flushes * 512

    @pytest.mark.parametrize("calls", [0, 1, 3])
    def test_flush_on_trap(self, calls):
        """Вход и выход каждого вызова; на выходе из exit очищать некому"""
        source = "li a7, 7\necall\n" * calls + exiting(0)
        report = run_scheduled([assemble(source)], SchedulerConfig(flush_on_trap=True))
        assert report.flushes == 2 * calls + 1
        assert report.contexts[0].flushes == 2 * calls + 1
        assert report.contexts[0].exit_code == 0

    def test_flush_on_trap_vector_entry_and_return(self):
        """С вектором ловушек ecall входит в обработчик, mret возвращает"""
        core = Core()
        core.load(assemble(TRAP_HANDLER))
        scheduler = Scheduler(core, SchedulerConfig(flush_on_trap=True))
        context = scheduler.add_program(assemble(TRAPPING))
        context.state.tvec = TRAP_HANDLER_BASE
        report = scheduler.run()
        # вход, mret, снова вход; halt в обработчике без очистки
        assert report.flushes == 3
        assert report.contexts[0].halted
        assert context.state.regs[6] == 1

    def test_custom_syscall_handler(self):
        """Обработчик может потребовать очистку и остановить цикл"""
        core = Core()
        scheduler = Scheduler(core)
        scheduler.register_syscall(42, lambda sched, ctx: TrapOutcome(flush=True, stop=True))
        scheduler.add_program(assemble("li a7, 42\necall\n" + exiting(0)))
        report = scheduler.run()
        assert report.flushes == 1
        assert not report.contexts[0].halted
        assert core.sof_is_reset()


def test_report_csv():
    report = run_scheduled([assemble(exiting(0))])
    header, row = report.csv_text().splitlines()
    assert header == ",".join(REPORT_COLUMNS)
    assert row.startswith("0,")
