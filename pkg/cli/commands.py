"""
Командная строка симулятора: asm, disasm, run, attack, flushcost, overhead, config.

Приоритет настроек: значения по умолчанию < SIMF_* окружение < файл --config <
флаги. Код возврата 0 только если не было ни одной диагностики.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, TextIO

from config.logging import get_logger, setup_logging
from config.messages import CLI_MESSAGES
from config.typed_settings import ConfigError, SimulatorConfig, load_config
from channel.analysis import analyze_channel
from channel.heatmap import write_heatmap
from channel.prime_probe import SecretMode, VictimSpec, run_prime_probe
from channel.runner import run_prime_probe_parallel
from machine.assembler import assemble, disassemble_program
from machine.errors import AssemblyError, ImageFormatError, MachineFault, SimulatorError
from machine.image import from_image, to_image
from machine.program import Program
from overhead.measure import measure_flush_costs, measure_workload
from overhead.model import CurveValidationError
from overhead.sweep import frequency_grid, sweep, write_overhead_csv
from pipeline.core import Core
from pipeline.cosim import CosimDivergence, cosimulate
from pipeline.diagram import render_pipeline_diagram
from pipeline.scheduler import Scheduler, SchedulerConfig

logger = get_logger("cli")

EXIT_OK = 0
EXIT_DIAGNOSTIC = 1

DIAGRAM_INSTRUCTIONS = 40


def say(key: str, stream: Optional[TextIO] = None, **fields) -> None:
    print(CLI_MESSAGES[key].format(**fields), file=stream or sys.stdout)


def complain(key: str, **fields) -> int:
    say(key, stream=sys.stderr, **fields)
    return EXIT_DIAGNOSTIC


# ========================================
# РАЗБОР АРГУМЕНТОВ
# ========================================

def _on_off(value: str) -> bool:
    lowered = value.lower()
    if lowered not in ('on', 'off'):
        raise argparse.ArgumentTypeError(f"expected on or off, got '{value}'")
    return lowered == 'on'


def _frange(value: str) -> List[int]:
    try:
        low, high = (int(float(part)) for part in value.split(':'))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN:MAX in Hz, got '{value}'") from None
    return [low, high]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flushsim", description="In-order core simulator with flushx")
    parser.add_argument("--config", type=Path, help="INI file with [core], [scheduler], [experiment], [logging]")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="experiment seed")
    parser.add_argument("--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    commands = parser.add_subparsers(dest="command", required=True)

    asm = commands.add_parser("asm", help="assemble a source file into a program image")
    asm.add_argument("source", type=Path)
    asm.add_argument("-o", "--output", type=Path, help="image path (default <out>/<name>.img)")

    disasm = commands.add_parser("disasm", help="print the canonical listing of a source or image")
    disasm.add_argument("program", type=Path)

    run = commands.add_parser("run", help="run programs as contexts of one core")
    run.add_argument("programs", type=Path, nargs="+", help=".s sources or .img images")
    run.add_argument("--cosim", action="store_true", help="cross-check each program against the reference")
    run.add_argument("--trace", action="store_true", help="write the per-cycle trace to <out>/trace.txt")
    run.add_argument("--diagram", action="store_true", help="print a pipeline diagram of the first instructions")
    run.add_argument("--quantum", type=int, dest="quantum_cycles")
    run.add_argument("--flush-on-switch", type=_on_off, metavar="on|off")
    run.add_argument("--flush-on-trap", type=_on_off, metavar="on|off")
    run.add_argument("--rf-flush", type=_on_off, metavar="on|off", dest="rf_flush_enabled")
    run.add_argument("--max-cycles", type=int)

    attack = commands.add_parser("attack", help="Prime+Probe on the L1 D-cache")
    attack.add_argument("--flush", choices=("on", "off", "both"), default="both")
    attack.add_argument("--samples", type=int)
    attack.add_argument("--victim", choices=[mode.value for mode in SecretMode], default=SecretMode.RANDOM.value)
    attack.add_argument("--pattern", help="secret bits for --victim fixed, set 0 first")
    attack.add_argument("--per-way", action="store_true", default=None)
    attack.add_argument("--workers", type=int, help="worker processes, 0 = all CPUs, 1 = in-process")

    commands.add_parser("flushcost", help="compare flushx with the software flush routines")

    overhead = commands.add_parser("overhead", help="estimated flush overhead versus flush frequency")
    overhead.add_argument("--workload")
    overhead.add_argument("--clocks", help="comma-separated clock frequencies in Hz")
    overhead.add_argument("--frange", type=_frange, help="MIN:MAX flush frequency range in Hz")
    overhead.add_argument("--points", type=int, dest="grid_points")

    commands.add_parser("config", help="print the resolved configuration")
    return parser


def overrides_from(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """Флаги командной строки -> секции конфигурации"""
    get = lambda name: getattr(args, name, None)  # noqa: E731
    frange = get("frange")
    clocks = get("clocks")
    return {
        "core": {
            "rf_flush_enabled": get("rf_flush_enabled"),
            "trace_enabled": True if (get("trace") or get("diagram")) else None,
        },
        "scheduler": {
            "quantum_cycles": get("quantum_cycles"),
            "flush_on_switch": get("flush_on_switch"),
            "flush_on_trap": get("flush_on_trap"),
            "max_cycles": get("max_cycles"),
        },
        "experiment": {
            "seed": get("seed"),
            "output_dir": get("out"),
            "samples": get("samples"),
            "workers": get("workers"),
            "per_way": get("per_way"),
            "workload": get("workload"),
            "clocks_hz": [int(float(c)) for c in clocks.split(",") if c.strip()] if clocks else None,
            "fmin_hz": frange[0] if frange else None,
            "fmax_hz": frange[1] if frange else None,
            "grid_points": get("grid_points"),
        },
        "logging": {
            "log_level": get("log_level"),
        },
    }


def output_dir(config: SimulatorConfig) -> Path:
    path = Path(config.experiment.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def read_program(path: Path) -> Program:
    """Исходник .s или двоичный образ"""
    if path.suffix == ".img":
        return from_image(path.read_bytes())
    return assemble(path.read_text())


# ========================================
# КОМАНДЫ
# ========================================

def cmd_asm(args: argparse.Namespace, config: SimulatorConfig) -> int:
    program = assemble(args.source.read_text())
    image = args.output or output_dir(config) / f"{args.source.stem}.img"
    image.parent.mkdir(parents=True, exist_ok=True)
    image.write_bytes(to_image(program))
    say(
        "assembled", source=args.source, instructions=len(program.text),
        data=len(program.data), entry=program.entry, image=image,
    )
    return EXIT_OK


def cmd_disasm(args: argparse.Namespace, config: SimulatorConfig) -> int:
    sys.stdout.write(disassemble_program(read_program(args.program)))
    return EXIT_OK


def cmd_run(args: argparse.Namespace, config: SimulatorConfig) -> int:
    programs = []
    for path in args.programs:
        try:
            programs.append((path, read_program(path)))
        except AssemblyError as e:
            return complain("assembly_error", source=path, line=e.line, message=e.message)
    status = EXIT_OK
    if args.cosim:
        for path, program in programs:
            try:
                result = cosimulate(program, config.core.model_copy(update={'trace_enabled': False}))
            except CosimDivergence as e:
                status = complain("cosim_diverged", source=path, what=e.what, detail=e)
                continue
            say("cosim_ok", source=path, instructions=result.instructions, cycles=result.cycles, cpi=result.cpi)

    out = output_dir(config)
    core = Core(config.core)
    trace_file = open(out / "trace.txt", "w") if args.trace else None
    if trace_file is not None:
        core.trace_sink = lambda trace: trace_file.write(trace.format_line() + "\n")
    scheduler = Scheduler(core, SchedulerConfig.from_settings(config.scheduler))
    try:
        for path, program in programs:
            scheduler.add_program(program, name=path.stem)
        fault: Optional[MachineFault] = None
        try:
            report = scheduler.run()
        except MachineFault as e:
            fault = e
            report = scheduler.report()
    finally:
        if trace_file is not None:
            trace_file.close()

    report.write_csv(out / "run_report.csv")
    (out / "final_state.txt").write_text(_final_state(scheduler, core))
    if args.diagram and core.records:
        sys.stdout.write(render_pipeline_diagram(core.records[:DIAGRAM_INSTRUCTIONS]))
    if fault is not None:
        source = args.programs[fault.context] if fault.context is not None and fault.context < len(args.programs) else "run"
        return complain("fault", source=source, diagnostic=fault.diagnostic())
    say(
        "run_done", contexts=len(report.contexts), cycles=report.total_cycles,
        instructions=report.total_instructions, flushes=report.flushes, report=out / "run_report.csv",
    )
    return status


def _final_state(scheduler: Scheduler, core: Core) -> str:
    parts = []
    for context in sorted(scheduler.contexts.values(), key=lambda c: c.cid):
        state = context.state
        parts.append(
            f"[context {context.cid} {context.name}] pc=0x{state.pc:08x} mode={state.mode.value} "
            f"instret={state.csr_instret} halted={state.halted} exit_code={state.exit_code}\n"
            f"{state.format_registers()}\n"
        )
    ledger = " ".join(f"{name}={count}" for name, count in core.ledger.as_dict().items())
    parts.append(f"[cycles] total={core.cycle} {ledger}\n")
    parts.append("[sphere of flushing]\n" + core.sof_snapshot())
    return "\n".join(parts)


def cmd_attack(args: argparse.Namespace, config: SimulatorConfig) -> int:
    victim = VictimSpec(mode=SecretMode(args.victim), pattern=args.pattern)
    modes = {"on": (True,), "off": (False,), "both": (False, True)}[args.flush]
    out = output_dir(config)
    exp = config.experiment
    for flush_enabled in modes:
        if exp.workers == 1:
            probe_map = run_prime_probe(config, victim, flush_enabled)
        else:
            probe_map = run_prime_probe_parallel(config, victim, flush_enabled)
        metrics = analyze_channel(probe_map, core=config.core)
        tag = "on" if flush_enabled else "off"
        heatmap = write_heatmap(probe_map, out / f"heatmap_flush_{tag}.csv")
        metrics_path = out / f"metrics_flush_{tag}.txt"
        metrics_path.write_text(metrics.report())
        say("attack_done", flush=tag, samples=probe_map.samples, nsets=probe_map.nsets, heatmap=heatmap, metrics=metrics_path)
        sys.stdout.write(metrics.report())
    return EXIT_OK


def cmd_flushcost(args: argparse.Namespace, config: SimulatorConfig) -> int:
    costs = measure_flush_costs(config.core)
    path = output_dir(config) / "flushcost.csv"
    path.write_text(costs.csv_text())
    sys.stdout.write(costs.table())
    say("flushcost_done", path=path)
    return EXIT_OK


def cmd_overhead(args: argparse.Namespace, config: SimulatorConfig) -> int:
    exp = config.experiment
    costs = measure_flush_costs(config.core)
    stats = measure_workload(exp.workload, config.core)
    grid = frequency_grid(exp.fmin_hz, exp.fmax_hz, exp.grid_points)
    curves = sweep(stats, exp.clocks_hz, grid, costs)
    path = write_overhead_csv(curves, output_dir(config) / "overhead.csv")
    say("overhead_done", series=len(curves), points=len(grid), path=path)
    return EXIT_OK


def cmd_config(args: argparse.Namespace, config: SimulatorConfig) -> int:
    sys.stdout.write(config.to_ini())
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, SimulatorConfig], int]] = {
    "asm": cmd_asm,
    "disasm": cmd_disasm,
    "run": cmd_run,
    "attack": cmd_attack,
    "flushcost": cmd_flushcost,
    "overhead": cmd_overhead,
    "config": cmd_config,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, overrides_from(args))
    except ConfigError as e:
        setup_logging(level=args.log_level)
        return complain("config_error", message=e)

    setup_logging(
        level=config.logging.log_level,
        enable_json=config.logging.enable_json_logging,
        json_log_file=config.logging.json_log_file,
    )
    logger.debug(f"Command {args.command} with seed {config.experiment.seed}")

    source = getattr(args, "source", None) or getattr(args, "program", None) or args.command
    try:
        return COMMANDS[args.command](args, config)
    except AssemblyError as e:
        return complain("assembly_error", source=source, line=e.line, message=e.message)
    except ImageFormatError as e:
        return complain("image_error", source=source, message=e)
    except MachineFault as e:
        return complain("fault", source=source, diagnostic=e.diagnostic())
    except CurveValidationError as e:
        return complain("curve_error", message=e)
    except SimulatorError as e:
        return complain("simulator_error", message=e)
    except ValueError as e:
        return complain("config_error", message=e)
    except OSError as e:
        return complain("file_error", path=getattr(e, "filename", None) or source, message=e.strerror or e)
