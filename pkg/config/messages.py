"""
Тексты диагностик и отчётов командной строки
"""

CLI_MESSAGES = {
    # Ассемблер и образы
    "assembled": "{source}: {instructions} instructions, {data} data bytes, entry 0x{entry:08x} -> {image}",
    "assembly_error": "{source}:{line}: error: {message}",
    "image_error": "{source}: bad program image: {message}",

    # Исполнение
    "run_done": "{contexts} context(s): {cycles} cycles, {instructions} instructions, {flushes} flushes -> {report}",
    "fault": "{source}: {diagnostic}",
    "cosim_ok": "{source}: cosimulation OK, {instructions} instructions in {cycles} cycles (CPI {cpi:.3f})",
    "cosim_diverged": "{source}: cosimulation diverged at {what}: {detail}",

    # Эксперименты
    "attack_done": "flush={flush}: {samples} samples x {nsets} sets -> {heatmap}, {metrics}",
    "flushcost_done": "flush costs -> {path}",
    "overhead_done": "{series} series x {points} points -> {path}",

    # Общие ошибки
    "config_error": "config error: {message}",
    "file_error": "cannot read {path}: {message}",
    "simulator_error": "error: {message}",
    "curve_error": "overhead curve rejected: {message}",
}
