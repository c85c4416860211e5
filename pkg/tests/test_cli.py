# pytest tests/test_cli.py -v
import pytest

from cli.commands import EXIT_DIAGNOSTIC, EXIT_OK, main

PROGRAM = """
_start:
    li   a0, 5
    li   a7, 0
    ecall
"""

SMALL_INI = """
[core]
dcache_nsets = 16
dcache_assoc = 4

[experiment]
batch_samples = 2
"""


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """Рабочий каталог теста: логи и выходные файлы не попадают в репозиторий"""
    monkeypatch.chdir(tmp_path)
    out = tmp_path / "out"
    return tmp_path, out


def write(path, text):
    path.write_text(text)
    return path


class TestProgramCommands:
    """asm, disasm, run"""

    def test_asm_then_disasm_image(self, workspace, capsys):
        root, out = workspace
        source = write(root / "prog.s", PROGRAM)
        assert main(["--out", str(out), "asm", str(source)]) == EXIT_OK
        image = out / "prog.img"
        assert image.exists()
        assert "3 instructions" in capsys.readouterr().out

        assert main(["--out", str(out), "disasm", str(image)]) == EXIT_OK
        assert "ecall" in capsys.readouterr().out

    def test_run_writes_report_and_state(self, workspace, capsys):
        root, out = workspace
        source = write(root / "prog.s", PROGRAM)
        assert main(["--out", str(out), "run", "--cosim", str(source), str(source)]) == EXIT_OK
        report = (out / "run_report.csv").read_text().splitlines()
        assert report[0] == "context,cycles,instructions,flushes"
        assert len(report) == 3
        state = (out / "final_state.txt").read_text()
        assert "exit_code=5" in state
        assert "[sphere of flushing]" in state
        assert "cosimulation OK" in capsys.readouterr().out

    def test_run_trace_and_diagram(self, workspace, capsys):
        root, out = workspace
        source = write(root / "prog.s", PROGRAM)
        assert main(["--out", str(out), "run", "--trace", "--diagram", str(source)]) == EXIT_OK
        assert "IF=" in (out / "trace.txt").read_text()
        assert "addi x10, x0, 5" in capsys.readouterr().out

    def test_flush_on_switch_flag(self, workspace):
        root, out = workspace
        source = write(root / "prog.s", PROGRAM)
        assert main(["--out", str(out), "run", "--flush-on-switch", "on", str(source), str(source)]) == EXIT_OK
        rows = (out / "run_report.csv").read_text().splitlines()[1:]
        assert sum(int(row.split(",")[3]) for row in rows) >= 1

    def test_fault_is_a_diagnostic(self, workspace, capsys):
        root, out = workspace
        source = write(root / "bad.s", "nop\nflushx\n")
        assert main(["--out", str(out), "run", str(source)]) == EXIT_DIAGNOSTIC
        err = capsys.readouterr().err
        assert "illegal-instruction" in err and "pc=0x00010004" in err
        assert (out / "run_report.csv").exists()

    def test_assembly_error_has_line(self, workspace, capsys):
        root, out = workspace
        source = write(root / "broken.s", "nop\nbogus t0\n")
        assert main(["--out", str(out), "asm", str(source)]) == EXIT_DIAGNOSTIC
        assert "broken.s:2: error: unknown mnemonic" in capsys.readouterr().err

    def test_bad_image(self, workspace, capsys):
        root, out = workspace
        image = root / "junk.img"
        image.write_bytes(b"\x00" * 64)
        assert main(["--out", str(out), "disasm", str(image)]) == EXIT_DIAGNOSTIC
        assert "bad program image" in capsys.readouterr().err

    def test_missing_source(self, workspace, capsys):
        root, out = workspace
        assert main(["--out", str(out), "run", str(root / "absent.s")]) == EXIT_DIAGNOSTIC
        assert "cannot read" in capsys.readouterr().err


class TestExperimentCommands:
    """attack, flushcost, overhead"""

    def test_attack_both_modes(self, workspace, capsys):
        root, out = workspace
        ini = write(root / "small.ini", SMALL_INI)
        argv = ["--config", str(ini), "--out", str(out), "attack", "--samples", "2", "--workers", "1"]
        assert main(argv) == EXIT_OK
        for tag in ("on", "off"):
            assert (out / f"heatmap_flush_{tag}.csv").read_text().startswith("sample,set,latency_cycles\n")
            assert "accuracy=" in (out / f"metrics_flush_{tag}.txt").read_text()
        assert "degenerate=true" in (out / "metrics_flush_on.txt").read_text()

    def test_attack_pattern_mismatch(self, workspace, capsys):
        root, out = workspace
        ini = write(root / "small.ini", SMALL_INI)
        argv = [
            "--config", str(ini), "--out", str(out), "attack", "--flush", "off",
            "--samples", "1", "--workers", "1", "--victim", "fixed", "--pattern", "101",
        ]
        assert main(argv) == EXIT_DIAGNOSTIC
        assert "16 sets" in capsys.readouterr().err

    def test_flushcost(self, workspace, capsys):
        root, out = workspace
        assert main(["--out", str(out), "flushcost"]) == EXIT_OK
        rows = (out / "flushcost.csv").read_text().splitlines()
        assert rows[0] == "mechanism,cycles,instructions"
        assert rows[1].startswith("flushx,") and rows[1].endswith(",1")
        assert rows[2].endswith(",2090")

    def test_overhead(self, workspace):
        root, out = workspace
        argv = ["--out", str(out), "overhead", "--workload", "stream", "--frange", "100:1000", "--points", "4"]
        assert main(argv) == EXIT_OK
        lines = (out / "overhead.csv").read_text().splitlines()
        assert lines[0] == "clock_hz,mechanism,flush_hz,overhead"
        assert len(lines) == 1 + 2 * 2 * 4


class TestConfigCommand:
    def test_prints_resolved_ini(self, workspace, capsys):
        assert main(["--seed", "9", "config"]) == EXIT_OK
        text = capsys.readouterr().out
        assert "[core]" in text and "seed = 9" in text

    def test_unknown_key(self, workspace, capsys):
        root, _ = workspace
        ini = write(root / "bad.ini", "[core]\nwarp_drive = 1\n")
        assert main(["--config", str(ini), "config"]) == EXIT_DIAGNOSTIC
        assert "core.warp_drive" in capsys.readouterr().err
