# pytest tests/test_assembler.py -v
import pytest

from machine.assembler import DEFAULT_TEXT_BASE, assemble, disassemble_program
from machine.errors import AssemblyError
from machine.generator import generate_source, random_program
from machine.isa import Opcode
from machine.memory import Perm
from machine.state import Mode

ROUND_TRIP_SEEDS = range(24)        # не меньше 20 программ


class TestPseudoInstructions:
    """Разворачивание псевдоинструкций"""

    def test_small_li_is_one_addi(self):
        program = assemble("li t0, -5\n")
        assert len(program.text) == 1
        assert program.text[0].op is Opcode.ADDI
        assert program.text[0].imm == -5

    def test_large_li_is_lui_addi(self):
        """0x12345FFF: младшая часть знаковая, старшая компенсирует"""
        program = assemble("li t0, 0x12345FFF\n")
        lui, addi = program.text
        assert lui.op is Opcode.LUI and addi.op is Opcode.ADDI
        assert ((lui.imm << 12) + addi.imm) & 0xFFFFFFFF == 0x12345FFF

    def test_la_resolves_data_label(self):
        program = assemble("la a0, buf\nhalt\n.data\nbuf: .word 7\n")
        lui, addi = program.text[:2]
        assert ((lui.imm << 12) + addi.imm) & 0xFFFFFFFF == program.symbols['buf']

    def test_call_ret_j(self):
        program = assemble("call f\nj end\nf:\nret\nend:\nhalt\n")
        call, jump, ret, halt = program.text
        assert call.op is Opcode.JAL and call.rd == 1 and call.imm == 8
        assert jump.op is Opcode.JAL and jump.rd == 0 and jump.imm == 8
        assert ret.op is Opcode.JALR and ret.rs1 == 1 and ret.rd == 0
        assert halt.op is Opcode.HALT

    def test_beqz_bnez_nop_mv(self):
        program = assemble("top:\nnop\nmv a0, a1\nbeqz a0, top\nbnez a0, top\n")
        nop, mv, beqz, bnez = program.text
        assert (nop.op, nop.rd, nop.rs1, nop.imm) == (Opcode.ADDI, 0, 0, 0)
        assert (mv.op, mv.rd, mv.rs1) == (Opcode.ADDI, 10, 11)
        assert beqz.op is Opcode.BEQ and beqz.imm == -8
        assert bnez.op is Opcode.BNE and bnez.imm == -12


class TestDirectives:
    """Сегменты, константы и выравнивание"""

    def test_default_layout(self):
        """Код с 0x10000, данные с границы страницы после кода"""
        program = assemble("halt\n.data\nx: .word 1\n")
        assert program.text_base == DEFAULT_TEXT_BASE
        assert program.data_base == 0x11000
        assert program.entry == DEFAULT_TEXT_BASE
        assert program.mode is Mode.USER

    def test_equ_later_definition_wins(self):
        program = assemble(".equ N, 1\n.equ N, 2\nli t0, N\n")
        assert program.text[0].imm == 2

    def test_equ_in_space_and_expressions(self):
        program = assemble(".equ SIZE, 12\n.data\nbuf: .space SIZE + 4\nend:\n")
        assert len(program.data) == 16
        assert program.symbols['end'] - program.symbols['buf'] == 16

    def test_align_is_power_of_two(self):
        program = assemble(".data\n.byte 1\n.align 12\npage:\n.word 5\n")
        assert program.symbols['page'] % 4096 == 0
        assert program.data[-4:] == (5).to_bytes(4, 'little')

    def test_entry_and_mode(self):
        program = assemble(".mode machine\n.text 0x20000\nnop\nmain:\nhalt\n.entry main\n")
        assert program.mode is Mode.MACHINE
        assert program.entry == 0x20004

    def test_pages_have_segment_permissions(self):
        program = assemble("halt\n.data\n.word 1\n")
        perms = {page.vpn: page.perms for page in program.pages}
        assert perms[0x10] & Perm.X and not perms[0x10] & Perm.W
        assert perms[0x11] & Perm.W and not perms[0x11] & Perm.X


class TestErrors:
    """Ошибки несут номер строки"""

    @pytest.mark.parametrize("source, line, fragment", [
        ("nop\nfrobnicate t0\n", 2, "unknown mnemonic"),
        ("addi t0, t0, 5000\n", 1, "out of range"),
        ("nop\nnop\nbeq t0, t1, nowhere\n", 3, "unresolved"),
        ("add t0, t1\n", 1, "expects 3"),
        ("lw t0, t1\n", 1, "offset(register)"),
        ("add q0, t1, t2\n", 1, "unknown register"),
        ("x:\nx:\n", 2, "duplicate"),
        (".data\nnop\n", 2, "outside .text"),
        ("csrr t0, time\n", 1, "unknown counter"),
    ])
    def test_error_line(self, source, line, fragment):
        with pytest.raises(AssemblyError) as info:
            assemble(source)
        assert info.value.line == line
        assert fragment in info.value.message


class TestRoundTrip:
    """Каноническая дизассемблированная форма собирается в ту же программу"""

    @pytest.mark.parametrize("seed", ROUND_TRIP_SEEDS)
    def test_generated_programs(self, seed):
        program = random_program(seed, flushx=seed % 3 == 0)
        assert assemble(disassemble_program(program)) == program

    def test_generator_is_deterministic(self):
        assert generate_source(7) == generate_source(7)
        assert generate_source(7) != generate_source(8)

    def test_flushx_requires_machine_mode(self):
        with pytest.raises(ValueError):
            generate_source(1, flushx=True, mode=Mode.USER)
