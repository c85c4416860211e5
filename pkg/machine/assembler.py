"""
Двухпроходный ассемблер и обратный дизассемблер программ.

Первый проход раскладывает сегменты и вычисляет метки (размер каждой
псевдоинструкции известен заранее), второй кодирует операнды.
"""

import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from pydantic import ValidationError

from config.logging import get_logger
from config.settings import PAGE_BYTES
from machine.errors import AssemblyError
from machine.isa import (
    BRANCHES, CSR_NUMBERS, IMM_RANGES, LOADS, REG_ALU, REGISTER_NAMES, STORES,
    Instruction, Opcode, decode, disassemble, imm_fits, sign_extend,
)
from machine.memory import Perm
from machine.program import PageMapping, Program
from machine.state import Mode

logger = get_logger("machine.assembler")

DEFAULT_TEXT_BASE = 0x0001_0000

TEXT = 'text'
DATA = 'data'

_LABEL_RE = re.compile(r'^([A-Za-z_.$][\w.$]*)\s*:')
_MEM_RE = re.compile(r'^(.*)\(\s*([\w$]+)\s*\)$')
_SYMBOL_RE = re.compile(r'^[A-Za-z_.$][\w.$]*$')
_TERM_RE = re.compile(r'\s*([+-]?)\s*([^+\-\s][^+\-]*)')

ZERO_OPERAND = {
    'ecall': Opcode.ECALL, 'mret': Opcode.MRET, 'halt': Opcode.HALT,
    'flushx': Opcode.FLUSHX, 'icinv.all': Opcode.ICINV_ALL, 'tlbinv.all': Opcode.TLBINV_ALL,
    'bpinv.all': Opcode.BPINV_ALL, 'fence.flush': Opcode.FENCE_FLUSH,
}
BASE_MNEMONICS = {op.value: op for op in Opcode if op is not Opcode.ILLEGAL}


@dataclass
class _Item:
    """Элемент сегмента: инструкция (с отложенным кодированием) или байты данных"""
    line: int
    offset: int
    size: int
    emit: Callable[[int], List]  # адрес -> список Instruction или bytes


@dataclass
class _Segment:
    name: str
    base: Optional[int] = None
    size: int = 0
    items: List[_Item] = field(default_factory=list)


class Assembler:
    """Состояние одной сборки исходника"""

    def __init__(self, source: str):
        self.source = source
        self.segments = {TEXT: _Segment(TEXT), DATA: _Segment(DATA)}
        self.current = self.segments[TEXT]
        self.labels: Dict[str, Tuple[str, int]] = {}
        self.constants: Dict[str, int] = {}
        self.mode = Mode.USER
        self.entry_expr: Optional[Tuple[int, str]] = None

    # ---------- разбор операндов ----------

    def register(self, token: str, line: int) -> int:
        index = REGISTER_NAMES.get(token.strip().lower())
        if index is None:
            raise AssemblyError(line, f"unknown register '{token.strip()}'")
        return index

    def symbol_address(self, name: str) -> Optional[int]:
        if name not in self.labels:
            return None
        segment, offset = self.labels[name]
        return self.segments[segment].base + offset

    def value(self, expr: str, line: int, allow_labels: bool = True) -> int:
        """Выражение из чисел, констант .equ и меток, связанных + и -"""
        text = expr.strip()
        if not text:
            raise AssemblyError(line, "missing operand")
        total = 0
        pos = 0
        for match in _TERM_RE.finditer(text):
            if match.start() != pos:
                raise AssemblyError(line, f"cannot parse expression '{text}'")
            pos = match.end()
            sign, term = match.group(1), match.group(2).strip()
            total += -self._term(term, line, allow_labels) if sign == '-' else self._term(term, line, allow_labels)
        if pos != len(text):
            raise AssemblyError(line, f"cannot parse expression '{text}'")
        return total

    def _term(self, term: str, line: int, allow_labels: bool) -> int:
        try:
            return int(term, 0)
        except ValueError:
            pass
        if term in self.constants:
            return self.constants[term]
        if _SYMBOL_RE.match(term):
            if allow_labels:
                address = self.symbol_address(term)
                if address is not None:
                    return address
            raise AssemblyError(line, f"unresolved symbol '{term}'")
        raise AssemblyError(line, f"bad immediate '{term}'")

    def is_constant(self, expr: str) -> bool:
        """Значение известно на первом проходе (без меток)"""
        try:
            self.value(expr, 0, allow_labels=False)
            return True
        except AssemblyError:
            return False

    # ---------- построение инструкций ----------

    def make(self, line: int, op: Opcode, **fields) -> Instruction:
        imm = fields.get('imm', 0)
        if not imm_fits(op, imm):
            low, high, step = IMM_RANGES[op]
            hint = f" (multiple of {step})" if step > 1 else ""
            raise AssemblyError(line, f"immediate {imm} out of range [{low}, {high}]{hint} for {op.value}")
        try:
            return Instruction(op=op, **fields)
        except ValidationError as e:
            raise AssemblyError(line, e.errors()[0]['msg']) from e

    def memory_operand(self, token: str, line: int) -> Tuple[str, int]:
        match = _MEM_RE.match(token.strip())
        if not match:
            raise AssemblyError(line, f"expected offset(register), got '{token.strip()}'")
        offset = match.group(1).strip() or '0'
        return offset, self.register(match.group(2), line)

    def target(self, token: str, pc: int, line: int) -> int:
        """Метка -> смещение относительно pc; число -> уже относительное смещение"""
        token = token.strip()
        if _SYMBOL_RE.match(token) and token not in self.constants:
            address = self.symbol_address(token)
            if address is None:
                raise AssemblyError(line, f"unresolved label '{token}'")
            return address - pc
        return self.value(token, line, allow_labels=False)

    def expand(self, mnemonic: str, ops: List[str], line: int) -> Tuple[int, Callable[[int], List]]:
        """Возвращает (число инструкций, функция кодирования по адресу)"""
        def need(count: int) -> None:
            if len(ops) != count:
                raise AssemblyError(line, f"{mnemonic} expects {count} operand(s), got {len(ops)}")

        if mnemonic in ZERO_OPERAND:
            need(0)
            op = ZERO_OPERAND[mnemonic]
            return 1, lambda pc: [self.make(line, op)]
        if mnemonic == 'nop':
            need(0)
            return 1, lambda pc: [self.make(line, Opcode.ADDI)]
        if mnemonic == 'ret':
            need(0)
            return 1, lambda pc: [self.make(line, Opcode.JALR, rd=0, rs1=1, imm=0)]
        if mnemonic == 'mv':
            need(2)
            return 1, lambda pc: [self.make(line, Opcode.ADDI, rd=self.register(ops[0], line), rs1=self.register(ops[1], line))]
        if mnemonic == 'li':
            need(2)
            if self.is_constant(ops[1]):
                value = self.value(ops[1], line, allow_labels=False)
                if -2048 <= value <= 2047:
                    return 1, lambda pc: [self.make(line, Opcode.ADDI, rd=self.register(ops[0], line), imm=value)]
            return 2, lambda pc: self._load_upper(ops[0], ops[1], line)
        if mnemonic == 'la':
            need(2)
            return 2, lambda pc: self._load_upper(ops[0], ops[1], line)
        if mnemonic in ('j', 'call'):
            need(1)
            rd = 0 if mnemonic == 'j' else 1
            return 1, lambda pc: [self.make(line, Opcode.JAL, rd=rd, imm=self.target(ops[0], pc, line))]
        if mnemonic in ('beqz', 'bnez'):
            need(2)
            op = Opcode.BEQ if mnemonic == 'beqz' else Opcode.BNE
            return 1, lambda pc: [self.make(line, op, rs1=self.register(ops[0], line), imm=self.target(ops[1], pc, line))]

        op = BASE_MNEMONICS.get(mnemonic)
        if op is None:
            raise AssemblyError(line, f"unknown mnemonic '{mnemonic}'")

        if op in REG_ALU:
            need(3)
            return 1, lambda pc: [self.make(
                line, op, rd=self.register(ops[0], line), rs1=self.register(ops[1], line), rs2=self.register(ops[2], line))]
        if op is Opcode.ADDI:
            need(3)
            return 1, lambda pc: [self.make(
                line, op, rd=self.register(ops[0], line), rs1=self.register(ops[1], line), imm=self.value(ops[2], line))]
        if op is Opcode.LUI:
            need(2)
            return 1, lambda pc: [self.make(line, op, rd=self.register(ops[0], line), imm=self.value(ops[1], line))]
        if op in LOADS:
            need(2)

            def emit_load(pc: int) -> List:
                offset, base = self.memory_operand(ops[1], line)
                return [self.make(line, op, rd=self.register(ops[0], line), rs1=base, imm=self.value(offset, line))]
            return 1, emit_load
        if op in STORES:
            need(2)

            def emit_store(pc: int) -> List:
                offset, base = self.memory_operand(ops[1], line)
                return [self.make(line, op, rs2=self.register(ops[0], line), rs1=base, imm=self.value(offset, line))]
            return 1, emit_store
        if op in BRANCHES:
            need(3)
            return 1, lambda pc: [self.make(
                line, op, rs1=self.register(ops[0], line), rs2=self.register(ops[1], line),
                imm=self.target(ops[2], pc, line))]
        if op is Opcode.JAL:
            if len(ops) == 1:
                return 1, lambda pc: [self.make(line, op, rd=1, imm=self.target(ops[0], pc, line))]
            need(2)
            return 1, lambda pc: [self.make(line, op, rd=self.register(ops[0], line), imm=self.target(ops[1], pc, line))]
        if op is Opcode.JALR:
            return 1, lambda pc: [self._jalr(ops, line)]
        if op is Opcode.CSRR:
            need(2)

            def emit_csrr(pc: int) -> List:
                name = ops[1].strip().lower()
                csr = {c.name.lower(): c for c in CSR_NUMBERS}.get(name)
                if csr is None:
                    raise AssemblyError(line, f"unknown counter '{ops[1].strip()}' (expected cycle or instret)")
                return [self.make(line, op, rd=self.register(ops[0], line), imm=int(csr))]
            return 1, emit_csrr
        if op is Opcode.DCFLUSH_SW:
            need(1)
            return 1, lambda pc: [self.make(line, op, rs1=self.register(ops[0], line))]
        raise AssemblyError(line, f"unknown mnemonic '{mnemonic}'")

    def _jalr(self, ops: List[str], line: int) -> Instruction:
        if len(ops) == 1 and '(' not in ops[0]:
            return self.make(line, Opcode.JALR, rd=1, rs1=self.register(ops[0], line))
        if len(ops) == 2:
            offset, base = self.memory_operand(ops[1], line)
            return self.make(line, Opcode.JALR, rd=self.register(ops[0], line), rs1=base, imm=self.value(offset, line))
        if len(ops) == 3:
            return self.make(
                line, Opcode.JALR, rd=self.register(ops[0], line), rs1=self.register(ops[1], line),
                imm=self.value(ops[2], line))
        raise AssemblyError(line, "jalr expects rd, offset(rs1)")

    def _load_upper(self, rd_token: str, expr: str, line: int) -> List[Instruction]:
        rd = self.register(rd_token, line)
        value = self.value(expr, line)
        if not -(1 << 31) <= value <= 0xFFFF_FFFF:
            raise AssemblyError(line, f"value {value} does not fit in 32 bits")
        value &= 0xFFFF_FFFF
        low = sign_extend(value & 0xFFF, 12)
        high = ((value - low) >> 12) & 0xFFFFF
        return [self.make(line, Opcode.LUI, rd=rd, imm=high), self.make(line, Opcode.ADDI, rd=rd, rs1=rd, imm=low)]

    # ---------- директивы ----------

    def directive(self, name: str, args: str, line: int) -> None:
        ops = split_operands(args)
        segment = self.current

        if name in ('.text', '.data'):
            self.current = self.segments[name[1:]]
            if ops:
                base = self.value(ops[0], line, allow_labels=False)
                if self.current.base is not None and self.current.base + self.current.size != base:
                    raise AssemblyError(line, f"{name} segment cannot restart at 0x{base:x}")
                if self.current.size:
                    raise AssemblyError(line, f"{name} base must be set before any content")
                self.current.base = base
            return
        if name == '.equ':
            if len(ops) != 2 or not _SYMBOL_RE.match(ops[0]):
                raise AssemblyError(line, ".equ expects NAME, value")
            self.constants[ops[0]] = self.value(ops[1], line, allow_labels=False)
            return
        if name == '.mode':
            try:
                self.mode = Mode(args.strip().lower())
            except ValueError:
                raise AssemblyError(line, f"unknown mode '{args.strip()}'") from None
            return
        if name == '.entry':
            if len(ops) != 1:
                raise AssemblyError(line, ".entry expects a label or address")
            self.entry_expr = (line, ops[0])
            return
        if name == '.align':
            power = self.value(ops[0], line, allow_labels=False) if ops else 2
            boundary = 1 << power
            pad = -(segment.size) % boundary
            if pad:
                self._emit_data(segment, line, bytes(pad))
            return
        if name == '.space':
            count = self.value(ops[0], line, allow_labels=False) if ops else 0
            if count < 0:
                raise AssemblyError(line, ".space size must be non-negative")
            self._emit_data(segment, line, bytes(count))
            return
        if name in ('.word', '.byte'):
            if not ops:
                raise AssemblyError(line, f"{name} expects at least one value")
            width = 4 if name == '.word' else 1
            if segment.name == TEXT:
                if width != 4 or segment.size % 4:
                    raise AssemblyError(line, "only aligned .word data may appear in .text")
                for token in ops:
                    segment.items.append(_Item(line, segment.size, 4, self._raw_word(token, line)))
                    segment.size += 4
                return
            for token in ops:
                segment.items.append(_Item(line, segment.size, width, self._data_value(token, width, line)))
                segment.size += width
            return
        raise AssemblyError(line, f"unknown directive '{name}'")

    def _raw_word(self, token: str, line: int) -> Callable[[int], List]:
        return lambda pc: [decode(self.value(token, line) & 0xFFFF_FFFF)]

    def _data_value(self, token: str, width: int, line: int) -> Callable[[int], List]:
        def emit(address: int) -> List:
            value = self.value(token, line)
            limit = 1 << (8 * width)
            if not -(limit >> 1) <= value < limit:
                raise AssemblyError(line, f"value {value} does not fit in {width} byte(s)")
            return [(value & (limit - 1)).to_bytes(width, 'little')]
        return emit

    def _emit_data(self, segment: _Segment, line: int, blob: bytes) -> None:
        if segment.name == TEXT:
            if len(blob) % 4:
                raise AssemblyError(line, "padding in .text must be a whole number of words")
            for _ in range(len(blob) // 4):
                segment.items.append(_Item(line, segment.size, 4, lambda pc: [self.make(line, Opcode.ADDI)]))
                segment.size += 4
            return
        segment.items.append(_Item(line, segment.size, len(blob), lambda address: [blob]))
        segment.size += len(blob)

    # ---------- проходы ----------

    def first_pass(self) -> None:
        for number, raw in enumerate(self.source.splitlines(), start=1):
            text = strip_comment(raw).strip()
            while True:
                match = _LABEL_RE.match(text)
                if not match:
                    break
                name = match.group(1)
                if name in self.labels or name in self.constants:
                    raise AssemblyError(number, f"duplicate symbol '{name}'")
                self.labels[name] = (self.current.name, self.current.size)
                text = text[match.end():].strip()
            if not text:
                continue

            parts = text.split(None, 1)
            mnemonic = parts[0].lower()
            args = parts[1] if len(parts) > 1 else ''
            if mnemonic.startswith('.'):
                self.directive(mnemonic, args, number)
                continue
            if self.current.name != TEXT:
                raise AssemblyError(number, f"instruction '{mnemonic}' outside .text")
            if self.current.size % 4:
                raise AssemblyError(number, "instruction is not word aligned")
            count, emit = self.expand(mnemonic, split_operands(args), number)
            self.current.items.append(_Item(number, self.current.size, 4 * count, emit))
            self.current.size += 4 * count

    def layout(self) -> None:
        text, data = self.segments[TEXT], self.segments[DATA]
        if text.base is None:
            text.base = DEFAULT_TEXT_BASE
        if data.base is None:
            end = text.base + text.size
            data.base = (end + PAGE_BYTES - 1) // PAGE_BYTES * PAGE_BYTES

    def second_pass(self) -> Program:
        text, data = self.segments[TEXT], self.segments[DATA]
        instructions: List[Instruction] = []
        for item in text.items:
            instructions.extend(item.emit(text.base + item.offset))
        blob = b"".join(b for item in data.items for b in item.emit(data.base + item.offset))

        if self.entry_expr is not None:
            line, expr = self.entry_expr
            entry = self.value(expr, line)
        elif '_start' in self.labels:
            entry = self.symbol_address('_start')
        else:
            entry = text.base

        pages = derive_pages(text.base, 4 * len(instructions), data.base, len(blob))
        symbols = {name: self.symbol_address(name) for name in self.labels}
        try:
            return Program(
                text_base=text.base, text=instructions, data_base=data.base, data=blob,
                entry=entry, pages=pages, mode=self.mode, symbols=symbols,
            )
        except ValidationError as e:
            raise AssemblyError(0, e.errors()[0]['msg']) from e


def strip_comment(line: str) -> str:
    for marker in ('#', ';', '//'):
        index = line.find(marker)
        if index >= 0:
            line = line[:index]
    return line


def split_operands(args: str) -> List[str]:
    args = args.strip()
    if not args:
        return []
    return [part.strip() for part in args.split(',')]


def derive_pages(text_base: int, text_size: int, data_base: int, data_size: int) -> List[PageMapping]:
    """Страницы сегментов: код r-x, данные rw-, общая страница получает объединение прав"""
    perms: Dict[int, Perm] = {}
    for base, size, flags in ((text_base, text_size, Perm.R | Perm.X), (data_base, data_size, Perm.R | Perm.W)):
        for vpn in range(base // PAGE_BYTES, (base + size + PAGE_BYTES - 1) // PAGE_BYTES):
            perms[vpn] = perms.get(vpn, Perm.V) | flags | Perm.U
    return [PageMapping(vpn=vpn, ppn=vpn, perms=perms[vpn]) for vpn in sorted(perms)]


def assemble(source: str) -> Program:
    """Ассемблирует исходник в Program; ошибки несут номер строки"""
    assembler = Assembler(source)
    assembler.first_pass()
    assembler.layout()
    program = assembler.second_pass()
    logger.debug(
        f"Assembled {len(program.text)} instructions, {len(program.data)} data bytes, "
        f"entry 0x{program.entry:08x}"
    )
    return program


def disassemble_program(program: Program) -> str:
    """Исходник в канонической форме, который собирается обратно в ту же Program"""
    by_address: Dict[int, List[str]] = {}
    for name, address in sorted(program.symbols.items()):
        by_address.setdefault(address, []).append(name)

    lines = [f".mode {program.mode.value}", f".text 0x{program.text_base:08x}"]
    address = program.text_base
    for instr in program.text:
        lines.extend(f"{name}:" for name in by_address.pop(address, []))
        lines.append(f"    {disassemble(instr)}")
        address += 4
    lines.extend(f"{name}:" for name in by_address.pop(address, []))

    if program.data or any(program.data_base <= a <= program.data_end for a in by_address):
        lines.append(f".data 0x{program.data_base:08x}")
        for offset, byte in enumerate(program.data):
            lines.extend(f"{name}:" for name in by_address.pop(program.data_base + offset, []))
            lines.append(f"    .byte {byte}")
        lines.extend(f"{name}:" for name in by_address.pop(program.data_end, []))

    if by_address:
        # Метки вне сегментов восстановить нельзя, фиксируем их константами
        for address, names in sorted(by_address.items()):
            lines.extend(f".equ {name}, 0x{address:08x}" for name in names)
    lines.append(f".entry 0x{program.entry:08x}")
    return "\n".join(lines) + "\n"
