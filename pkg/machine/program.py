"""
Программа и её загрузка в физическую память.
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import PAGE_BYTES, SCRATCHPAD_BYTES
from machine.isa import Instruction, encode
from machine.memory import PTE_BYTES, FrameAllocator, Memory, PageTable, Perm
from machine.state import ArchState, Mode


class PageMapping(BaseModel):
    """Отображение vpn -> ppn с правами"""
    model_config = ConfigDict(frozen=True)

    vpn: int = Field(ge=0)
    ppn: int = Field(ge=0)
    perms: Perm

    @field_validator('perms', mode='before')
    @classmethod
    def parse_perms(cls, v):
        if isinstance(v, str):
            return Perm.parse(v)
        return Perm(int(v)) | Perm.V


class Program(BaseModel):
    """Собранная программа: сегменты кода и данных, точка входа, таблица отображений"""
    model_config = ConfigDict(frozen=True)

    text_base: int = Field(ge=0)
    text: List[Instruction] = Field(default_factory=list)
    data_base: int = Field(ge=0)
    data: bytes = b""
    entry: int = Field(ge=0)
    pages: List[PageMapping] = Field(default_factory=list)
    mode: Mode = Mode.USER
    symbols: Dict[str, int] = Field(default_factory=dict)

    @property
    def text_end(self) -> int:
        return self.text_base + 4 * len(self.text)

    @property
    def data_end(self) -> int:
        return self.data_base + len(self.data)

    @model_validator(mode='after')
    def segments_consistent(self) -> 'Program':
        if self.text_base % 4:
            raise ValueError(f'text base 0x{self.text_base:x} is not word aligned')
        if self.text and self.data and self.text_base < self.data_end and self.data_base < self.text_end:
            raise ValueError('text and data segments overlap')
        mapped = {page.vpn for page in self.pages}
        if len(mapped) != len(self.pages):
            raise ValueError('duplicate page mapping')
        for start, end in ((self.text_base, self.text_end), (self.data_base, self.data_end)):
            for vpn in range(start // PAGE_BYTES, (end + PAGE_BYTES - 1) // PAGE_BYTES):
                if vpn not in mapped:
                    raise ValueError(f'segment page 0x{vpn:x} has no mapping')
        if self.text and not self.text_base <= self.entry < self.text_end:
            raise ValueError(f'entry 0x{self.entry:x} outside the text segment')
        return self

    def text_words(self) -> List[int]:
        return [encode(instr) for instr in self.text]

    def instruction_at(self, vaddr: int) -> Optional[Instruction]:
        offset = vaddr - self.text_base
        if offset % 4 or not 0 <= offset < 4 * len(self.text):
            return None
        return self.text[offset // 4]


def _segment_bytes(program: Program):
    text = b"".join(word.to_bytes(4, 'little') for word in program.text_words())
    return ((program.text_base, text), (program.data_base, program.data))


def load_program(
    program: Program,
    memory: Memory,
    allocator: FrameAllocator,
    asid: int = 0,
) -> ArchState:
    """
    Размещает программу в памяти и строит её таблицу страниц.

    Пользовательские программы перемещаются в свежие кадры (ppn сдвигается
    на смещение выделенного блока). Машинный режим работает без трансляции,
    поэтому такие программы грузятся по своим виртуальным адресам.
    """
    if program.mode is Mode.MACHINE:
        for base, blob in _segment_bytes(program):
            if blob and base < SCRATCHPAD_BYTES:
                raise ValueError(f'machine-mode segment at 0x{base:x} overlaps the kernel scratchpad')
            if blob:
                if not memory.check(base, len(blob)):
                    raise ValueError(f'segment at 0x{base:x} exceeds physical memory')
                memory.write_block(base, blob)
                allocator.reserve_through((base + len(blob) - 1) // PAGE_BYTES)
        return ArchState(memory=memory, pc=program.entry, mode=Mode.MACHINE, asid=asid)

    if not program.pages:
        raise ValueError('user-mode program has no page mappings')
    low = min(page.ppn for page in program.pages)
    high = max(page.ppn for page in program.pages)
    base_frame = allocator.allocate(high - low + 1)
    shift = base_frame - low

    entries = memory.size // PAGE_BYTES
    table_frames = (entries * PTE_BYTES + PAGE_BYTES - 1) // PAGE_BYTES
    ptbase = allocator.allocate(table_frames) * PAGE_BYTES
    memory.write_block(ptbase, bytes(table_frames * PAGE_BYTES))
    table = PageTable(memory, ptbase, entries)

    frames = {}
    for page in program.pages:
        table.map(page.vpn, page.ppn + shift, page.perms)
        frames[page.vpn] = page.ppn + shift

    for base, blob in _segment_bytes(program):
        pos = 0
        while pos < len(blob):
            vaddr = base + pos
            chunk = min(len(blob) - pos, PAGE_BYTES - vaddr % PAGE_BYTES)
            paddr = frames[vaddr // PAGE_BYTES] * PAGE_BYTES + vaddr % PAGE_BYTES
            memory.write_block(paddr, blob[pos:pos + chunk])
            pos += chunk

    return ArchState(
        memory=memory,
        pc=program.entry,
        mode=Mode.USER,
        ptbase=ptbase,
        pt_entries=entries,
        asid=asid,
    )
