"""
Плоский бинарный образ программы.

Раскладка (little-endian):
    header  : magic "SIMF", version u16, flags u16 (bit0 = machine mode),
              entry, text_base, text_words, data_base, data_bytes, page_count,
              text_offset, data_offset, pages_offset (все u32)
    text    : text_words 32-битных слов
    data    : data_bytes байт
    pages   : page_count записей (vpn u32, ppn u32, perms u32)
Таблица символов в образ не входит.
"""

import struct

from pydantic import ValidationError

from machine.errors import ImageFormatError
from machine.isa import decode
from machine.program import PageMapping, Program
from machine.state import Mode

MAGIC = b"SIMF"
VERSION = 1
FLAG_MACHINE = 0x1

HEADER = struct.Struct("<4sHHIIIIIIIII")
PAGE_RECORD = struct.Struct("<III")


def to_image(program: Program) -> bytes:
    words = program.text_words()
    text_offset = HEADER.size
    data_offset = text_offset + 4 * len(words)
    pages_offset = data_offset + len(program.data)
    header = HEADER.pack(
        MAGIC, VERSION, FLAG_MACHINE if program.mode is Mode.MACHINE else 0,
        program.entry, program.text_base, len(words), program.data_base, len(program.data),
        len(program.pages), text_offset, data_offset, pages_offset,
    )
    body = struct.pack(f"<{len(words)}I", *words)
    pages = b"".join(PAGE_RECORD.pack(p.vpn, p.ppn, int(p.perms)) for p in program.pages)
    return header + body + program.data + pages


def from_image(blob: bytes) -> Program:
    if len(blob) < HEADER.size:
        raise ImageFormatError(f"image too short: {len(blob)} bytes")
    (magic, version, flags, entry, text_base, text_words, data_base, data_bytes,
     page_count, text_offset, data_offset, pages_offset) = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ImageFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ImageFormatError(f"unsupported image version {version}")
    if pages_offset + page_count * PAGE_RECORD.size > len(blob) or data_offset + data_bytes > len(blob):
        raise ImageFormatError("image truncated")

    words = struct.unpack_from(f"<{text_words}I", blob, text_offset)
    data = bytes(blob[data_offset:data_offset + data_bytes])
    pages = [
        PageMapping(vpn=vpn, ppn=ppn, perms=perms)
        for vpn, ppn, perms in (PAGE_RECORD.unpack_from(blob, pages_offset + i * PAGE_RECORD.size) for i in range(page_count))
    ]
    try:
        return Program(
            text_base=text_base, text=[decode(word) for word in words], data_base=data_base, data=data,
            entry=entry, pages=pages, mode=Mode.MACHINE if flags & FLAG_MACHINE else Mode.USER,
        )
    except ValidationError as e:
        raise ImageFormatError(f"inconsistent image: {e.errors()[0]['msg']}") from e
