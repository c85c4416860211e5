# pytest tests/test_image.py -v
import pytest

from machine.assembler import assemble
from machine.errors import ImageFormatError
from machine.generator import random_program
from machine.image import HEADER, from_image, to_image

SAMPLE_SOURCE = """
.mode machine
.text 0x20000
_start:
    la   s0, table
    lw   t0, 4(s0)
    halt
.data
table:
    .word 1, 2, 3
"""


class TestImage:
    """Плоский бинарный образ программы"""

    def test_image_reproduces_program(self):
        """Образ не хранит символы, остальное восстанавливается точно"""
        program = assemble(SAMPLE_SOURCE)
        restored = from_image(to_image(program))
        assert restored == program.model_copy(update={'symbols': {}})

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_generated_programs(self, seed):
        program = random_program(seed)
        assert from_image(to_image(program)).text == program.text

    def test_bad_magic(self):
        blob = bytearray(to_image(assemble(SAMPLE_SOURCE)))
        blob[:4] = b"NOPE"
        with pytest.raises(ImageFormatError, match="magic"):
            from_image(bytes(blob))

    def test_too_short(self):
        with pytest.raises(ImageFormatError, match="too short"):
            from_image(b"SIMF")

    def test_truncated_body(self):
        blob = to_image(assemble(SAMPLE_SOURCE))
        with pytest.raises(ImageFormatError, match="truncated"):
            from_image(blob[:HEADER.size + 4])
