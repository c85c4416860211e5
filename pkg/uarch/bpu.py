"""
Двухуровневый адаптивный предсказатель: BTB, глобальная история + таблица
двухбитных счётчиков (GHR xor pc), стек адресов возврата.
"""

from enum import Enum
from typing import List, NamedTuple, Optional

from pydantic import BaseModel, ConfigDict, Field

from machine.isa import Instruction, Opcode

INVALID = -1
WEAKLY_NOT_TAKEN = 1


class BranchKind(str, Enum):
    BRANCH = 'branch'
    JUMP = 'jump'
    CALL = 'call'
    RETURN = 'return'


def classify(instr: Instruction) -> Optional[BranchKind]:
    """Вид перехода по инструкции; None для не-переходов"""
    op = instr.op
    if op in (Opcode.BEQ, Opcode.BNE, Opcode.BLT, Opcode.BGE):
        return BranchKind.BRANCH
    if op is Opcode.JAL:
        return BranchKind.CALL if instr.rd == 1 else BranchKind.JUMP
    if op is Opcode.JALR:
        if instr.rd == 1:
            return BranchKind.CALL
        if instr.rd == 0 and instr.rs1 == 1:
            return BranchKind.RETURN
        return BranchKind.JUMP
    return None


class Prediction(NamedTuple):
    taken: bool
    target: int
    used_ras: bool = False


class BpuGeometry(BaseModel):
    model_config = ConfigDict(frozen=True)

    btb_entries: int = Field(default=28, ge=1)
    ghr_bits: int = Field(default=8, ge=0, le=16)
    pht_entries: int = Field(default=512, ge=1)
    ras_depth: int = Field(default=6, ge=0)


class Bpu:
    def __init__(self, geometry: Optional[BpuGeometry] = None):
        self.geometry = geometry or BpuGeometry()
        g = self.geometry
        self._pht_mask = g.pht_entries - 1
        self._ghr_mask = (1 << g.ghr_bits) - 1

        self.btb_pc: List[int] = [INVALID] * g.btb_entries
        self.btb_target: List[int] = [0] * g.btb_entries
        self.btb_kind: List[BranchKind] = [BranchKind.JUMP] * g.btb_entries
        self.btb_lru: List[int] = list(range(g.btb_entries))
        self.ghr = 0
        self.pht: List[int] = [WEAKLY_NOT_TAKEN] * g.pht_entries
        self.ras: List[int] = [0] * g.ras_depth
        self.ras_sp = 0

    def pht_index(self, pc: int) -> int:
        return (self.ghr ^ (pc >> 2)) & self._pht_mask

    # ---------- RAS ----------

    def _push(self, address: int) -> None:
        depth = self.geometry.ras_depth
        if depth == 0:
            return
        if self.ras_sp == depth:
            # Переполнение: самый старый адрес теряется
            del self.ras[0]
            self.ras.append(address)
        else:
            self.ras[self.ras_sp] = address
            self.ras_sp += 1

    def _pop(self) -> Optional[int]:
        if self.ras_sp == 0:
            return None
        self.ras_sp -= 1
        return self.ras[self.ras_sp]

    # ---------- предсказание и обучение ----------

    def predict(self, pc: int) -> Prediction:
        """Только чтение, кроме спекулятивных push/pop в RAS"""
        fallthrough = pc + 4
        if pc not in self.btb_pc:
            return Prediction(False, fallthrough)
        way = self.btb_pc.index(pc)
        kind = self.btb_kind[way]
        target = self.btb_target[way]

        if kind is BranchKind.RETURN:
            address = self._pop()
            if address is not None:
                return Prediction(True, address, True)
            return Prediction(True, target)
        if kind is BranchKind.CALL:
            self._push(fallthrough)
            return Prediction(True, target)
        if kind is BranchKind.JUMP:
            return Prediction(True, target)
        if self.pht[self.pht_index(pc)] >= 2:
            return Prediction(True, target)
        return Prediction(False, fallthrough)

    def update(self, pc: int, kind: BranchKind, taken: bool, target: int) -> None:
        """Сдвиг исхода в GHR, насыщение счётчика, установка записи BTB на взятых переходах"""
        if kind is BranchKind.BRANCH:
            index = self.pht_index(pc)
            counter = self.pht[index]
            self.pht[index] = min(3, counter + 1) if taken else max(0, counter - 1)
            self.ghr = ((self.ghr << 1) | int(taken)) & self._ghr_mask
        if not taken:
            return

        if pc in self.btb_pc:
            way = self.btb_pc.index(pc)
        else:
            way = self.btb_lru[0]
            if INVALID in self.btb_pc:
                way = next(w for w in self.btb_lru if self.btb_pc[w] == INVALID)
            self.btb_pc[way] = pc
        self.btb_target[way] = target
        self.btb_kind[way] = kind
        if self.btb_lru[-1] != way:
            self.btb_lru.remove(way)
            self.btb_lru.append(way)

    # ---------- очистка ----------

    def flush(self) -> None:
        """BTB: valid сброшены; GHR = 0; PHT = 01; указатель RAS = 0"""
        g = self.geometry
        self.btb_pc = [INVALID] * g.btb_entries
        self.btb_target = [0] * g.btb_entries
        self.btb_kind = [BranchKind.JUMP] * g.btb_entries
        self.btb_lru = list(range(g.btb_entries))
        self.ghr = 0
        self.pht = [WEAKLY_NOT_TAKEN] * g.pht_entries
        self.ras = [0] * g.ras_depth
        self.ras_sp = 0

    def valid_btb_entries(self) -> int:
        return sum(pc != INVALID for pc in self.btb_pc)

    def is_reset(self) -> bool:
        return (
            self.valid_btb_entries() == 0
            and self.ghr == 0
            and all(counter == WEAKLY_NOT_TAKEN for counter in self.pht)
            and self.ras_sp == 0
        )


def bpu_predict(b: Bpu, pc: int) -> Prediction:
    return b.predict(pc)


def bpu_update(b: Bpu, pc: int, kind: BranchKind, taken: bool, target: int) -> None:
    b.update(pc, kind, taken, target)


def bpu_flush(b: Bpu) -> None:
    b.flush()
