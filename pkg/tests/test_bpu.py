# pytest tests/test_bpu.py -v
from machine.isa import Instruction, Opcode
from uarch.bpu import BranchKind, Bpu, BpuGeometry, classify

# Без глобальной истории индекс PHT зависит только от pc
NO_HISTORY = BpuGeometry(ghr_bits=0)
BRANCH_PC = 0x10010
TARGET = 0x10000


class TestPrediction:
    """BTB, двухбитные счётчики и стек возвратов"""

    def test_unknown_pc_falls_through(self):
        assert Bpu(NO_HISTORY).predict(BRANCH_PC) == (False, BRANCH_PC + 4, False)

    def test_taken_branch_trains_to_taken(self):
        bpu = Bpu(NO_HISTORY)
        bpu.update(BRANCH_PC, BranchKind.BRANCH, True, TARGET)
        prediction = bpu.predict(BRANCH_PC)
        assert prediction.taken and prediction.target == TARGET

    def test_not_taken_saturates_down(self):
        bpu = Bpu(NO_HISTORY)
        bpu.update(BRANCH_PC, BranchKind.BRANCH, True, TARGET)
        bpu.update(BRANCH_PC, BranchKind.BRANCH, False, TARGET)
        bpu.update(BRANCH_PC, BranchKind.BRANCH, False, TARGET)
        assert not bpu.predict(BRANCH_PC).taken
        assert bpu.pht[bpu.pht_index(BRANCH_PC)] == 0

    def test_call_return_uses_ras(self):
        bpu = Bpu(NO_HISTORY)
        call_pc, function, ret_pc = 0x10000, 0x10100, 0x10104
        bpu.update(call_pc, BranchKind.CALL, True, function)
        bpu.update(ret_pc, BranchKind.RETURN, True, 0x99990)
        assert bpu.predict(call_pc).target == function
        returned = bpu.predict(ret_pc)
        assert returned.used_ras and returned.target == call_pc + 4

    def test_ras_overflow_drops_oldest(self):
        bpu = Bpu(BpuGeometry(ghr_bits=0, ras_depth=2))
        for address in (0x100, 0x200, 0x300):
            bpu._push(address)
        assert [bpu._pop(), bpu._pop(), bpu._pop()] == [0x300, 0x200, None]

    def test_flush_restores_reset_state(self):
        bpu = Bpu()
        bpu.update(BRANCH_PC, BranchKind.BRANCH, True, TARGET)
        bpu.update(0x10020, BranchKind.CALL, True, TARGET)
        bpu.predict(0x10020)
        assert not bpu.is_reset()
        bpu.flush()
        assert bpu.is_reset()


def test_classify():
    assert classify(Instruction.create(Opcode.BNE, rs1=1, rs2=2, imm=8)) is BranchKind.BRANCH
    assert classify(Instruction.create(Opcode.JAL, rd=1, imm=8)) is BranchKind.CALL
    assert classify(Instruction.create(Opcode.JAL, rd=0, imm=8)) is BranchKind.JUMP
    assert classify(Instruction.create(Opcode.JALR, rd=0, rs1=1)) is BranchKind.RETURN
    assert classify(Instruction.create(Opcode.ADD, rd=1, rs1=2, rs2=3)) is None


def test_module_level_operations():
    from uarch.bpu import bpu_flush, bpu_predict, bpu_update

    bpu = Bpu(NO_HISTORY)
    bpu_update(bpu, BRANCH_PC, BranchKind.BRANCH, True, TARGET)
    assert bpu_predict(bpu, BRANCH_PC).target == TARGET
    bpu_flush(bpu)
    assert bpu.is_reset()
    assert bpu_predict(bpu, BRANCH_PC) == (False, BRANCH_PC + 4, False)
