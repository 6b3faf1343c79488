import pytest

from irinstr.errors import TerminatorViolation, VoidSizeError
from irinstr.ir import (
    ArrayType,
    BasicBlock,
    FunctionRef,
    I1,
    I32,
    I64,
    Instruction,
    IntConst,
    IntType,
    NullConst,
    parse_ir,
    PTR,
    Register,
    type_size,
    validate_module,
    VOID,
)


@pytest.mark.parametrize(
    "ty,expected",
    [
        (I1, 1),
        (IntType(8), 1),
        (IntType(16), 2),
        (I32, 4),
        (I64, 8),
        (PTR, 8),
        (ArrayType(10, I64), 80),
        (ArrayType(3, ArrayType(2, I32)), 24),
        (ArrayType(0, I32), 0),
    ],
)
def test_type_size(ty, expected):
    assert type_size(ty) == expected


def test_type_size_void_is_an_error():
    with pytest.raises(VoidSizeError):
        type_size(VOID)


def test_type_size_additive_over_arrays():
    for n in range(6):
        for elem, es in [(I32, 4), (I64, 8), (PTR, 8)]:
            assert type_size(ArrayType(n, elem)) == n * es


def test_array_invariants():
    with pytest.raises(ValueError):
        ArrayType(-1, I32)
    with pytest.raises(ValueError):
        ArrayType(2, VOID)
    with pytest.raises(ValueError):
        IntType(7)


def _block_with_ret():
    return BasicBlock(
        "entry",
        [
            Instruction("add", result=Register("x", I32),
                        operands=[IntConst(1, I32), IntConst(2, I32)]),
            Instruction("ret", operands=[Register("x", I32)]),
        ],
    )


def _synthetic_call(name="probe"):
    return Instruction(
        "call", operands=[FunctionRef(name)], type=VOID, synthetic=True
    )


def test_insert_before_prepends():
    from irinstr.ir import insert_before

    block = _block_with_ret()
    call = _synthetic_call()
    insert_before(block, 0, call)
    assert block.instructions[0] is call
    assert len(block.instructions) == 3
    assert [i.opcode for i in block.instructions] == ["call", "add", "ret"]


def test_insert_after_terminator_rejected():
    from irinstr.ir import insert_after

    block = _block_with_ret()
    with pytest.raises(TerminatorViolation):
        insert_after(block, 1, _synthetic_call())


def test_insert_before_matched_site():
    # a call placed at the matched instruction's index pushes it down by one
    from irinstr.ir import insert_before

    block = BasicBlock(
        "entry",
        [
            Instruction("alloca", result=Register("p", PTR), type=I32),
            Instruction("store", operands=[IntConst(1, I32), Register("p", PTR)]),
            Instruction("load", result=Register("v", I32),
                        operands=[Register("p", PTR)], type=I32),
            Instruction(
                "sdiv",
                result=Register("q", I32),
                operands=[Register("v", I32), IntConst(2, I32)],
            ),
            Instruction("ret", operands=[Register("q", I32)]),
        ],
    )
    call = _synthetic_call()
    insert_before(block, 3, call)
    assert block.instructions[3] is call
    assert block.instructions[4].opcode == "sdiv"


def test_insert_rejects_non_synthetic():
    from irinstr.ir import insert_before

    block = _block_with_ret()
    plain = Instruction("call", operands=[FunctionRef("f")], type=VOID)
    with pytest.raises(ValueError):
        insert_before(block, 0, plain)


def test_insert_preserves_module_invariants():
    from irinstr.ir import insert_after, insert_before

    m = parse_ir(
        """
define i32 @main(i32 %a) {
entry:
  %x = add i32 %a, 1
  %y = mul i32 %x, 2
  ret i32 %y
}
"""
    )
    block = m.functions[0].blocks[0]
    insert_before(block, 1, _synthetic_call("one"))
    insert_after(block, 0, _synthetic_call("two"))
    insert_before(block, len(block.instructions) - 1, _synthetic_call("three"))
    assert validate_module(m) == []
    originals = [i for i in block.instructions if not i.synthetic]
    assert [i.opcode for i in originals] == ["add", "mul", "ret"]


def test_visible_skips_synthetic():
    block = _block_with_ret()
    from irinstr.ir import insert_before

    insert_before(block, 0, _synthetic_call())
    assert [i.opcode for i in block.visible()] == ["add", "ret"]


def test_value_texts():
    from irinstr.ir import match_text, value_text

    assert value_text(Register("x", I32)) == "%x"
    assert value_text(IntConst(0, I32)) == "0"
    assert value_text(IntConst(1, I1)) == "true"
    assert value_text(NullConst()) == "null"
    assert match_text(FunctionRef("malloc")) == "malloc"
    assert match_text(IntConst(0, I32)) == "0"
