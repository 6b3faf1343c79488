import random

import pytest

from irinstr.errors import IRSemanticError, IRSyntaxError
from irinstr.ir import (
    ArrayType,
    I32,
    Instruction,
    IntConst,
    parse_ir,
    print_ir,
    Register,
    validate_module,
)


def test_minimal_module():
    m = parse_ir("define i32 @main() { entry: ret i32 0 }")
    assert len(m.functions) == 1
    assert len(m.functions[0].blocks) == 1
    assert len(m.functions[0].blocks[0].instructions) == 1


def test_single_global():
    m = parse_ir(
        """
@g = global i32 0

define i32 @main() {
entry:
  ret i32 0
}
"""
    )
    assert [g.name for g in m.globals] == ["g"]
    assert m.globals[0].type == I32
    assert m.globals[0].initializer == IntConst(0, I32)


def test_sdiv_shape():
    m = parse_ir(
        """
define i32 @f(i32 %a, i32 %b) {
entry:
  %x = sdiv i32 %a, %b
  ret i32 %x
}
"""
    )
    ins = m.functions[0].blocks[0].instructions[0]
    assert ins.opcode == "sdiv"
    assert ins.result == Register("x", I32)
    assert ins.operands == [Register("a", I32), Register("b", I32)]
    assert ins.synthetic is False


def test_parser_never_sets_synthetic():
    m = parse_ir(
        """
define void @f() {
entry:
  call void @g()
  ret void
}

declare void @g()
"""
    )
    for fn in m.functions:
        for block in fn.blocks:
            assert all(not ins.synthetic for ins in block.instructions)


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("define i32 @f() { entry: %x = fadd i32 1, 2 ret i32 0 }", "unsupported opcode"),
        ("define i32 @f() { entry: ret i32 }", "expected"),
        ("@g = global i32", "initializer"),
        ("define i32 @f(] {}", "expected"),
    ],
)
def test_syntax_errors(text, fragment):
    with pytest.raises(IRSyntaxError) as err:
        parse_ir(text)
    assert fragment in str(err.value)


@pytest.mark.parametrize(
    "text,fragment",
    [
        # duplicate SSA name
        (
            "define i32 @f() { entry: %x = add i32 1, 2 %x = add i32 3, 4 ret i32 0 }",
            "duplicate SSA name",
        ),
        # missing label
        ("define void @f() { entry: br label %nowhere }", "unknown label"),
        # result on a void call
        (
            "declare void @g() define void @f() { entry: %r = call void @g() ret void }",
            "does not produce a value",
        ),
        # block without terminator
        ("define i32 @f() { entry: %x = add i32 1, 2 }", "no terminator"),
        # instruction after the terminator
        (
            "define i32 @f() { entry: ret i32 0 %x = add i32 1, 2 }",
            "after the block terminator",
        ),
        # use of an undefined value
        ("define i32 @f() { entry: ret i32 %nope }", "undefined value"),
        # use/def type disagreement
        (
            "define i32 @f() { entry: %x = add i32 1, 2 %y = add i64 %x, 1 ret i32 %x }",
            "declared i32, used as i64",
        ),
        # arity violation against a known signature
        (
            "declare void @g(i64) define void @f() { entry: call void @g() ret void }",
            "passes 0 arguments",
        ),
        # constant out of range
        ("define void @f() { entry: %x = add i8 200, 200 ret void }", "does not fit"),
        # duplicate parameter
        ("define void @f(i32 %a, i32 %a) { entry: ret void }", "duplicate parameter"),
        # phi after a non-phi instruction
        (
            "define i32 @f(i32 %a) { entry: %x = add i32 %a, 1 %p = phi i32 [ 0, %entry ] ret i32 %x }",
            "phi instructions must lead",
        ),
    ],
)
def test_semantic_errors(text, fragment):
    with pytest.raises(IRSemanticError) as err:
        parse_ir(text)
    assert fragment in str(err.value)


def test_errors_carry_positions():
    text = "define i32 @f() {\nentry:\n  %x = fadd i32 1, 2\n  ret i32 0\n}"
    with pytest.raises(IRSyntaxError) as err:
        parse_ir(text)
    assert err.value.line == 3
    assert err.value.column == 8


def test_unresolved_callee_is_allowed_until_merge():
    m = parse_ir("define void @f() { entry: call void @later() ret void }")
    assert m.function("later") is None  # resolved only after definitions merge


def test_comments_and_whitespace():
    m = parse_ir(
        """; leading comment
define i32 @main() { ; trailing
entry: ; block comment
  ret i32 0
}
"""
    )
    assert len(m.functions) == 1


def test_declaration_parameter_names_are_dropped():
    a = parse_ir("declare void @f(i64 %x, ptr %y)")
    b = parse_ir("declare void @f(i64, ptr)")
    assert a == b


def test_negative_and_boolean_constants():
    m = parse_ir(
        """
define i1 @f() {
entry:
  %a = add i8 -128, 127
  %b = add i1 true, false
  ret i1 %b
}
"""
    )
    ins = m.functions[0].blocks[0].instructions
    assert ins[0].operands[0].value == -128
    assert ins[1].operands == [IntConst(1, parse_type_i1()), IntConst(0, parse_type_i1())]


def parse_type_i1():
    from irinstr.ir import I1

    return I1


# ---------------------------------------------------------------------------
# Round-trip property over generated modules
# ---------------------------------------------------------------------------


def _random_module(rng: random.Random) -> str:
    lines = []
    n_globals = rng.randint(0, 2)
    for gi in range(n_globals):
        ty, init = rng.choice(
            [("i32", str(rng.randint(-50, 50))), ("i64", "7"), ("ptr", "null"),
             ("[4 x i32]", "zeroinitializer")]
        )
        lines.append(f"@g{gi} = global {ty} {init}")
    lines.append("define i32 @main(i32 %a, i32 %b) {")
    lines.append("entry:")
    regs = ["%a", "%b"]
    for i in range(rng.randint(1, 6)):
        op = rng.choice(["add", "sub", "mul"])
        lhs = rng.choice(regs + [str(rng.randint(-9, 9))])
        rhs = rng.choice(regs + [str(rng.randint(-9, 9))])
        lines.append(f"  %v{i} = {op} i32 {lhs}, {rhs}")
        regs.append(f"%v{i}")
    lines.append(f"  ret i32 {rng.choice(regs)}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def test_round_trip_property_on_generated_modules():
    rng = random.Random(20240817)
    for _ in range(60):
        text = _random_module(rng)
        m1 = parse_ir(text)
        printed = print_ir(m1)
        m2 = parse_ir(printed)
        assert m1 == m2
        assert print_ir(m2) == printed
        assert validate_module(m2) == []


def test_round_trip_all_repo_ir_files(repo_root):
    files = sorted(repo_root.glob("corpus/**/*.ll")) + [repo_root / "runtime" / "checks.ll"]
    assert files
    for path in files:
        m1 = parse_ir(path.read_text(encoding="utf-8"))
        printed = print_ir(m1)
        m2 = parse_ir(printed)
        assert m1 == m2, path
        assert print_ir(m2) == printed, path
