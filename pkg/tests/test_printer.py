from irinstr.ir import (
    FunctionRef,
    I64,
    instruction_text,
    IntConst,
    Module,
    parse_ir,
    print_ir,
    Register,
    VOID,
    Instruction,
    PTR,
)


def test_empty_module_prints_empty_text():
    assert print_ir(Module()) == ""
    assert print_ir(parse_ir("")) == ""


def test_canonical_form_is_stable():
    messy = "define i32 @f(  i32   %a ) {   entry:  %x = add i32 %a , 1   ret i32 %x }"
    printed = print_ir(parse_ir(messy))
    assert printed == (
        "define i32 @f(i32 %a) {\n"
        "entry:\n"
        "  %x = add i32 %a, 1\n"
        "  ret i32 %x\n"
        "}\n"
    )
    assert print_ir(parse_ir(printed)) == printed


def test_globals_then_functions_with_blank_separators():
    text = print_ir(
        parse_ir(
            """
@a = global i32 1
@b = global ptr null

declare void @ext(i64)

define void @main() {
entry:
  ret void
}
"""
        )
    )
    assert text.split("\n\n")[0] == "@a = global i32 1\n@b = global ptr null"
    assert "\n\ndeclare void @ext(i64)\n\n" in text


def test_synthetic_call_prints_like_handwritten():
    call = Instruction(
        "call",
        operands=[Register("p", PTR), IntConst(8, I64), FunctionRef("check_store")],
        type=VOID,
        synthetic=True,
    )
    line = instruction_text(call)
    assert line == "call void @check_store(ptr %p, i64 8)"
    # byte-for-byte what the parser accepts for a handwritten call
    m = parse_ir(
        "declare void @check_store(ptr, i64)\n"
        "define void @f(ptr %p) {\nentry:\n  " + line + "\n  ret void\n}\n"
    )
    parsed = m.function("f").blocks[0].instructions[0]
    assert instruction_text(parsed) == line
    assert parsed.synthetic is False


def test_instrumented_output_differs_only_by_inserted_lines(repo_root):
    # diff of a corpus input and its golden: every removed line reappears,
    # additions are calls plus merged definitions
    name = "memsafe_heap"
    original = (repo_root / f"corpus/{name}.ll").read_text(encoding="utf-8")
    golden = (repo_root / f"corpus/golden/{name}.ll").read_text(encoding="utf-8")
    org_lines = [l for l in original.splitlines() if l.strip()]
    gold_lines = golden.splitlines()
    it = iter(gold_lines)
    for needle in org_lines:
        for line in it:
            if line == needle:
                break
        else:
            raise AssertionError(f"line lost by instrumentation: {needle!r}")
