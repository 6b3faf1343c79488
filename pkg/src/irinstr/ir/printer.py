"""Canonical printer for the IR subset.

Output is deterministic (fixed spacing, one instruction per line) so golden
tests can compare bytes, and it re-parses to a structurally equal module.
"""

from __future__ import annotations

from .model import (
    ArrayType,
    BasicBlock,
    BINARY_OPS,
    Function,
    GlobalVariable,
    Instruction,
    IntType,
    Module,
    PtrType,
    TypeDesc,
    value_text,
    value_type,
    VoidType,
    ZeroInit,
)


def type_text(t: TypeDesc) -> str:
    if isinstance(t, IntType):
        return f"i{t.bits}"
    if isinstance(t, PtrType):
        return "ptr"
    if isinstance(t, VoidType):
        return "void"
    assert isinstance(t, ArrayType)
    return f"[{t.length} x {type_text(t.element)}]"


def _typed(v) -> str:
    return f"{type_text(value_type(v))} {value_text(v)}"


def instruction_text(ins: Instruction) -> str:
    op = ins.opcode
    prefix = f"%{ins.result.name} = " if ins.result is not None else ""
    if op == "alloca":
        return f"{prefix}alloca {type_text(ins.type)}"
    if op == "load":
        return f"{prefix}load {type_text(ins.type)}, ptr {value_text(ins.operands[0])}"
    if op == "store":
        val, ptr = ins.operands
        return f"store {_typed(val)}, ptr {value_text(ptr)}"
    if op == "getelementptr":
        base, *indices = ins.operands
        idx = ", ".join(_typed(i) for i in indices)
        return f"{prefix}getelementptr {type_text(ins.type)}, ptr {value_text(base)}, {idx}"
    if op in BINARY_OPS:
        a, b = ins.operands
        return f"{prefix}{op} {type_text(value_type(a))} {value_text(a)}, {value_text(b)}"
    if op == "icmp":
        a, b = ins.operands
        return (
            f"{prefix}icmp {ins.predicate} {type_text(value_type(a))} "
            f"{value_text(a)}, {value_text(b)}"
        )
    if op == "br":
        if not ins.operands:
            return f"br label %{ins.labels[0]}"
        cond = ins.operands[0]
        return (
            f"br i1 {value_text(cond)}, label %{ins.labels[0]}, label %{ins.labels[1]}"
        )
    if op == "ret":
        if not ins.operands:
            return "ret void"
        return f"ret {_typed(ins.operands[0])}"
    if op == "call":
        args = ", ".join(_typed(a) for a in ins.call_args)
        return f"{prefix}call {type_text(ins.type)} @{ins.callee.name}({args})"
    if op == "phi":
        arms = ", ".join(
            f"[ {value_text(v)}, %{lab} ]" for v, lab in zip(ins.operands, ins.labels)
        )
        ty = type_text(value_type(ins.operands[0]))
        return f"{prefix}phi {ty} {arms}"
    raise ValueError(f"cannot print opcode '{op}'")


def _global_text(g: GlobalVariable) -> str:
    if g.initializer is None:
        return f"@{g.name} = external global {type_text(g.type)}"
    if isinstance(g.initializer, ZeroInit):
        init = "zeroinitializer"
    else:
        init = value_text(g.initializer)
    return f"@{g.name} = global {type_text(g.type)} {init}"


def _block_lines(block: BasicBlock) -> list[str]:
    lines = [f"{block.label}:"]
    lines.extend(f"  {instruction_text(ins)}" for ins in block.instructions)
    return lines


def _function_lines(fn: Function) -> list[str]:
    if fn.is_declaration:
        params = ", ".join(type_text(t) for _, t in fn.params)
        return [f"declare {type_text(fn.return_type)} @{fn.name}({params})"]
    params = ", ".join(f"{type_text(t)} %{n}" for n, t in fn.params)
    lines = [f"define {type_text(fn.return_type)} @{fn.name}({params}) {{"]
    for block in fn.blocks:
        lines.extend(_block_lines(block))
    lines.append("}")
    return lines


def print_ir(m: Module) -> str:
    """Render a module as canonical IR text; the empty module prints as ''."""
    chunks: list[list[str]] = []
    if m.globals:
        chunks.append([_global_text(g) for g in m.globals])
    for fn in m.functions:
        chunks.append(_function_lines(fn))
    if not chunks:
        return ""
    return "\n\n".join("\n".join(c) for c in chunks) + "\n"
