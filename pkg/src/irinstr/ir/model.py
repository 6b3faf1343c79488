"""Data model for the SSA IR subset: types, values, instructions, modules.

The subset covers 15 opcodes over integer, opaque-pointer, and array types.
Pointers are untyped (`ptr`) and 8 bytes wide (64-bit data layout).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import TerminatorViolation, VoidSizeError

# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

INT_WIDTHS = (1, 8, 16, 32, 64)
POINTER_SIZE = 8


@dataclass(frozen=True)
class IntType:
    """Fixed-width two's-complement integer type (i1/i8/i16/i32/i64)."""

    bits: int

    def __post_init__(self):
        if self.bits not in INT_WIDTHS:
            raise ValueError(f"unsupported integer width i{self.bits}")

    @property
    def signed_min(self) -> int:
        return 0 if self.bits == 1 else -(1 << (self.bits - 1))

    @property
    def signed_max(self) -> int:
        return 1 if self.bits == 1 else (1 << (self.bits - 1)) - 1


@dataclass(frozen=True)
class PtrType:
    """Opaque pointer type (`ptr`)."""


@dataclass(frozen=True)
class ArrayType:
    """Fixed-length homogeneous array, e.g. ``[10 x i64]``.

    Invariants: length >= 0 and the element type is never void.
    """

    length: int
    element: "TypeDesc"

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("array length must be non-negative")
        if isinstance(self.element, VoidType):
            raise ValueError("array element type cannot be void")


@dataclass(frozen=True)
class VoidType:
    """The void type; only valid as a function return type."""


TypeDesc = IntType | PtrType | ArrayType | VoidType

I1 = IntType(1)
I8 = IntType(8)
I16 = IntType(16)
I32 = IntType(32)
I64 = IntType(64)
PTR = PtrType()
VOID = VoidType()


def type_size(t: TypeDesc) -> int:
    """Byte size of a type: ceil(bits/8) for ints, 8 for pointers, n*elem for arrays."""
    if isinstance(t, IntType):
        return (t.bits + 7) // 8
    if isinstance(t, PtrType):
        return POINTER_SIZE
    if isinstance(t, ArrayType):
        return t.length * type_size(t.element)
    raise VoidSizeError("void has no size")


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Register:
    """SSA virtual register; names are unique within their function."""

    name: str
    type: TypeDesc


@dataclass(frozen=True)
class IntConst:
    """Integer constant; the value fits its width in two's complement.

    i1 constants are normalised to 0/1 and printed as false/true.
    """

    value: int
    type: IntType


@dataclass(frozen=True)
class NullConst:
    """The null pointer constant."""

    type: PtrType = PTR


@dataclass(frozen=True)
class GlobalRef:
    """Address of a module global; the value itself has pointer type."""

    name: str
    pointee: TypeDesc


@dataclass(frozen=True)
class FunctionRef:
    """Reference to a function by name (used as the callee of `call`)."""

    name: str


Value = Register | IntConst | NullConst | GlobalRef | FunctionRef


def value_type(v: Value) -> TypeDesc:
    if isinstance(v, (Register, IntConst, NullConst)):
        return v.type
    return PTR


def value_text(v: Value) -> str:
    """Canonical printed form of a value, as it appears in IR text."""
    if isinstance(v, Register):
        return f"%{v.name}"
    if isinstance(v, IntConst):
        if v.type.bits == 1:
            return "true" if v.value else "false"
        return str(v.value)
    if isinstance(v, NullConst):
        return "null"
    if isinstance(v, GlobalRef):
        return f"@{v.name}"
    return f"@{v.name}"


def match_text(v: Value) -> str:
    """Text a rule's literal operand is compared against.

    Function references match by bare name (``malloc``), everything else by
    its printed form (``%x``, ``@g``, ``0``, ``null``).
    """
    if isinstance(v, FunctionRef):
        return v.name
    return value_text(v)


# ---------------------------------------------------------------------------
# Instructions
# ---------------------------------------------------------------------------

BINARY_OPS = ("add", "sub", "mul", "sdiv", "udiv", "srem")
OPCODES = (
    "alloca",
    "load",
    "store",
    "getelementptr",
    *BINARY_OPS,
    "icmp",
    "br",
    "ret",
    "call",
    "phi",
)
TERMINATORS = ("br", "ret")
ICMP_PREDICATES = ("eq", "ne", "ugt", "uge", "ult", "ule", "sgt", "sge", "slt", "sle")


@dataclass
class Instruction:
    """One instruction.

    `operands` holds value operands only; branch targets and phi incoming
    labels live in `labels`. For `call` the callee FunctionRef is the last
    operand. `type` carries the opcode's principal type: allocated type for
    alloca, loaded type for load, source element type for getelementptr,
    return type for call. `synthetic` marks engine-inserted instructions;
    the parser never sets it, and synthetic instructions are invisible to
    rule matching.
    """

    opcode: str
    result: Register | None = None
    operands: list[Value] = field(default_factory=list)
    type: TypeDesc | None = None
    predicate: str | None = None
    labels: list[str] = field(default_factory=list)
    synthetic: bool = field(default=False, compare=False)

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    @property
    def callee(self) -> FunctionRef:
        if self.opcode != "call" or not self.operands:
            raise ValueError("not a call instruction")
        last = self.operands[-1]
        assert isinstance(last, FunctionRef)
        return last

    @property
    def call_args(self) -> list[Value]:
        if self.opcode != "call":
            raise ValueError("not a call instruction")
        return self.operands[:-1]


@dataclass
class BasicBlock:
    """Labelled instruction sequence; the single terminator is last."""

    label: str
    instructions: list[Instruction] = field(default_factory=list)

    @property
    def terminator(self) -> Instruction:
        return self.instructions[-1]

    def visible(self) -> list[Instruction]:
        """Non-synthetic instructions in order; the only thing rules can match."""
        return [ins for ins in self.instructions if not ins.synthetic]


@dataclass
class Function:
    name: str
    params: list[tuple[str, TypeDesc]] = field(default_factory=list)
    return_type: TypeDesc = VOID
    blocks: list[BasicBlock] = field(default_factory=list)

    @property
    def is_declaration(self) -> bool:
        return not self.blocks

    @property
    def entry_block(self) -> BasicBlock:
        return self.blocks[0]

    def block(self, label: str) -> BasicBlock | None:
        for b in self.blocks:
            if b.label == label:
                return b
        return None


@dataclass(frozen=True)
class ZeroInit:
    """`zeroinitializer` marker for array globals."""


@dataclass
class GlobalVariable:
    name: str
    type: TypeDesc
    initializer: IntConst | NullConst | ZeroInit | None = None


@dataclass
class Module:
    globals: list[GlobalVariable] = field(default_factory=list)
    functions: list[Function] = field(default_factory=list)

    def function(self, name: str) -> Function | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def global_var(self, name: str) -> GlobalVariable | None:
        for g in self.globals:
            if g.name == name:
                return g
        return None


# ---------------------------------------------------------------------------
# Mutation
# ---------------------------------------------------------------------------


def _physical_index(block: BasicBlock, instr: Instruction) -> int:
    for i, ins in enumerate(block.instructions):
        if ins is instr:
            return i
    raise ValueError(f"instruction not in block %{block.label}")


def insert_before(block: BasicBlock, index: int, instr: Instruction) -> None:
    """Insert `instr` before position `index`; pre-existing order is kept."""
    _check_insertable(block, index, instr)
    block.instructions.insert(index, instr)


def insert_after(block: BasicBlock, index: int, instr: Instruction) -> None:
    """Insert `instr` after position `index`; rejected if that is the terminator."""
    _check_insertable(block, index, instr)
    if block.instructions[index].is_terminator:
        raise TerminatorViolation(
            f"cannot insert after the terminator of block %{block.label}"
        )
    block.instructions.insert(index + 1, instr)


def _check_insertable(block: BasicBlock, index: int, instr: Instruction) -> None:
    if not 0 <= index < len(block.instructions):
        raise IndexError(f"index {index} out of range for block %{block.label}")
    if not instr.synthetic:
        raise ValueError("only synthetic instructions may be inserted")
    if instr.is_terminator:
        raise ValueError("terminators cannot be inserted")


# ---------------------------------------------------------------------------
# Structural checks (used by tests and by the engine after mutation)
# ---------------------------------------------------------------------------


def check_instruction_shape(ins: Instruction) -> str | None:
    """Return a message describing an arity/shape violation, or None if fine."""
    op = ins.opcode
    n = len(ins.operands)
    if op not in OPCODES:
        return f"unsupported opcode '{op}'"
    if op == "alloca":
        if n != 0 or ins.result is None or ins.type is None:
            return "alloca takes no operands and defines a result"
    elif op == "load":
        if n != 1 or ins.result is None or ins.type is None:
            return "load takes exactly one pointer operand"
    elif op == "store":
        if n != 2 or ins.result is not None:
            return "store takes exactly two operands and no result"
    elif op == "getelementptr":
        if n < 2 or ins.result is None or ins.type is None:
            return "getelementptr takes a base pointer and at least one index"
    elif op in BINARY_OPS:
        if n != 2 or ins.result is None:
            return f"{op} takes exactly two operands and defines a result"
    elif op == "icmp":
        if n != 2 or ins.result is None or ins.predicate not in ICMP_PREDICATES:
            return "icmp takes a predicate and exactly two operands"
    elif op == "br":
        if not (
            (n == 0 and len(ins.labels) == 1) or (n == 1 and len(ins.labels) == 2)
        ):
            return "br is either unconditional (one label) or conditional (two)"
    elif op == "ret":
        if n > 1 or ins.result is not None:
            return "ret takes at most one operand"
    elif op == "call":
        if n < 1 or not isinstance(ins.operands[-1], FunctionRef):
            return "call requires the callee as its last operand"
    elif op == "phi":
        if n < 1 or n != len(ins.labels) or ins.result is None:
            return "phi needs one incoming value per incoming label"
    return None


def validate_module(m: Module) -> list[str]:
    """Check structural invariants; returns human-readable violations."""
    problems: list[str] = []
    seen_globals: set[str] = set()
    for g in m.globals:
        if g.name in seen_globals:
            problems.append(f"duplicate global @{g.name}")
        seen_globals.add(g.name)
    seen_fns: set[str] = set()
    for fn in m.functions:
        if fn.name in seen_fns:
            problems.append(f"duplicate function @{fn.name}")
        seen_fns.add(fn.name)
        labels = {b.label for b in fn.blocks}
        if len(labels) != len(fn.blocks):
            problems.append(f"@{fn.name}: duplicate block label")
        names: set[str] = {p for p, _ in fn.params if p}
        if len(names) != len([p for p, _ in fn.params if p]):
            problems.append(f"@{fn.name}: duplicate parameter name")
        for b in fn.blocks:
            if not b.instructions:
                problems.append(f"@{fn.name} %{b.label}: empty block")
                continue
            for i, ins in enumerate(b.instructions):
                msg = check_instruction_shape(ins)
                if msg:
                    problems.append(f"@{fn.name} %{b.label}: {msg}")
                if ins.is_terminator and i != len(b.instructions) - 1:
                    problems.append(
                        f"@{fn.name} %{b.label}: terminator not last"
                    )
                if ins.result is not None:
                    if ins.result.name in names:
                        problems.append(
                            f"@{fn.name}: duplicate SSA name %{ins.result.name}"
                        )
                    names.add(ins.result.name)
                for lab in ins.labels:
                    if lab not in labels:
                        problems.append(
                            f"@{fn.name} %{b.label}: unknown label %{lab}"
                        )
            if not b.terminator.is_terminator:
                problems.append(f"@{fn.name} %{b.label}: missing terminator")
    return problems
