"""Parser for the textual IR subset.

Grammar reference lives in docs/ir-subset.md. Errors carry 1-based
line/column positions. The parser checks names, arities, and types; it does
not verify SSA dominance.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import IRSemanticError, IRSyntaxError
from .model import (
    ArrayType,
    BasicBlock,
    FunctionRef,
    Function,
    GlobalRef,
    GlobalVariable,
    I1,
    ICMP_PREDICATES,
    BINARY_OPS,
    Instruction,
    IntConst,
    IntType,
    Module,
    NullConst,
    PTR,
    PtrType,
    Register,
    TypeDesc,
    Value,
    VOID,
    VoidType,
    ZeroInit,
)

_PUNCT = "=,(){}[]:"
_WORD_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789$._-")


@dataclass(frozen=True)
class _Token:
    kind: str  # 'local', 'global', 'word', 'int', or a punctuation char
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_col = col
        if c in _PUNCT:
            tokens.append(_Token(c, c, line, start_col))
            i += 1
            col += 1
            continue
        if c in "%@":
            j = i + 1
            while j < n and text[j] in _WORD_CHARS:
                j += 1
            if j == i + 1:
                raise IRSyntaxError(f"dangling '{c}'", line, start_col)
            kind = "local" if c == "%" else "global"
            tokens.append(_Token(kind, text[i + 1 : j], line, start_col))
            col += j - i
            i = j
            continue
        if c == "-" or c.isdigit():
            j = i + 1 if c == "-" else i
            while j < n and text[j].isdigit():
                j += 1
            if c == "-" and j == i + 1:
                raise IRSyntaxError("dangling '-'", line, start_col)
            tokens.append(_Token("int", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if c in _WORD_CHARS:
            j = i
            while j < n and text[j] in _WORD_CHARS:
                j += 1
            tokens.append(_Token("word", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        raise IRSyntaxError(f"unexpected character {c!r}", line, start_col)
    return tokens


@dataclass(frozen=True)
class _Unresolved:
    """Placeholder for an @name operand; resolved once the module is known."""

    name: str
    line: int
    col: int
    is_callee: bool = False


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    # -- token plumbing ----------------------------------------------------

    def _peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self, expect: str | None = None, what: str = "") -> _Token:
        tok = self._peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("word", "", 1, 1)
            raise IRSyntaxError(
                f"unexpected end of input{': expected ' + (what or expect) if (what or expect) else ''}",
                last.line,
                last.col,
            )
        if expect is not None and tok.kind != expect:
            raise IRSyntaxError(
                f"expected {what or expect}, found {tok.text!r}", tok.line, tok.col
            )
        self.pos += 1
        return tok

    def _accept_word(self, word: str) -> bool:
        tok = self._peek()
        if tok is not None and tok.kind == "word" and tok.text == word:
            self.pos += 1
            return True
        return False

    def _expect_word(self, word: str) -> _Token:
        tok = self._next("word", f"'{word}'")
        if tok.text != word:
            raise IRSyntaxError(f"expected '{word}', found {tok.text!r}", tok.line, tok.col)
        return tok

    # -- types --------------------------------------------------------------

    def _parse_type(self, allow_void: bool = False) -> TypeDesc:
        tok = self._peek()
        if tok is None:
            raise IRSyntaxError("expected a type", 1, 1)
        if tok.kind == "[":
            self._next()
            length = int(self._next("int", "array length").text)
            self._expect_word("x")
            element = self._parse_type()
            self._next("]")
            if length < 0:
                raise IRSemanticError("array length must be non-negative", tok.line, tok.col)
            if isinstance(element, VoidType):
                raise IRSemanticError("array element cannot be void", tok.line, tok.col)
            return ArrayType(length, element)
        if tok.kind == "word":
            if tok.text == "ptr":
                self._next()
                return PTR
            if tok.text == "void":
                if not allow_void:
                    raise IRSemanticError("void is not allowed here", tok.line, tok.col)
                self._next()
                return VOID
            if tok.text.startswith("i") and tok.text[1:].isdigit():
                bits = int(tok.text[1:])
                if bits not in (1, 8, 16, 32, 64):
                    raise IRSyntaxError(
                        f"unsupported integer width {tok.text!r}", tok.line, tok.col
                    )
                self._next()
                return IntType(bits)
        raise IRSyntaxError(f"expected a type, found {tok.text!r}", tok.line, tok.col)

    # -- values ---------------------------------------------------------------

    def _parse_value(self, expected: TypeDesc, what: str = "value") -> Value | _Unresolved:
        tok = self._peek()
        if tok is None:
            raise IRSyntaxError(f"expected {what}", 1, 1)
        if tok.kind == "local":
            self._next()
            return Register(tok.text, expected)
        if tok.kind == "global":
            self._next()
            if not isinstance(expected, PtrType):
                raise IRSemanticError(
                    f"@{tok.text} has pointer type, expected {_type_name(expected)}",
                    tok.line,
                    tok.col,
                )
            return _Unresolved(tok.text, tok.line, tok.col)
        if tok.kind == "int":
            self._next()
            if not isinstance(expected, IntType):
                raise IRSemanticError(
                    f"integer constant used where {_type_name(expected)} is expected",
                    tok.line,
                    tok.col,
                )
            return _make_int_const(int(tok.text), expected, tok)
        if tok.kind == "word" and tok.text in ("true", "false"):
            self._next()
            if not isinstance(expected, IntType) or expected.bits != 1:
                raise IRSemanticError(
                    f"'{tok.text}' is an i1 constant", tok.line, tok.col
                )
            return IntConst(1 if tok.text == "true" else 0, I1)
        if tok.kind == "word" and tok.text == "null":
            self._next()
            if not isinstance(expected, PtrType):
                raise IRSemanticError("'null' is a pointer constant", tok.line, tok.col)
            return NullConst()
        raise IRSyntaxError(f"expected {what}, found {tok.text!r}", tok.line, tok.col)

    def _parse_label_ref(self) -> str:
        tok = self._next("local", "a %label reference")
        return tok.text

    # -- module -----------------------------------------------------------------

    def parse_module(self) -> Module:
        module = Module()
        pending: list[tuple[Function, Instruction, int, _Unresolved]] = []
        while self._peek() is not None:
            tok = self._peek()
            assert tok is not None
            if tok.kind == "global":
                module.globals.append(self._parse_global(module))
            elif tok.kind == "word" and tok.text == "define":
                module.functions.append(self._parse_function(module, pending, body=True))
            elif tok.kind == "word" and tok.text == "declare":
                module.functions.append(self._parse_function(module, pending, body=False))
            else:
                raise IRSyntaxError(
                    f"expected a global, 'define', or 'declare', found {tok.text!r}",
                    tok.line,
                    tok.col,
                )
        self._resolve_refs(module, pending)
        return module

    def _parse_global(self, module: Module) -> GlobalVariable:
        name_tok = self._next("global")
        if module.global_var(name_tok.text) is not None:
            raise IRSemanticError(
                f"duplicate global @{name_tok.text}", name_tok.line, name_tok.col
            )
        self._next("=")
        external = self._accept_word("external")
        self._expect_word("global")
        ty = self._parse_type()
        if external:
            return GlobalVariable(name_tok.text, ty, None)
        tok = self._peek()
        if tok is None:
            raise IRSyntaxError("expected an initializer", name_tok.line, name_tok.col)
        init: IntConst | NullConst | ZeroInit
        if tok.kind == "word" and tok.text == "zeroinitializer":
            self._next()
            if not isinstance(ty, ArrayType):
                raise IRSemanticError(
                    "zeroinitializer is only supported for array globals",
                    tok.line,
                    tok.col,
                )
            init = ZeroInit()
        else:
            v = self._parse_value(ty, "initializer")
            if isinstance(v, (_Unresolved, Register)):
                raise IRSemanticError(
                    "global initializers must be constants", tok.line, tok.col
                )
            init = v
        return GlobalVariable(name_tok.text, ty, init)

    def _parse_function(
        self,
        module: Module,
        pending: list,
        body: bool,
    ) -> Function:
        self._next("word")  # define / declare
        ret = self._parse_type(allow_void=True)
        name_tok = self._next("global", "function name")
        if module.function(name_tok.text) is not None:
            raise IRSemanticError(
                f"duplicate function @{name_tok.text}", name_tok.line, name_tok.col
            )
        fn = Function(name_tok.text, [], ret, [])
        self._next("(")
        seen_params: set[str] = set()
        while self._peek() is not None and self._peek().kind != ")":  # type: ignore[union-attr]
            if fn.params:
                self._next(",")
            pty = self._parse_type()
            tok = self._peek()
            pname = ""
            if body:
                ptok = self._next("local", "parameter name")
                pname = ptok.text
                if pname in seen_params:
                    raise IRSemanticError(
                        f"duplicate parameter %{pname}", ptok.line, ptok.col
                    )
                seen_params.add(pname)
            elif tok is not None and tok.kind == "local":
                self._next()  # declaration parameter names are dropped
            fn.params.append((pname, pty))
        self._next(")")
        if not body:
            return fn
        self._next("{")
        defined: dict[str, TypeDesc] = {p: t for p, t in fn.params}
        uses: list[tuple[Register, _Token]] = []
        while not (self._peek() is not None and self._peek().kind == "}"):  # type: ignore[union-attr]
            self._parse_block(fn, defined, uses, pending)
        self._next("}")
        if not fn.blocks:
            raise IRSemanticError(
                f"@{fn.name}: a function body needs at least one block",
                name_tok.line,
                name_tok.col,
            )
        labels = {b.label for b in fn.blocks}
        for block in fn.blocks:
            for ins in block.instructions:
                for lab in ins.labels:
                    if lab not in labels:
                        raise IRSemanticError(
                            f"@{fn.name}: unknown label %{lab}",
                            name_tok.line,
                            name_tok.col,
                        )
        for reg, tok in uses:
            ty = defined.get(reg.name)
            if ty is None:
                raise IRSemanticError(
                    f"use of undefined value %{reg.name}", tok.line, tok.col
                )
            if ty != reg.type:
                raise IRSemanticError(
                    f"%{reg.name} is declared {_type_name(ty)}, used as {_type_name(reg.type)}",
                    tok.line,
                    tok.col,
                )
        return fn

    def _parse_block(
        self,
        fn: Function,
        defined: dict[str, TypeDesc],
        uses: list,
        pending: list,
    ) -> None:
        label_tok = self._next("word", "a block label")
        self._next(":")
        if fn.block(label_tok.text) is not None:
            raise IRSemanticError(
                f"duplicate block label {label_tok.text}", label_tok.line, label_tok.col
            )
        block = BasicBlock(label_tok.text)
        fn.blocks.append(block)
        saw_non_phi = False
        while True:
            tok = self._peek()
            if tok is None:
                raise IRSyntaxError(
                    "unexpected end of input inside a function body",
                    label_tok.line,
                    label_tok.col,
                )
            if tok.kind == "}":
                break
            # A bare word followed by ':' is the next block's label.
            if tok.kind == "word" and self._lookahead_is_label():
                break
            if block.instructions and block.terminator.is_terminator:
                raise IRSemanticError(
                    "instruction after the block terminator", tok.line, tok.col
                )
            ins = self._parse_instruction(fn, defined, uses, pending, tok)
            if ins.opcode == "phi":
                if saw_non_phi:
                    raise IRSemanticError(
                        "phi instructions must lead their block", tok.line, tok.col
                    )
            else:
                saw_non_phi = True
            block.instructions.append(ins)
        if not block.instructions or not block.terminator.is_terminator:
            raise IRSemanticError(
                f"block {label_tok.text} has no terminator",
                label_tok.line,
                label_tok.col,
            )

    def _lookahead_is_label(self) -> bool:
        nxt = self.tokens[self.pos + 1] if self.pos + 1 < len(self.tokens) else None
        return nxt is not None and nxt.kind == ":"

    # -- instructions -------------------------------------------------------

    def _parse_instruction(
        self,
        fn: Function,
        defined: dict[str, TypeDesc],
        uses: list,
        pending: list,
        at: _Token,
    ) -> Instruction:
        result_tok: _Token | None = None
        if at.kind == "local":
            result_tok = self._next("local")
            self._next("=")
        op_tok = self._next("word", "an opcode")
        op = op_tok.text
        handler = {
            "alloca": self._parse_alloca,
            "load": self._parse_load,
            "store": self._parse_store,
            "getelementptr": self._parse_gep,
            "icmp": self._parse_icmp,
            "br": self._parse_br,
            "ret": self._parse_ret,
            "call": self._parse_call,
            "phi": self._parse_phi,
        }.get(op)
        if handler is None and op in BINARY_OPS:
            ins = self._parse_binop(op, uses)
        elif handler is None:
            raise IRSyntaxError(f"unsupported opcode '{op}'", op_tok.line, op_tok.col)
        else:
            ins = handler(uses)  # type: ignore[operator]

        # Attach/validate the result register.
        res_ty = _result_type(ins)
        if result_tok is not None:
            if res_ty is None:
                raise IRSemanticError(
                    f"'{op}' does not produce a value", result_tok.line, result_tok.col
                )
            if result_tok.text in defined:
                raise IRSemanticError(
                    f"duplicate SSA name %{result_tok.text}",
                    result_tok.line,
                    result_tok.col,
                )
            ins.result = Register(result_tok.text, res_ty)
            defined[result_tok.text] = res_ty
        elif res_ty is not None:
            raise IRSemanticError(
                f"'{op}' must assign its result to a register", op_tok.line, op_tok.col
            )

        if ins.opcode == "call":
            pending.append((fn, ins, op_tok.line, op_tok.col))
        return ins

    def _operand(self, uses: list, expected: TypeDesc, what: str = "value") -> Value:
        tok = self._peek()
        v = self._parse_value(expected, what)
        if isinstance(v, Register):
            assert tok is not None
            uses.append((v, tok))
        return v  # type: ignore[return-value]  (placeholders resolved later)

    def _parse_alloca(self, uses: list) -> Instruction:
        ty = self._parse_type()
        return Instruction("alloca", type=ty)

    def _parse_load(self, uses: list) -> Instruction:
        ty = self._parse_type()
        self._next(",")
        self._expect_word("ptr")
        ptr = self._operand(uses, PTR, "pointer operand")
        return Instruction("load", operands=[ptr], type=ty)

    def _parse_store(self, uses: list) -> Instruction:
        ty = self._parse_type()
        val = self._operand(uses, ty)
        self._next(",")
        self._expect_word("ptr")
        ptr = self._operand(uses, PTR, "pointer operand")
        return Instruction("store", operands=[val, ptr])

    def _parse_gep(self, uses: list) -> Instruction:
        ty = self._parse_type()
        self._next(",")
        self._expect_word("ptr")
        base = self._operand(uses, PTR, "base pointer")
        operands = [base]
        while self._peek() is not None and self._peek().kind == ",":  # type: ignore[union-attr]
            self._next(",")
            idx_ty = self._parse_type()
            if not isinstance(idx_ty, IntType):
                tok = self.tokens[self.pos - 1]
                raise IRSemanticError("gep indices must be integers", tok.line, tok.col)
            operands.append(self._operand(uses, idx_ty, "index"))
        if len(operands) < 2:
            tok = self.tokens[self.pos - 1]
            raise IRSemanticError(
                "getelementptr needs at least one index", tok.line, tok.col
            )
        return Instruction("getelementptr", operands=operands, type=ty)

    def _parse_binop(self, op: str, uses: list) -> Instruction:
        ty = self._parse_type()
        if not isinstance(ty, IntType):
            tok = self.tokens[self.pos - 1]
            raise IRSemanticError(f"{op} operates on integers", tok.line, tok.col)
        a = self._operand(uses, ty)
        self._next(",")
        b = self._operand(uses, ty)
        return Instruction(op, operands=[a, b])

    def _parse_icmp(self, uses: list) -> Instruction:
        pred_tok = self._next("word", "an icmp predicate")
        if pred_tok.text not in ICMP_PREDICATES:
            raise IRSyntaxError(
                f"unknown icmp predicate '{pred_tok.text}'", pred_tok.line, pred_tok.col
            )
        ty = self._parse_type()
        if isinstance(ty, (ArrayType, VoidType)):
            raise IRSemanticError(
                "icmp compares integers or pointers", pred_tok.line, pred_tok.col
            )
        a = self._operand(uses, ty)
        self._next(",")
        b = self._operand(uses, ty)
        return Instruction("icmp", operands=[a, b], predicate=pred_tok.text)

    def _parse_br(self, uses: list) -> Instruction:
        if self._accept_word("label"):
            return Instruction("br", labels=[self._parse_label_ref()])
        ty = self._parse_type()
        if not (isinstance(ty, IntType) and ty.bits == 1):
            tok = self.tokens[self.pos - 1]
            raise IRSemanticError("br conditions have type i1", tok.line, tok.col)
        cond = self._operand(uses, I1, "branch condition")
        self._next(",")
        self._expect_word("label")
        t = self._parse_label_ref()
        self._next(",")
        self._expect_word("label")
        f = self._parse_label_ref()
        return Instruction("br", operands=[cond], labels=[t, f])

    def _parse_ret(self, uses: list) -> Instruction:
        if self._accept_word("void"):
            return Instruction("ret")
        ty = self._parse_type()
        v = self._operand(uses, ty, "return value")
        return Instruction("ret", operands=[v])

    def _parse_call(self, uses: list) -> Instruction:
        ret_ty = self._parse_type(allow_void=True)
        callee_tok = self._next("global", "a callee name")
        self._next("(")
        args: list[Value] = []
        while self._peek() is not None and self._peek().kind != ")":  # type: ignore[union-attr]
            if args:
                self._next(",")
            aty = self._parse_type()
            args.append(self._operand(uses, aty, "call argument"))
        self._next(")")
        callee = _Unresolved(callee_tok.text, callee_tok.line, callee_tok.col, is_callee=True)
        return Instruction("call", operands=[*args, callee], type=ret_ty)  # type: ignore[list-item]

    def _parse_phi(self, uses: list) -> Instruction:
        ty = self._parse_type()
        operands: list[Value] = []
        labels: list[str] = []
        while True:
            self._next("[")
            operands.append(self._operand(uses, ty, "incoming value"))
            self._next(",")
            labels.append(self._parse_label_ref())
            self._next("]")
            if self._peek() is not None and self._peek().kind == ",":  # type: ignore[union-attr]
                self._next(",")
                continue
            break
        return Instruction("phi", operands=operands, labels=labels)

    # -- reference resolution -------------------------------------------------

    def _resolve_refs(self, module: Module, pending: list) -> None:
        for fn in module.functions:
            for block in fn.blocks:
                for ins in block.instructions:
                    for i, v in enumerate(ins.operands):
                        if isinstance(v, _Unresolved):
                            ins.operands[i] = self._resolve_one(module, v)
        for fn, ins, line, col in pending:
            callee = ins.operands[-1]
            assert isinstance(callee, FunctionRef)
            target = module.function(callee.name)
            if target is None:
                continue  # resolvable only after definitions are merged
            if len(ins.call_args) != len(target.params):
                raise IRSemanticError(
                    f"call to @{callee.name} passes {len(ins.call_args)} arguments, "
                    f"expected {len(target.params)}",
                    line,
                    col,
                )
            if ins.type != target.return_type:
                raise IRSemanticError(
                    f"call to @{callee.name} states return type "
                    f"{_type_name(ins.type or VOID)}, expected "
                    f"{_type_name(target.return_type)}",
                    line,
                    col,
                )

    def _resolve_one(self, module: Module, ref: _Unresolved) -> Value:
        fn = module.function(ref.name)
        if fn is not None:
            return FunctionRef(ref.name)
        g = module.global_var(ref.name)
        if g is not None:
            return GlobalRef(ref.name, g.type)
        if ref.is_callee:
            return FunctionRef(ref.name)
        raise IRSemanticError(f"unknown global @{ref.name}", ref.line, ref.col)


def _make_int_const(value: int, ty: IntType, tok: _Token) -> IntConst:
    if ty.bits == 1:
        if value not in (0, 1):
            raise IRSemanticError("i1 constants are 0/1/true/false", tok.line, tok.col)
        return IntConst(value, ty)
    lo, hi = -(1 << (ty.bits - 1)), (1 << ty.bits) - 1
    if not lo <= value <= hi:
        raise IRSemanticError(
            f"constant {value} does not fit i{ty.bits}", tok.line, tok.col
        )
    wrapped = ((value + (1 << (ty.bits - 1))) % (1 << ty.bits)) - (1 << (ty.bits - 1))
    return IntConst(wrapped, ty)


def _result_type(ins: Instruction) -> TypeDesc | None:
    op = ins.opcode
    if op in ("alloca", "getelementptr"):
        return PTR
    if op == "load":
        return ins.type
    if op in BINARY_OPS or op == "phi":
        first = ins.operands[0]
        if isinstance(first, _Unresolved):
            return PTR  # @-references always have pointer type
        from .model import value_type

        return value_type(first)
    if op == "icmp":
        return I1
    if op == "call":
        return None if isinstance(ins.type, VoidType) else ins.type
    return None


def _type_name(t: TypeDesc) -> str:
    if isinstance(t, IntType):
        return f"i{t.bits}"
    if isinstance(t, PtrType):
        return "ptr"
    if isinstance(t, VoidType):
        return "void"
    assert isinstance(t, ArrayType)
    return f"[{t.length} x {_type_name(t.element)}]"


def parse_ir(text: str) -> Module:
    """Parse IR text into a Module; raises IRSyntaxError/IRSemanticError."""
    return _Parser(text).parse_module()
