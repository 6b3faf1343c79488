"""Inclusion-based, flow- and field-insensitive points-to analysis.

One constraint system covers the whole module: allocation sites (stack and
heap), globals, null, and an `unknown` element for everything the analysis
cannot resolve (external calls, loads through unknown pointers). Results of
`getelementptr` collapse to their base object and are marked derived;
derivedness propagates through copies and memory like a taint. Heap
allocators may fail, so their results include null.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..ir import (
    ArrayType,
    FunctionRef,
    GlobalRef,
    Instruction,
    IntConst,
    Module,
    NullConst,
    PtrType,
    Register,
    type_size,
    TypeDesc,
    Value,
    value_type,
)
from . import (
    AnalysisPlugin,
    FALSE,
    MAYBE,
    Query,
    QueryContext,
    RememberedValue,
    TRUE,
)

MALLOC_FAMILY = ("malloc", "calloc", "realloc")


# ---------------------------------------------------------------------------
# Abstract locations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StackLoc:
    function: str
    register: str
    size: int | None


@dataclass(frozen=True)
class HeapLoc:
    function: str
    register: str
    size: int | None


@dataclass(frozen=True)
class GlobalLoc:
    name: str
    size: int | None


@dataclass(frozen=True)
class NullLoc:
    pass


@dataclass(frozen=True)
class UnknownLoc:
    pass


Loc = StackLoc | HeapLoc | GlobalLoc | NullLoc | UnknownLoc
NULL = NullLoc()
UNKNOWN = UnknownLoc()

VarKey = tuple[str, str]  # (function name, register name)


@dataclass(frozen=True)
class PointsToSet:
    """What a value may point to, plus whether pointer arithmetic reached it."""

    locations: frozenset[Loc]
    derived: bool = False

    @property
    def has_unknown(self) -> bool:
        return UNKNOWN in self.locations

    @property
    def has_null(self) -> bool:
        return NULL in self.locations


# ---------------------------------------------------------------------------
# Constraint generation and solving
# ---------------------------------------------------------------------------


def _is_ptr(t: TypeDesc) -> bool:
    return isinstance(t, PtrType)


def _contains_ptr(t: TypeDesc) -> bool:
    if isinstance(t, PtrType):
        return True
    if isinstance(t, ArrayType):
        return _contains_ptr(t.element)
    return False


def _const_size(v: Value) -> int | None:
    return v.value if isinstance(v, IntConst) else None


class PointsToAnalysis:
    """Solved least fixed point for one module."""

    def __init__(self, module: Module):
        self.module = module
        self.var_pts: dict[VarKey, set[Loc]] = {}
        self.contents: dict[Loc, set[Loc]] = {}
        self.derived: set[VarKey] = set()
        self.content_derived: set[Loc] = set()
        self.memory_tainted = False
        self._copies: list[tuple[VarKey, Value, str]] = []
        self._loads: list[tuple[VarKey, Value, str]] = []
        self._stores: list[tuple[Value, Value, str]] = []
        self._arg_taints: list[tuple[Value, str]] = []
        self._collect()
        self._solve()

    # -- facts ---------------------------------------------------------------

    def _collect(self) -> None:
        defined = {f.name for f in self.module.functions if not f.is_declaration}
        callers: dict[str, int] = {}
        returns: dict[str, list[Value]] = {}
        for fn in self.module.functions:
            for block in fn.blocks:
                for ins in block.instructions:
                    if ins.opcode == "ret" and ins.operands:
                        returns.setdefault(fn.name, []).append(ins.operands[0])
                    if ins.opcode == "call":
                        callers[ins.callee.name] = callers.get(ins.callee.name, 0) + 1

        for g in self.module.globals:
            loc = GlobalLoc(g.name, type_size(g.type))
            cell = self.contents.setdefault(loc, set())
            if _is_ptr(g.type) and isinstance(g.initializer, NullConst):
                cell.add(NULL)
            elif isinstance(g.type, ArrayType) and _contains_ptr(g.type):
                cell.add(NULL)  # zeroinitializer
            elif g.initializer is None and _contains_ptr(g.type):
                cell.add(UNKNOWN)  # external global, contents unknown

        for fn in self.module.functions:
            if fn.is_declaration:
                continue
            if callers.get(fn.name, 0) == 0:
                for pname, pty in fn.params:
                    if pname and _is_ptr(pty):
                        self._base((fn.name, pname), UNKNOWN)
            for block in fn.blocks:
                for ins in block.instructions:
                    self._collect_instruction(fn.name, ins, defined, returns)

    def _collect_instruction(
        self, fn: str, ins: Instruction, defined: set[str], returns
    ) -> None:
        op = ins.opcode
        if op == "alloca":
            self._base(
                (fn, ins.result.name), StackLoc(fn, ins.result.name, type_size(ins.type))
            )
        elif op == "load":
            if ins.result is not None and _is_ptr(ins.result.type):
                self._loads.append(((fn, ins.result.name), ins.operands[0], fn))
        elif op == "store":
            val, ptr = ins.operands
            if _is_ptr(value_type(val)):
                self._stores.append((val, ptr, fn))
        elif op == "getelementptr":
            self._copies.append(((fn, ins.result.name), ins.operands[0], fn))
            self.derived.add((fn, ins.result.name))
        elif op == "phi":
            if _is_ptr(value_type(ins.operands[0])):
                for v in ins.operands:
                    self._copies.append(((fn, ins.result.name), v, fn))
        elif op == "call":
            self._collect_call(fn, ins, defined, returns)

    def _collect_call(self, fn: str, ins: Instruction, defined, returns) -> None:
        callee = ins.callee.name
        args = ins.call_args
        if callee in MALLOC_FAMILY:
            if ins.result is None:
                return
            if callee == "malloc":
                size = _const_size(args[0]) if args else None
            elif callee == "calloc" and len(args) == 2:
                n, m = _const_size(args[0]), _const_size(args[1])
                size = n * m if n is not None and m is not None else None
            else:
                size = None
            key = (fn, ins.result.name)
            self._base(key, HeapLoc(fn, ins.result.name, size))
            self._base(key, NULL)  # allocation may fail
            return
        if callee == "free":
            return
        if callee in defined:
            target = self.module.function(callee)
            for arg, (pname, pty) in zip(args, target.params):
                if pname and _is_ptr(pty) and _is_ptr(value_type(arg)):
                    self._copies.append(((callee, pname), arg, fn))
            if ins.result is not None and _is_ptr(ins.result.type):
                for rv in returns.get(callee, []):
                    self._copies.append(((fn, ins.result.name), rv, callee))
            return
        # External function: its result is unresolved and it may store
        # anything through pointer arguments.
        if ins.result is not None and _is_ptr(ins.result.type):
            self._base((fn, ins.result.name), UNKNOWN)
        for arg in args:
            if _is_ptr(value_type(arg)):
                self._arg_taints.append((arg, fn))

    def _base(self, key: VarKey, loc: Loc) -> None:
        self.var_pts.setdefault(key, set()).add(loc)

    # -- solving ---------------------------------------------------------------

    def _value_locs(self, v: Value, fn: str) -> set[Loc]:
        if isinstance(v, Register):
            return self.var_pts.get((fn, v.name), set())
        if isinstance(v, GlobalRef):
            g = self.module.global_var(v.name)
            size = type_size(g.type) if g is not None else None
            return {GlobalLoc(v.name, size)}
        if isinstance(v, NullConst):
            return {NULL}
        if isinstance(v, FunctionRef):
            return {UNKNOWN}
        return set()

    def _value_derived(self, v: Value, fn: str) -> bool:
        return isinstance(v, Register) and (fn, v.name) in self.derived

    def _solve(self) -> None:
        changed = True
        while changed:
            changed = False
            for dst, src, fn in self._copies:
                cur = self.var_pts.setdefault(dst, set())
                add = self._value_locs(src, fn) - cur
                if add:
                    cur.update(add)
                    changed = True
                if self._value_derived(src, fn) and dst not in self.derived:
                    self.derived.add(dst)
                    changed = True
            for val, ptr, fn in self._stores:
                vlocs = self._value_locs(val, fn)
                vder = self._value_derived(val, fn)
                plocs = self._value_locs(ptr, fn)
                if UNKNOWN in plocs and not self.memory_tainted:
                    self.memory_tainted = True
                    changed = True
                for loc in plocs:
                    if isinstance(loc, (NullLoc, UnknownLoc)):
                        continue
                    cell = self.contents.setdefault(loc, set())
                    add = vlocs - cell
                    if add:
                        cell.update(add)
                        changed = True
                    if vder and loc not in self.content_derived:
                        self.content_derived.add(loc)
                        changed = True
            for arg, fn in self._arg_taints:
                for loc in self._value_locs(arg, fn):
                    if isinstance(loc, (NullLoc, UnknownLoc)):
                        continue
                    cell = self.contents.setdefault(loc, set())
                    if UNKNOWN not in cell:
                        cell.add(UNKNOWN)
                        changed = True
            for dst, ptr, fn in self._loads:
                plocs = self._value_locs(ptr, fn)
                cur = self.var_pts.setdefault(dst, set())
                add: set[Loc] = set()
                if UNKNOWN in plocs or self.memory_tainted:
                    add.add(UNKNOWN)
                for loc in plocs:
                    if isinstance(loc, (NullLoc, UnknownLoc)):
                        continue
                    add |= self.contents.get(loc, set())
                    if loc in self.content_derived and dst not in self.derived:
                        self.derived.add(dst)
                        changed = True
                add -= cur
                if add:
                    cur.update(add)
                    changed = True

    # -- queries -----------------------------------------------------------------

    def points_to(self, v: Value | int | str, function: str | None) -> PointsToSet:
        """Resolved points-to set of a value in a function context."""
        fn = function or ""
        if isinstance(v, Register):
            locs = self.var_pts.get((fn, v.name), set())
            if not locs and _is_ptr(v.type):
                locs = {UNKNOWN}  # unresolved input
            return PointsToSet(frozenset(locs), (fn, v.name) in self.derived)
        if isinstance(v, (GlobalRef, NullConst, FunctionRef)):
            return PointsToSet(frozenset(self._value_locs(v, fn)))
        return PointsToSet(frozenset())

    def is_null(self, v, function=None) -> str:
        pts = self.points_to(v, function) if isinstance(v, Value) else PointsToSet(frozenset())
        if pts.locations == {NULL}:
            return TRUE
        if not pts.has_null and not pts.has_unknown:
            return FALSE
        return MAYBE

    def is_valid_pointer(self, addr, length, function=None) -> str:
        if not isinstance(addr, Value):
            return MAYBE
        pts = self.points_to(addr, function)
        if pts.locations == {NULL}:
            return FALSE
        if isinstance(length, IntConst):
            length = length.value
        if (
            not pts.derived
            and pts.locations
            and not pts.has_unknown
            and not pts.has_null
            and isinstance(length, int)
            and all(
                getattr(loc, "size", None) is not None and loc.size >= length
                for loc in pts.locations
            )
        ):
            return TRUE
        return MAYBE

    def is_remembered(self, v, function, remembered: tuple[RememberedValue, ...]) -> str:
        for r in remembered:
            if r.value == v and (
                not isinstance(v, Register) or r.function == function
            ):
                return TRUE
        if isinstance(v, Value):
            pts = self.points_to(v, function)
            for r in remembered:
                if not isinstance(r.value, Value):
                    continue
                other = self.points_to(r.value, r.function)
                if pts.locations & other.locations:
                    return MAYBE
        return FALSE


class PointsToAnalysisPlugin(AnalysisPlugin):
    name = "points-to"
    _queries = ("isNull", "isValidPointer", "isRemembered")

    def __init__(self, module: Module):
        self.analysis = PointsToAnalysis(module)

    def supports(self, query_name: str) -> bool:
        return query_name in self._queries

    def answer(self, query: Query, ctx: QueryContext) -> str:
        if not query.args:
            return MAYBE
        arg = query.args[0]
        if query.name == "isNull":
            return self.analysis.is_null(arg, ctx.function)
        if query.name == "isValidPointer":
            if len(query.args) < 2:
                return MAYBE
            return self.analysis.is_valid_pointer(arg, query.args[1], ctx.function)
        if query.name == "isRemembered":
            return self.analysis.is_remembered(arg, ctx.function, ctx.remembered)
        return MAYBE
