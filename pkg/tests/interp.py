"""Concrete reference interpreter for the IR subset.

This is the independent oracle for the analysis soundness tests: it
enumerates real executions, recording per-instruction observations
(divisor values, mathematical results and overflow, memory validity), which
are then compared against the static analyses' answers. It shares the IR
data model with the package but none of the analysis code.

Simplifications (documented so tests stay honest): malloc/calloc always
succeed, reads must hit a previously written (or zero-initialised) slot of
the same size, and execution stops at the first trap.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from irinstr.ir import (
    ArrayType,
    BINARY_OPS,
    Function,
    FunctionRef,
    GlobalRef,
    Instruction,
    IntConst,
    IntType,
    Module,
    NullConst,
    PtrType,
    Register,
    type_size,
    Value,
    ZeroInit,
)


@dataclass(frozen=True)
class Ptr:
    block: int | None  # None encodes the null pointer
    offset: int = 0

    @property
    def is_null(self) -> bool:
        return self.block is None


NULL_PTR = Ptr(None, 0)


@dataclass
class MemBlock:
    size: int
    cells: dict[int, tuple[int, object]] = field(default_factory=dict)
    zeroed: bool = False
    freed: bool = False


@dataclass(frozen=True)
class Site:
    function: str
    block: str
    index: int  # index among the block's visible instructions


@dataclass
class Observation:
    """Everything concretely seen at one instruction site across runs."""

    instruction: Instruction
    divisors: set[int] = field(default_factory=set)
    overflowed: bool = False
    math_results: set[int] = field(default_factory=set)
    invalid_access: bool = False
    valid_access: bool = False


class Trap(Exception):
    pass


def _wrap(v: int, bits: int) -> int:
    if bits == 1:
        return v & 1
    m = 1 << bits
    return ((v + (m >> 1)) % m) - (m >> 1)


def _unsigned(v: int, bits: int) -> int:
    return v % (1 << bits)


def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


class Interpreter:
    """Executes one module; observations accumulate across run() calls."""

    def __init__(self, module: Module, step_budget: int = 100_000):
        self.module = module
        self.step_budget = step_budget
        self.observations: dict[Site, Observation] = {}
        self._next_block_id = 0
        self._globals: dict[str, int] = {}

    # -- memory ----------------------------------------------------------------

    def _alloc(self, memory, size: int, zeroed: bool = False) -> Ptr:
        self._next_block_id += 1
        memory[self._next_block_id] = MemBlock(size, zeroed=zeroed)
        return Ptr(self._next_block_id)

    def _access_ok(self, memory, p, size: int) -> bool:
        if not isinstance(p, Ptr) or p.is_null:
            return False
        block = memory.get(p.block)
        if block is None or block.freed:
            return False
        return 0 <= p.offset and p.offset + size <= block.size

    # -- value evaluation ----------------------------------------------------------

    def _eval(self, v: Value, env: dict):
        if isinstance(v, IntConst):
            return v.value
        if isinstance(v, Register):
            return env[v.name]
        if isinstance(v, NullConst):
            return NULL_PTR
        if isinstance(v, GlobalRef):
            return Ptr(self._globals[v.name])
        if isinstance(v, FunctionRef):
            return v
        raise Trap(f"cannot evaluate {v!r}")

    # -- execution --------------------------------------------------------------

    def run(self, fn_name: str, args: list) -> tuple[object, bool]:
        """Execute fn_name(*args); returns (return value, trapped)."""
        memory: dict[int, MemBlock] = {}
        self._globals = {}
        for g in self.module.globals:
            p = self._alloc(memory, type_size(g.type))
            self._globals[g.name] = p.block
            block = memory[p.block]
            if isinstance(g.initializer, ZeroInit):
                block.zeroed = True
            elif isinstance(g.initializer, IntConst):
                block.cells[0] = (type_size(g.type), g.initializer.value)
            elif isinstance(g.initializer, NullConst):
                block.cells[0] = (type_size(g.type), NULL_PTR)
        self._steps = 0
        try:
            return self._call(fn_name, args, memory), False
        except Trap:
            return None, True

    def _call(self, fn_name: str, args: list, memory):
        fn = self.module.function(fn_name)
        if fn is None or fn.is_declaration:
            raise Trap(f"call to unresolved @{fn_name}")
        env = {name: arg for (name, _), arg in zip(fn.params, args)}
        block = fn.entry_block
        prev_label: str | None = None
        while True:
            next_label = None
            for index, ins in enumerate(b for b in block.instructions if not b.synthetic):
                self._steps += 1
                if self._steps > self.step_budget:
                    raise Trap("step budget exceeded")
                site = Site(fn.name, block.label, index)
                obs = self.observations.setdefault(site, Observation(ins))
                op = ins.opcode
                if op == "phi":
                    for v, lab in zip(ins.operands, ins.labels):
                        if lab == prev_label:
                            env[ins.result.name] = self._eval(v, env)
                            break
                    else:
                        raise Trap("phi has no arm for the incoming edge")
                elif op in BINARY_OPS:
                    env[ins.result.name] = self._binop(ins, env, obs)
                elif op == "icmp":
                    env[ins.result.name] = self._icmp(ins, env)
                elif op == "alloca":
                    env[ins.result.name] = self._alloc(memory, type_size(ins.type))
                elif op == "load":
                    env[ins.result.name] = self._load(ins, env, memory, obs)
                elif op == "store":
                    self._store(ins, env, memory, obs)
                elif op == "getelementptr":
                    env[ins.result.name] = self._gep(ins, env)
                elif op == "call":
                    result = self._call_target(ins, env, memory)
                    if ins.result is not None:
                        env[ins.result.name] = result
                elif op == "br":
                    if ins.operands:
                        cond = self._eval(ins.operands[0], env)
                        next_label = ins.labels[0] if cond else ins.labels[1]
                    else:
                        next_label = ins.labels[0]
                elif op == "ret":
                    return self._eval(ins.operands[0], env) if ins.operands else None
                else:
                    raise Trap(f"unsupported opcode {op}")
            prev_label = block.label
            block = fn.block(next_label)

    def _binop(self, ins: Instruction, env, obs: Observation) -> int:
        bits = ins.result.type.bits
        a = self._eval(ins.operands[0], env)
        b = self._eval(ins.operands[1], env)
        op = ins.opcode
        if op in ("sdiv", "udiv", "srem"):
            obs.divisors.add(b)
            if b == 0:
                raise Trap("division by zero")
        if op == "add":
            math = a + b
        elif op == "sub":
            math = a - b
        elif op == "mul":
            math = a * b
        elif op == "sdiv":
            math = _trunc_div(a, b)
        elif op == "udiv":
            math = _wrap(_unsigned(a, bits) // _unsigned(b, bits), bits)
        else:  # srem: sign follows the dividend
            math = a - _trunc_div(a, b) * b
        obs.math_results.add(math)
        smin = 0 if bits == 1 else -(1 << (bits - 1))
        smax = 1 if bits == 1 else (1 << (bits - 1)) - 1
        if not smin <= math <= smax:
            obs.overflowed = True
        return _wrap(math, bits)

    def _icmp(self, ins: Instruction, env) -> int:
        a = self._eval(ins.operands[0], env)
        b = self._eval(ins.operands[1], env)
        pred = ins.predicate
        if isinstance(a, Ptr) or isinstance(b, Ptr):
            if pred == "eq":
                return int(a == b)
            if pred == "ne":
                return int(a != b)
            raise Trap("ordered pointer comparison")
        bits = ins.operands[0].type.bits if isinstance(ins.operands[0], (Register, IntConst)) else 64
        ua, ub = _unsigned(a, bits), _unsigned(b, bits)
        table = {
            "eq": a == b,
            "ne": a != b,
            "slt": a < b,
            "sle": a <= b,
            "sgt": a > b,
            "sge": a >= b,
            "ult": ua < ub,
            "ule": ua <= ub,
            "ugt": ua > ub,
            "uge": ua >= ub,
        }
        return int(table[pred])

    def _load(self, ins: Instruction, env, memory, obs: Observation):
        p = self._eval(ins.operands[0], env)
        size = type_size(ins.type)
        if not self._access_ok(memory, p, size):
            obs.invalid_access = True
            raise Trap("invalid load")
        obs.valid_access = True
        block = memory[p.block]
        slot = block.cells.get(p.offset)
        if slot is not None and slot[0] == size:
            return slot[1]
        if block.zeroed:
            return NULL_PTR if isinstance(ins.type, PtrType) else 0
        raise Trap("read of uninitialised or mis-sized memory")

    def _store(self, ins: Instruction, env, memory, obs: Observation) -> None:
        val = self._eval(ins.operands[0], env)
        p = self._eval(ins.operands[1], env)
        from irinstr.ir import value_type

        size = type_size(value_type(ins.operands[0]))
        if not self._access_ok(memory, p, size):
            obs.invalid_access = True
            raise Trap("invalid store")
        obs.valid_access = True
        memory[p.block].cells[p.offset] = (size, val)

    def _gep(self, ins: Instruction, env) -> Ptr:
        base = self._eval(ins.operands[0], env)
        if not isinstance(base, Ptr):
            raise Trap("gep on a non-pointer")
        ty = ins.type
        offset = base.offset + self._eval(ins.operands[1], env) * type_size(ty)
        for idx in ins.operands[2:]:
            if not isinstance(ty, ArrayType):
                raise Trap("gep index into a non-array")
            ty = ty.element
            offset += self._eval(idx, env) * type_size(ty)
        return Ptr(base.block, offset)

    def _call_target(self, ins: Instruction, env, memory):
        callee = ins.callee.name
        args = [self._eval(a, env) for a in ins.call_args]
        if callee == "malloc":
            return self._alloc(memory, args[0])
        if callee == "calloc":
            return self._alloc(memory, args[0] * args[1], zeroed=True)
        if callee == "realloc":
            fresh = self._alloc(memory, args[1])
            return fresh
        if callee == "free":
            p = args[0]
            if isinstance(p, Ptr) and not p.is_null:
                block = memory.get(p.block)
                if block is None or block.freed or p.offset != 0:
                    raise Trap("invalid free")
                block.freed = True
            return None
        return self._call(callee, args, memory)


def enumerate_runs(module: Module, fn_name: str, domains: dict[str, list[int]]):
    """Run fn over the product of its parameters' finite domains.

    `domains` maps parameter names to candidate values; missing integer
    parameters default to [0]. Returns the Interpreter with accumulated
    observations.
    """
    interp = Interpreter(module)
    fn = module.function(fn_name)
    names = [n for n, _ in fn.params]
    spaces = [domains.get(n, [0]) for n in names]
    for combo in itertools.product(*spaces):
        interp.run(fn_name, list(combo))
    return interp
