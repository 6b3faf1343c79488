"""Intraprocedural integer range analysis with widening.

A forward fixed point over each function's CFG tracks one interval per SSA
value per block. Branch conditions refine intervals along edges, phi values
join edge-refined incomings, and bounds that keep ascending are widened to
+/-infinity after two changes. Two bounded non-widening refinement sweeps
then tighten widened loop bounds. Arithmetic transfer is wrap-aware: a
result interval that cannot be proven inside its type's signed range falls
back to the full type range, so concrete wrapped values stay covered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..ir import (
    BINARY_OPS,
    Function,
    Instruction,
    IntConst,
    IntType,
    Module,
    NullConst,
    Register,
    Value,
    value_type,
)
from . import AnalysisPlugin, FALSE, MAYBE, Query, QueryContext, TRUE

INF = float("inf")


@dataclass(frozen=True)
class Interval:
    """Closed integer interval; bounds may be +/-inf. Empty iff lo > hi."""

    lo: int | float
    hi: int | float

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    def contains(self, v: int) -> bool:
        return self.lo <= v <= self.hi

    @property
    def is_singleton(self) -> bool:
        return self.lo == self.hi and not self.is_empty


EMPTY = Interval(1, 0)


def interval(lo, hi) -> Interval:
    return EMPTY if lo > hi else Interval(lo, hi)


def const_iv(v: int) -> Interval:
    return Interval(v, v)


def top_for(bits: int) -> Interval:
    if bits == 1:
        return Interval(0, 1)
    return Interval(-(1 << (bits - 1)), (1 << (bits - 1)) - 1)


def join(a: Interval, b: Interval) -> Interval:
    if a.is_empty:
        return b
    if b.is_empty:
        return a
    return Interval(min(a.lo, b.lo), max(a.hi, b.hi))


def meet(a: Interval, b: Interval) -> Interval:
    if a.is_empty or b.is_empty:
        return EMPTY
    return interval(max(a.lo, b.lo), min(a.hi, b.hi))


def leq(a: Interval, b: Interval) -> bool:
    """a included in b."""
    if a.is_empty:
        return True
    if b.is_empty:
        return False
    return a.lo >= b.lo and a.hi <= b.hi


def widen(old: Interval, new: Interval) -> Interval:
    """Send every bound that grew past `old` straight to +/-inf."""
    if old.is_empty:
        return new
    lo = -INF if new.lo < old.lo else new.lo
    hi = INF if new.hi > old.hi else new.hi
    return Interval(lo, hi)


# ---------------------------------------------------------------------------
# Interval arithmetic (mathematical, no wrapping)
# ---------------------------------------------------------------------------


def _mul_bound(a, b):
    if a == 0 or b == 0:
        return 0
    if a in (INF, -INF) or b in (INF, -INF):
        return INF if (a > 0) == (b > 0) else -INF
    return a * b


def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _div_bound(a, b):
    if b in (INF, -INF):
        return 0
    if a in (INF, -INF):
        return INF if (a > 0) == (b > 0) else -INF
    return _trunc_div(a, b)


def _nonzero_parts(b: Interval) -> list[Interval]:
    parts = []
    neg = meet(b, Interval(-INF, -1))
    pos = meet(b, Interval(1, INF))
    if not neg.is_empty:
        parts.append(neg)
    if not pos.is_empty:
        parts.append(pos)
    return parts


def math_add(a: Interval, b: Interval) -> Interval:
    return Interval(a.lo + b.lo, a.hi + b.hi)


def math_sub(a: Interval, b: Interval) -> Interval:
    return Interval(a.lo - b.hi, a.hi - b.lo)


def math_mul(a: Interval, b: Interval) -> Interval:
    cands = [_mul_bound(x, y) for x in (a.lo, a.hi) for y in (b.lo, b.hi)]
    return Interval(min(cands), max(cands))


def math_sdiv(a: Interval, b: Interval) -> Interval:
    parts = _nonzero_parts(b)
    if not parts:
        return EMPTY
    cands = []
    for part in parts:
        cands.extend(
            _div_bound(x, y) for x in (a.lo, a.hi) for y in (part.lo, part.hi)
        )
    # Quotients are not monotone across a sign change in the dividend.
    if a.contains(0):
        cands.append(0)
    return Interval(min(cands), max(cands))


def math_udiv(a: Interval, b: Interval) -> Interval | None:
    """None when operands may be negative (unsigned reinterpretation unknown)."""
    if a.is_empty or b.is_empty:
        return EMPTY
    if a.lo < 0 or b.lo < 0:
        return None
    return math_sdiv(a, b)


def math_srem(a: Interval, b: Interval) -> Interval:
    parts = _nonzero_parts(b)
    if not parts:
        return EMPTY
    m = max(max(abs(p.lo), abs(p.hi)) for p in parts) - 1
    abs_a = max(abs(a.lo), abs(a.hi))
    bound = min(m, abs_a)
    lo = 0 if a.lo >= 0 else -bound
    hi = 0 if a.hi <= 0 else bound
    return Interval(lo, hi)


def math_binop(op: str, a: Interval, b: Interval) -> Interval | None:
    """Exact mathematical result interval; None when unknown (udiv of negatives)."""
    if a.is_empty or b.is_empty:
        return EMPTY
    if op == "add":
        return math_add(a, b)
    if op == "sub":
        return math_sub(a, b)
    if op == "mul":
        return math_mul(a, b)
    if op == "sdiv":
        return math_sdiv(a, b)
    if op == "udiv":
        return math_udiv(a, b)
    if op == "srem":
        return math_srem(a, b)
    raise ValueError(f"not a binary op: {op}")


# ---------------------------------------------------------------------------
# Condition handling
# ---------------------------------------------------------------------------

_NEGATED = {
    "eq": "ne",
    "ne": "eq",
    "slt": "sge",
    "sge": "slt",
    "sle": "sgt",
    "sgt": "sle",
    "ult": "uge",
    "uge": "ult",
    "ule": "ugt",
    "ugt": "ule",
}


def _refine_by_pred(pred: str, a: Interval, b: Interval) -> tuple[Interval, Interval]:
    """Shrink (a, b) assuming `a pred b` holds."""
    if a.is_empty or b.is_empty:
        return EMPTY, EMPTY
    if pred in ("ult", "ule", "ugt", "uge"):
        if a.lo < 0 or b.lo < 0:
            return a, b
        pred = "s" + pred[1:]
    if pred == "eq":
        m = meet(a, b)
        return m, m
    if pred == "ne":
        ra, rb = a, b
        if b.is_singleton:
            k = b.lo
            if ra.lo == k:
                ra = interval(ra.lo + 1, ra.hi)
            if ra.hi == k:
                ra = interval(ra.lo, ra.hi - 1)
        if a.is_singleton:
            k = a.lo
            if rb.lo == k:
                rb = interval(rb.lo + 1, rb.hi)
            if rb.hi == k:
                rb = interval(rb.lo, rb.hi - 1)
        return ra, rb
    if pred == "slt":
        return meet(a, Interval(-INF, b.hi - 1)), meet(b, Interval(a.lo + 1, INF))
    if pred == "sle":
        return meet(a, Interval(-INF, b.hi)), meet(b, Interval(a.lo, INF))
    if pred == "sgt":
        return meet(a, Interval(b.lo + 1, INF)), meet(b, Interval(-INF, a.hi - 1))
    if pred == "sge":
        return meet(a, Interval(b.lo, INF)), meet(b, Interval(-INF, a.hi))
    return a, b


def _icmp_decide(pred: str, a: Interval, b: Interval) -> Interval:
    """Interval of an icmp result given its operand intervals."""
    if a.is_empty or b.is_empty:
        return EMPTY
    if pred in ("ult", "ule", "ugt", "uge"):
        if a.lo < 0 or b.lo < 0:
            return Interval(0, 1)
        pred = "s" + pred[1:]
    if pred == "eq":
        if a.is_singleton and b.is_singleton and a.lo == b.lo:
            return const_iv(1)
        if meet(a, b).is_empty:
            return const_iv(0)
    elif pred == "ne":
        inner = _icmp_decide("eq", a, b)
        if inner.is_singleton:
            return const_iv(1 - inner.lo)
    elif pred == "slt":
        if a.hi < b.lo:
            return const_iv(1)
        if a.lo >= b.hi:
            return const_iv(0)
    elif pred == "sle":
        if a.hi <= b.lo:
            return const_iv(1)
        if a.lo > b.hi:
            return const_iv(0)
    elif pred == "sgt":
        return _icmp_decide("slt", b, a)
    elif pred == "sge":
        return _icmp_decide("sle", b, a)
    return Interval(0, 1)


# ---------------------------------------------------------------------------
# The per-function solver
# ---------------------------------------------------------------------------

Env = dict[str, Interval]


@dataclass
class FunctionRanges:
    """Solved intervals: one environment per block (after its transfers)."""

    envs: dict[str, Env] = field(default_factory=dict)
    defs: dict[str, tuple[Instruction, str]] = field(default_factory=dict)
    entry_label: str = ""
    sweeps: int = 0

    def at(self, block: str, name: str) -> Interval:
        return self.envs.get(block, {}).get(name, EMPTY)


def _eval(v: Value, env: Env) -> Interval:
    if isinstance(v, IntConst):
        return const_iv(v.value)
    if isinstance(v, Register):
        if isinstance(v.type, IntType):
            return env.get(v.name, EMPTY)
    return EMPTY


def _int_bits(v: Value) -> int | None:
    t = value_type(v)
    return t.bits if isinstance(t, IntType) else None


def _transfer(ins: Instruction, env: Env) -> None:
    if ins.result is None or not isinstance(ins.result.type, IntType):
        return
    bits = ins.result.type.bits
    op = ins.opcode
    if op == "phi":
        return  # phi values are set by edge propagation
    if op in BINARY_OPS:
        a = _eval(ins.operands[0], env)
        b = _eval(ins.operands[1], env)
        if a.is_empty or b.is_empty:
            env[ins.result.name] = EMPTY
            return
        math = math_binop(op, a, b)
        ty = top_for(bits)
        if math is None or not leq(math, ty):
            result = ty
        elif op == "sdiv" and a.contains(ty.lo) and b.contains(-1):
            result = ty  # MIN / -1 wraps
        else:
            result = math
        env[ins.result.name] = result
        return
    if op == "icmp":
        a = _eval(ins.operands[0], env)
        b = _eval(ins.operands[1], env)
        if _int_bits(ins.operands[0]) is None:
            env[ins.result.name] = Interval(0, 1)  # pointer comparison
        else:
            env[ins.result.name] = _icmp_decide(ins.predicate, a, b)
        return
    # load / call results: nothing is known beyond the type range.
    env[ins.result.name] = top_for(bits)


def _edge_envs(
    block, out_env: Env, defs: dict[str, tuple[Instruction, str]]
) -> list[tuple[str, Env]]:
    """Feasible (target, refined env) pairs for the block's terminator."""
    term = block.terminator
    if term.opcode == "ret":
        return []
    if not term.operands:  # unconditional br
        return [(term.labels[0], dict(out_env))]
    cond = term.operands[0]
    cond_iv = _eval(cond, out_env)
    edges = []
    for taken, target in ((1, term.labels[0]), (0, term.labels[1])):
        if meet(cond_iv, const_iv(taken)).is_empty:
            continue  # edge is infeasible under current knowledge
        env = dict(out_env)
        if isinstance(cond, Register):
            env[cond.name] = const_iv(taken)
            defn = defs.get(cond.name)
            if defn is not None and defn[0].opcode == "icmp":
                icmp = defn[0]
                x, y = icmp.operands
                if _int_bits(x) is not None:
                    pred = icmp.predicate if taken else _NEGATED[icmp.predicate]
                    rx, ry = _refine_by_pred(pred, _eval(x, env), _eval(y, env))
                    if isinstance(x, Register):
                        env[x.name] = rx
                    if isinstance(y, Register):
                        env[y.name] = ry
        edges.append((target, env))
    return edges


def _phi_overrides(target_block, pred_label: str, edge_env: Env) -> Env:
    """Evaluate the target's phis against the edge (parallel assignment)."""
    overrides: Env = {}
    for ins in target_block.instructions:
        if ins.opcode != "phi":
            break
        if ins.result is None or not isinstance(ins.result.type, IntType):
            continue
        for v, lab in zip(ins.operands, ins.labels):
            if lab == pred_label:
                overrides[ins.result.name] = _eval(v, edge_env)
                break
    return overrides


def analyze_function(fn: Function, max_descending: int = 2) -> FunctionRanges:
    """Run the fixed point for one defined function."""
    result = FunctionRanges()
    if fn.is_declaration:
        return result
    result.entry_label = fn.entry_block.label
    blocks = {b.label: b for b in fn.blocks}
    for b in fn.blocks:
        for ins in b.instructions:
            if ins.result is not None:
                result.defs[ins.result.name] = (ins, b.label)

    order = _reverse_postorder(fn)
    loop_heads = _loop_heads(fn)
    entry_env: Env = {
        name: top_for(t.bits)
        for name, t in fn.params
        if name and isinstance(t, IntType)
    }
    ins_in: dict[str, Env] = {fn.entry_block.label: dict(entry_env)}
    ascents: dict[tuple[str, str], int] = {}

    def propagate(label: str, collect) -> None:
        in_env = ins_in.get(label)
        if in_env is None:
            return
        out = dict(in_env)
        for ins in blocks[label].instructions:
            _transfer(ins, out)
        for target, edge_env in _edge_envs(blocks[label], out, result.defs):
            edge_env.update(_phi_overrides(blocks[target], label, edge_env))
            collect(target, edge_env)

    # Ascending phase; unstable bounds at loop heads widen to +/-inf after
    # two ascending changes, which bounds the iteration count.
    for _ in range(_SWEEP_SAFETY_CAP):
        result.sweeps += 1
        changed = False

        def ascend(target: str, edge_env: Env) -> None:
            nonlocal changed
            tgt = ins_in.setdefault(target, {})
            for name, iv in edge_env.items():
                old = tgt.get(name, EMPTY)
                new = join(old, iv)
                if new != old:
                    if target in loop_heads:
                        key = (target, name)
                        ascents[key] = ascents.get(key, 0) + 1
                        if ascents[key] > 2:
                            new = widen(old, new)
                    tgt[name] = new
                    changed = True

        for label in order:
            propagate(label, ascend)
        if not changed:
            break
    else:
        raise RuntimeError(f"range analysis of @{fn.name} did not stabilise")

    # Bounded descending refinement: recompute every block entry from the
    # current state and accept values that shrank (never grew). This tightens
    # bounds the widening overshot while staying above the true fixed point.
    for _ in range(max_descending):
        result.sweeps += 1
        candidates: dict[str, Env] = {fn.entry_block.label: dict(entry_env)}

        def accumulate(target: str, edge_env: Env) -> None:
            cand = candidates.setdefault(target, {})
            for name, iv in edge_env.items():
                cand[name] = join(cand.get(name, EMPTY), iv)

        for label in order:
            propagate(label, accumulate)
        changed = False
        for label in order:
            cur = ins_in.get(label)
            if cur is None:
                continue
            cand = candidates.get(label, {})
            for name in list(cur):
                new = cand.get(name, EMPTY)
                if leq(new, cur[name]) and new != cur[name]:
                    cur[name] = new
                    changed = True
        if not changed:
            break

    for label in order:
        out = dict(ins_in.get(label, {}))
        for ins in blocks[label].instructions:
            _transfer(ins, out)
        result.envs[label] = out
    return result


_SWEEP_SAFETY_CAP = 10_000


def _reverse_postorder(fn: Function) -> list[str]:
    blocks = {b.label: b for b in fn.blocks}
    seen: set[str] = set()
    post: list[str] = []

    def visit(label: str) -> None:
        stack = [(label, 0)]
        seen.add(label)
        while stack:
            lab, i = stack.pop()
            succs = blocks[lab].terminator.labels
            if i < len(succs):
                stack.append((lab, i + 1))
                nxt = succs[i]
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append((nxt, 0))
            else:
                post.append(lab)

    visit(fn.entry_block.label)
    return list(reversed(post))


def _loop_heads(fn: Function) -> set[str]:
    """Targets of back edges; every CFG cycle passes through one of them."""
    blocks = {b.label: b for b in fn.blocks}
    heads: set[str] = set()
    color: dict[str, int] = {}  # 1 = on stack, 2 = done

    def visit(label: str) -> None:
        stack = [(label, 0)]
        color[label] = 1
        while stack:
            lab, i = stack.pop()
            succs = blocks[lab].terminator.labels
            if i < len(succs):
                stack.append((lab, i + 1))
                nxt = succs[i]
                if color.get(nxt) == 1:
                    heads.add(nxt)
                elif nxt not in color:
                    color[nxt] = 1
                    stack.append((nxt, 0))
            else:
                color[lab] = 2

    visit(fn.entry_block.label)
    return heads


# ---------------------------------------------------------------------------
# Whole-module analysis and plugin wrapper
# ---------------------------------------------------------------------------


class RangeAnalysis:
    """Eagerly analyzed ranges for every defined function of a module."""

    def __init__(self, module: Module):
        self.module = module
        self.functions: dict[str, FunctionRanges] = {
            fn.name: analyze_function(fn) for fn in module.functions
            if not fn.is_declaration
        }

    def interval_of(self, value: Value, function: str | None, block: str | None) -> Interval | None:
        """Interval of a value at a site; None when nothing is known."""
        if isinstance(value, IntConst):
            return const_iv(value.value)
        if isinstance(value, Register) and isinstance(value.type, IntType):
            ranges = self.functions.get(function or "")
            if ranges is None:
                return None
            if block is not None and block in ranges.envs:
                return ranges.envs[block].get(value.name, EMPTY)
            defn = ranges.defs.get(value.name)
            home = defn[1] if defn is not None else ranges.entry_label
            return ranges.envs.get(home, {}).get(value.name, EMPTY)
        return None

    def can_be_zero(self, value, function=None, block=None) -> str:
        if isinstance(value, int):
            return TRUE if value == 0 else FALSE
        if isinstance(value, IntConst):
            return TRUE if value.value == 0 else FALSE
        if isinstance(value, NullConst):
            return TRUE
        iv = self.interval_of(value, function, block) if isinstance(value, Value) else None
        if iv is None:
            return MAYBE
        if not iv.contains(0):
            return FALSE
        if iv == const_iv(0):
            return TRUE
        return MAYBE

    def can_overflow(self, value, function=None) -> str:
        """Can the instruction defining `value` overflow its signed range?"""
        if not isinstance(value, Register):
            return MAYBE
        ranges = self.functions.get(function or "")
        if ranges is None:
            return MAYBE
        defn = ranges.defs.get(value.name)
        if defn is None:
            return MAYBE
        ins, block = defn
        if ins.opcode not in BINARY_OPS or not isinstance(ins.result.type, IntType):
            return MAYBE
        env = ranges.envs.get(block, {})
        a = _eval(ins.operands[0], env)
        b = _eval(ins.operands[1], env)
        if a.is_empty or b.is_empty:
            return FALSE  # site is unreachable
        ty = top_for(ins.result.type.bits)
        if ins.opcode == "sdiv" and a.contains(ty.lo) and b.contains(-1):
            return MAYBE
        math = math_binop(ins.opcode, a, b)
        if math is None:
            return MAYBE
        return FALSE if leq(math, ty) else MAYBE


class RangeAnalysisPlugin(AnalysisPlugin):
    name = "range"
    _queries = ("canBeZero", "canOverflow")

    def __init__(self, module: Module):
        self.analysis = RangeAnalysis(module)

    def supports(self, query_name: str) -> bool:
        return query_name in self._queries

    def answer(self, query: Query, ctx: QueryContext) -> str:
        if not query.args:
            return MAYBE
        arg = query.args[0]
        if query.name == "canBeZero":
            return self.analysis.can_be_zero(arg, ctx.function, ctx.block)
        if query.name == "canOverflow":
            return self.analysis.can_overflow(arg, ctx.function)
        return MAYBE
