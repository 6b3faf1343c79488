"""The phased instrumentation engine.

Processing order, which golden tests pin down:

* phases run in list order; flags and remembered values written in one phase
  are visible to later rule applications and later phases;
* within a phase, `instructionsRules` run first over every function in
  module order (entry rules, then the site scan over blocks/instructions,
  then return rules), followed by `globalVariablesRules` in list order;
* at one match site the rules of a phase are tried in list order and the
  first rule that matches with satisfied conditions is applied; scanning
  then resumes at the next instruction after the site's start;
* head-of-function insertions (entry rules and global rules) stack in
  application order within a phase;
* engine-inserted instructions are synthetic and invisible to matching in
  every phase.

Merged definitions for all inserted callees are appended after the last
phase; the input module is never mutated.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field

from .analyses import (
    AlwaysMaybePlugin,
    AnalysisPlugin,
    load_plugins,
    Query,
    QueryContext,
    RememberedValue,
)
from .config import Condition, Config, GlobalRule, InstructionRule, is_variable, NewCall
from .errors import (
    CalleeMismatch,
    DuplicateDefinition,
    MissingDefinition,
    PluginFailure,
    TerminatorViolation,
    UnknownFunction,
)
from .ir import (
    BasicBlock,
    Function,
    FunctionRef,
    GlobalRef,
    I64,
    insert_after,
    insert_before,
    Instruction,
    IntConst,
    match_text,
    Module,
    NullConst,
    type_size,
    Value,
    value_type,
    VOID,
    VoidType,
)

log = logging.getLogger("irinstr")

Bindings = dict[str, "Value | int"]


@dataclass
class EngineState:
    """Mutable run state: flag values plus the auxiliary (remembered) list."""

    flags: dict[str, str] = field(default_factory=dict)
    remembered: list[RememberedValue] = field(default_factory=list)

    @classmethod
    def for_config(cls, cfg: Config) -> "EngineState":
        return cls(flags={f: "false" for f in cfg.flags})


@dataclass(frozen=True)
class MatchSite:
    """Where a pattern sequence matched; indices count visible instructions."""

    function: str
    block: str
    start: int
    length: int


@dataclass
class RuleStats:
    phase: int
    kind: str  # "instruction" | "global"
    index: int
    where: str
    matches: int = 0
    applied: int = 0
    condition_rejections: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "kind": self.kind,
            "index": self.index,
            "where": self.where,
            "matches": self.matches,
            "applied": self.applied,
            "conditionRejections": list(self.condition_rejections),
        }


@dataclass
class Report:
    """Machine-readable run summary: per-rule counters plus the total."""

    rules: list[RuleStats] = field(default_factory=list)
    inserted: int = 0

    def to_dict(self) -> dict:
        return {"inserted": self.inserted, "rules": [r.to_dict() for r in self.rules]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# ---------------------------------------------------------------------------
# Pattern matching
# ---------------------------------------------------------------------------


def _bind(bindings: Bindings, name: str, value) -> bool:
    """Write-once bind; a second bind of the same name must agree."""
    if name in bindings:
        return bindings[name] == value
    bindings[name] = value
    return True


def _size_source(ins: Instruction) -> int | None:
    if ins.opcode in ("alloca", "load"):
        return type_size(ins.type)
    if ins.opcode == "store":
        return type_size(value_type(ins.operands[0]))
    return None


def match_sequence(visible: list[Instruction], start: int, patterns) -> Bindings | None:
    """Match patterns against consecutive visible instructions at `start`."""
    if start + len(patterns) > len(visible):
        return None
    bindings: Bindings = {}
    for k, pat in enumerate(patterns):
        ins = visible[start + k]
        if ins.opcode != pat.opcode:
            return None
        if pat.return_value is not None and pat.return_value != "*":
            if ins.result is None:
                return None
            if not _bind(bindings, pat.return_value, ins.result):
                return None
        if len(pat.operands) != len(ins.operands):
            return None
        for slot, op in zip(pat.operands, ins.operands):
            if slot == "*":
                continue
            if is_variable(slot):
                if not _bind(bindings, slot, op):
                    return None
            elif match_text(op) != slot:
                return None
        if pat.get_type_size is not None:
            size = _size_source(ins)
            if size is None:
                return None
            if not _bind(bindings, pat.get_type_size, size):
                return None
    return bindings


def match_pattern(
    function: Function, block: BasicBlock, start_index: int, patterns
) -> Bindings | None:
    """Public matching entry point; `start_index` addresses visible instructions."""
    return match_sequence(block.visible(), start_index, patterns)


# ---------------------------------------------------------------------------
# Conditions
# ---------------------------------------------------------------------------


def _resolve_param(p: str, bindings: Bindings):
    if is_variable(p):
        return bindings[p]
    if p == "null":
        return NullConst()
    try:
        return int(p)
    except ValueError:
        return p


def eval_conditions(
    conditions,
    bindings: Bindings,
    state: EngineState,
    plugins: list[AnalysisPlugin],
    declared_flags,
    ctx: QueryContext,
    stats: RuleStats | None = None,
    rule_path: str = "",
) -> bool:
    """Conjunction over the rule's conditions, in order, short-circuiting."""
    ctx.remembered = tuple(state.remembered)
    for i, cond in enumerate(conditions):
        if cond.name in declared_flags:
            ok = state.flags.get(cond.name) in cond.expected_results
        else:
            ok = _eval_plugin_query(cond, bindings, plugins, ctx, rule_path)
        if not ok:
            if stats is not None:
                stats.condition_rejections[i] += 1
            return False
    return True


def _eval_plugin_query(
    cond: Condition,
    bindings: Bindings,
    plugins,
    ctx: QueryContext,
    rule_path: str,
) -> bool:
    args = tuple(_resolve_param(p, bindings) for p in cond.params)
    query = Query(cond.name, args)
    asked = False
    for plugin in plugins:
        if not plugin.supports(cond.name):
            continue
        asked = True
        try:
            answer = plugin.answer(query, ctx)
        except PluginFailure as exc:
            raise PluginFailure(f"{exc} (while evaluating {rule_path})") from exc
        if answer in cond.expected_results:
            return True
    if not asked:
        log.warning(
            "query '%s' (%s) is not supported by any loaded plugin; "
            "the condition is unsatisfied",
            cond.name,
            rule_path,
        )
    return False


# ---------------------------------------------------------------------------
# Building and placing calls
# ---------------------------------------------------------------------------


def _build_call(
    new_call: NewCall, bindings: Bindings, defs: Module, used: dict[str, None]
) -> Instruction:
    callee = new_call.callee
    target = defs.function(callee)
    if target is None:
        raise MissingDefinition(
            f"@{callee}: no definition or declaration in the definitions module"
        )
    if not isinstance(target.return_type, VoidType):
        raise CalleeMismatch(f"@{callee}: inserted calls must return void")
    args: list[Value] = []
    for a in new_call.args:
        if is_variable(a):
            v = bindings[a]
            args.append(IntConst(v, I64) if isinstance(v, int) else v)
        elif a == "null":
            args.append(NullConst())
        else:
            args.append(IntConst(int(a), I64))
    if len(args) != len(target.params):
        raise CalleeMismatch(
            f"@{callee}: rule passes {len(args)} arguments, "
            f"definition takes {len(target.params)}"
        )
    used.setdefault(callee, None)
    return Instruction(
        "call", operands=[*args, FunctionRef(callee)], type=VOID, synthetic=True
    )


def _physical_index(block: BasicBlock, target: Instruction) -> int:
    for i, ins in enumerate(block.instructions):
        if ins is target:
            return i
    raise ValueError("matched instruction vanished from its block")


def _apply_effects(rule, bindings: Bindings, state: EngineState, function: str) -> None:
    for flag, value in rule.set_flags:
        state.flags[flag] = value
    if rule.remember is not None:
        state.remembered.append(RememberedValue(function, bindings[rule.remember]))


# ---------------------------------------------------------------------------
# The run
# ---------------------------------------------------------------------------


class _Run:
    def __init__(self, out: Module, cfg: Config, defs: Module, plugins):
        self.out = out
        self.cfg = cfg
        self.defs = defs
        self.plugins = plugins
        self.state = EngineState.for_config(cfg)
        self.used: dict[str, None] = {}
        self.report = Report()
        self._stats: dict[tuple[int, str, int], RuleStats] = {}
        for pi, phase in enumerate(cfg.phases):
            for ri, rule in enumerate(phase.instruction_rules):
                self._add_stats(pi, "instruction", ri, rule)
            for ri, rule in enumerate(phase.global_rules):
                self._add_stats(pi, "global", ri, rule, where="global")

    def _add_stats(self, pi, kind, ri, rule, where=None) -> None:
        stats = RuleStats(
            phase=pi,
            kind=kind,
            index=ri,
            where=where if where is not None else rule.where,
            condition_rejections=[0] * len(rule.conditions),
        )
        self._stats[(pi, kind, ri)] = stats
        self.report.rules.append(stats)

    def execute(self) -> None:
        for pi, phase in enumerate(self.cfg.phases):
            head_cursor: dict[str, int] = {}
            for fn in self.out.functions:
                if fn.is_declaration:
                    continue
                self._run_entry_rules(pi, phase, fn, head_cursor)
                self._scan_sites(pi, phase, fn)
                self._run_return_rules(pi, phase, fn)
            for ri, rule in enumerate(phase.global_rules):
                self._apply_global_rule(pi, ri, rule, head_cursor)
        merge_definitions(self.out, self.defs, list(self.used))
        _check_callees_resolve(self.out)

    # -- instruction rules ---------------------------------------------------

    def _selected(self, rule: InstructionRule, fn: Function) -> bool:
        return rule.in_function == "*" or rule.in_function == fn.name

    def _rule_path(self, pi: int, kind: str, ri: int) -> str:
        field = "instructionsRules" if kind == "instruction" else "globalVariablesRules"
        return f"phases[{pi}].{field}[{ri}]"

    def _run_entry_rules(self, pi, phase, fn: Function, head_cursor) -> None:
        for ri, rule in enumerate(phase.instruction_rules):
            if rule.where != "entry" or not self._selected(rule, fn):
                continue
            stats = self._stats[(pi, "instruction", ri)]
            stats.matches += 1
            ctx = QueryContext(function=fn.name, block=fn.entry_block.label)
            if not eval_conditions(
                rule.conditions, {}, self.state, self.plugins,
                self.cfg.flags, ctx, stats, self._rule_path(pi, "instruction", ri),
            ):
                continue
            call = _build_call(rule.new_call, {}, self.defs, self.used)
            self._insert_at_head(fn, call, head_cursor)
            _apply_effects(rule, {}, self.state, fn.name)
            stats.applied += 1
            self.report.inserted += 1

    def _run_return_rules(self, pi, phase, fn: Function) -> None:
        for ri, rule in enumerate(phase.instruction_rules):
            if rule.where != "return" or not self._selected(rule, fn):
                continue
            stats = self._stats[(pi, "instruction", ri)]
            for block in fn.blocks:
                term = block.terminator
                if term.opcode != "ret":
                    continue
                stats.matches += 1
                ctx = QueryContext(function=fn.name, block=block.label)
                if not eval_conditions(
                    rule.conditions, {}, self.state, self.plugins,
                    self.cfg.flags, ctx, stats, self._rule_path(pi, "instruction", ri),
                ):
                    continue
                call = _build_call(rule.new_call, {}, self.defs, self.used)
                insert_before(block, _physical_index(block, term), call)
                _apply_effects(rule, {}, self.state, fn.name)
                stats.applied += 1
                self.report.inserted += 1

    def _scan_sites(self, pi, phase, fn: Function) -> None:
        site_rules = [
            (ri, rule)
            for ri, rule in enumerate(phase.instruction_rules)
            if rule.where in ("before", "after") and self._selected(rule, fn)
        ]
        if not site_rules:
            return
        for block in fn.blocks:
            visible = block.visible()
            for start in range(len(visible)):
                for ri, rule in site_rules:
                    stats = self._stats[(pi, "instruction", ri)]
                    bindings = match_sequence(visible, start, rule.find)
                    if bindings is None:
                        continue
                    stats.matches += 1
                    ctx = QueryContext(function=fn.name, block=block.label)
                    if not eval_conditions(
                        rule.conditions, bindings, self.state, self.plugins,
                        self.cfg.flags, ctx, stats,
                        self._rule_path(pi, "instruction", ri),
                    ):
                        continue
                    self._apply_site_rule(rule, block, visible, start, bindings, fn)
                    stats.applied += 1
                    self.report.inserted += 1
                    break  # first applicable rule wins at this site

    def _apply_site_rule(
        self, rule, block: BasicBlock, visible, start: int, bindings, fn: Function
    ) -> None:
        call = _build_call(rule.new_call, bindings, self.defs, self.used)
        if rule.where == "before":
            target = visible[start]
            insert_before(block, _physical_index(block, target), call)
        else:
            target = visible[start + len(rule.find) - 1]
            if target.is_terminator:
                raise TerminatorViolation(
                    f"rule would insert after the terminator of "
                    f"@{fn.name} %{block.label}"
                )
            insert_after(block, _physical_index(block, target), call)
        _apply_effects(rule, bindings, self.state, fn.name)

    def _insert_at_head(self, fn: Function, call: Instruction, head_cursor) -> None:
        cursor = head_cursor.get(fn.name, 0)
        insert_before(fn.entry_block, cursor, call)
        head_cursor[fn.name] = cursor + 1

    # -- global rules -----------------------------------------------------------

    def _apply_global_rule(self, pi: int, ri: int, rule: GlobalRule, head_cursor) -> None:
        fn = self.out.function(rule.in_function)
        if fn is None or fn.is_declaration:
            raise UnknownFunction(
                f"global rule targets @{rule.in_function}, which is not defined"
            )
        stats = self._stats[(pi, "global", ri)]
        for g in self.out.globals:
            stats.matches += 1
            bindings: Bindings = {rule.find_globals.global_var: GlobalRef(g.name, g.type)}
            if rule.find_globals.get_type_size is not None:
                bindings[rule.find_globals.get_type_size] = type_size(g.type)
            ctx = QueryContext(function=fn.name, block=fn.entry_block.label)
            if not eval_conditions(
                rule.conditions, bindings, self.state, self.plugins,
                self.cfg.flags, ctx, stats, self._rule_path(pi, "global", ri),
            ):
                continue
            call = _build_call(rule.new_call, bindings, self.defs, self.used)
            self._insert_at_head(fn, call, head_cursor)
            _apply_effects(rule, bindings, self.state, fn.name)
            stats.applied += 1
            self.report.inserted += 1


# ---------------------------------------------------------------------------
# Definition merging
# ---------------------------------------------------------------------------


def _signature(fn: Function) -> tuple:
    return (fn.return_type, tuple(t for _, t in fn.params))


def merge_definitions(out: Module, defs: Module, used_callees) -> None:
    """Append definitions (and their transitive callees within `defs`) to `out`.

    A name already defined in `out` may not be defined again; a mere
    declaration in `out` is replaced by the definition from `defs`.
    """
    queue = list(used_callees)
    seen = set(queue)
    while queue:
        name = queue.pop(0)
        src = defs.function(name)
        if src is None:
            raise MissingDefinition(
                f"@{name}: no definition or declaration in the definitions module"
            )
        existing = out.function(name)
        if existing is not None:
            if not existing.is_declaration:
                if not src.is_declaration:
                    raise DuplicateDefinition(
                        f"@{name} is already defined in the instrumented module"
                    )
                continue  # out's definition satisfies defs' declaration
            if _signature(existing) != _signature(src):
                raise DuplicateDefinition(
                    f"@{name}: declaration does not match the definition "
                    f"in the definitions module"
                )
            if src.is_declaration:
                continue
            out.functions[out.functions.index(existing)] = copy.deepcopy(src)
        else:
            out.functions.append(copy.deepcopy(src))
        for block in src.blocks:
            for ins in block.instructions:
                if ins.opcode == "call":
                    callee = ins.callee.name
                    if callee not in seen:
                        seen.add(callee)
                        queue.append(callee)


def _check_callees_resolve(out: Module) -> None:
    for fn in out.functions:
        for block in fn.blocks:
            for ins in block.instructions:
                if ins.opcode == "call" and out.function(ins.callee.name) is None:
                    raise MissingDefinition(
                        f"@{ins.callee.name} (called from @{fn.name}) does not "
                        f"resolve to a function in the output module"
                    )


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def instrument_with_report(
    module: Module, cfg: Config, defs: Module, no_plugins: bool = False
) -> tuple[Module, Report]:
    """Instrument a copy of `module` per `cfg`; returns (new module, report)."""
    out = copy.deepcopy(module)
    if no_plugins:
        plugins: list[AnalysisPlugin] = [AlwaysMaybePlugin()]
    else:
        plugins = load_plugins(cfg.analyses, out, cfg.flags)
    try:
        run = _Run(out, cfg, defs, plugins)
        run.execute()
        return out, run.report
    finally:
        for p in plugins:
            p.close()


def instrument(
    module: Module, cfg: Config, defs: Module, no_plugins: bool = False
) -> Module:
    """Like instrument_with_report, returning only the instrumented module."""
    out, _ = instrument_with_report(module, cfg, defs, no_plugins=no_plugins)
    return out
