"""Typed model and strict validation for JSON instrumentation rule files.

Field names follow the on-disk format exactly: `analyses`, `flags`,
`phases`, `instructionsRules`, `globalVariablesRules`, `in`,
`findInstructions`, `instruction`, `returnValue`, `operands`,
`getTypeSize`, `conditions`, `query`, `expectedResults`, `newInstruction`,
`where`, `setFlags`, `remember`, `findGlobals`, `globalVariable`, `file`.
A machine-readable schema lives in docs/config-schema.json.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import JsonError, SchemaError
from .ir import Module, OPCODES

_VARIABLE_RE = re.compile(r"^<[A-Za-z_][A-Za-z0-9_]*>$")
_INT_LITERAL_RE = re.compile(r"^-?[0-9]+$")

WHERE_VALUES = ("before", "after", "entry", "return")
SIZE_OPCODES = ("load", "store", "alloca")
EXTERNAL_PREFIX = "exec:"


def is_variable(s: str) -> bool:
    """True for configuration variables, i.e. tokens shaped like ``<name>``."""
    return bool(_VARIABLE_RE.match(s))


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Condition:
    """A query (name + parameters) with the answers that satisfy it."""

    query: tuple[str, ...]
    expected_results: tuple[str, ...]

    @property
    def name(self) -> str:
        return self.query[0]

    @property
    def params(self) -> tuple[str, ...]:
        return self.query[1:]


@dataclass(frozen=True)
class NewCall:
    """The call to insert: argument slots first, callee name last."""

    operands: tuple[str, ...]

    @property
    def callee(self) -> str:
        return self.operands[-1]

    @property
    def args(self) -> tuple[str, ...]:
        return self.operands[:-1]


@dataclass(frozen=True)
class InstructionPattern:
    opcode: str
    return_value: str | None = None
    operands: tuple[str, ...] = ()
    get_type_size: str | None = None


@dataclass(frozen=True)
class InstructionRule:
    in_function: str
    find: tuple[InstructionPattern, ...]
    new_call: NewCall
    where: str
    conditions: tuple[Condition, ...] = ()
    set_flags: tuple[tuple[str, str], ...] = ()
    remember: str | None = None


@dataclass(frozen=True)
class GlobalPattern:
    global_var: str
    get_type_size: str | None = None


@dataclass(frozen=True)
class GlobalRule:
    find_globals: GlobalPattern
    new_call: NewCall
    in_function: str
    conditions: tuple[Condition, ...] = ()
    set_flags: tuple[tuple[str, str], ...] = ()
    remember: str | None = None


@dataclass(frozen=True)
class Phase:
    instruction_rules: tuple[InstructionRule, ...] = ()
    global_rules: tuple[GlobalRule, ...] = ()


@dataclass(frozen=True)
class PluginSpec:
    """`range`/`points-to` select builtins; `exec:<command>` spawns a process."""

    kind: str  # "builtin" | "external"
    name: str


@dataclass(frozen=True)
class Config:
    phases: tuple[Phase, ...]
    analyses: tuple[PluginSpec, ...] = ()
    flags: tuple[str, ...] = ()
    definitions_file: str | None = None


@dataclass(frozen=True)
class DefinitionWarning:
    """Advisory mismatch between a rule's call and the definitions module."""

    path: str
    callee: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: @{self.callee}: {self.message}"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def parse_config(text: str) -> Config:
    """Parse and validate a JSON rule file; raises JsonError/SchemaError."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise JsonError(f"invalid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw: object) -> Config:
    if not isinstance(raw, dict):
        raise SchemaError("", "the top level must be a JSON object")
    _reject_unknown(raw, {"analyses", "flags", "phases", "file"}, "")

    analyses = tuple(
        _parse_plugin_spec(s, f"analyses[{i}]")
        for i, s in enumerate(_string_list(raw.get("analyses", []), "analyses"))
    )
    flags = tuple(_string_list(raw.get("flags", []), "flags"))
    seen_flags: set[str] = set()
    for i, f in enumerate(flags):
        if f in seen_flags:
            raise SchemaError(f"flags[{i}]", f"duplicate flag '{f}'")
        seen_flags.add(f)

    if "phases" not in raw:
        raise SchemaError("phases", "the mandatory field 'phases' is missing")
    phases_raw = raw["phases"]
    if not isinstance(phases_raw, list) or not phases_raw:
        raise SchemaError("phases", "'phases' must be a non-empty list")
    phases = tuple(
        _parse_phase(p, f"phases[{i}]", flags) for i, p in enumerate(phases_raw)
    )

    definitions_file = raw.get("file")
    if definitions_file is not None and not isinstance(definitions_file, str):
        raise SchemaError("file", "'file' must be a string path")

    return Config(
        phases=phases,
        analyses=analyses,
        flags=flags,
        definitions_file=definitions_file,
    )


def _parse_plugin_spec(s: str, path: str) -> PluginSpec:
    if s.startswith(EXTERNAL_PREFIX):
        command = s[len(EXTERNAL_PREFIX) :].strip()
        if not command:
            raise SchemaError(path, "empty external plugin command")
        return PluginSpec("external", command)
    return PluginSpec("builtin", s)


def _parse_phase(raw: object, path: str, flags: tuple[str, ...]) -> Phase:
    if not isinstance(raw, dict):
        raise SchemaError(path, "a phase must be a JSON object")
    _reject_unknown(raw, {"instructionsRules", "globalVariablesRules"}, path)
    irules_raw = raw.get("instructionsRules", [])
    grules_raw = raw.get("globalVariablesRules", [])
    if not isinstance(irules_raw, list):
        raise SchemaError(f"{path}.instructionsRules", "must be a list")
    if not isinstance(grules_raw, list):
        raise SchemaError(f"{path}.globalVariablesRules", "must be a list")
    irules = tuple(
        _parse_instruction_rule(r, f"{path}.instructionsRules[{i}]", flags)
        for i, r in enumerate(irules_raw)
    )
    grules = tuple(
        _parse_global_rule(r, f"{path}.globalVariablesRules[{i}]", flags)
        for i, r in enumerate(grules_raw)
    )
    return Phase(irules, grules)


def _parse_instruction_rule(
    raw: object, path: str, flags: tuple[str, ...]
) -> InstructionRule:
    if not isinstance(raw, dict):
        raise SchemaError(path, "a rule must be a JSON object")
    _reject_unknown(
        raw,
        {
            "in",
            "findInstructions",
            "conditions",
            "newInstruction",
            "where",
            "setFlags",
            "remember",
        },
        path,
    )
    in_function = _require_str(raw, "in", path)
    where = _require_str(raw, "where", path)
    if where not in WHERE_VALUES:
        raise SchemaError(
            f"{path}.where", f"'{where}' is not one of {', '.join(WHERE_VALUES)}"
        )
    find = tuple(
        _parse_pattern(p, f"{path}.findInstructions[{i}]")
        for i, p in enumerate(_opt_list(raw, "findInstructions", path))
    )
    if where in ("before", "after") and not find:
        raise SchemaError(
            f"{path}.findInstructions",
            f"'where': '{where}' requires a non-empty findInstructions",
        )
    conditions = tuple(
        _parse_condition(c, f"{path}.conditions[{i}]")
        for i, c in enumerate(_opt_list(raw, "conditions", path))
    )
    new_call = _parse_new_call(raw.get("newInstruction"), f"{path}.newInstruction")
    set_flags = _parse_set_flags(raw.get("setFlags", []), f"{path}.setFlags", flags)
    remember = raw.get("remember")
    if remember is not None and (
        not isinstance(remember, str) or not is_variable(remember)
    ):
        raise SchemaError(f"{path}.remember", "must be a configuration variable")

    rule = InstructionRule(
        in_function=in_function,
        find=find,
        new_call=new_call,
        where=where,
        conditions=conditions,
        set_flags=set_flags,
        remember=remember,
    )
    _check_rule_variables(rule, path, flags)
    return rule


def _parse_global_rule(raw: object, path: str, flags: tuple[str, ...]) -> GlobalRule:
    if not isinstance(raw, dict):
        raise SchemaError(path, "a rule must be a JSON object")
    _reject_unknown(
        raw,
        {"findGlobals", "conditions", "newInstruction", "in", "setFlags", "remember"},
        path,
    )
    in_function = _require_str(raw, "in", path)
    if in_function == "*":
        raise SchemaError(f"{path}.in", "global-variable rules cannot use '*'")
    fg = raw.get("findGlobals")
    if not isinstance(fg, dict):
        raise SchemaError(f"{path}.findGlobals", "missing or not an object")
    _reject_unknown(fg, {"globalVariable", "getTypeSize"}, f"{path}.findGlobals")
    gv = _require_str(fg, "globalVariable", f"{path}.findGlobals")
    if not is_variable(gv):
        raise SchemaError(
            f"{path}.findGlobals.globalVariable", "must be a configuration variable"
        )
    gts = fg.get("getTypeSize")
    if gts is not None and (not isinstance(gts, str) or not is_variable(gts)):
        raise SchemaError(
            f"{path}.findGlobals.getTypeSize", "must be a configuration variable"
        )
    conditions = tuple(
        _parse_condition(c, f"{path}.conditions[{i}]")
        for i, c in enumerate(_opt_list(raw, "conditions", path))
    )
    new_call = _parse_new_call(raw.get("newInstruction"), f"{path}.newInstruction")
    set_flags = _parse_set_flags(raw.get("setFlags", []), f"{path}.setFlags", flags)
    remember = raw.get("remember")
    if remember is not None and (
        not isinstance(remember, str) or not is_variable(remember)
    ):
        raise SchemaError(f"{path}.remember", "must be a configuration variable")

    rule = GlobalRule(
        find_globals=GlobalPattern(gv, gts),
        new_call=new_call,
        in_function=in_function,
        conditions=conditions,
        set_flags=set_flags,
        remember=remember,
    )
    bound = {gv} | ({gts} if gts else set())
    _check_used_variables(
        rule.conditions, rule.new_call, rule.remember, bound, path, flags
    )
    return rule


def _parse_pattern(raw: object, path: str) -> InstructionPattern:
    if not isinstance(raw, dict):
        raise SchemaError(path, "a pattern must be a JSON object")
    _reject_unknown(raw, {"instruction", "returnValue", "operands", "getTypeSize"}, path)
    opcode = _require_str(raw, "instruction", path)
    if opcode not in OPCODES:
        raise SchemaError(f"{path}.instruction", f"unsupported opcode '{opcode}'")
    rv = raw.get("returnValue")
    if rv is not None:
        if not isinstance(rv, str) or (rv != "*" and not is_variable(rv)):
            raise SchemaError(
                f"{path}.returnValue", "must be '*' or a configuration variable"
            )
    operands = tuple(_string_list(raw.get("operands", []), f"{path}.operands"))
    gts = raw.get("getTypeSize")
    if gts is not None:
        if not isinstance(gts, str) or not is_variable(gts):
            raise SchemaError(
                f"{path}.getTypeSize", "must be a configuration variable"
            )
        if opcode not in SIZE_OPCODES:
            raise SchemaError(
                f"{path}.getTypeSize",
                "getTypeSize can be used only with load, store or alloca",
            )
    return InstructionPattern(opcode, rv, operands, gts)


def _parse_condition(raw: object, path: str) -> Condition:
    if not isinstance(raw, dict):
        raise SchemaError(path, "a condition must be a JSON object")
    _reject_unknown(raw, {"query", "expectedResults"}, path)
    query = tuple(_string_list(raw.get("query"), f"{path}.query", required=True))
    if not query:
        raise SchemaError(f"{path}.query", "must not be empty")
    if is_variable(query[0]):
        raise SchemaError(f"{path}.query", "the query name cannot be a variable")
    expected = tuple(
        _string_list(raw.get("expectedResults"), f"{path}.expectedResults", required=True)
    )
    if not expected:
        raise SchemaError(f"{path}.expectedResults", "must not be empty")
    return Condition(query, expected)


def _parse_new_call(raw: object, path: str) -> NewCall:
    if raw is None:
        raise SchemaError(path, "the mandatory field 'newInstruction' is missing")
    if not isinstance(raw, dict):
        raise SchemaError(path, "must be a JSON object")
    _reject_unknown(raw, {"instruction", "operands"}, path)
    instruction = _require_str(raw, "instruction", path)
    if instruction != "call":
        raise SchemaError(
            f"{path}.instruction", "only call instructions can be inserted"
        )
    operands = tuple(_string_list(raw.get("operands"), f"{path}.operands", required=True))
    if not operands:
        raise SchemaError(f"{path}.operands", "the callee name is required")
    callee = operands[-1]
    if is_variable(callee) or callee == "*":
        raise SchemaError(f"{path}.operands", "the callee must be a literal name")
    for i, arg in enumerate(operands[:-1]):
        if is_variable(arg) or _INT_LITERAL_RE.match(arg) or arg == "null":
            continue
        raise SchemaError(
            f"{path}.operands[{i}]",
            "call arguments must be variables, integer literals, or 'null'",
        )
    return NewCall(operands)


def _parse_set_flags(raw: object, path: str, flags: tuple[str, ...]):
    if not isinstance(raw, list):
        raise SchemaError(path, "must be a list of [flag, value] pairs")
    pairs: list[tuple[str, str]] = []
    for i, item in enumerate(raw):
        if (
            not isinstance(item, list)
            or len(item) != 2
            or not all(isinstance(x, str) for x in item)
        ):
            raise SchemaError(f"{path}[{i}]", "must be a [flag, value] string pair")
        flag, value = item
        if flag not in flags:
            raise SchemaError(f"{path}[{i}]", f"undeclared flag '{flag}'")
        pairs.append((flag, value))
    return tuple(pairs)


def _check_rule_variables(
    rule: InstructionRule, path: str, flags: tuple[str, ...]
) -> None:
    bound: set[str] = set()
    for p in rule.find:
        if p.return_value and is_variable(p.return_value):
            bound.add(p.return_value)
        for op in p.operands:
            if is_variable(op):
                bound.add(op)
        if p.get_type_size:
            bound.add(p.get_type_size)
    if rule.where in ("entry", "return"):
        # No bindings exist at entry/return sites: conditions may only test
        # flags, and neither call arguments nor remember may use variables.
        for i, cond in enumerate(rule.conditions):
            if cond.name not in flags:
                raise SchemaError(
                    f"{path}.conditions[{i}]",
                    f"entry/return rules may only use flag queries, "
                    f"'{cond.name}' is not a declared flag",
                )
        for arg in rule.new_call.args:
            if is_variable(arg):
                raise SchemaError(
                    f"{path}.newInstruction",
                    f"entry/return rules cannot reference variables ({arg})",
                )
        if rule.remember is not None:
            raise SchemaError(
                f"{path}.remember", "entry/return rules cannot remember values"
            )
        return
    _check_used_variables(
        rule.conditions, rule.new_call, rule.remember, bound, path, flags
    )


def _check_used_variables(
    conditions, new_call, remember, bound: set[str], path: str, flags: tuple[str, ...]
) -> None:
    for i, cond in enumerate(conditions):
        if cond.name in flags:
            if cond.params:
                raise SchemaError(
                    f"{path}.conditions[{i}]", "flag queries take no parameters"
                )
            continue
        for p in cond.params:
            if is_variable(p) and p not in bound:
                raise SchemaError(
                    f"{path}.conditions[{i}]", f"unbound variable {p}"
                )
    for arg in new_call.args:
        if is_variable(arg) and arg not in bound:
            raise SchemaError(f"{path}.newInstruction", f"unbound variable {arg}")
    if remember is not None and remember not in bound:
        raise SchemaError(f"{path}.remember", f"unbound variable {remember}")


# ---------------------------------------------------------------------------
# Serialisation (round-trips through parse_config)
# ---------------------------------------------------------------------------


def config_to_dict(cfg: Config) -> dict:
    out: dict = {}
    if cfg.analyses:
        out["analyses"] = [
            s.name if s.kind == "builtin" else EXTERNAL_PREFIX + s.name
            for s in cfg.analyses
        ]
    if cfg.flags:
        out["flags"] = list(cfg.flags)
    out["phases"] = [_phase_to_dict(p) for p in cfg.phases]
    if cfg.definitions_file is not None:
        out["file"] = cfg.definitions_file
    return out


def _phase_to_dict(phase: Phase) -> dict:
    out: dict = {}
    if phase.instruction_rules:
        out["instructionsRules"] = [
            _instruction_rule_to_dict(r) for r in phase.instruction_rules
        ]
    if phase.global_rules:
        out["globalVariablesRules"] = [
            _global_rule_to_dict(r) for r in phase.global_rules
        ]
    return out


def _condition_to_dict(c: Condition) -> dict:
    return {"query": list(c.query), "expectedResults": list(c.expected_results)}


def _instruction_rule_to_dict(r: InstructionRule) -> dict:
    out: dict = {"in": r.in_function}
    if r.find:
        patterns = []
        for p in r.find:
            pd: dict = {"instruction": p.opcode}
            if p.return_value is not None:
                pd["returnValue"] = p.return_value
            if p.operands:
                pd["operands"] = list(p.operands)
            if p.get_type_size is not None:
                pd["getTypeSize"] = p.get_type_size
            patterns.append(pd)
        out["findInstructions"] = patterns
    if r.conditions:
        out["conditions"] = [_condition_to_dict(c) for c in r.conditions]
    out["newInstruction"] = {"instruction": "call", "operands": list(r.new_call.operands)}
    out["where"] = r.where
    if r.set_flags:
        out["setFlags"] = [[f, v] for f, v in r.set_flags]
    if r.remember is not None:
        out["remember"] = r.remember
    return out


def _global_rule_to_dict(r: GlobalRule) -> dict:
    fg: dict = {"globalVariable": r.find_globals.global_var}
    if r.find_globals.get_type_size is not None:
        fg["getTypeSize"] = r.find_globals.get_type_size
    out: dict = {"findGlobals": fg}
    if r.conditions:
        out["conditions"] = [_condition_to_dict(c) for c in r.conditions]
    out["newInstruction"] = {"instruction": "call", "operands": list(r.new_call.operands)}
    out["in"] = r.in_function
    if r.set_flags:
        out["setFlags"] = [[f, v] for f, v in r.set_flags]
    if r.remember is not None:
        out["remember"] = r.remember
    return out


# ---------------------------------------------------------------------------
# Cross-checks against a definitions module
# ---------------------------------------------------------------------------


def validate_against_definitions(cfg: Config, defs: Module) -> list[DefinitionWarning]:
    """Warn about rule calls that the definitions module cannot satisfy."""
    warnings: list[DefinitionWarning] = []
    for pi, phase in enumerate(cfg.phases):
        for ri, rule in enumerate(phase.instruction_rules):
            _check_call(
                rule.new_call, defs, f"phases[{pi}].instructionsRules[{ri}]", warnings
            )
        for ri, rule in enumerate(phase.global_rules):
            _check_call(
                rule.new_call, defs, f"phases[{pi}].globalVariablesRules[{ri}]", warnings
            )
    return warnings


def _check_call(
    call: NewCall, defs: Module, path: str, warnings: list[DefinitionWarning]
) -> None:
    fn = defs.function(call.callee)
    if fn is None:
        warnings.append(
            DefinitionWarning(path, call.callee, "no definition or declaration")
        )
        return
    if len(call.args) != len(fn.params):
        warnings.append(
            DefinitionWarning(
                path,
                call.callee,
                f"rule passes {len(call.args)} arguments, "
                f"definition takes {len(fn.params)}",
            )
        )


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _reject_unknown(raw: dict, allowed: set[str], path: str) -> None:
    for key in raw:
        if key not in allowed:
            where = f"{path}.{key}" if path else str(key)
            raise SchemaError(where, f"unknown field '{key}'")


def _require_str(raw: dict, key: str, path: str) -> str:
    v = raw.get(key)
    if not isinstance(v, str) or not v:
        raise SchemaError(f"{path}.{key}", f"the field '{key}' must be a non-empty string")
    return v


def _opt_list(raw: dict, key: str, path: str) -> list:
    v = raw.get(key, [])
    if not isinstance(v, list):
        raise SchemaError(f"{path}.{key}", "must be a list")
    return v


def _string_list(v: object, path: str, required: bool = False) -> list[str]:
    if v is None:
        if required:
            raise SchemaError(path, "missing required list")
        return []
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        raise SchemaError(path, "must be a list of strings")
    return v
