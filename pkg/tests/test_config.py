import json

import pytest

from irinstr.config import (
    Condition,
    config_to_dict,
    InstructionPattern,
    NewCall,
    parse_config,
    PluginSpec,
    validate_against_definitions,
)
from irinstr.errors import JsonError, SchemaError
from irinstr.ir import parse_ir

STRICT_DBZ = {
    "analyses": ["range"],
    "phases": [
        {
            "instructionsRules": [
                {
                    "in": "*",
                    "findInstructions": [
                        {
                            "instruction": "sdiv",
                            "returnValue": "*",
                            "operands": ["*", "<t1>"],
                        }
                    ],
                    "conditions": [
                        {"query": ["canBeZero", "<t1>"], "expectedResults": ["true"]}
                    ],
                    "newInstruction": {
                        "instruction": "call",
                        "operands": ["<t1>", "checkDivisionByZero"],
                    },
                    "where": "before",
                }
            ]
        }
    ],
}


def test_strict_dbz_config_shape_field_for_field():
    cfg = parse_config(json.dumps(STRICT_DBZ))
    assert cfg.analyses == (PluginSpec("builtin", "range"),)
    assert cfg.flags == ()
    assert cfg.definitions_file is None
    assert len(cfg.phases) == 1
    phase = cfg.phases[0]
    assert phase.global_rules == ()
    assert len(phase.instruction_rules) == 1
    rule = phase.instruction_rules[0]
    assert rule.in_function == "*"
    assert rule.find == (
        InstructionPattern(
            opcode="sdiv", return_value="*", operands=("*", "<t1>"), get_type_size=None
        ),
    )
    assert rule.conditions == (Condition(("canBeZero", "<t1>"), ("true",)),)
    assert rule.new_call == NewCall(("<t1>", "checkDivisionByZero"))
    assert rule.new_call.callee == "checkDivisionByZero"
    assert rule.new_call.args == ("<t1>",)
    assert rule.where == "before"
    assert rule.set_flags == ()
    assert rule.remember is None


def test_invalid_json_is_a_json_error():
    with pytest.raises(JsonError):
        parse_config("{not json")


def _patch(base: dict, path: list, value) -> str:
    import copy

    doc = copy.deepcopy(base)
    node = doc
    for key in path[:-1]:
        node = node[key]
    if value is _DELETE:
        del node[path[-1]]
    else:
        node[path[-1]] = value
    return json.dumps(doc)


_DELETE = object()
_RULE = ["phases", 0, "instructionsRules", 0]


@pytest.mark.parametrize(
    "path,value,fragment",
    [
        (["phases"], [], "non-empty"),
        (["phases"], _DELETE, "mandatory"),
        (["bogus"], 1, "unknown field 'bogus'"),
        (_RULE + ["where"], "nowhere", "not one of"),
        (_RULE + ["where"], _DELETE, "'where' must be"),
        (_RULE + ["newInstruction"], _DELETE, "missing"),
        (_RULE + ["newInstruction", "instruction"], "store", "only call"),
        (_RULE + ["newInstruction", "operands"], [], "callee name is required"),
        (_RULE + ["newInstruction", "operands"], ["<t9>", "f"], "unbound variable <t9>"),
        (_RULE + ["findInstructions", 0, "instruction"], "fmul", "unsupported opcode"),
        (_RULE + ["findInstructions", 0, "getTypeSize"], "<s>", "only with load, store or alloca"),
        (_RULE + ["findInstructions"], _DELETE, "requires a non-empty findInstructions"),
        (_RULE + ["conditions", 0, "query"], [], "must not be empty"),
        (_RULE + ["conditions", 0, "expectedResults"], [], "must not be empty"),
        (_RULE + ["conditions", 0, "surprise"], 1, "unknown field"),
        (_RULE + ["setFlags"], [["undeclared", "true"]], "undeclared flag"),
        (_RULE + ["remember"], "<t9>", "unbound variable <t9>"),
        (_RULE + ["remember"], "plain", "configuration variable"),
        (["flags"], ["f", "f"], "duplicate flag"),
    ],
)
def test_schema_errors_carry_paths(path, value, fragment):
    with pytest.raises(SchemaError) as err:
        parse_config(_patch(STRICT_DBZ, path, value))
    assert fragment in str(err.value)


def test_get_type_size_allowed_on_load_store_alloca():
    for opcode in ("load", "store", "alloca"):
        doc = json.loads(json.dumps(STRICT_DBZ))
        pat = doc["phases"][0]["instructionsRules"][0]["findInstructions"][0]
        pat["instruction"] = opcode
        pat["operands"] = ["<t1>"] if opcode == "load" else (
            ["*", "<t1>"] if opcode == "store" else []
        )
        pat["getTypeSize"] = "<s>"
        if opcode == "alloca":
            del pat["operands"]
        parse_config(json.dumps(doc))


def test_global_rule_star_rejected():
    doc = {
        "phases": [
            {
                "globalVariablesRules": [
                    {
                        "findGlobals": {"globalVariable": "<g>"},
                        "newInstruction": {"instruction": "call", "operands": ["<g>", "f"]},
                        "in": "*",
                    }
                ]
            }
        ]
    }
    with pytest.raises(SchemaError) as err:
        parse_config(json.dumps(doc))
    assert "cannot use '*'" in str(err.value)


def test_entry_return_rules_ignore_find_and_restrict_conditions():
    base = {
        "flags": ["seen"],
        "phases": [
            {
                "instructionsRules": [
                    {
                        "in": "main",
                        "conditions": [{"query": ["seen"], "expectedResults": ["true"]}],
                        "newInstruction": {"instruction": "call", "operands": ["f"]},
                        "where": "return",
                    }
                ]
            }
        ],
    }
    parse_config(json.dumps(base))  # flags-only condition is fine

    bad = json.loads(json.dumps(base))
    bad["phases"][0]["instructionsRules"][0]["conditions"] = [
        {"query": ["canBeZero", "<t1>"], "expectedResults": ["true"]}
    ]
    with pytest.raises(SchemaError) as err:
        parse_config(json.dumps(bad))
    assert "flag queries" in str(err.value)

    # findInstructions on an entry rule is validated but ignored
    ok = json.loads(json.dumps(base))
    ok["phases"][0]["instructionsRules"][0]["where"] = "entry"
    ok["phases"][0]["instructionsRules"][0]["findInstructions"] = [
        {"instruction": "sdiv", "operands": ["*", "*"]}
    ]
    cfg = parse_config(json.dumps(ok))
    assert cfg.phases[0].instruction_rules[0].find[0].opcode == "sdiv"


def test_flag_query_takes_no_parameters():
    doc = {
        "flags": ["seen"],
        "phases": [
            {
                "instructionsRules": [
                    {
                        "in": "*",
                        "findInstructions": [{"instruction": "add", "operands": ["<a>", "*"]}],
                        "conditions": [{"query": ["seen", "<a>"], "expectedResults": ["true"]}],
                        "newInstruction": {"instruction": "call", "operands": ["f"]},
                        "where": "before",
                    }
                ]
            }
        ],
    }
    with pytest.raises(SchemaError) as err:
        parse_config(json.dumps(doc))
    assert "no parameters" in str(err.value)


def test_external_plugin_spec():
    doc = json.loads(json.dumps(STRICT_DBZ))
    doc["analyses"] = ["exec:python3 plugin.py --fast", "points-to"]
    cfg = parse_config(json.dumps(doc))
    assert cfg.analyses[0] == PluginSpec("external", "python3 plugin.py --fast")
    assert cfg.analyses[1] == PluginSpec("builtin", "points-to")


def test_empty_phase_is_allowed():
    cfg = parse_config(json.dumps({"phases": [{}]}))
    assert cfg.phases[0].instruction_rules == ()
    assert cfg.phases[0].global_rules == ()


def test_reserialisation_round_trips(repo_root):
    for name in ("div-by-zero", "overflow", "mem-safety"):
        text = (repo_root / "configs" / f"{name}.json").read_text(encoding="utf-8")
        cfg = parse_config(text)
        again = parse_config(json.dumps(config_to_dict(cfg)))
        assert again == cfg


def test_shipped_configs_match_schema_file(repo_root):
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads((repo_root / "docs" / "config-schema.json").read_text())
    for name in ("div-by-zero", "overflow", "mem-safety"):
        doc = json.loads((repo_root / "configs" / f"{name}.json").read_text())
        jsonschema.validate(doc, schema)


# ---------------------------------------------------------------------------
# validate_against_definitions
# ---------------------------------------------------------------------------

DEFS = """
declare void @report_violation(i64)

define void @checkDivisionByZero(i64 %d) {
entry:
  ret void
}
"""


def test_defs_validation_clean():
    cfg = parse_config(json.dumps(STRICT_DBZ))
    assert validate_against_definitions(cfg, parse_ir(DEFS)) == []


def test_defs_validation_missing_callee():
    doc = _patch(STRICT_DBZ, _RULE + ["newInstruction", "operands"], ["<t1>", "missingFn"])
    warnings = validate_against_definitions(parse_config(doc), parse_ir(DEFS))
    assert len(warnings) == 1
    assert warnings[0].callee == "missingFn"
    assert "phases[0].instructionsRules[0]" in warnings[0].path


def test_defs_validation_arity_mismatch():
    # drop one operand from a shipped-style rule: 0 args vs 1 parameter
    doc = _patch(STRICT_DBZ, _RULE + ["newInstruction", "operands"], ["checkDivisionByZero"])
    warnings = validate_against_definitions(parse_config(doc), parse_ir(DEFS))
    assert len(warnings) == 1
    assert "passes 0 arguments" in warnings[0].message
