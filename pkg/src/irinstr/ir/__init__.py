"""IR core: data model, parser, and canonical printer."""

from .model import (
    ArrayType,
    BasicBlock,
    BINARY_OPS,
    Function,
    FunctionRef,
    GlobalRef,
    GlobalVariable,
    I1,
    I8,
    I16,
    I32,
    I64,
    ICMP_PREDICATES,
    insert_after,
    insert_before,
    Instruction,
    IntConst,
    IntType,
    match_text,
    Module,
    NullConst,
    OPCODES,
    POINTER_SIZE,
    PTR,
    PtrType,
    Register,
    TERMINATORS,
    type_size,
    TypeDesc,
    validate_module,
    Value,
    value_text,
    value_type,
    VOID,
    VoidType,
    ZeroInit,
)
from .parser import parse_ir
from .printer import instruction_text, print_ir, type_text

__all__ = [
    "ArrayType",
    "BasicBlock",
    "BINARY_OPS",
    "Function",
    "FunctionRef",
    "GlobalRef",
    "GlobalVariable",
    "I1",
    "I8",
    "I16",
    "I32",
    "I64",
    "ICMP_PREDICATES",
    "insert_after",
    "insert_before",
    "Instruction",
    "instruction_text",
    "IntConst",
    "IntType",
    "match_text",
    "Module",
    "NullConst",
    "OPCODES",
    "parse_ir",
    "POINTER_SIZE",
    "print_ir",
    "PTR",
    "PtrType",
    "Register",
    "TERMINATORS",
    "type_size",
    "type_text",
    "TypeDesc",
    "validate_module",
    "Value",
    "value_text",
    "value_type",
    "VOID",
    "VoidType",
    "ZeroInit",
]
