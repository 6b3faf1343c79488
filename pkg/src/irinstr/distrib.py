"""Access to the shipped rule files, runtime definitions, and test corpus.

The data lives at the repository root (configs/, runtime/, corpus/); this
module resolves those paths from an editable install and loads them through
the regular parsers, so the files on disk stay the single source of truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .config import Config, parse_config
from .errors import InstrError
from .ir import Module, parse_ir


def repo_root() -> Path:
    """Locate the repository root by walking up from this file."""
    here = Path(__file__).resolve()
    for parent in here.parents:
        if (parent / "pyproject.toml").is_file() and (parent / "configs").is_dir():
            return parent
    raise InstrError(
        "cannot locate the repository root (configs/ next to pyproject.toml); "
        "install the package with 'pip install -e .'"
    )


def config_path(name: str) -> Path:
    return repo_root() / "configs" / name


def definitions_path() -> Path:
    return repo_root() / "runtime" / "checks.ll"


def corpus_dir() -> Path:
    return repo_root() / "corpus"


def _load_config(name: str) -> Config:
    return parse_config(config_path(name).read_text(encoding="utf-8"))


def config_div_by_zero() -> Config:
    """Guards sdiv/udiv/srem with checkDivisionByZero, range-analysis gated."""
    return _load_config("div-by-zero.json")


def config_overflow() -> Config:
    """Guards add/sub/mul/sdiv with per-opcode overflow checks."""
    return _load_config("overflow.json")


def config_memsafety() -> Config:
    """Two-phase memory-safety checks and allocation tracking."""
    return _load_config("mem-safety.json")


def definitions_module() -> Module:
    """The instrumentation-function definitions the shipped configs call."""
    return parse_ir(definitions_path().read_text(encoding="utf-8"))


@dataclass(frozen=True)
class CorpusCase:
    """One golden test: input, config, expected output, expected counters."""

    name: str
    config: str
    input: str
    golden: str
    report: dict
    strict_reduction: bool

    def config_obj(self) -> Config:
        path = repo_root() / self.config
        return parse_config(path.read_text(encoding="utf-8"))

    def input_text(self) -> str:
        return (repo_root() / self.input).read_text(encoding="utf-8")

    def golden_text(self) -> str:
        return (repo_root() / self.golden).read_text(encoding="utf-8")


def load_corpus() -> list[CorpusCase]:
    manifest = json.loads(
        (corpus_dir() / "manifest.json").read_text(encoding="utf-8")
    )
    return [
        CorpusCase(
            name=c["name"],
            config=c["config"],
            input=c["input"],
            golden=c["golden"],
            report=c["report"],
            strict_reduction=c["strictReduction"],
        )
        for c in manifest["cases"]
    ]
