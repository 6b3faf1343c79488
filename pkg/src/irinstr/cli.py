"""Command-line entry point.

    instr <config> <input> [<definitions>] [<output>] [options]

When <definitions> is omitted the config's top-level "file" field names the
definitions module (relative paths resolve against the config file). Exit
codes: 0 success, 1 usage error, 2 parse/validation error, 3 engine or
plugin failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile

from .config import parse_config, validate_against_definitions
from .engine import instrument_with_report
from .errors import (
    EngineError,
    InstrError,
    IRParseError,
    JsonError,
    PluginFailure,
    SchemaError,
)
from .ir import Module, parse_ir, print_ir

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_ENGINE = 3

DEFAULT_OUTPUT = "out.ll"


class _UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we want exit 1
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="instr",
        description="Insert instrumentation-function calls into IR per a JSON rule file.",
    )
    parser.add_argument("config", help="JSON instrumentation rules")
    parser.add_argument("input", help="IR module to instrument")
    parser.add_argument(
        "definitions",
        nargs="?",
        help="IR module defining the instrumentation functions "
        "(default: the config's 'file' field)",
    )
    parser.add_argument(
        "output",
        nargs="?",
        help=f"output path (default: {DEFAULT_OUTPUT})",
    )
    parser.add_argument(
        "--output",
        dest="output_flag",
        metavar="PATH",
        help="output path; overrides the positional output",
    )
    parser.add_argument(
        "--report",
        metavar="PATH",
        help="also write a JSON instrumentation report",
    )
    parser.add_argument(
        "--no-plugins",
        action="store_true",
        help="answer every plugin query with 'maybe' (conservative limit)",
    )
    return parser


def _read_file(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _parse_ir_file(path: str) -> Module:
    try:
        text = _read_file(path)
    except OSError as exc:
        raise InstrError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return parse_ir(text)
    except IRParseError as exc:
        raise InstrError(f"{path}:{exc.line}:{exc.column}: {exc.message}") from exc


def _atomic_write(path: str, data: str) -> None:
    """Write via a temp file and rename, so failures never truncate `path`."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".instr-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def run_main(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    output_path = args.output_flag or args.output or DEFAULT_OUTPUT

    try:
        try:
            config_text = _read_file(args.config)
        except OSError as exc:
            raise InstrError(f"{args.config}: {exc.strerror or exc}") from exc
        cfg = parse_config(config_text)

        defs_path = args.definitions
        if defs_path is None:
            if cfg.definitions_file is None:
                raise InstrError(
                    f"{args.config}: no definitions given and the config has "
                    f"no 'file' field"
                )
            defs_path = os.path.join(
                os.path.dirname(os.path.abspath(args.config)), cfg.definitions_file
            )

        module = _parse_ir_file(args.input)
        defs = _parse_ir_file(defs_path)
    except (InstrError, JsonError, SchemaError, IRParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    for warning in validate_against_definitions(cfg, defs):
        print(f"warning: {warning}", file=sys.stderr)

    try:
        out, report = instrument_with_report(
            module, cfg, defs, no_plugins=args.no_plugins
        )
    except (EngineError, PluginFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except SchemaError as exc:  # plugin-load validation (unknown builtin, collisions)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    try:
        _atomic_write(output_path, print_ir(out))
        if args.report:
            _atomic_write(args.report, report.to_json())
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    return EXIT_OK


def main() -> None:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s: %(message)s")
    sys.exit(run_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
