"""Static-analysis plugins answering three-valued queries.

Two builtin plugins ship with the engine: an integer range analysis
(`range`: canBeZero, canOverflow) and an inclusion-based points-to analysis
(`points-to`: isNull, isValidPointer, isRemembered). External plugins run
as subprocesses speaking newline-delimited JSON (docs/plugin-protocol.md).
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import SchemaError
from ..ir import Module, Value

TRUE = "true"
FALSE = "false"
MAYBE = "maybe"
UNSUPPORTED = "unsupported"


@dataclass(frozen=True)
class Query:
    """A named question with program values (or byte sizes) as arguments."""

    name: str
    args: tuple[Value | int | str, ...] = ()


@dataclass(frozen=True)
class RememberedValue:
    """An auxiliary-list entry: the value plus the function it was matched in."""

    function: str | None
    value: Value | int


@dataclass
class QueryContext:
    """Where a query is being asked from, plus the engine's auxiliary list."""

    function: str | None = None
    block: str | None = None
    remembered: tuple[RememberedValue, ...] = ()


class AnalysisPlugin:
    """Interface every plugin implements.

    `answer` is only called for queries the plugin `supports`; answers are
    conventionally "true", "false", or "maybe".
    """

    name = "plugin"

    def supports(self, query_name: str) -> bool:
        raise NotImplementedError

    def answer(self, query: Query, ctx: QueryContext) -> str:
        raise NotImplementedError

    def close(self) -> None:
        """Release external resources; idempotent."""


class AlwaysMaybePlugin(AnalysisPlugin):
    """Stands in for all plugins when analyses are disabled: every query
    is supported and answered "maybe", the conservative limit."""

    name = "always-maybe"

    def supports(self, query_name: str) -> bool:
        return True

    def answer(self, query: Query, ctx: QueryContext) -> str:
        return MAYBE


def load_plugins(specs, module: Module, flags=()) -> list[AnalysisPlugin]:
    """Instantiate plugins for a module and check flag/query name collisions.

    Builtin analyses are computed eagerly on the module as it is now; callers
    load plugins before mutating it.
    """
    from .external import ExternalPlugin
    from .intervals import RangeAnalysisPlugin
    from .points_to import PointsToAnalysisPlugin

    builtins = {
        "range": RangeAnalysisPlugin,
        "points-to": PointsToAnalysisPlugin,
    }
    plugins: list[AnalysisPlugin] = []
    try:
        for i, spec in enumerate(specs):
            if spec.kind == "external":
                plugins.append(ExternalPlugin(spec.name))
                continue
            factory = builtins.get(spec.name)
            if factory is None:
                raise SchemaError(
                    f"analyses[{i}]",
                    f"unknown builtin plugin '{spec.name}' "
                    f"(available: {', '.join(sorted(builtins))})",
                )
            plugins.append(factory(module))
        for flag in flags:
            for plugin in plugins:
                if plugin.supports(flag):
                    raise SchemaError(
                        "flags",
                        f"flag '{flag}' collides with a query of the "
                        f"'{plugin.name}' plugin",
                    )
    except Exception:
        for p in plugins:
            p.close()
        raise
    return plugins


__all__ = [
    "AlwaysMaybePlugin",
    "AnalysisPlugin",
    "FALSE",
    "load_plugins",
    "MAYBE",
    "Query",
    "QueryContext",
    "RememberedValue",
    "TRUE",
    "UNSUPPORTED",
]
