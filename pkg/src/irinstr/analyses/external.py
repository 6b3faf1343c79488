"""External analysis plugins: one subprocess speaking line-delimited JSON.

On startup the plugin prints a handshake line `{"capabilities": [...]}`.
Each request is one line `{"query": name, "args": [...]}`, answered by one
line `{"answer": "..."}`. The full wire format, including the value
encoding, is documented in docs/plugin-protocol.md.
"""

from __future__ import annotations

import json
import os
import queue
import shlex
import subprocess
import threading

from ..errors import PluginFailure
from ..ir import (
    FunctionRef,
    GlobalRef,
    IntConst,
    NullConst,
    Register,
    type_text,
    Value,
)
from . import AnalysisPlugin, Query, QueryContext

DEFAULT_TIMEOUT_MS = 10_000
TIMEOUT_ENV_VAR = "INSTR_PLUGIN_TIMEOUT_MS"


def encode_value(v: Value | int | str) -> object:
    """JSON encoding of a query argument (see docs/plugin-protocol.md)."""
    if isinstance(v, int):
        return v
    if isinstance(v, str):
        return {"kind": "text", "value": v}
    if isinstance(v, IntConst):
        return {"kind": "const", "type": type_text(v.type), "value": v.value}
    if isinstance(v, Register):
        return {"kind": "register", "type": type_text(v.type), "name": v.name}
    if isinstance(v, NullConst):
        return {"kind": "null"}
    if isinstance(v, GlobalRef):
        return {"kind": "global", "name": v.name}
    if isinstance(v, FunctionRef):
        return {"kind": "function", "name": v.name}
    raise TypeError(f"cannot encode {v!r}")


def _timeout_seconds() -> float:
    raw = os.environ.get(TIMEOUT_ENV_VAR, "")
    try:
        ms = int(raw) if raw else DEFAULT_TIMEOUT_MS
    except ValueError:
        ms = DEFAULT_TIMEOUT_MS
    return ms / 1000.0


class ExternalPlugin(AnalysisPlugin):
    """Client for one plugin process; requests are strictly serialized."""

    def __init__(self, command: str, timeout: float | None = None):
        self.name = command
        self._timeout = _timeout_seconds() if timeout is None else timeout
        argv = shlex.split(command)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise PluginFailure(f"cannot start plugin '{command}': {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        handshake = self._read_json("handshake")
        caps = handshake.get("capabilities")
        if not isinstance(caps, list) or not all(isinstance(c, str) for c in caps):
            self.close()
            raise PluginFailure(
                f"plugin '{command}' sent a malformed handshake: {handshake!r}"
            )
        self._capabilities = frozenset(caps)

    def _read_loop(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF marker

    def _read_json(self, what: str) -> dict:
        try:
            line = self._lines.get(timeout=self._timeout)
        except queue.Empty:
            self.close()
            raise PluginFailure(
                f"plugin '{self.name}' timed out after {self._timeout:.1f}s "
                f"waiting for {what}"
            ) from None
        if line is None:
            code = self._proc.poll()
            self.close()
            raise PluginFailure(
                f"plugin '{self.name}' exited (code {code}) before sending {what}"
            )
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            self.close()
            raise PluginFailure(
                f"plugin '{self.name}' sent invalid JSON for {what}: {line!r}"
            ) from exc
        if not isinstance(msg, dict):
            self.close()
            raise PluginFailure(
                f"plugin '{self.name}' sent a non-object {what}: {line!r}"
            )
        return msg

    def supports(self, query_name: str) -> bool:
        return query_name in self._capabilities

    def answer(self, query: Query, ctx: QueryContext) -> str:
        if self._proc.poll() is not None:
            raise PluginFailure(
                f"plugin '{self.name}' exited (code {self._proc.returncode})"
            )
        request = {
            "query": query.name,
            "args": [encode_value(a) for a in query.args],
        }
        try:
            assert self._proc.stdin is not None
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.close()
            raise PluginFailure(f"plugin '{self.name}' closed its input") from exc
        response = self._read_json(f"a response to {query.name}")
        answer = response.get("answer")
        if not isinstance(answer, str):
            self.close()
            raise PluginFailure(
                f"plugin '{self.name}' sent a response without an 'answer' "
                f"string: {response!r}"
            )
        return answer

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        if self._proc.stdin is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
