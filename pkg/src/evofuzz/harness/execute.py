"""Running a target on one input.

A target is either an in-process function (``builtin:<name>``) or an
external command (``cmd:<template>``) whose ``{}`` placeholder is replaced by
the path of a temporary file holding the input.  For external commands the
combined stdout/stderr is scanned by an ordered list of classifier patterns;
the first match names the exception type.
"""

from __future__ import annotations

import os
import re
import shlex
import signal
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

from .jsontarget import JSON_BRANCHES, builtin_json_target, builtin_noop_target
from .results import ExecutionResult

DEFAULT_TIMEOUT_MS = 3000
DEFAULT_CAPTURE_LIMIT = 64 * 1024

BuiltinFn = Callable[[bytes], ExecutionResult]

BUILTINS: Dict[str, Tuple[BuiltinFn, int]] = {
    "json": (builtin_json_target, len(JSON_BRANCHES)),
    "noop": (builtin_noop_target, 0),
}


class AdapterError(RuntimeError):
    """The harness could not run the target at all (as opposed to the target failing)."""


@dataclass(frozen=True)
class Classifier:
    pattern: str
    type_group: int = 1

    def __post_init__(self):
        re.compile(self.pattern)

    def match(self, output: str) -> Optional[str]:
        m = re.search(self.pattern, output)
        if m is None:
            return None
        try:
            found = m.group(self.type_group)
        except IndexError:
            found = None
        return found or m.group(0) or "exception"


@dataclass(frozen=True)
class TargetSpec:
    kind: str  # "builtin" | "command"
    name: str = ""
    command: Optional[str] = None
    function: Optional[BuiltinFn] = field(default=None, compare=False)
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    classifiers: Tuple[Classifier, ...] = ()
    nonzero_exit_is_exception: bool = True
    capture_limit: int = DEFAULT_CAPTURE_LIMIT
    branch_total: int = 0

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")
        if self.kind == "builtin" and self.function is None:
            raise ValueError("builtin target needs a function")
        if self.kind == "command" and not self.command:
            raise ValueError("command target needs a command template")
        if self.kind not in ("builtin", "command"):
            raise ValueError(f"unknown target kind {self.kind!r}")

    @classmethod
    def builtin(cls, function: BuiltinFn, name: str = "", branch_total: int = 0, **kw) -> "TargetSpec":
        return cls("builtin", name=name or getattr(function, "__name__", "builtin"), function=function,
                   branch_total=branch_total, **kw)

    @classmethod
    def external(cls, command: str, **kw) -> "TargetSpec":
        return cls("command", name=command, command=command, **kw)

    @property
    def has_coverage(self) -> bool:
        return self.kind == "builtin" and self.branch_total > 0


def parse_target(
    text: str,
    timeout_ms: int = DEFAULT_TIMEOUT_MS,
    classifiers: Sequence[Classifier] = (),
    nonzero_exit_is_exception: bool = True,
) -> TargetSpec:
    """``builtin:json`` / ``builtin:noop`` / ``cmd:<template>``."""
    kind, sep, rest = text.partition(":")
    if not sep or not rest:
        raise ValueError(f"target must look like builtin:<name> or cmd:<template>, got {text!r}")
    if kind == "builtin":
        if rest not in BUILTINS:
            raise ValueError(f"unknown builtin target {rest!r}; known: {', '.join(sorted(BUILTINS))}")
        fn, total = BUILTINS[rest]
        return TargetSpec.builtin(fn, name=rest, branch_total=total, timeout_ms=timeout_ms)
    if kind == "cmd":
        return TargetSpec.external(
            rest,
            timeout_ms=timeout_ms,
            classifiers=tuple(classifiers),
            nonzero_exit_is_exception=nonzero_exit_is_exception,
        )
    raise ValueError(f"unknown target kind {kind!r}")


def execute(target: TargetSpec, data: bytes) -> ExecutionResult:
    if target.kind == "builtin":
        return _execute_builtin(target, data)
    return _execute_command(target, data)


def _execute_builtin(target: TargetSpec, data: bytes) -> ExecutionResult:
    start = time.perf_counter()
    try:
        result = target.function(data)
    except Exception as exc:  # an escaping exception is still target behavior
        result = ExecutionResult.exception(type(exc).__name__)
    duration = (time.perf_counter() - start) * 1000.0
    return ExecutionResult(result.outcome, result.exception_type, duration, result.coverage)


class _BoundedReader(threading.Thread):
    """Drains a pipe, keeping only the first ``limit`` bytes."""

    def __init__(self, pipe, limit: int):
        super().__init__(daemon=True)
        self.pipe = pipe
        self.limit = limit
        self.chunks = []
        self.size = 0

    def run(self):
        while True:
            chunk = self.pipe.read(8192)
            if not chunk:
                break
            if self.size < self.limit:
                keep = chunk[: self.limit - self.size]
                self.chunks.append(keep)
                self.size += len(keep)
        self.pipe.close()

    @property
    def text(self) -> str:
        return b"".join(self.chunks).decode("utf-8", errors="replace")


def _kill(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


def _execute_command(target: TargetSpec, data: bytes) -> ExecutionResult:
    with tempfile.TemporaryDirectory(prefix="evofuzz-") as tmp:
        path = os.path.join(tmp, "input")
        with open(path, "wb") as fh:
            fh.write(data)
        argv = shlex.split(target.command)
        use_stdin = not any("{}" in tok for tok in argv)
        argv = [tok.replace("{}", path) for tok in argv]
        stdin = open(path, "rb") if use_stdin else None
        start = time.perf_counter()
        try:
            proc = subprocess.Popen(
                argv,
                stdin=stdin if stdin is not None else subprocess.DEVNULL,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                start_new_session=True,
            )
        except OSError as exc:
            raise AdapterError(f"cannot run {argv[0]!r}: {exc}") from exc
        finally:
            if stdin is not None:
                stdin.close()
        reader = _BoundedReader(proc.stdout, target.capture_limit)
        reader.start()
        try:
            code = proc.wait(timeout=target.timeout_ms / 1000.0)
        except subprocess.TimeoutExpired:
            _kill(proc)
            proc.wait()
            reader.join(1.0)
            return ExecutionResult.timeout((time.perf_counter() - start) * 1000.0)
        reader.join(5.0)
        duration = (time.perf_counter() - start) * 1000.0
    return classify(target, code, reader.text, duration)


def classify(target: TargetSpec, exit_code: int, output: str, duration_ms: float = 0.0) -> ExecutionResult:
    for classifier in target.classifiers:
        found = classifier.match(output)
        if found is not None:
            return ExecutionResult.exception(found, duration_ms=duration_ms)
    if exit_code != 0 and target.nonzero_exit_is_exception:
        return ExecutionResult.exception(f"exit:{exit_code}", duration_ms=duration_ms)
    return ExecutionResult.ok(duration_ms=duration_ms)
