"""A small instrumented JSON parser with two planted defects.

Every decision point records a branch id.  Defects:

* nesting deeper than ``MAX_DEPTH`` containers raises ``DepthError``;
* a number with more than ``MAX_DIGITS`` mantissa digits raises
  ``NumberFormatError``.

Anything not in the language yields ``SyntaxError``.
"""

from __future__ import annotations

from typing import Set

from .results import ExecutionResult

MAX_DEPTH = 20
MAX_DIGITS = 12

JSON_BRANCHES = (
    "input:empty",
    "input:whitespace",
    "input:trailing",
    "value:object",
    "value:array",
    "value:string",
    "value:number",
    "value:true",
    "value:false",
    "value:null",
    "value:invalid",
    "object:empty",
    "object:member",
    "object:next_member",
    "object:many_members",
    "object:duplicate_key",
    "object:bad_key",
    "object:missing_colon",
    "object:unterminated",
    "array:empty",
    "array:element",
    "array:next_element",
    "array:many_elements",
    "array:unterminated",
    "depth:3",
    "depth:6",
    "depth:10",
    "depth:15",
    "depth:exceeded",
    "string:empty",
    "string:char",
    "string:long",
    "string:escape",
    "string:escape_quote",
    "string:escape_backslash",
    "string:escape_slash",
    "string:escape_b",
    "string:escape_f",
    "string:escape_n",
    "string:escape_r",
    "string:escape_t",
    "string:escape_u",
    "string:bad_escape",
    "string:bad_unicode",
    "string:control_char",
    "string:unterminated",
    "number:negative",
    "number:zero",
    "number:integer",
    "number:long",
    "number:fraction",
    "number:exponent",
    "number:exponent_sign",
    "number:bad_fraction",
    "number:bad_exponent",
    "number:too_long",
    "literal:bad",
)

_BRANCH_SET = frozenset(JSON_BRANCHES)
_WS = " \t\r\n"
_ESCAPES = {'"': "quote", "\\": "backslash", "/": "slash", "b": "b", "f": "f", "n": "n", "r": "r", "t": "t"}
_HEX = frozenset("0123456789abcdefABCDEF")


class _Fail(Exception):
    def __init__(self, kind: str):
        self.kind = kind


class _Parser:
    def __init__(self, text: str):
        self.s = text
        self.i = 0
        self.depth = 0
        self.cov: Set[str] = set()

    def hit(self, branch: str) -> None:
        # every id must be listed in JSON_BRANCHES or coverage percentages drift
        assert branch in _BRANCH_SET, branch
        self.cov.add(branch)

    def peek(self) -> str:
        return self.s[self.i] if self.i < len(self.s) else ""

    def skip_ws(self) -> None:
        start = self.i
        while self.i < len(self.s) and self.s[self.i] in _WS:
            self.i += 1
        if self.i > start:
            self.hit("input:whitespace")

    def document(self) -> None:
        self.skip_ws()
        if self.i == len(self.s):
            self.hit("input:empty")
            raise _Fail("SyntaxError")
        self.value()
        self.skip_ws()
        if self.i != len(self.s):
            self.hit("input:trailing")
            raise _Fail("SyntaxError")

    def value(self) -> None:
        ch = self.peek()
        if ch == "{":
            self.hit("value:object")
            self.container(self.object_body)
        elif ch == "[":
            self.hit("value:array")
            self.container(self.array_body)
        elif ch == '"':
            self.hit("value:string")
            self.string()
        elif ch == "-" or ch.isdigit():
            self.hit("value:number")
            self.number()
        elif self.s.startswith("true", self.i):
            self.hit("value:true")
            self.i += 4
        elif self.s.startswith("false", self.i):
            self.hit("value:false")
            self.i += 5
        elif self.s.startswith("null", self.i):
            self.hit("value:null")
            self.i += 4
        else:
            self.hit("literal:bad" if ch.isalpha() else "value:invalid")
            raise _Fail("SyntaxError")

    def container(self, body) -> None:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.hit("depth:exceeded")
            raise _Fail("DepthError")
        for level in (15, 10, 6, 3):
            if self.depth >= level:
                self.hit(f"depth:{level}")
                break
        self.i += 1
        body()
        self.depth -= 1

    def object_body(self) -> None:
        self.skip_ws()
        if self.peek() == "}":
            self.hit("object:empty")
            self.i += 1
            return
        keys = set()
        count = 0
        while True:
            self.skip_ws()
            if self.peek() != '"':
                self.hit("object:bad_key")
                raise _Fail("SyntaxError")
            self.hit("object:member" if count == 0 else "object:next_member")
            key = self.string()
            if key in keys:
                self.hit("object:duplicate_key")
            keys.add(key)
            count += 1
            self.skip_ws()
            if self.peek() != ":":
                self.hit("object:missing_colon")
                raise _Fail("SyntaxError")
            self.i += 1
            self.skip_ws()
            self.value()
            self.skip_ws()
            ch = self.peek()
            if ch == ",":
                self.i += 1
                continue
            if ch == "}":
                self.i += 1
                if count > 5:
                    self.hit("object:many_members")
                return
            self.hit("object:unterminated")
            raise _Fail("SyntaxError")

    def array_body(self) -> None:
        self.skip_ws()
        if self.peek() == "]":
            self.hit("array:empty")
            self.i += 1
            return
        count = 0
        while True:
            self.skip_ws()
            self.hit("array:element" if count == 0 else "array:next_element")
            self.value()
            count += 1
            self.skip_ws()
            ch = self.peek()
            if ch == ",":
                self.i += 1
                continue
            if ch == "]":
                self.i += 1
                if count > 5:
                    self.hit("array:many_elements")
                return
            self.hit("array:unterminated")
            raise _Fail("SyntaxError")

    def string(self) -> str:
        self.i += 1
        out = []
        while True:
            if self.i >= len(self.s):
                self.hit("string:unterminated")
                raise _Fail("SyntaxError")
            ch = self.s[self.i]
            if ch == '"':
                self.i += 1
                break
            if ch == "\\":
                self.hit("string:escape")
                esc = self.s[self.i + 1 : self.i + 2]
                if esc in _ESCAPES:
                    self.hit("string:escape_" + _ESCAPES[esc])
                    out.append(esc)
                    self.i += 2
                elif esc == "u":
                    digits = self.s[self.i + 2 : self.i + 6]
                    if len(digits) != 4 or not set(digits) <= _HEX:
                        self.hit("string:bad_unicode")
                        raise _Fail("SyntaxError")
                    self.hit("string:escape_u")
                    out.append(chr(int(digits, 16)))
                    self.i += 6
                else:
                    self.hit("string:bad_escape")
                    raise _Fail("SyntaxError")
                continue
            if ord(ch) < 0x20:
                self.hit("string:control_char")
                raise _Fail("SyntaxError")
            out.append(ch)
            self.i += 1
        if not out:
            self.hit("string:empty")
        else:
            self.hit("string:char")
            if len(out) > 16:
                self.hit("string:long")
        return "".join(out)

    def digits(self) -> int:
        start = self.i
        while self.i < len(self.s) and self.s[self.i].isdigit():
            self.i += 1
        return self.i - start

    def number(self) -> None:
        if self.peek() == "-":
            self.hit("number:negative")
            self.i += 1
        if self.peek() == "0":
            self.hit("number:zero")
            self.i += 1
            mantissa = 1
        else:
            mantissa = self.digits()
            if mantissa == 0:
                self.hit("value:invalid")
                raise _Fail("SyntaxError")
            self.hit("number:integer")
        if self.peek() == ".":
            self.i += 1
            frac = self.digits()
            if frac == 0:
                self.hit("number:bad_fraction")
                raise _Fail("SyntaxError")
            self.hit("number:fraction")
            mantissa += frac
        if self.peek() in ("e", "E"):
            self.i += 1
            if self.peek() in ("+", "-"):
                self.hit("number:exponent_sign")
                self.i += 1
            if self.digits() == 0:
                self.hit("number:bad_exponent")
                raise _Fail("SyntaxError")
            self.hit("number:exponent")
        if mantissa > 6:
            self.hit("number:long")
        if mantissa > MAX_DIGITS:
            self.hit("number:too_long")
            raise _Fail("NumberFormatError")


def builtin_json_target(data: bytes) -> ExecutionResult:
    """Parse ``data`` as JSON and report the outcome plus covered branches."""
    try:
        text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    except UnicodeDecodeError:
        return ExecutionResult.exception("SyntaxError", frozenset())
    parser = _Parser(text)
    try:
        parser.document()
    except _Fail as fail:
        return ExecutionResult.exception(fail.kind, frozenset(parser.cov))
    except RecursionError:
        return ExecutionResult.exception("RecursionError", frozenset(parser.cov))
    return ExecutionResult.ok(frozenset(parser.cov))


def builtin_noop_target(data: bytes) -> ExecutionResult:
    """Accepts everything; useful when only structure should drive fitness."""
    return ExecutionResult.ok(frozenset())
