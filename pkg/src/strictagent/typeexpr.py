"""Semantic type expressions for output fields.

Grammar (names are case-insensitive)::

    expr   := scalar | "List[" expr "]" | "Array[" expr "]"
            | "Dict[" key ("," key)* "]" | "Enum[" lit ("," lit)* "]"
    scalar := int | float | str | bool | code | dict | list | array | any

``list`` and ``array`` without brackets mean a list of anything.
"""

from __future__ import annotations

import ast
import math
import warnings
from dataclasses import dataclass, field
from typing import Any as AnyValue

INT = "int"
FLOAT = "float"
STR = "str"
BOOL = "bool"
CODE = "code"
LIST = "list"
DICT = "dict"
DICT_KEYS = "dict_keys"
ENUM = "enum"
ANY = "any"


class TypeExprError(ValueError):
    """Malformed type expression text."""

    def __init__(self, message: str, text: str, position: int):
        super().__init__(f"{message} at position {position} in {text!r}")
        self.text = text
        self.position = position


class UnknownTypeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TypeExpr:
    kind: str
    inner: TypeExpr | None = None
    keys: tuple[str, ...] = ()
    values: tuple = ()
    # "array" vs "list" spelling; ignored by equality
    spelling: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind == LIST and self.inner is None:
            raise ValueError("list type needs an element type")
        if self.kind == DICT_KEYS and not self.keys:
            raise ValueError("Dict[...] needs at least one key")
        if self.kind == ENUM and not self.values:
            raise ValueError("Enum[...] needs at least one value")

    def __str__(self) -> str:
        return render_type_expr(self)


Int = TypeExpr(INT)
Float = TypeExpr(FLOAT)
Str = TypeExpr(STR)
Bool = TypeExpr(BOOL)
Code = TypeExpr(CODE)
DictAny = TypeExpr(DICT)
Any = TypeExpr(ANY)


def ListOf(inner: TypeExpr) -> TypeExpr:
    return TypeExpr(LIST, inner=inner, spelling="List")


def ArrayOf(inner: TypeExpr) -> TypeExpr:
    return TypeExpr(LIST, inner=inner, spelling="Array")


def DictWithKeys(keys) -> TypeExpr:
    return TypeExpr(DICT_KEYS, keys=tuple(keys))


def EnumOf(values) -> TypeExpr:
    return TypeExpr(ENUM, values=tuple(values))


_SCALARS = {
    "int": Int,
    "integer": Int,
    "float": Float,
    "str": Str,
    "string": Str,
    "bool": Bool,
    "boolean": Bool,
    "code": Code,
    "dict": DictAny,
    "any": Any,
}


def render_type_expr(t: TypeExpr) -> str:
    if t.kind == LIST:
        if t.inner == Any and t.spelling != "List" and t.spelling != "Array":
            return "list"
        return f"{t.spelling or 'List'}[{render_type_expr(t.inner)}]"
    if t.kind == DICT_KEYS:
        return "Dict[" + ", ".join(repr(k) for k in t.keys) + "]"
    if t.kind == ENUM:
        return "Enum[" + ", ".join(repr(v) for v in t.values) + "]"
    return t.kind


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            found = self.text[self.pos] if self.pos < len(self.text) else "end of text"
            raise TypeExprError(f"expected {ch!r}, found {found!r}", self.text, self.pos)
        self.pos += 1

    def word(self) -> str:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
            self.pos += 1
        return self.text[start:self.pos]

    def literal(self) -> str:
        """Raw text of one literal, up to the next top-level ',' or ']'."""
        self.skip_ws()
        start = self.pos
        quote = None
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if quote:
                if ch == "\\":
                    self.pos += 1
                elif ch == quote:
                    quote = None
            elif ch in "'\"":
                quote = ch
            elif ch in ",]":
                break
            elif ch == "[":
                raise TypeExprError("unexpected '['", self.text, self.pos)
            self.pos += 1
        if quote:
            raise TypeExprError("unterminated quote", self.text, start)
        raw = self.text[start:self.pos].strip()
        if not raw:
            raise TypeExprError("empty item", self.text, start)
        return raw


def _literal_value(raw: str):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def _parse(r: _Reader) -> TypeExpr:
    start = r.pos
    name = r.word()
    if not name:
        raise TypeExprError("expected a type name", r.text, r.pos)
    lname = name.lower()
    if r.peek() == "[":
        r.expect("[")
        if lname in ("list", "array"):
            inner = _parse(r)
            r.expect("]")
            return ListOf(inner) if lname == "list" else ArrayOf(inner)
        if lname in ("dict", "enum"):
            items = [r.literal()]
            while r.peek() == ",":
                r.pos += 1
                items.append(r.literal())
            r.expect("]")
            if lname == "dict":
                return DictWithKeys(str(_literal_value(i)) for i in items)
            return EnumOf(_literal_value(i) for i in items)
        raise TypeExprError(f"type {name!r} takes no brackets", r.text, start)
    if lname == "list":
        return TypeExpr(LIST, inner=Any, spelling="")
    if lname == "array":
        return TypeExpr(LIST, inner=Any, spelling="")
    if lname in _SCALARS:
        return _SCALARS[lname]
    warnings.warn(f"unrecognised type {name!r}, treating as any", UnknownTypeWarning, stacklevel=3)
    return Any


def _check_brackets(text: str):
    depth = 0
    quote = None
    for i, ch in enumerate(text):
        if quote:
            if ch == quote:
                quote = None
            continue
        if ch in "'\"" and depth > 0:
            quote = ch
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth < 0:
                raise TypeExprError("unbalanced ']'", text, i)
    if depth:
        raise TypeExprError("unclosed '['", text, len(text))


def parse_type_expr(text: str) -> TypeExpr:
    """Parse ``text`` as a whole type expression.

    Unknown names give ``Any`` and an ``UnknownTypeWarning``; broken bracket
    nesting raises ``TypeExprError`` with the offending position.
    """
    if not text or not text.strip():
        raise TypeExprError("empty type expression", text, 0)
    _check_brackets(text)
    r = _Reader(text)
    result = _parse(r)
    r.skip_ws()
    if r.pos != len(text):
        raise TypeExprError("unexpected trailing text", text, r.pos)
    return result


def parse_type_prefix(text: str) -> TypeExpr | None:
    """Parse the leading type expression of ``text``, ignoring what follows.

    Returns None when no known type is present.
    """
    r = _Reader(text)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", UnknownTypeWarning)
            return _parse(r)
    except (TypeExprError, UnknownTypeWarning, ValueError):
        return None


def conforms(value: AnyValue, t: TypeExpr) -> bool:
    """True iff ``value`` is a valid coerced value of type ``t``."""
    kind = t.kind
    if kind == ANY:
        return True
    if kind == INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == FLOAT:
        return isinstance(value, float) and not math.isnan(value)
    if kind in (STR, CODE):
        return isinstance(value, str)
    if kind == BOOL:
        return isinstance(value, bool)
    if kind == LIST:
        return isinstance(value, list) and all(conforms(v, t.inner) for v in value)
    if kind == DICT:
        return isinstance(value, dict)
    if kind == DICT_KEYS:
        return isinstance(value, dict) and all(k in value for k in t.keys)
    if kind == ENUM:
        return any(value == v and type(value) is type(v) for v in t.values)
    raise ValueError(f"unknown type kind {kind!r}")
