"""Delimiter-keyed structured output: prompt rendering, extraction, coercion
and the error-feedback retry loop.

Keys are wrapped in a delimiter (``###Answer###``) so they can be located in
the raw LLM text even when the surrounding JSON is broken, e.g. unclosed
quotes or brackets inside a value.
"""

from __future__ import annotations

import ast
import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any as AnyValue, Iterable, Mapping

from . import typeexpr as T
from .typeexpr import TypeExpr, parse_type_expr, parse_type_prefix

logger = logging.getLogger(__name__)

BOOL_LEXEMES = {
    "true": True, "True": True, "TRUE": True, "yes": True,
    "false": False, "False": False, "FALSE": False, "no": False,
}

_INT_RE = re.compile(r"[+-]?\d+")
_NUM_RE = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_FENCE_RE = re.compile(r"^```[\w+.-]*[ \t]*\n(.*?)\n?[ \t]*```$", re.DOTALL)
_TYPE_MARKER = re.compile(r"type\s*:", re.IGNORECASE)


class ParseError(Exception):
    """Base class for extraction and coercion failures."""


class SchemaError(ValueError):
    pass


class MissingField(ParseError):
    def __init__(self, names: list[str]):
        self.names = list(names)
        super().__init__(
            "Missing output field(s): " + ", ".join(repr(n) for n in self.names)
            + ". Every key must be enclosed by the delimiter on both sides."
        )


class TypeMismatch(ParseError):
    def __init__(self, expected: TypeExpr, got: AnyValue, raw: str, where: str = ""):
        self.expected = expected
        self.got = got
        self.raw = raw
        self.where = where
        loc = f" ({where})" if where else ""
        super().__init__(f"Expected {expected}{loc} but got {got!r}")


class MissingDictKey(TypeMismatch):
    def __init__(self, keys: list[str], value: dict, expected: TypeExpr):
        self.keys = list(keys)
        ParseError.__init__(
            self, "Dictionary is missing required key(s): " + ", ".join(repr(k) for k in self.keys)
        )
        self.expected = expected
        self.got = value
        self.raw = ""
        self.where = ""


class ExhaustedRetries(ParseError):
    def __init__(self, attempts: list[Attempt]):
        self.attempts = list(attempts)
        last = self.attempts[-1].errors if self.attempts else []
        super().__init__(
            f"No valid output after {len(self.attempts)} attempt(s); last errors: " + "; ".join(last)
        )

    @property
    def calls_made(self) -> int:
        return len(self.attempts)


@dataclass(frozen=True)
class FieldSpec:
    description: str
    type: TypeExpr = T.Any

    def __post_init__(self):
        if not self.description:
            raise SchemaError("field description must be non-empty")

    @classmethod
    def from_description(cls, description: str) -> FieldSpec:
        """Take the type from the last ``type:`` marker, or from the whole
        description when it is itself a type name such as ``"int"``."""
        markers = list(_TYPE_MARKER.finditer(description))
        if markers:
            t = parse_type_prefix(description[markers[-1].end():].strip())
            return cls(description, t if t is not None else T.Any)
        text = description.strip()
        try:
            t = parse_type_prefix(text)
            if t is not None and parse_type_expr(text) == t:
                return cls(description, t)
        except T.TypeExprError:
            pass
        return cls(description, T.Any)


class OutputSchema:
    """Ordered mapping of field name to ``FieldSpec``."""

    def __init__(self, fields: Iterable[tuple[str, FieldSpec]] = ()):
        self._fields: dict[str, FieldSpec] = {}
        for name, spec in fields:
            if name in self._fields:
                raise SchemaError(f"duplicate field name {name!r}")
            if not name:
                raise SchemaError("field names must be non-empty")
            self._fields[name] = spec

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, AnyValue]) -> OutputSchema:
        """Build from ``{name: description}``; values may also be a FieldSpec,
        a TypeExpr or a ``(description, TypeExpr)`` pair."""
        items = []
        for name, v in mapping.items():
            if isinstance(v, FieldSpec):
                spec = v
            elif isinstance(v, TypeExpr):
                spec = FieldSpec(str(v), v)
            elif isinstance(v, tuple):
                spec = FieldSpec(v[0], v[1])
            else:
                spec = FieldSpec.from_description(str(v))
            items.append((name, spec))
        return cls(items)

    def __iter__(self):
        return iter(self._fields.items())

    def __len__(self):
        return len(self._fields)

    def __getitem__(self, name: str) -> FieldSpec:
        return self._fields[name]

    def __contains__(self, name) -> bool:
        return name in self._fields

    def __eq__(self, other):
        return isinstance(other, OutputSchema) and list(self) == list(other)

    def __repr__(self):
        return f"OutputSchema({list(self)!r})"

    @property
    def names(self) -> list[str]:
        return list(self._fields)


def as_schema(schema) -> OutputSchema:
    return schema if isinstance(schema, OutputSchema) else OutputSchema.from_mapping(schema)


@dataclass(frozen=True)
class ParseConfig:
    delimiter: str = "###"
    num_tries: int = 3
    verbose: bool = False

    def __post_init__(self):
        if not self.delimiter:
            raise SchemaError("delimiter must be non-empty")
        if self.num_tries < 1:
            raise SchemaError("num_tries must be positive")


def validate_schema(schema: OutputSchema, config: ParseConfig):
    if not len(schema):
        raise SchemaError("schema must have at least one field")
    delim_chars = set(config.delimiter)
    for name, spec in schema:
        if delim_chars & set(name):
            raise SchemaError(f"field name {name!r} shares characters with delimiter {config.delimiter!r}")
        if config.delimiter in spec.description:
            raise SchemaError(f"description of {name!r} contains the delimiter {config.delimiter!r}")


def _marker(name: str, config: ParseConfig) -> str:
    return f"{config.delimiter}{name}{config.delimiter}"


def _placeholder(spec: FieldSpec) -> str:
    desc = spec.description
    if spec.type != T.Any and FieldSpec.from_description(desc).type != spec.type:
        desc = f"{desc}, type: {spec.type}"
    return f"<{desc}>"


def render_output_instructions(schema, config: ParseConfig = ParseConfig()) -> str:
    schema = as_schema(schema)
    validate_schema(schema, config)
    d = config.delimiter
    body = ", ".join(f"'{_marker(n, config)}': {_placeholder(s)}" for n, s in schema)
    lines = [
        f"Output in the following json string format, with every key enclosed by {d}:",
        "{" + body + "}",
        "Update the text enclosed in <> with your answer and remove the <>.",
        "Begin your response with { and end it with }.",
    ]
    typed = [(n, s.type) for n, s in schema if s.type != T.Any]
    if typed:
        lines.append("Each value must match its type: " + ", ".join(f"{n} is {t}" for n, t in typed) + ".")
    lines.append("Keys that must be present: " + ", ".join(_marker(n, config) for n in schema.names))
    return "\n".join(lines)


# ---------------------------------------------------------------- rendering


def _render_value(value, t: TypeExpr) -> str:
    if t.kind == T.CODE:
        return f"```\n{value}\n```"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return f"'{value}'"
    return json.dumps(value, ensure_ascii=False)


def format_response(values: Mapping[str, AnyValue], schema, config: ParseConfig = ParseConfig()) -> str:
    """Render ``values`` as a well-formed response in the delimiter format."""
    schema = as_schema(schema)
    parts = [f"'{_marker(n, config)}': {_render_value(values[n], s.type)}" for n, s in schema if n in values]
    return "{" + ",\n".join(parts) + "}"


# --------------------------------------------------------------- extraction


def _unwrap(v: str) -> str:
    v = v.strip()
    if len(v) >= 2 and v[0] == "<" and v[-1] == ">":
        v = v[1:-1].strip()
    if len(v) >= 2 and v[0] in "'\"" and v[-1] in "'\"":
        # mismatched pairs ('x") count as quotes too
        v = v[1:-1]
        if len(v) >= 2 and v[0] == "<" and v[-1] == ">":
            v = v[1:-1]
    elif v[:1] in ("'", '"'):
        # opening quote that was never closed
        v = v[1:]
    return v


def _clean_tail(v: str) -> str:
    v = v.rstrip()
    if v.endswith(","):
        v = v[:-1].rstrip()
    return v


_LINE_CUT = re.compile(r",[ \t]*\r?\n")


def _select_value(region: str, t: TypeExpr) -> str:
    """Choose the value text in ``region``, dropping stray lines after it."""
    full = _clean_tail(region)
    cuts = [full[:m.start()] for m in _LINE_CUT.finditer(full)]
    if t.kind in (T.STR, T.CODE, T.ANY):
        head = full.lstrip()[:1]
        if head in ("'", '"') and not full.endswith(head):
            for c in cuts:
                c = c.strip()
                if len(c) >= 2 and c.endswith(head):
                    return _unwrap(c)
        return _unwrap(full)
    for candidate in [full, *cuts]:
        if _coerces(_unwrap(candidate), t):
            return _unwrap(candidate)
    return _unwrap(full)


def _coerces(text: str, t: TypeExpr) -> bool:
    try:
        coerce(text, t)
    except ParseError:
        return False
    return True


def extract_fields(raw: str, schema, config: ParseConfig = ParseConfig()) -> dict[str, str]:
    """Return the raw value text for every schema field.

    A value runs from its key marker to the next known key marker (or the end
    of the text). Raises ``MissingField`` naming every absent key.
    """
    schema = as_schema(schema)
    names = sorted(schema.names, key=len, reverse=True)
    pattern = re.compile(
        "['\"]?(?:" + "|".join(re.escape(_marker(n, config)) for n in names) + ")['\"]?"
    )
    d = config.delimiter
    matches = []
    for m in pattern.finditer(raw):
        token = m.group(0).strip("'\"")
        matches.append((token[len(d):-len(d)], m))
    found: dict[str, str] = {}
    first = matches[0][1].start() if matches else 0
    braced = "{" in raw[:first]
    for i, (name, m) in enumerate(matches):
        if name in found:
            continue
        end = matches[i + 1][1].start() if i + 1 < len(matches) else len(raw)
        region = raw[m.end():end].lstrip()
        if region.startswith(":"):
            region = region[1:]
        t = schema[name].type
        if i + 1 == len(matches) and braced and "}" in region:
            # drop the closing brace of the object and any chatter after it
            cut = region[: region.rfind("}")]
            value = _select_value(cut, t)
            if t.kind not in (T.STR, T.CODE, T.ANY) and not _coerces(value, t):
                value = _select_value(region, t)
            found[name] = value
        else:
            found[name] = _select_value(region, t)
    missing = [n for n in schema.names if n not in found]
    if missing:
        raise MissingField(missing)
    return {n: found[n] for n in schema.names}


# ----------------------------------------------------------------- coercion


def _parse_structured(text: str, t: TypeExpr):
    try:
        return json.loads(text)
    except (ValueError, RecursionError):
        pass
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError):
        pass
    repaired = re.sub(r",\s*([\]}])", r"\1", text.replace("'", '"'))
    try:
        return json.loads(repaired)
    except (ValueError, RecursionError) as exc:
        bare = _bare_list(text)
        if bare is not None and t.kind == T.LIST:
            return bare
        raise TypeMismatch(t, text, text, f"not valid {t}: {exc}") from None


def _bare_list(text: str) -> list[str] | None:
    """``[a, b c, 'd']`` with unquoted items; flat lists only."""
    inner = text.strip()
    if not (inner.startswith("[") and inner.endswith("]")):
        return None
    inner = inner[1:-1]
    if any(ch in inner for ch in "[]{}"):
        return None
    if not inner.strip():
        return []
    return [_unwrap(item) for item in inner.split(",") if item.strip()]


def _coerce_text(raw: str, t: TypeExpr, where: str):
    text = raw.strip()
    kind = t.kind
    if kind == T.STR:
        return raw
    if kind == T.CODE:
        m = _FENCE_RE.match(text)
        return m.group(1) if m else raw
    if kind == T.INT:
        if _INT_RE.fullmatch(text):
            return int(text)
        if _NUM_RE.fullmatch(text):
            f = float(text)
            if math.isfinite(f) and f.is_integer():
                return int(f)
        raise TypeMismatch(t, raw, raw, where)
    if kind == T.FLOAT:
        if _NUM_RE.fullmatch(text):
            return float(text)
        raise TypeMismatch(t, raw, raw, where)
    if kind == T.BOOL:
        if text in BOOL_LEXEMES:
            return BOOL_LEXEMES[text]
        raise TypeMismatch(t, raw, raw, where)
    if kind == T.ENUM:
        for v in t.values:
            if text == str(v):
                return v
        for v in t.values:
            if text.casefold() == str(v).casefold():
                return v
        raise TypeMismatch(t, raw, raw, where)
    if kind in (T.LIST, T.DICT, T.DICT_KEYS):
        return _coerce_value(_parse_structured(text, t), t, raw, where)
    if kind == T.ANY:
        if text[:1] in "[{":
            try:
                return _parse_structured(text, t)
            except TypeMismatch:
                return raw
        return raw
    raise ValueError(f"unknown type kind {kind!r}")


def _coerce_value(value, t: TypeExpr, raw: str, where: str):
    if isinstance(value, str):
        return _coerce_text(value, t, where)
    kind = t.kind
    if kind == T.ANY:
        return value
    if kind == T.INT and isinstance(value, (int, float)) and not isinstance(value, bool):
        if isinstance(value, int):
            return value
        if math.isfinite(value) and value.is_integer():
            return int(value)
    elif kind == T.FLOAT and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    elif kind == T.BOOL and isinstance(value, bool):
        return value
    elif kind in (T.STR, T.CODE) and isinstance(value, (int, float)):
        return str(value)
    elif kind == T.ENUM:
        for v in t.values:
            if value == v and type(value) is type(v):
                return v
    elif kind == T.LIST and isinstance(value, (list, tuple)):
        out = []
        for i, item in enumerate(value):
            out.append(_coerce_value(item, t.inner, raw, f"{where + ', ' if where else ''}element {i}"))
        return out
    elif kind == T.DICT and isinstance(value, dict):
        return value
    elif kind == T.DICT_KEYS and isinstance(value, dict):
        check_dict_keys(value, t)
        return value
    raise TypeMismatch(t, value, raw, where)


def coerce(raw: str, t: TypeExpr):
    """Convert extracted value text to a value of type ``t``.

    Raises ``TypeMismatch``; its message is what gets fed back to the LLM.
    """
    return _coerce_text(raw, t, "")


def check_dict_keys(value: dict, t: TypeExpr) -> None:
    missing = [k for k in t.keys if k not in value]
    if missing:
        raise MissingDictKey(missing, value, t)


# --------------------------------------------------------------- retry loop


@dataclass
class Attempt:
    raw_response: str
    errors: list[str] = field(default_factory=list)


@dataclass
class ParseOutcome:
    result: dict[str, AnyValue]
    attempts: list[Attempt]

    @property
    def calls_made(self) -> int:
        return len(self.attempts)


def parse_response(raw: str, schema, config: ParseConfig = ParseConfig()) -> tuple[dict, list[str]]:
    """Extract and coerce every field; return ``(values, errors)``."""
    schema = as_schema(schema)
    try:
        texts = extract_fields(raw, schema, config)
    except MissingField as exc:
        return {}, [str(exc)]
    values, errors = {}, []
    for name, spec in schema:
        try:
            values[name] = coerce(texts[name], spec.type)
        except ParseError as exc:
            errors.append(f"Field {name!r}: {exc}")
    return values, errors


def _retry_prompt(user_prompt: str, attempt: Attempt) -> str:
    return (
        f"{user_prompt}\n\n"
        f"Your previous response was:\n{attempt.raw_response}\n\n"
        f"Error message: {'; '.join(attempt.errors)}\n"
        "Fix the error and output the json again."
    )


def strict_json(system_prompt: str, user_prompt: str, schema, provider, config: ParseConfig = ParseConfig()) -> ParseOutcome:
    """Query ``provider`` until its response parses against ``schema``.

    Each failed attempt's errors are appended to the next user prompt. Stops
    after ``config.num_tries`` calls with ``ExhaustedRetries``.
    """
    from .provider import as_provider

    schema = as_schema(schema)
    provider = as_provider(provider)
    system = f"{system_prompt}\n\n{render_output_instructions(schema, config)}" if system_prompt else render_output_instructions(schema, config)
    attempts: list[Attempt] = []
    user = user_prompt
    for _ in range(config.num_tries):
        if config.verbose:
            print(f"System prompt: {system}\n\nUser prompt: {user}\n")
        raw = provider.complete(system, user)
        if config.verbose:
            print(f"GPT response: {raw}\n")
        values, errors = parse_response(raw, schema, config)
        attempt = Attempt(raw, errors)
        attempts.append(attempt)
        if not errors:
            return ParseOutcome(values, attempts)
        logger.debug("strict_json attempt %d failed: %s", len(attempts), errors)
        user = _retry_prompt(user_prompt, attempt)
    raise ExhaustedRetries(attempts)


def conforms_or_convert(value, t: TypeExpr) -> tuple[bool, AnyValue]:
    """Check an already-typed value, allowing int -> float widening."""
    if T.conforms(value, t):
        return True, value
    if t.kind == T.FLOAT and isinstance(value, int) and not isinstance(value, bool):
        return True, float(value)
    return False, value
