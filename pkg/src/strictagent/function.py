"""Equipped functions: LLM-backed internal functions and native external ones.

Both render to the same four-line card (Name, Description, Input, Output),
which is what an agent sees when choosing what to do next.
"""

from __future__ import annotations

import inspect
import re
import typing
from dataclasses import dataclass, field
from typing import Any as AnyValue, Callable, Mapping

from . import typeexpr as T
from .parser import FieldSpec, OutputSchema, ParseConfig, as_schema, conforms_or_convert, strict_json
from .typeexpr import TypeExpr

SHARED_VARIABLES_PARAM = "shared_variables"

_PLACEHOLDER = re.compile(r"<\s*([A-Za-z_]\w*)\s*(?::\s*([^<>]*?))?\s*>")
_OPEN = re.compile(r"<\s*[A-Za-z_]\w*\s*(?::[^<>]*)?<")


class FunctionError(Exception):
    pass


class FunctionDefinitionError(FunctionError, ValueError):
    pass


class FunctionArgumentError(FunctionError, TypeError):
    pass


class FunctionCallError(FunctionError):
    def __init__(self, name: str, cause: BaseException):
        self.name = name
        self.cause = cause
        super().__init__(f"{name} failed: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class Param:
    name: str
    type: TypeExpr = T.Any
    description: str = ""


def parse_placeholders(text: str) -> list[Param]:
    """Variables written as ``<name>`` or ``<name: description>``."""
    if _OPEN.search(text):
        raise FunctionDefinitionError(f"nested angle brackets are not supported: {text!r}")
    params, seen = [], set()
    for m in _PLACEHOLDER.finditer(text):
        name = m.group(1)
        if name in seen:
            continue
        seen.add(name)
        params.append(Param(name, T.Any, (m.group(2) or "").strip()))
    return params


def _type_name(t: TypeExpr) -> str:
    return str(t)


class Function:
    """Common surface of everything an agent can call."""

    name: str
    description: str
    params: list[Param]
    is_compulsory: bool = False

    @property
    def output_fields(self) -> list[tuple[str, TypeExpr]]:
        raise NotImplementedError

    def card(self) -> str:
        return render_function_card(self)


def render_function_card(fn: Function) -> str:
    if fn.params:
        inputs = ", ".join(f"{p.name} ({_type_name(p.type)})" for p in fn.params)
    else:
        inputs = "None"
    if fn.output_fields:
        outputs = ", ".join(f"{n} ({_type_name(t)})" for n, t in fn.output_fields)
    else:
        outputs = "None"
    return f"Name: {fn.name}\nDescription: {fn.description}\nInput: {inputs}\nOutput: {outputs}"


class InternalFunction(Function):
    """A function whose body is an LLM call described in natural language."""

    def __init__(self, description: str, output_format, name: str | None = None,
                 examples: list[dict] | None = None, is_compulsory: bool = False):
        self.description = description
        self.output_schema: OutputSchema = as_schema(output_format)
        if not len(self.output_schema):
            raise FunctionDefinitionError("output_format must have at least one field")
        self.params = parse_placeholders(description)
        self.name = name or _default_name(description)
        self.examples = examples
        self.is_compulsory = is_compulsory

    @property
    def output_fields(self):
        return [(n, s.type) for n, s in self.output_schema]

    def substitute(self, args: Mapping[str, AnyValue]) -> str:
        wanted = {p.name for p in self.params}
        missing = wanted - set(args)
        extra = set(args) - wanted
        if missing:
            raise FunctionArgumentError(f"{self.name}: missing argument(s) {sorted(missing)}")
        if extra:
            raise FunctionArgumentError(f"{self.name}: unexpected argument(s) {sorted(extra)}")
        from .memory import display

        return _PLACEHOLDER.sub(lambda m: display(args[m.group(1)]), self.description)

    def __call__(self, provider, config: ParseConfig = ParseConfig(), **args):
        return invoke_internal(self, args, provider, config)

    def __repr__(self):
        return f"InternalFunction({self.name!r})"


def _default_name(description: str) -> str:
    words = re.findall(r"[A-Za-z]+", _PLACEHOLDER.sub(lambda m: m.group(1), description))
    return "_".join(w.lower() for w in words[:6]) or "function"


def invoke_internal(fn: InternalFunction, args: Mapping[str, AnyValue], provider,
                    config: ParseConfig = ParseConfig()) -> dict[str, AnyValue]:
    system = fn.substitute(args)
    if fn.examples:
        system += "\nExamples:\n" + "\n".join(str(e) for e in fn.examples)
    from .memory import display

    user = "\n".join(f"{k}: {display(v)}" for k, v in args.items()) or "Perform the function."
    return strict_json(system, user, fn.output_schema, provider, config).result


@dataclass
class SignatureMeta:
    """What can be read off a native callable's signature."""

    name: str
    params: list[tuple[str, AnyValue]] = field(default_factory=list)
    returns: AnyValue = inspect.Signature.empty
    wants_shared_variables: bool = False

    @classmethod
    def from_callable(cls, fn: Callable) -> SignatureMeta:
        sig = inspect.signature(fn)
        try:
            hints = typing.get_type_hints(fn)
        except Exception:
            hints = {}
        params, wants = [], False
        for p in sig.parameters.values():
            if p.name == SHARED_VARIABLES_PARAM:
                wants = True
                continue
            if p.kind in (p.VAR_POSITIONAL, p.VAR_KEYWORD):
                continue
            params.append((p.name, hints.get(p.name, p.annotation)))
        returns = hints.get("return", sig.return_annotation)
        return cls(getattr(fn, "__name__", "function"), params, returns, wants)


def type_from_annotation(ann) -> TypeExpr:
    if ann is inspect.Parameter.empty or ann is None or ann is typing.Any:
        return T.Any
    simple = {int: T.Int, float: T.Float, str: T.Str, bool: T.Bool, dict: T.DictAny, list: T.ListOf(T.Any)}
    if ann in simple:
        return simple[ann]
    origin = typing.get_origin(ann)
    args = typing.get_args(ann)
    if origin is list:
        return T.ListOf(type_from_annotation(args[0]) if args else T.Any)
    if origin is dict:
        return T.DictAny
    if origin is typing.Literal:
        return T.EnumOf(args)
    return T.Any


class ExternalFunction(Function):
    """A native callable with metadata for the agent."""

    def __init__(self, fn: Callable, name: str, description: str, params: list[Param],
                 output_fields: list[tuple[str, TypeExpr]], wants_shared_variables: bool = False,
                 is_compulsory: bool = False):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise FunctionDefinitionError(f"{name}: duplicate parameter names {names}")
        self.fn = fn
        self.name = name
        self.description = description
        self.params = list(params)
        self._output_fields = list(output_fields)
        self.wants_shared_variables = wants_shared_variables
        self.is_compulsory = is_compulsory

    @property
    def output_fields(self):
        return self._output_fields

    @classmethod
    def from_callable(cls, fn: Callable, name: str | None = None, description: str | None = None,
                      is_compulsory: bool = False) -> ExternalFunction:
        meta = SignatureMeta.from_callable(fn)
        if name:
            meta.name = name
        doc = description if description is not None else inspect.getdoc(fn) or ""
        return derive_external_metadata(meta, doc, fn, is_compulsory)

    def __call__(self, shared_variables=None, **args):
        return invoke_external(self, args, shared_variables)

    def __repr__(self):
        return f"ExternalFunction({self.name!r})"


def derive_external_metadata(meta: SignatureMeta, doc_text: str, fn: Callable | None = None,
                             is_compulsory: bool = False) -> ExternalFunction:
    """Combine signature types with ``<name: description>`` markers in the doc.

    Missing annotations or doc markers are simply left out of the card.
    """
    names = [n for n, _ in meta.params]
    if len(set(names)) != len(names):
        raise FunctionDefinitionError(f"{meta.name}: duplicate parameter names {names}")
    described = {p.name: p.description for p in parse_placeholders(doc_text)} if doc_text else {}
    params = [Param(n, type_from_annotation(a), described.get(n, "")) for n, a in meta.params]
    if meta.returns is None or meta.returns is type(None):
        outputs: list[tuple[str, TypeExpr]] = []
    else:
        outputs = [("output_1", type_from_annotation(meta.returns))]
    return ExternalFunction(fn, meta.name, doc_text.strip(), params, outputs,
                            meta.wants_shared_variables, is_compulsory)


def invoke_external(fn: ExternalFunction, args: Mapping[str, AnyValue], shared_variables=None) -> dict[str, AnyValue]:
    wanted = [p.name for p in fn.params]
    missing = [n for n in wanted if n not in args]
    extra = [n for n in args if n not in wanted]
    if missing or extra:
        raise FunctionArgumentError(f"{fn.name}: missing {missing}, unexpected {extra}")
    checked = {}
    for p in fn.params:
        ok, value = conforms_or_convert(args[p.name], p.type)
        if not ok:
            raise FunctionArgumentError(f"{fn.name}: argument {p.name!r} should be {p.type}, got {args[p.name]!r}")
        checked[p.name] = value
    if fn.wants_shared_variables:
        checked[SHARED_VARIABLES_PARAM] = shared_variables
    try:
        result = fn.fn(**checked)
    except Exception as exc:
        raise FunctionCallError(fn.name, exc) from exc
    if result is None:
        return {"Status": "Completed"}
    names = [n for n, _ in fn.output_fields]
    if isinstance(result, dict) and names and names != ["output_1"]:
        return dict(result)
    return {"output_1": result}
