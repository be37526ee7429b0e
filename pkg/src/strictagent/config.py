"""Declarative agent configs and the built-in function registry."""

from __future__ import annotations

import importlib
import json
import math
from pathlib import Path

from .agent import Agent
from .function import ExternalFunction, Function, InternalFunction

CONFIG_FIELDS = ("name", "description", "max_subtasks", "summarise_subtasks_count", "default_to_llm",
                 "global_context", "shared_variables", "functions", "top_k_functions")


class ConfigError(ValueError):
    pass


def add_numbers(x: float, y: float) -> float:
    """Adds <x: first number> and <y: second number>, returning x + y"""
    return x + y


def subtract_numbers(x: float, y: float) -> float:
    """Subtracts <y: number to take away> from <x: number to subtract from>, returning x - y"""
    return x - y


def multiply_numbers(x: float, y: float) -> float:
    """Multiplies <x: first factor> by <y: second factor>, returning the product x * y"""
    return x * y


def divide_numbers(x: float, y: float) -> float:
    """Divides <x: dividend> by <y: divisor>, returning the quotient x / y"""
    return x / y


def modulo_numbers(x: int, y: int) -> int:
    """Remainder after dividing <x: dividend> by <y: divisor>, x mod y"""
    return x % y


def power_numbers(x: float, y: float) -> float:
    """Raises <x: base> to the power of <y: exponent>"""
    return x ** y


def square_root(x: float) -> float:
    """Square root of the non-negative number <x: number>"""
    return math.sqrt(x)


def absolute_value(x: float) -> float:
    """Absolute value (magnitude) of <x: number>"""
    return abs(x)


def negate_number(x: float) -> float:
    """Flips the sign of <x: number>"""
    return -x


ARITHMETIC = (add_numbers, subtract_numbers, multiply_numbers, divide_numbers, modulo_numbers,
              power_numbers, square_root, absolute_value, negate_number)

REGISTRY = {fn.__name__: fn for fn in ARITHMETIC}


def arithmetic_functions() -> list[ExternalFunction]:
    return [ExternalFunction.from_callable(fn) for fn in ARITHMETIC]


def resolve_function(ref) -> Function:
    """A registry name, a ``module:attr`` path, or an inline internal-function dict."""
    if isinstance(ref, dict):
        try:
            return InternalFunction(ref["description"], ref["output_format"], name=ref.get("name"),
                                    examples=ref.get("examples"), is_compulsory=ref.get("is_compulsory", False))
        except KeyError as exc:
            raise ConfigError(f"inline function needs {exc.args[0]!r}") from exc
    if not isinstance(ref, str):
        raise ConfigError(f"bad function reference {ref!r}")
    if ref in REGISTRY:
        return ExternalFunction.from_callable(REGISTRY[ref])
    if ":" in ref:
        module, _, attr = ref.partition(":")
        try:
            obj = getattr(importlib.import_module(module), attr)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"cannot import {ref!r}: {exc}") from exc
        return obj if isinstance(obj, Function) else ExternalFunction.from_callable(obj)
    raise ConfigError(f"unknown function {ref!r}; known: {', '.join(sorted(REGISTRY))}")


def agent_from_config(data: dict, provider=None) -> Agent:
    unknown = set(data) - set(CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
    if not data.get("name"):
        raise ConfigError("config needs a non-empty name")
    kwargs = {k: data[k] for k in ("max_subtasks", "summarise_subtasks_count", "default_to_llm",
                                   "global_context", "shared_variables", "top_k_functions") if k in data}
    try:
        agent = Agent(data["name"], data.get("description", ""), provider, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    agent.assign_functions([resolve_function(r) for r in data.get("functions", [])])
    return agent


def load_agent_config(path, provider=None) -> Agent:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return agent_from_config(data, provider)
