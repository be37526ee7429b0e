"""Structured-output parsing and LLM agents built on it."""

from .agent import (
    Agent,
    AgentFunction,
    CycleDetected,
    DuplicateFunctionName,
    SubtaskDecision,
    SubtaskRecord,
    UnknownFunction,
    validate_hierarchy,
)
from .conversable import ChatPhaseError, ConversableAgent
from .function import ExternalFunction, FunctionCallError, InternalFunction, Param, render_function_card
from .memory import GlobalContext, MemoryBank, MemoryStore, Ranker, SharedVariables, filter_functions
from .parser import (
    ExhaustedRetries,
    FieldSpec,
    MissingField,
    OutputSchema,
    ParseConfig,
    ParseOutcome,
    TypeMismatch,
    extract_fields,
    parse_response,
    strict_json,
)
from .provider import HttpProvider, HttpProviderConfig, Provider, ScriptedProvider
from .typeexpr import (
    Any,
    ArrayOf,
    Bool,
    Code,
    DictAny,
    DictWithKeys,
    EnumOf,
    Float,
    Int,
    ListOf,
    Str,
    TypeExpr,
    parse_type_expr,
)

__version__ = "0.1.0"
