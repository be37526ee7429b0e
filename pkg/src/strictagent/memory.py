"""Shared variables, global context templating and the memory bank."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Any as AnyValue, Callable, Iterable

import numpy as np

EMBED_DIM = 256
BUILTIN_FUNCTIONS = ("use_llm", "end_task")
FUNCTION_SPACE = "Function"


class UnknownSharedVariable(KeyError):
    pass


class UnresolvedPlaceholder(KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"global context placeholder <{name}> has no shared variable")


class SharedVariables(dict):
    """Plain dict whose missing-key reads fail loudly."""

    def __missing__(self, key):
        raise UnknownSharedVariable(key)


def display(value) -> str:
    """Compact single-line rendering used in prompts and subtask keys."""
    if isinstance(value, str):
        return value
    if isinstance(value, tuple):
        return "(" + ", ".join(display(v) for v in value) + ")"
    if isinstance(value, list):
        return "[" + ", ".join(display(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{display(k)}: {display(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (set, frozenset)):
        return "{" + ", ".join(sorted(display(v) for v in value)) + "}"
    return str(value)


_GC_PLACEHOLDER = re.compile(r"<([^<>\n]+)>")


@dataclass
class GlobalContext:
    template: str = ""
    dynamic_context: Callable | None = None

    def render(self, shared_variables, agent=None) -> str:
        return render_global_context(self, shared_variables, agent)


def render_global_context(template: GlobalContext | str, shared_variables, agent=None) -> str:
    if isinstance(template, str):
        template = GlobalContext(template)

    def sub(m):
        name = m.group(1)
        if name not in shared_variables:
            raise UnresolvedPlaceholder(name)
        return display(shared_variables[name])

    text = _GC_PLACEHOLDER.sub(sub, template.template)
    if template.dynamic_context is not None:
        extra = template.dynamic_context(agent)
        if extra:
            text = f"{text}\n{extra}" if text else str(extra)
    return text


def embed_deterministic(text: str, dim: int = EMBED_DIM) -> np.ndarray:
    """Hashed character-trigram bag, L2-normalised. Empty text gives zeros."""
    vec = np.zeros(dim)
    t = f"  {text.lower()}  " if text else ""
    for i in range(len(t) - 2):
        h = hashlib.blake2b(t[i:i + 3].encode("utf-8"), digest_size=8).digest()
        vec[int.from_bytes(h, "little") % dim] += 1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm else vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if not na or not nb:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


@dataclass
class Ranker:
    embed: Callable[[str], np.ndarray] = embed_deterministic
    similarity: Callable[[np.ndarray, np.ndarray], float] = cosine

    def scores(self, texts: Iterable[str], query: str) -> list[float]:
        q = self.embed(query)
        return [self.similarity(self.embed(t), q) for t in texts]


@dataclass
class MemoryStore:
    items: list = field(default_factory=list)
    top_k: int = 5
    mapper: Callable[[AnyValue], str] = str
    approach: str | Callable = "retrieve_by_ranker"
    ranker: Ranker = field(default_factory=Ranker)

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")

    def append(self, item):
        self.items.append(item)

    def extend(self, items):
        self.items.extend(items)

    def retrieve(self, task: str) -> list:
        if callable(self.approach):
            return list(self.approach(self, task))[: self.top_k]
        if self.approach == "retrieve_by_ranker":
            return retrieve_by_ranker(self, task)
        raise ValueError(f"unknown retrieval approach {self.approach!r}")

    def __len__(self):
        return len(self.items)


def retrieve_by_ranker(store: MemoryStore, task: str) -> list:
    """Top-k items by cosine similarity of ``mapper(item)`` to ``task``.

    Ties keep insertion order.
    """
    scores = store.ranker.scores((store.mapper(x) for x in store.items), task)
    order = sorted(range(len(store.items)), key=lambda i: (-scores[i], i))
    return [store.items[i] for i in order[: store.top_k]]


def function_mapper(fn) -> str:
    return fn.name + ": " + fn.description


class MemoryBank(dict):
    """Named memory spaces; ``"Function"`` holds the equipped functions."""

    def __init__(self, spaces: dict | None = None, function_top_k: int = 5, ranker: Ranker | None = None):
        super().__init__()
        self[FUNCTION_SPACE] = MemoryStore(top_k=function_top_k, mapper=function_mapper, ranker=ranker or Ranker())
        for name, store in (spaces or {}).items():
            if name == FUNCTION_SPACE:
                store.mapper = function_mapper
            self[name] = store

    def add_space(self, name: str, items: Iterable = (), top_k: int = 5, mapper=str, ranker: Ranker | None = None):
        self[name] = MemoryStore(list(items), top_k=top_k, mapper=mapper, ranker=ranker or Ranker())
        return self[name]


def is_exempt(fn) -> bool:
    return fn.name in BUILTIN_FUNCTIONS or getattr(fn, "is_compulsory", False)


def filter_functions(all_functions: list, task: str, top_k: int = 5, ranker: Ranker | None = None) -> list:
    """Keep exempt functions plus the ``top_k`` most task-relevant others.

    Ranking only happens when the non-exempt functions outnumber ``top_k``.
    Input order is preserved in the output.
    """
    candidates = [f for f in all_functions if not is_exempt(f)]
    if len(candidates) <= top_k:
        return list(all_functions)
    store = MemoryStore(candidates, top_k=top_k, mapper=function_mapper, ranker=ranker or Ranker())
    keep = {id(f) for f in retrieve_by_ranker(store, task)}
    return [f for f in all_functions if is_exempt(f) or id(f) in keep]


def retrieve_task_memories(bank: MemoryBank, task: str) -> dict[str, list[str]]:
    out = {}
    for name, store in bank.items():
        if name == FUNCTION_SPACE or not len(store):
            continue
        out[name] = [store.mapper(x) for x in store.retrieve(task)]
    return out
