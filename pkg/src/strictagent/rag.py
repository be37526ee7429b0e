"""Interactive retrieval: fetch a batch of context, try to answer, fetch more.

The loop is rule-based so that the number of interactions is exact: each
interaction is one ContextFetch call followed by one Answer call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import typeexpr as T
from .function import ExternalFunction, InternalFunction, Param, invoke_external, invoke_internal
from .memory import MemoryStore, Ranker, retrieve_by_ranker
from .parser import ParseConfig

NO_ANSWER = "no answer"
MAX_INTERACTIONS = 5


@dataclass
class RagResult:
    answer: str
    interactions: int
    contexts: list[list[str]] = field(default_factory=list)

    @property
    def answered(self) -> bool:
        return self.answer.strip().lower() != NO_ANSWER


def load_corpus(path) -> list[str]:
    return [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def rank_corpus(corpus: list[str], query: str, ranker: Ranker | None = None) -> list[str]:
    store = MemoryStore(list(corpus), top_k=max(len(corpus), 1), ranker=ranker or Ranker())
    return retrieve_by_ranker(store, query)


def make_context_fetch(corpus: list[str], query: str, batch_size: int, ranker: Ranker | None = None) -> ExternalFunction:
    ranked = rank_corpus(corpus, query, ranker)

    def context_fetch(batch: int) -> list:
        return ranked[(batch - 1) * batch_size: batch * batch_size]

    return ExternalFunction(
        context_fetch, "context_fetch",
        "Fetches batch number <batch: 1 for the most relevant lines> of corpus lines ranked by relevance to the query",
        [Param("batch", T.Int, "1 for the most relevant lines")],
        [("output_1", T.ListOf(T.Str))],
    )


def make_answer_function() -> InternalFunction:
    return InternalFunction(
        "Answers <query> using only <context>. If the context does not contain the answer, output no answer",
        {"Answer": "concise answer, or no answer, type: str"},
        name="answer",
    )


def interactive_retrieval(corpus: list[str], query: str, provider, batch_size: int = 10,
                          max_interactions: int = MAX_INTERACTIONS, ranker: Ranker | None = None,
                          config: ParseConfig = ParseConfig()) -> RagResult:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    fetch = make_context_fetch(corpus, query, batch_size, ranker)
    answer_fn = make_answer_function()
    result = RagResult(NO_ANSWER, 0)
    for batch in range(1, max_interactions + 1):
        context = invoke_external(fetch, {"batch": batch})["output_1"]
        if not context:
            break
        result.interactions += 1
        result.contexts.append(context)
        answer = invoke_internal(answer_fn, {"query": query, "context": "\n".join(context)}, provider, config)["Answer"]
        if answer.strip().lower() != NO_ANSWER:
            result.answer = answer
            break
    return result
