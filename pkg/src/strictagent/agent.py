"""The agent: two-step subtask selection over equipped functions."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any as AnyValue, Callable

from . import typeexpr as T
from .function import (
    ExternalFunction,
    Function,
    FunctionCallError,
    FunctionError,
    InternalFunction,
    Param,
    invoke_external,
    invoke_internal,
)
from .memory import (
    FUNCTION_SPACE,
    GlobalContext,
    MemoryBank,
    SharedVariables,
    display,
    filter_functions,
    retrieve_task_memories,
)
from .parser import ExhaustedRetries, FieldSpec, OutputSchema, ParseConfig, strict_json
from .provider import Provider, as_provider

KEY_VALUE_LIMIT = 200
STATUS_VALUE_LIMIT = 200


class AgentError(Exception):
    pass


class DuplicateFunctionName(AgentError, ValueError):
    pass


class CycleDetected(AgentError, ValueError):
    def __init__(self, path: list[str]):
        self.path = path
        super().__init__("agent hierarchy cycle: " + " -> ".join(path))


class UnknownFunction(ExhaustedRetries):
    pass


class NoProvider(AgentError):
    pass


@dataclass
class SubtaskRecord:
    key: str
    output: dict[str, AnyValue]

    @property
    def value(self):
        """The output with a lone ``output_1`` unwrapped."""
        if list(self.output) == ["output_1"]:
            return self.output["output_1"]
        return self.output

    def render(self) -> str:
        return f"{self.key}: {display(self.value)}"


@dataclass
class SubtaskDecision:
    observation: str
    thoughts: str
    current_subtask: str
    function_name: str


@dataclass
class ParentContext:
    assigned_task: str
    subtasks_completed: list[SubtaskRecord]


class EndTask(Function):
    name = "end_task"
    description = "Ends the Assigned Task once everything it asks for has been done"
    params: list[Param] = []

    @property
    def output_fields(self):
        return []


class UseLLM(Function):
    name = "use_llm"
    description = (
        "Answers the Current Subtask directly, using the agent's own knowledge and the context given, "
        "when no other Equipped Function fits"
    )
    params: list[Param] = []

    @property
    def output_fields(self):
        return [("Output", T.Str)]


class AgentFunction(Function):
    """An inner agent exposed to its meta agent as a one-argument function."""

    def __init__(self, agent: Agent):
        self.agent = agent
        self.name = agent.name
        self.description = agent.description
        self.params = [Param("instruction", T.Str, "detailed instruction for this agent")]
        self.is_compulsory = False

    @property
    def output_fields(self):
        return [("output_1", T.Str)]

    def invoke(self, meta: Agent, instruction: str, provider: Provider) -> dict:
        inner = self.agent
        inner.reset()
        inner.shared_variables = meta.shared_variables
        inner.parent_context = ParentContext(meta.assigned_task, list(meta.subtasks_completed))
        inner_provider = inner.provider or provider
        inner.run(instruction, provider=inner_provider)
        return {"output_1": inner.reply_user(instruction, provider=inner_provider)}

    def __repr__(self):
        return f"AgentFunction({self.name!r})"


def wrap_inner_agent(meta: Agent, inner: Agent) -> AgentFunction:
    validate_hierarchy(meta, inner)
    return AgentFunction(inner)


def _inner_agents(agent: Agent) -> list[Agent]:
    return [f.agent for f in agent.functions if isinstance(f, AgentFunction)]


def validate_hierarchy(meta: Agent, candidate: Agent) -> None:
    """Raise ``CycleDetected`` if making ``candidate`` an inner agent of
    ``meta`` would close a loop. Shared sub-agents (diamonds) are fine."""
    if candidate is meta:
        raise CycleDetected([meta.name, meta.name])
    stack = [(candidate, [meta.name, candidate.name])]
    seen = set()
    while stack:
        node, path = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        for child in _inner_agents(node):
            if child is meta:
                raise CycleDetected(path + [meta.name])
            stack.append((child, path + [child.name]))


def _key_value(v) -> str:
    text = display(v)
    if len(text) > KEY_VALUE_LIMIT:
        digest = hashlib.sha1(text.encode("utf-8")).hexdigest()[:8]
        text = f"{text[:40]}...#{digest}"
    return text


def render_log(records: list[SubtaskRecord]) -> str:
    if not records:
        return "None"
    return "\n".join(f"- {r.render()}" for r in records)


class Agent:
    """An LLM agent that breaks an assigned task into function calls.

    Each step makes one call to pick the next subtask and function, then a
    second call that only sees the chosen function to fill in its inputs.
    """

    def __init__(self, name: str, description: str, provider=None, *, max_subtasks: int = 5,
                 summarise_subtasks_count: int = 5, default_to_llm: bool = True, verbose: bool = False,
                 top_k_functions: int = 5, shared_variables: dict | None = None,
                 global_context: str | GlobalContext = "", get_global_context: Callable | None = None,
                 memory_bank: MemoryBank | None = None, parse_config: ParseConfig | None = None):
        if not name:
            raise ValueError("agent name must be non-empty")
        if max_subtasks < 1 or summarise_subtasks_count < 1:
            raise ValueError("max_subtasks and summarise_subtasks_count must be positive")
        self.name = name
        self.description = description
        self.provider = as_provider(provider) if provider is not None else None
        self.max_subtasks = max_subtasks
        self.summarise_subtasks_count = summarise_subtasks_count
        self.verbose = verbose
        self.parse_config = parse_config or ParseConfig()
        self.shared_variables = SharedVariables(shared_variables or {})
        if isinstance(global_context, GlobalContext):
            self.global_context = global_context
        else:
            self.global_context = GlobalContext(global_context, get_global_context)
        self.memory_bank = memory_bank if memory_bank is not None else MemoryBank(function_top_k=top_k_functions)
        self.functions: list[Function] = []
        self.assigned_task = ""
        self.subtasks_completed: list[SubtaskRecord] = []
        self.task_completed = False
        self.parent_context: ParentContext | None = None
        self._summary_count = 0
        self._active: list[Function] | None = None
        self._add(EndTask())
        self.default_to_llm = default_to_llm

    # ------------------------------------------------------------ functions

    @property
    def default_to_llm(self) -> bool:
        return any(f.name == "use_llm" for f in self.functions)

    @default_to_llm.setter
    def default_to_llm(self, on: bool):
        has = self.default_to_llm
        if on and not has:
            self.functions.insert(0, UseLLM())
        elif not on and has:
            self.functions = [f for f in self.functions if f.name != "use_llm"]

    def _add(self, fn: Function):
        if any(f.name == fn.name for f in self.functions):
            raise DuplicateFunctionName(fn.name)
        self.functions.append(fn)
        if not isinstance(fn, (EndTask, UseLLM)):
            self.memory_bank[FUNCTION_SPACE].append(fn)

    def assign_functions(self, functions) -> Agent:
        new = []
        for f in functions:
            if isinstance(f, Agent):
                new.append(wrap_inner_agent(self, f))
            elif isinstance(f, Function):
                new.append(f)
            elif callable(f):
                new.append(ExternalFunction.from_callable(f))
            else:
                raise TypeError(f"cannot equip {f!r}")
        names = [f.name for f in new]
        clash = {n for n in names if names.count(n) > 1} | {f.name for f in self.functions} & set(names)
        if clash:
            raise DuplicateFunctionName(", ".join(sorted(clash)))
        for f in new:
            self._add(f)
        return self

    def assign_agents(self, agents) -> Agent:
        for a in agents:
            validate_hierarchy(self, a)
        return self.assign_functions([AgentFunction(a) for a in agents])

    def remove_function(self, name: str) -> Agent:
        self.functions = [f for f in self.functions if f.name != name or f.name == "end_task"]
        store = self.memory_bank[FUNCTION_SPACE]
        store.items = [f for f in store.items if f.name != name]
        return self

    def get_function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def list_functions(self) -> list[str]:
        return [f.card() for f in self.functions]

    def print_functions(self):
        print("\n\n".join(self.list_functions()))

    # ---------------------------------------------------------- prompt bits

    def _provider(self, provider) -> Provider:
        p = provider if provider is not None else self.provider
        if p is None:
            raise NoProvider(f"agent {self.name!r} has no provider")
        return as_provider(p)

    def _context_block(self, task: str, with_memories: bool = True) -> str:
        parts = [f"You are an agent named {self.name}.", f"Agent description: {self.description}"]
        gc = self.global_context.render(self.shared_variables, self)
        if gc:
            parts.append(f"Global Context:\n{gc}")
        if with_memories:
            memories = retrieve_task_memories(self.memory_bank, task)
            if memories:
                lines = [f"{space}:\n" + "\n".join(f"- {m}" for m in items) for space, items in memories.items()]
                parts.append("Relevant memories:\n" + "\n".join(lines))
        if self.parent_context is not None:
            parts.append(
                "Context from the agent that assigned you this task:\n"
                f"Its Assigned Task: {self.parent_context.assigned_task}\n"
                f"Its Subtasks Completed:\n{render_log(self.parent_context.subtasks_completed)}"
            )
        return "\n\n".join(parts)

    def _progress(self) -> str:
        return f"Assigned Task: {self.assigned_task}\nSubtasks Completed:\n{render_log(self.subtasks_completed)}"

    @property
    def active_functions(self) -> list[Function]:
        return self._active if self._active is not None else self.functions

    # --------------------------------------------------------------- steps

    def choose_next_subtask(self, provider=None) -> SubtaskDecision:
        functions = self.active_functions
        names = [f.name for f in functions]
        schema = OutputSchema([
            ("Observation", FieldSpec("what has been achieved so far towards the Assigned Task", T.Str)),
            ("Thoughts", FieldSpec("how the rest of the Assigned Task can be completed", T.Str)),
            ("Current Subtask", FieldSpec(
                "the next step in full detail, with all needed context, doable by one Equipped Function", T.Str)),
            ("Equipped Function Name", FieldSpec("Equipped Function to use for the Current Subtask", T.EnumOf(names))),
        ])
        system = (
            self._context_block(self.assigned_task)
            + "\n\nEquipped Functions:\n" + "\n\n".join(f.card() for f in functions)
            + "\n\nChoose the next subtask for the Assigned Task and the one Equipped Function to do it. "
            "Use end_task when the Assigned Task is complete."
        )
        try:
            out = strict_json(system, self._progress(), schema, self._provider(provider), self.parse_config).result
        except ExhaustedRetries as exc:
            if any("Equipped Function Name" in e for e in exc.attempts[-1].errors):
                raise UnknownFunction(exc.attempts) from exc
            raise
        decision = SubtaskDecision(out["Observation"], out["Thoughts"], out["Current Subtask"],
                                   out["Equipped Function Name"])
        if self.verbose:
            print(f"Observation: {decision.observation}\nThoughts: {decision.thoughts}\n"
                  f"Subtask identified: {decision.current_subtask}\n"
                  f"Calling function {decision.function_name}")
        return decision

    def generate_params(self, decision: SubtaskDecision, fn: Function, provider=None) -> dict:
        if not fn.params:
            return {}
        schema = OutputSchema([
            (p.name, FieldSpec(p.description or f"value for {p.name}", p.type)) for p in fn.params
        ])
        system = (
            self._context_block(self.assigned_task, with_memories=False)
            + f"\n\nEquipped Function to use:\n{fn.card()}"
            + "\n\nGenerate the input parameters of this Equipped Function for the Current Subtask."
        )
        user = f"{self._progress()}\nCurrent Subtask: {decision.current_subtask}"
        return strict_json(system, user, schema, self._provider(provider), self.parse_config).result

    def _record_key(self, fn: Function, args: dict) -> str:
        key = f"{fn.name}(" + ", ".join(f"{k}={_key_value(v)}" for k, v in args.items()) + ")"
        existing = {r.key for r in self.subtasks_completed}
        if key not in existing:
            return key
        n = 2
        while f"{key} [{n}]" in existing:
            n += 1
        return f"{key} [{n}]"

    def _use_llm(self, subtask: str, provider) -> dict:
        system = self._context_block(subtask) + "\n\nAnswer the instruction concisely, staying in character."
        user = f"{self._progress()}\nInstruction: {subtask}"
        schema = OutputSchema([("Output", FieldSpec("answer to the instruction", T.Str))])
        return strict_json(system, user, schema, self._provider(provider), self.parse_config).result

    def execute_subtask(self, decision: SubtaskDecision, args: dict, provider=None) -> SubtaskRecord | None:
        """Run the chosen function and log it. ``end_task`` logs nothing."""
        fn = self.get_function(decision.function_name)
        if isinstance(fn, EndTask):
            self.task_completed = True
            return None
        key_args = {"instruction": decision.current_subtask} if isinstance(fn, UseLLM) else args
        key = self._record_key(fn, key_args)
        try:
            if isinstance(fn, UseLLM):
                output = self._use_llm(decision.current_subtask, provider)
            elif isinstance(fn, InternalFunction):
                output = invoke_internal(fn, args, self._provider(provider), self.parse_config)
            elif isinstance(fn, ExternalFunction):
                output = invoke_external(fn, args, self.shared_variables)
            elif isinstance(fn, AgentFunction):
                output = fn.invoke(self, args["instruction"], self._provider(provider))
            else:
                raise TypeError(f"cannot execute {fn!r}")
        except Exception as exc:
            record = SubtaskRecord(key, {"Error": f"{type(exc).__name__}: {exc}"})
            self.subtasks_completed.append(record)
            if isinstance(exc, (FunctionError, ExhaustedRetries, AgentError)):
                raise
            raise FunctionCallError(fn.name, exc) from exc
        record = SubtaskRecord(key, output)
        self.subtasks_completed.append(record)
        if self.verbose:
            print(f"> {record.render()}")
        return record

    # ------------------------------------------------------------ top level

    def run(self, task: str, provider=None, num_subtasks: int | None = None) -> list[SubtaskRecord]:
        """Work on ``task`` until end_task or the subtask budget runs out.

        Returns the records created by this call.
        """
        provider = self._provider(provider)
        self.assigned_task = task
        self.task_completed = False
        self._active = filter_functions(
            self.functions, task, self.memory_bank[FUNCTION_SPACE].top_k, self.memory_bank[FUNCTION_SPACE].ranker
        )
        created: list[SubtaskRecord] = []
        try:
            for _ in range(num_subtasks or self.max_subtasks):
                decision = self.choose_next_subtask(provider)
                fn = self.get_function(decision.function_name)
                args = self.generate_params(decision, fn, provider)
                record = self.execute_subtask(decision, args, provider)
                if record is None:
                    break
                created.append(record)
                if len(self.subtasks_completed) > self.summarise_subtasks_count:
                    self.summarise_subtasks(provider)
        finally:
            self._active = None
        return created

    def summarise_subtasks(self, provider=None) -> Agent:
        """Fold the oldest records beyond the threshold into one summary."""
        excess = len(self.subtasks_completed) - self.summarise_subtasks_count
        if excess <= 0:
            return self
        old = self.subtasks_completed[:excess]
        schema = OutputSchema([("Summary", FieldSpec("concise summary of these subtasks and their outcomes", T.Str))])
        system = f"You are {self.name}. {self.description}\nSummarise the completed subtasks, keeping key results."
        user = f"Assigned Task: {self.assigned_task}\nSubtasks to summarise:\n{render_log(old)}"
        summary = strict_json(system, user, schema, self._provider(provider), self.parse_config).result["Summary"]
        self._summary_count += 1
        record = SubtaskRecord(f"summary_of_subtasks_{self._summary_count}", {"output_1": summary})
        self.subtasks_completed = [record] + self.subtasks_completed[excess:]
        return self

    def reply_user(self, query: str | None = None, provider=None) -> str:
        question = query if query else self.assigned_task
        schema = OutputSchema([("Response", FieldSpec("reply based on the Subtasks Completed", T.Str))])
        system = self._context_block(question, with_memories=False) + "\n\nReply to the query using what has been done."
        user = f"{self._progress()}\nQuery: {question}"
        return strict_json(system, user, schema, self._provider(provider), self.parse_config).result["Response"]

    def reset(self) -> Agent:
        self.subtasks_completed = []
        self.task_completed = False
        self.assigned_task = ""
        self._summary_count = 0
        return self

    def status(self) -> str:
        shared = []
        for name, value in self.shared_variables.items():
            text = display(value)
            shared.append(name if len(text) > STATUS_VALUE_LIMIT else f"{name}: {text}")
        return "\n".join([
            f"Agent Name: {self.name}",
            f"Agent Description: {self.description}",
            "Equipped Functions: " + ", ".join(f.name for f in self.functions),
            "Shared Variables: " + (", ".join(shared) if shared else "None"),
            f"Task: {self.assigned_task or 'None'}",
            f"Subtasks Completed:\n{render_log(self.subtasks_completed)}",
            f"Is Task Completed: {self.task_completed}",
        ])

    def __repr__(self):
        return f"Agent({self.name!r})"
