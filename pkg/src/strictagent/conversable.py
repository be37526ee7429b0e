"""Chat wrapper: act first, then reply, then update the running memories."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import typeexpr as T
from .agent import Agent, render_log
from .memory import display
from .parser import FieldSpec, OutputSchema, as_schema, strict_json

PHASES = ("actions", "reply", "summary", "persistent_memory")


class ChatPhaseError(RuntimeError):
    """A chat turn failed; ``phase`` names the step that broke."""

    def __init__(self, phase: str, cause: BaseException):
        self.phase = phase
        self.cause = cause
        super().__init__(f"chat phase {phase!r} failed: {type(cause).__name__}: {cause}")


@dataclass
class Turn:
    speaker: str
    text: str


@dataclass
class ConversableAgent:
    agent: Agent
    persistent_memory_schema: OutputSchema | dict = field(default_factory=OutputSchema)
    persistent_memory: dict = field(default_factory=dict)
    conversation: list[Turn] = field(default_factory=list)
    summary: str = "None"
    last_actions: list = field(default_factory=list)

    def __post_init__(self):
        self.persistent_memory_schema = as_schema(self.persistent_memory_schema)

    def _render_conversation(self, turns=None) -> str:
        turns = self.conversation if turns is None else turns
        return "\n".join(f"{t.speaker}: {t.text}" for t in turns) or "None"

    def _memory_text(self) -> str:
        if not self.persistent_memory:
            return "None"
        return "\n".join(f"{k}: {display(v)}" for k, v in self.persistent_memory.items())

    def _run_actions(self, message: str, provider) -> list:
        agent = self.agent
        agent.reset()
        if all(f.name in ("end_task", "use_llm") for f in agent.functions):
            return []
        had_llm = agent.default_to_llm
        agent.default_to_llm = False
        try:
            return agent.run(message, provider=provider)
        finally:
            agent.default_to_llm = had_llm

    def chat(self, message: str, provider=None) -> str:
        """One user turn. Returns the agent's reply."""
        provider = self.agent._provider(provider)
        config = self.agent.parse_config
        phase = PHASES[0]
        try:
            self.last_actions = self._run_actions(message, provider)

            phase = PHASES[1]
            gc = self.agent.global_context.render(self.agent.shared_variables, self.agent)
            system = (
                f"You are {self.agent.name}. {self.agent.description}\n"
                + (f"Global Context:\n{gc}\n" if gc else "")
                + f"Summary of Conversation: {self.summary}\n"
                f"Persistent Memory:\n{self._memory_text()}\n"
                f"Conversation:\n{self._render_conversation()}\n"
                "Use the summarised actions, if any, and the context above to reply the User."
            )
            user = f"Actions Done:\n{render_log(self.last_actions)}\nUser: {message}"
            reply_schema = OutputSchema([("Agent Reply", FieldSpec("reply to the User", T.Str))])
            reply = strict_json(system, user, reply_schema, provider, config).result["Agent Reply"]

            new_turns = [Turn("User", message), Turn("Agent", reply)]
            phase = PHASES[2]
            summary_schema = OutputSchema([("Summary", FieldSpec("updated summary of the whole conversation", T.Str))])
            system = "Update the summary of a conversation with its latest exchange."
            user = f"Old Summary: {self.summary}\nLatest Exchange:\n{self._render_conversation(new_turns)}"
            self.summary = strict_json(system, user, summary_schema, provider, config).result["Summary"]

            phase = PHASES[3]
            self.conversation.extend(new_turns)
            if len(self.persistent_memory_schema):
                system = (
                    f"You maintain the persistent memory of {self.agent.name}. "
                    "Update every field using the conversation so far."
                )
                user = (
                    f"Previous Persistent Memory:\n{self._memory_text()}\n"
                    f"Conversation:\n{self._render_conversation()}"
                )
                self.persistent_memory = strict_json(
                    system, user, self.persistent_memory_schema, provider, config).result
        except Exception as exc:
            raise ChatPhaseError(phase, exc) from exc
        return reply

    def transcript(self) -> str:
        return self._render_conversation()
