import pytest

from scripts import decision, end, field, params
from strictagent.agent import Agent
from strictagent.conversable import ChatPhaseError, ConversableAgent
from strictagent.parser import ExhaustedRetries
from strictagent.provider import ScriptedProvider
from strictagent import typeexpr as T

COUNSELLOR_MEMORY = {
    "User Request": "what the user wants from the conversation, type: str",
    "User Emotion": "the user's current emotion, type: str",
    "Summary of Key Incidents": "key incidents the user mentioned, type: List[str]",
}


def test_counsellor_persistent_memory_filled():
    p = ScriptedProvider([
        field("Agent Reply", "That sounds stressful. What happened at work?"),
        field("Summary", "User is stressed about work"),
        "{'###User Request###': 'talk about stress', '###User Emotion###': 'anxious', "
        "'###Summary of Key Incidents###': ['missed a deadline']}",
    ])
    bot = ConversableAgent(Agent("Counsellor", "A caring counsellor", p), COUNSELLOR_MEMORY)
    reply = bot.chat("I missed a deadline and feel awful")
    assert reply.startswith("That sounds stressful")
    assert bot.persistent_memory == {"User Request": "talk about stress", "User Emotion": "anxious",
                                     "Summary of Key Incidents": ["missed a deadline"]}
    for name, spec in bot.persistent_memory_schema:
        assert T.conforms(bot.persistent_memory[name], spec.type)
    assert bot.summary == "User is stressed about work"
    assert [t.speaker for t in bot.conversation] == ["User", "Agent"]
    # no functions besides the built-ins: phase 1 makes no calls
    assert p.calls == 3


def test_shop_assistant_reply_sees_actions():
    def buy_item(item: str, shared_variables) -> str:
        """Buys <item> for the user"""
        shared_variables["Bought"].append(item)
        return f"bought {item}"

    p = ScriptedProvider([
        decision("buy_item", "buy an apple"), params(item="apple"), end(),
        field("Agent Reply", "I bought you an apple."),
        field("Summary", "User bought an apple"),
    ])
    agent = Agent("Shop", "Sells fruit", p, shared_variables={"Bought": []}).assign_functions([buy_item])
    bot = ConversableAgent(agent)
    assert bot.chat("Please buy me an apple") == "I bought you an apple."
    reply_prompt = p.transcript[3]
    assert "buy_item(item=apple): bought apple" in reply_prompt.user
    assert agent.shared_variables["Bought"] == ["apple"]
    # phase 1 never offers use_llm, and it is restored afterwards
    assert "Name: use_llm" not in p.transcript[0].system
    assert agent.default_to_llm
    # phase 1 prompts are not reply prompts and vice versa
    assert all("###Agent Reply###" not in e.system for e in p.transcript[:3])
    assert "###Equipped Function Name###" not in reply_prompt.system


def test_conversation_grows_by_two_and_summary_uses_latest_turns():
    p = ScriptedProvider([field("Agent Reply", "hi"), field("Summary", "s1"),
                          field("Agent Reply", "fine"), field("Summary", "s2")])
    bot = ConversableAgent(Agent("A", "d", p))
    bot.chat("hello")
    assert len(bot.conversation) == 2
    bot.chat("how are you")
    assert len(bot.conversation) == 4
    summary_prompt = p.transcript[3].user
    assert "Old Summary: s1" in summary_prompt and "User: how are you" in summary_prompt
    assert "User: hello" not in summary_prompt
    assert "User: hello" in p.transcript[2].system


def test_agent_log_reset_each_turn():
    def note(text: str) -> str:
        """Notes <text>"""
        return text

    p = ScriptedProvider([
        decision("note"), params(text="a"), end(), field("Agent Reply", "ok"), field("Summary", "s"),
        end(), field("Agent Reply", "ok"), field("Summary", "s"),
    ])
    agent = Agent("A", "d", p).assign_functions([note])
    bot = ConversableAgent(agent)
    bot.chat("one")
    bot.chat("two")
    assert agent.subtasks_completed == [] and bot.last_actions == []


def test_phase_identified_on_failure():
    p = ScriptedProvider([field("Agent Reply", "hi")] + ["garbage"] * 3)
    bot = ConversableAgent(Agent("A", "d", p))
    with pytest.raises(ChatPhaseError) as info:
        bot.chat("hello")
    assert info.value.phase == "summary"
    assert isinstance(info.value.cause, ExhaustedRetries)
