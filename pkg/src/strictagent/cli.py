"""Command-line entry point. Exit codes: 0 ok, 1 domain error, 2 usage error."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .parser import ExhaustedRetries, OutputSchema, ParseConfig, SchemaError, strict_json
from .provider import HttpProvider, HttpProviderConfig, ProviderError, ScriptedProvider

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _provider_args(p):
    p.add_argument("--provider", choices=["scripted", "http"], default=None,
                   help="scripted replays --fixture; http uses LLM_BASE_URL, LLM_MODEL, LLM_API_KEY")
    p.add_argument("--fixture", help="JSON fixture of scripted responses")


def make_provider(args):
    kind = args.provider or ("scripted" if args.fixture else "http")
    if kind == "scripted":
        if not args.fixture:
            raise UsageError("--provider scripted needs --fixture")
        try:
            return ScriptedProvider.from_file(args.fixture)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read fixture {args.fixture}: {exc}") from exc
    return HttpProvider(HttpProviderConfig.from_env())


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} {path} is not valid JSON: {exc}") from exc


def _print_attempts(attempts):
    for i, a in enumerate(attempts, 1):
        print(f"--- attempt {i}\n{a.raw_response}\nerrors: {'; '.join(a.errors)}")


# ------------------------------------------------------------------ parse


def cmd_parse(args) -> int:
    mapping = _read_json(args.schema, "schema")
    if not isinstance(mapping, dict):
        raise UsageError("schema file must hold a JSON object")
    try:
        config = ParseConfig(delimiter=args.delimiter, num_tries=args.tries)
        schema = OutputSchema.from_mapping(mapping)
    except (SchemaError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    provider = make_provider(args)
    try:
        outcome = strict_json(args.system, args.user, schema, provider, config)
    except ExhaustedRetries as exc:
        _print_attempts(exc.attempts)
        print(f"failed after {len(exc.attempts)} attempt(s)", file=sys.stderr)
        return EXIT_DOMAIN
    print(json.dumps(outcome.result, indent=2, ensure_ascii=False, default=str))
    return EXIT_OK


# -------------------------------------------------------------- agent-run


def cmd_agent_run(args) -> int:
    from .config import ConfigError, agent_from_config

    if not args.task.strip():
        raise UsageError("--task must be non-empty")
    data = _read_json(args.config, "config")
    provider = make_provider(args)
    try:
        agent = agent_from_config(data, provider)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    agent.verbose = args.verbose
    agent.run(args.task)
    for record in agent.subtasks_completed:
        print(record.render())
    print(f"Reply: {agent.reply_user()}")
    return EXIT_OK


# --------------------------------------------------------------- maze-run


def cmd_maze_run(args) -> int:
    from .maze import UnsolvableMaze, generate_solvable_maze, load_maze
    from .planner import DEFAULT_MAX_REPLANS, LLMPlanner, OraclePlanner, PlanFollowerProvider, run_benchmark

    if args.episodes < 1 or args.width < 1 or args.height < 1:
        raise UsageError("--episodes, --width and --height must be positive")
    if args.maze:
        try:
            config = load_maze(args.maze)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot load maze {args.maze}: {exc}") from exc
        config.changeover_episode = args.change_at
    else:
        try:
            config = generate_solvable_maze(args.width, args.height, args.density, args.seed, args.change_at)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        except UnsolvableMaze as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DOMAIN
    if args.planner == "llm":
        provider = make_provider(args)
        planner, executor = LLMPlanner(provider), provider
        max_replans = args.max_replans if args.max_replans is not None else DEFAULT_MAX_REPLANS
    else:
        planner, executor = OraclePlanner(), PlanFollowerProvider
        # replanning is free for the oracle; the step budget is the real bound
        max_replans = args.max_replans if args.max_replans is not None else config.width * config.height
    try:
        rows = run_benchmark(config, args.episodes, planner, executor, args.seed, max_replans, jobs=args.jobs)
    except UnsolvableMaze as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    print(f"{'episode':>7} {'phase':>5} {'solved':>6} {'steps':>6} {'min':>6} {'replans':>7}")
    for r in rows:
        print(f"{r.episode:>7} {r.phase:>5} {str(r.solved):>6} {r.steps:>6} {r.min_steps:>6} {r.replans:>7}")
    solved = sum(r.solved for r in rows)
    print(f"solve rate: {solved}/{len(rows)} ({100.0 * solved / len(rows):.1f}%)")
    if args.report:
        with open(args.report, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "solved", "steps", "min_steps", "replans"])
            for r in rows:
                w.writerow([r.episode, int(r.solved), r.steps, r.min_steps, r.replans])
    return EXIT_OK


# ------------------------------------------------------------------- chat


def cmd_chat(args) -> int:
    from .config import ConfigError, agent_from_config
    from .conversable import ChatPhaseError, ConversableAgent

    data = _read_json(args.config, "config")
    memory_schema = data.pop("persistent_memory", {}) if isinstance(data, dict) else {}
    provider = make_provider(args)
    try:
        agent = agent_from_config(data, provider)
        bot = ConversableAgent(agent, memory_schema)
    except (ConfigError, SchemaError) as exc:
        raise UsageError(str(exc)) from exc
    interactive = sys.stdin.isatty()
    status = EXIT_OK
    while True:
        if interactive:
            print("User: ", end="", flush=True)
        line = sys.stdin.readline()
        if not line:
            break
        message = line.strip()
        if not message:
            continue
        try:
            print(f"{agent.name}: {bot.chat(message)}")
        except ChatPhaseError as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = EXIT_DOMAIN
            break
    if args.transcript:
        Path(args.transcript).write_text(
            json.dumps({"conversation": [{"speaker": t.speaker, "text": t.text} for t in bot.conversation],
                        "summary": bot.summary, "persistent_memory": bot.persistent_memory},
                       indent=2, ensure_ascii=False, default=str),
            encoding="utf-8")
    return status


# --------------------------------------------------------------- demo-rag


def cmd_demo_rag(args) -> int:
    from .rag import interactive_retrieval, load_corpus

    if args.batch_size < 1:
        raise UsageError("--batch-size must be >= 1")
    try:
        corpus = load_corpus(args.corpus)
    except OSError as exc:
        raise UsageError(f"cannot read corpus {args.corpus}: {exc}") from exc
    provider = make_provider(args) if corpus else None
    result = interactive_retrieval(corpus, args.query, provider, args.batch_size)
    print(f"interactions: {result.interactions}")
    print(result.answer)
    return EXIT_OK


# ------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="strictagent", description="Structured-output agents from the command line")
    sub = root.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="run one structured call and print the parsed fields")
    p.add_argument("--schema", required=True, help="JSON object of field name to description")
    p.add_argument("--system", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--delimiter", default="###")
    p.add_argument("--tries", type=int, default=3)
    _provider_args(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("agent-run", help="run an agent from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--verbose", action="store_true")
    _provider_args(p)
    p.set_defaults(func=cmd_agent_run)

    p = sub.add_parser("maze-run", help="plan-execute-replan maze benchmark")
    p.add_argument("--width", type=int, default=40)
    p.add_argument("--height", type=int, default=40)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--change-at", type=int, default=10)
    p.add_argument("--planner", choices=["oracle", "llm"], default="oracle")
    p.add_argument("--density", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write a per-episode CSV here")
    p.add_argument("--maze", help="JSON maze file instead of a generated one")
    p.add_argument("--jobs", type=int, default=1, help="run episodes concurrently (no memory carry-over)")
    p.add_argument("--max-replans", type=int, default=None)
    _provider_args(p)
    p.set_defaults(func=cmd_maze_run)

    p = sub.add_parser("chat", help="chat with an agent, one message per input line")
    p.add_argument("--config", required=True)
    p.add_argument("--transcript", help="write the conversation as JSON on exit")
    _provider_args(p)
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("demo-rag", help="interactive retrieval over a line corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--batch-size", type=int, default=10)
    _provider_args(p)
    p.set_defaults(func=cmd_demo_rag)
    return root


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ExhaustedRetries, ProviderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except Exception as exc:  # domain failures surfaced by the library
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
