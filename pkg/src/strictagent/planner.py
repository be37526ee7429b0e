"""Plan, execute, replan: a planner writes straight-line movement steps, the
agent executes them one at a time, and any failed step triggers a new plan.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field

from . import typeexpr as T
from .agent import Agent, SubtaskRecord, render_log
from .maze import ACTIONS, Cell, MazeEnv, in_bounds, make_move_function
from .parser import FieldSpec, OutputSchema, ParseConfig, format_response, strict_json
from .provider import Provider

DEFAULT_MAX_REPLANS = 10

FEW_SHOT = """Example Start Position: (2, 0)
Example Exit Position: (2, 4)
Example Obstacle Positions: ["Obstacle from (0, 1) to (5, 1)"]
Example Obstacle Position Layout: There is a wall of obstacles from (0, 1) to (5, 1)
Example Thoughts: I need to get from (2, 0) to (0, 4)
There are obstacles in the way. Since (2, 1) to (5, 1) has obstacles, I am only able to go past the wall via (6, 1)
Example Plan: ["Move down 4 times from (2, 0) to (6, 0)", "Move right 4 times from (6, 0) to (6, 4)", "Move up 4 times from (6, 4) to (2, 2)"]"""

ENVIRONMENT = (
    "The environment is a grid of {height} rows by {width} columns. Positions are (row, column) with (0, 0) "
    "at the top left. Up decreases the row, Down increases the row, Left decreases the column and Right "
    "increases the column. Obstacle cells cannot be entered and there is no wraparound."
)

_STEP_RE = re.compile(r"move\s+(up|down|left|right)\s+(\d+)\s+times?", re.IGNORECASE)


class PlanningFailed(RuntimeError):
    pass


class NoPathKnown(PlanningFailed):
    pass


@dataclass
class Plan:
    steps: list[str] = field(default_factory=list)


@dataclass
class PlannerQuery:
    start: Cell
    exit: Cell
    obstacle_groups: list[str]
    history: str = "None"
    width: int = 0
    height: int = 0
    known_obstacles: frozenset = frozenset()


@dataclass
class EpisodeResult:
    solved: bool
    steps_taken: int
    replans: int
    reward: int
    plans: list[Plan] = field(default_factory=list)


@dataclass
class ExecutionResult:
    step_records: list[list[SubtaskRecord]]
    failure_index: int | None = None

    @property
    def ok(self) -> bool:
        return self.failure_index is None


def group_obstacles(cells) -> list[str]:
    """Describe obstacles as maximal straight runs, horizontal runs first,
    scanning in row-major order."""
    remaining = set(cells)
    runs = []
    for cell in sorted(cells):
        if cell not in remaining:
            continue
        r, c = cell
        end_c = c
        while (r, end_c + 1) in remaining:
            end_c += 1
        if end_c > c:
            run = [(r, x) for x in range(c, end_c + 1)]
        else:
            end_r = r
            while (end_r + 1, c) in remaining:
                end_r += 1
            run = [(y, c) for y in range(r, end_r + 1)]
        remaining.difference_update(run)
        runs.append(f"Obstacle from {_fmt(run[0])} to {_fmt(run[-1])}")
    return runs


def _fmt(cell: Cell) -> str:
    return f"({cell[0]}, {cell[1]})"


def parse_step(text: str) -> tuple[str, int] | None:
    """``"Move down 4 times ..."`` -> ``("Down", 4)``."""
    m = _STEP_RE.search(text)
    if not m:
        return None
    return m.group(1).capitalize(), int(m.group(2))


def compress_path(path: list[Cell]) -> list[str]:
    steps = []
    i = 0
    while i < len(path) - 1:
        delta = (path[i + 1][0] - path[i][0], path[i + 1][1] - path[i][1])
        j = i + 1
        while j + 1 < len(path) and (path[j + 1][0] - path[j][0], path[j + 1][1] - path[j][1]) == delta:
            j += 1
        action = next(a for a, d in ACTIONS.items() if d == delta)
        n = j - i
        steps.append(f"Move {action.lower()} {n} time{'s' if n != 1 else ''} from {_fmt(path[i])} to {_fmt(path[j])}")
        i = j
    return steps


def shortest_path(width: int, height: int, obstacles, start: Cell, goal: Cell) -> list[Cell] | None:
    """Fewest moves, then fewest turns (Dijkstra over (cell, heading))."""
    if start == goal:
        return [start]
    order = list(ACTIONS.values())
    heap = [(0, 0, start, -1)]
    best = {(start, -1): (0, 0)}
    parent = {}
    while heap:
        moves, turns, cell, heading = heapq.heappop(heap)
        if best.get((cell, heading)) != (moves, turns):
            continue
        if cell == goal:
            path = [cell]
            state = (cell, heading)
            while state in parent:
                state = parent[state]
                path.append(state[0])
            return path[::-1]
        for h, (dr, dc) in enumerate(order):
            nxt = (cell[0] + dr, cell[1] + dc)
            if not in_bounds(nxt, width, height) or nxt in obstacles:
                continue
            cost = (moves + 1, turns + (heading != -1 and h != heading))
            if cost < best.get((nxt, h), (float("inf"), 0)):
                best[(nxt, h)] = cost
                parent[(nxt, h)] = (cell, heading)
                heapq.heappush(heap, (*cost, nxt, h))
    return None


def oracle_plan(query: PlannerQuery, known_obstacles=None) -> Plan:
    """Rule-based stand-in for the LLM planner: shortest path over the
    obstacles known so far, written in the same step format."""
    obstacles = query.known_obstacles if known_obstacles is None else known_obstacles
    path = shortest_path(query.width, query.height, obstacles, query.start, query.exit)
    if path is None:
        raise NoPathKnown(f"no path from {query.start} to {query.exit} around known obstacles")
    return Plan(compress_path(path))


class OraclePlanner:
    def plan(self, query: PlannerQuery) -> Plan:
        return oracle_plan(query)


class LLMPlanner:
    def __init__(self, provider, config: ParseConfig | None = None):
        self.provider = provider
        self.config = config or ParseConfig()

    def plan(self, query: PlannerQuery) -> Plan:
        return make_plan(query, self.provider, self.config)


def make_plan(query: PlannerQuery, provider, config: ParseConfig = ParseConfig()) -> Plan:
    schema = OutputSchema([
        ("Obstacle Position Layout", FieldSpec("describe where the obstacles are relative to the route", T.Str)),
        ("Thoughts", FieldSpec("reason step by step about a route from start to exit around the obstacles", T.Str)),
        ("Plan", FieldSpec(
            'ordered steps, each of the form "Move <direction> <n> times from (r, c) to (r, c)"', T.ListOf(T.Str))),
    ])
    system = (
        "You plan routes for an agent in a grid maze.\n"
        + ENVIRONMENT.format(width=query.width, height=query.height)
        + "\nMake a plan from the start position to the exit position.\n\n" + FEW_SHOT
    )
    user = (
        f"Start Position: {_fmt(query.start)}\nExit Position: {_fmt(query.exit)}\n"
        f"Obstacle Positions: {query.obstacle_groups}\nSubtasks Completed:\n{query.history}"
    )
    steps = strict_json(system, user, schema, provider, config).result["Plan"]
    if not steps:
        raise PlanningFailed("planner returned an empty plan")
    return Plan(list(steps))


# --------------------------------------------------------------- execution


class EnvHolder:
    """Lets one agent's ``move`` function follow the current episode."""

    def __init__(self, env: MazeEnv | None = None):
        self.env = env

    def __call__(self) -> MazeEnv:
        return self.env


def make_maze_agent(holder: EnvHolder, provider=None, **kwargs) -> Agent:
    agent = Agent(
        "Maze Navigator",
        "Moves through a grid maze by following the most immediate step of a plan",
        provider,
        default_to_llm=False,
        global_context="Current Position: <Current Position>\nExit Position: <Exit Position>",
        shared_variables={"Current Position": None, "Exit Position": None},
        **kwargs,
    )
    agent.assign_functions([make_move_function(holder)])
    return agent


def _step_failed(records: list[SubtaskRecord]) -> bool:
    moves = [r for r in records if r.key.startswith("move(")]
    if not moves:
        return True
    for r in records:
        out = r.output
        if "Error" in out or out.get("Collided") or out.get("Episode Over"):
            return True
    return False


def execute_plan(agent: Agent, plan: Plan, env: MazeEnv, budget: int | None = None) -> ExecutionResult:
    """Run plan steps in order until one fails. Failures are returned, not raised."""
    limit = budget if budget is not None else env.step_budget
    results: list[list[SubtaskRecord]] = []
    for i, step in enumerate(plan.steps):
        if env.state.steps >= limit:
            return ExecutionResult(results, i)
        agent.reset()
        agent.shared_variables["Current Position"] = _fmt(env.pos)
        agent.shared_variables["Exit Position"] = _fmt(env.exit)
        try:
            records = agent.run(step)
        except Exception as exc:
            results.append(list(agent.subtasks_completed) or [SubtaskRecord(step, {"Error": str(exc)})])
            return ExecutionResult(results, i)
        results.append(records)
        if _step_failed(records):
            return ExecutionResult(results, i)
        if env.at_exit and i < len(plan.steps) - 1:
            break
    return ExecutionResult(results, None)


def build_query(env: MazeEnv, history: str = "None") -> PlannerQuery:
    known = frozenset(env.state.known_obstacles)
    return PlannerQuery(env.pos, env.exit, group_obstacles(known), history, env.width, env.height, known)


def run_episode(agent: Agent, planner, env: MazeEnv, max_replans: int = DEFAULT_MAX_REPLANS) -> EpisodeResult:
    """Plan and execute until the agent stands on the exit, replanning after
    each failed sweep. Completion is checked by position, not by the LLM."""
    replans = 0
    plans: list[Plan] = []
    history = "None"
    while not env.at_exit and env.state.steps < env.step_budget:
        try:
            plan = planner.plan(build_query(env, history))
        except NoPathKnown:
            # remembered obstacles can be stale after a changeover; keep only what is in view
            env.state.known_obstacles = set(env.observe())
            plan = None
        except PlanningFailed:
            plan = None
        if plan is not None:
            plans.append(plan)
            result = execute_plan(agent, plan, env)
            done = [r for recs in result.step_records for r in recs]
            history = render_log(done[-5:])
            if env.at_exit:
                break
        replans += 1
        if replans > max_replans:
            break
    solved = env.at_exit and env.state.steps <= env.step_budget
    return EpisodeResult(solved, env.state.steps, replans, int(solved), plans)


_DECISION_FIELDS = {k: "text" for k in ("Observation", "Thoughts", "Current Subtask", "Equipped Function Name")}


class PlanFollowerProvider(Provider):
    """Deterministic stand-in for the executing LLM.

    Reads the prompt the agent builds and answers like a model that obeys
    the current plan step exactly: pick ``move`` once, fill in direction and
    count from the step text, then end the task.
    """

    def __init__(self, delimiter: str = "###"):
        super().__init__()
        self.config = ParseConfig(delimiter=delimiter)

    def _complete(self, system_prompt, user_prompt):
        d = self.config.delimiter
        if f"{d}Equipped Function Name{d}" in system_prompt:
            done = "Subtasks Completed:\nNone" not in user_prompt
            task = user_prompt.split("Assigned Task: ", 1)[1].split("\n", 1)[0]
            return format_response({
                "Observation": "The step has been carried out" if done else "Nothing done yet",
                "Thoughts": "End the task" if done else "Move as the step says",
                "Current Subtask": "End the task" if done else task,
                "Equipped Function Name": "end_task" if done else "move",
            }, _DECISION_FIELDS, self.config)
        if f"{d}action{d}" in system_prompt:
            current = user_prompt.rsplit("Current Subtask: ", 1)[1]
            action, times = parse_step(current) or ("Up", 1)
            return f"{{'{d}action{d}': '{action}', '{d}times{d}': {times}}}"
        if f"{d}Response{d}" in system_prompt:
            return f"{{'{d}Response{d}': 'Step done'}}"
        raise RuntimeError("unexpected prompt for the plan follower")


# --------------------------------------------------------------- benchmark


@dataclass
class EpisodeRow:
    episode: int
    solved: bool
    steps: int
    min_steps: int
    replans: int
    phase: int


def _run_one(config, episode, start, exit_, known, planner, executor_provider, max_replans, full_knowledge):
    from .maze import MazeEnv

    phase = config.phase_for_episode(episode)
    obstacles = config.obstacles(phase)
    memory = set(obstacles) if full_knowledge else known
    env = MazeEnv(config, phase, start, exit_, known_obstacles=memory)
    holder = EnvHolder(env)
    agent = make_maze_agent(holder, executor_provider() if callable(executor_provider) else executor_provider)
    result = run_episode(agent, planner, env, max_replans)
    from .maze import bfs_distance

    row = EpisodeRow(episode, result.solved, result.steps_taken,
                     bfs_distance(config.width, config.height, obstacles, start, exit_), result.replans, phase)
    return row, env.state.known_obstacles


def run_benchmark(config, episodes: int, planner=None, executor_provider=PlanFollowerProvider, seed: int = 0,
                  max_replans: int = DEFAULT_MAX_REPLANS, full_knowledge: bool = False, jobs: int = 1) -> list[EpisodeRow]:
    """Run ``episodes`` episodes on one maze, sampling start and exit per episode.

    With ``jobs == 1`` obstacle memory carries over between episodes. With more
    jobs each episode starts from an empty memory so episodes stay isolated.
    """
    import random

    from .maze import sample_endpoints

    planner = planner or OraclePlanner()
    rng = random.Random(seed)
    endpoints = [sample_endpoints(rng, config.width, config.height, config.obstacles(config.phase_for_episode(e)))
                 for e in range(episodes)]
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one, config, e, s, x, set(), planner, executor_provider, max_replans,
                                   full_knowledge) for e, (s, x) in enumerate(endpoints)]
            return [f.result()[0] for f in futures]
    rows, known = [], set()
    for e, (s, x) in enumerate(endpoints):
        row, known = _run_one(config, e, s, x, known, planner, executor_provider, max_replans, full_knowledge)
        rows.append(row)
    return rows
