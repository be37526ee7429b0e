"""Grid-world maze with obstacle changeover and a 3x3 field of view.

Cells are ``(row, col)`` with ``(0, 0)`` at the top left; ``Down`` increases
the row.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from . import typeexpr as T
from .function import ExternalFunction, Param

Cell = tuple[int, int]

ACTIONS = {"Up": (-1, 0), "Down": (1, 0), "Left": (0, -1), "Right": (0, 1)}


class EpisodeOver(RuntimeError):
    pass


class UnsolvableMaze(RuntimeError):
    pass


@dataclass
class MazeConfig:
    width: int
    height: int
    obstacles_phase1: frozenset = frozenset()
    obstacles_phase2: frozenset = frozenset()
    start: Cell = (0, 0)
    exit: Cell = (0, 1)
    changeover_episode: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("maze dimensions must be positive")
        self.obstacles_phase1 = frozenset(tuple(c) for c in self.obstacles_phase1)
        self.obstacles_phase2 = frozenset(tuple(c) for c in self.obstacles_phase2)
        self.start = tuple(self.start)
        self.exit = tuple(self.exit)
        if self.start == self.exit:
            raise ValueError("start and exit must differ")

    def obstacles(self, phase: int) -> frozenset:
        return self.obstacles_phase1 if phase == 1 else self.obstacles_phase2

    def phase_for_episode(self, episode: int) -> int:
        """Episodes are 0-based; the changeover episode is the first of phase 2."""
        return 2 if self.changeover_episode and episode >= self.changeover_episode else 1

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "obstacles_phase1": sorted(list(c) for c in self.obstacles_phase1),
            "obstacles_phase2": sorted(list(c) for c in self.obstacles_phase2),
            "start": list(self.start),
            "exit": list(self.exit),
            "changeover_episode": self.changeover_episode,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> MazeConfig:
        return cls(
            width=data["width"],
            height=data["height"],
            obstacles_phase1=frozenset(tuple(c) for c in data.get("obstacles_phase1", [])),
            obstacles_phase2=frozenset(tuple(c) for c in data.get("obstacles_phase2", data.get("obstacles_phase1", []))),
            start=tuple(data["start"]),
            exit=tuple(data["exit"]),
            changeover_episode=data.get("changeover_episode", 0),
            seed=data.get("seed", 0),
        )


def load_maze(path) -> MazeConfig:
    return MazeConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_maze(config: MazeConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2), encoding="utf-8")


def in_bounds(cell: Cell, width: int, height: int) -> bool:
    return 0 <= cell[0] < height and 0 <= cell[1] < width


def bfs_distance(width: int, height: int, obstacles, start: Cell, goal: Cell) -> int | None:
    """Shortest number of moves from start to goal, or None if unreachable."""
    if start == goal:
        return 0
    seen = {start}
    queue = deque([(start, 0)])
    while queue:
        (r, c), d = queue.popleft()
        for dr, dc in ACTIONS.values():
            nxt = (r + dr, c + dc)
            if nxt in seen or not in_bounds(nxt, width, height) or nxt in obstacles:
                continue
            if nxt == goal:
                return d + 1
            seen.add(nxt)
            queue.append((nxt, d + 1))
    return None


def reachable(width: int, height: int, obstacles, start: Cell) -> set[Cell]:
    """All cells reachable from ``start`` (flood fill)."""
    seen = {start}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ACTIONS.values():
            nxt = (r + dr, c + dc)
            if nxt not in seen and in_bounds(nxt, width, height) and nxt not in obstacles:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def window_cells(pos: Cell, width: int, height: int) -> set[Cell]:
    r, c = pos
    return {(r + dr, c + dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if in_bounds((r + dr, c + dc), width, height)}


def update_obstacle_memory(memory: set, window: set, observed: set) -> set:
    """Add what was seen, forget remembered obstacles that are gone."""
    return (set(memory) | set(observed)) - (set(window) - set(observed))


@dataclass
class MazeState:
    pos: Cell
    steps: int = 0
    phase: int = 1
    known_obstacles: set = field(default_factory=set)


class MazeEnv:
    """One episode of the maze. ``known_obstacles`` is agent-side memory and
    may be carried from episode to episode."""

    def __init__(self, config: MazeConfig, phase: int = 1, start: Cell | None = None, exit: Cell | None = None,
                 known_obstacles: set | None = None, step_budget: int | None = None):
        self.config = config
        self.exit = tuple(exit) if exit is not None else config.exit
        self.step_budget = step_budget if step_budget is not None else config.width * config.height
        start = tuple(start) if start is not None else config.start
        self.state = MazeState(start, 0, phase, set(known_obstacles) if known_obstacles is not None else set())
        active = self.obstacles
        if start in active or self.exit in active:
            raise ValueError("start and exit must be free cells")
        self.observe_and_remember()

    @property
    def width(self):
        return self.config.width

    @property
    def height(self):
        return self.config.height

    @property
    def obstacles(self) -> frozenset:
        return self.config.obstacles(self.state.phase)

    @property
    def pos(self) -> Cell:
        return self.state.pos

    @property
    def at_exit(self) -> bool:
        return self.state.pos == self.exit

    @property
    def over(self) -> bool:
        return self.at_exit or self.state.steps >= self.step_budget

    def step(self, action: str) -> bool:
        """Apply one action; returns True on collision (position unchanged)."""
        if self.state.steps >= self.step_budget:
            raise EpisodeOver(f"step budget of {self.step_budget} used up")
        if action not in ACTIONS:
            raise ValueError(f"unknown action {action!r}")
        dr, dc = ACTIONS[action]
        r, c = self.state.pos
        nxt = (r + dr, c + dc)
        self.state.steps += 1
        if not in_bounds(nxt, self.width, self.height) or nxt in self.obstacles:
            return True
        self.state.pos = nxt
        return False

    def observe(self) -> set[Cell]:
        return window_cells(self.state.pos, self.width, self.height) & self.obstacles

    def observe_and_remember(self) -> set[Cell]:
        seen = self.observe()
        window = window_cells(self.state.pos, self.width, self.height)
        self.state.known_obstacles = update_obstacle_memory(self.state.known_obstacles, window, seen)
        return seen

    def move(self, action: str, times: int) -> dict:
        """Repeat ``action`` up to ``times``, stopping at the first collision."""
        if times < 1:
            raise ValueError("times must be >= 1")
        executed = 0
        collided = False
        over = False
        for _ in range(times):
            try:
                collided = self.step(action)
            except EpisodeOver:
                over = True
                break
            self.observe_and_remember()
            if collided:
                break
            executed += 1
            if self.at_exit:
                break
        result = {"Final Position": self.state.pos, "Moves Executed": executed, "Collided": collided}
        if over:
            result["Episode Over"] = True
        return result

    def render(self) -> str:
        rows = []
        for r in range(self.height):
            row = []
            for c in range(self.width):
                cell = (r, c)
                row.append("A" if cell == self.state.pos else "E" if cell == self.exit else "#" if cell in self.obstacles else ".")
            rows.append("".join(row))
        return "\n".join(rows)


def make_move_function(env_ref) -> ExternalFunction:
    """External ``move`` function bound to whatever ``env_ref()`` returns."""

    def move(action: str, times: int) -> dict:
        return env_ref().move(action, times)

    return ExternalFunction(
        move,
        name="move",
        description="Moves the agent <times: number of repeats> times in direction <action: Up, Down, Left or Right>",
        params=[
            Param("action", T.EnumOf(list(ACTIONS)), "direction to move"),
            Param("times", T.Int, "number of times to repeat the move"),
        ],
        output_fields=[("Final Position", T.Any), ("Moves Executed", T.Int), ("Collided", T.Bool)],
    )


def _random_free(rng: random.Random, width: int, height: int, blocked) -> Cell:
    while True:
        cell = (rng.randrange(height), rng.randrange(width))
        if cell not in blocked:
            return cell


def sample_endpoints(rng: random.Random, width: int, height: int, obstacles, tries: int = 1000) -> tuple[Cell, Cell]:
    """Random distinct free start and exit connected in the given layout."""
    for _ in range(tries):
        start = _random_free(rng, width, height, obstacles)
        exit_ = _random_free(rng, width, height, obstacles)
        if start != exit_ and bfs_distance(width, height, obstacles, start, exit_) is not None:
            return start, exit_
    raise UnsolvableMaze("could not place connected start and exit")


def generate_solvable_maze(width: int, height: int, density: float, seed: int, changeover_episode: int = 0,
                           max_tries: int = 200) -> MazeConfig:
    """Random obstacle layouts for both phases, each verified solvable by BFS
    from the sampled start to the sampled exit."""
    if not 0 <= density < 1:
        raise ValueError("density must be in [0, 1)")
    rng = random.Random(seed)
    cells = [(r, c) for r in range(height) for c in range(width)]
    n = int(round(density * len(cells)))
    for _ in range(max_tries):
        phase1 = frozenset(rng.sample(cells, n))
        phase2 = frozenset(rng.sample(cells, n))
        free = [c for c in cells if c not in phase1 and c not in phase2]
        if len(free) < 2:
            continue
        start = rng.choice(free)
        both = reachable(width, height, phase1, start) & reachable(width, height, phase2, start)
        both.discard(start)
        if both:
            exit_ = rng.choice(sorted(both))
            return MazeConfig(width, height, phase1, phase2, start, exit_, changeover_episode, seed)
    raise UnsolvableMaze(f"no solvable {width}x{height} layout at density {density} after {max_tries} tries")


def wall_maze(width: int, height: int, changeover_episode: int = 0, seed: int = 0) -> MazeConfig:
    """A vertical wall with a central gap, replaced by a horizontal one in phase 2."""
    mid_c, mid_r = width // 2, height // 2
    phase1 = frozenset((r, mid_c) for r in range(height) if r != mid_r)
    phase2 = frozenset((mid_r, c) for c in range(width) if c != mid_c)
    return MazeConfig(width, height, phase1, phase2, (0, 0), (height - 1, width - 1), changeover_episode, seed)
