# hrl_workbench/envs/gridworld.py

import re
from collections import deque
from dataclasses import dataclass
from typing import Any

import numpy as np

from hrl_workbench.core import Skill
from hrl_workbench.envs.base import Environment, SkillOutcome, failed

GRID_SIZE = 13  # fully observable 13x13 layouts
SKILL_TEMPLATES = (("pick", "key"), ("pick", "ball"), ("goto", "ball"), ("goto", "box"), ("unlock", "door"))
PALETTES = {
    "UnlockReach": ("red", "green", "blue", "yellow"),
    "KeyCorridorV0": ("red", "purple", "yellow", "grey"),
    "KeyCorridorV1": ("red", "purple", "yellow", "grey", "blue", "green"),
}

# right, down, left, up
DIRECTIONS = ((1, 0), (0, 1), (-1, 0), (0, -1))
AGENT_GLYPHS = ">v<^"

UNLOCK_REACH_GOAL = re.compile(r"^open the locked (\w+) door and go to the (\w+) (ball|box)$")
KEY_CORRIDOR_GOAL = re.compile(
    r"^pick up a (\w+) key, then open the \1 door and go to the (\w+) (ball|box)(?:, avoid the (\w+) and (\w+) doors)?$"
)

Cell = tuple[int, int]


@dataclass
class WorldObj:
    kind: str
    color: str
    locked: bool = False
    is_open: bool = False
    defective: bool = False

    @property
    def label(self) -> str:
        return f"{self.color}:{self.kind}"

    @property
    def glyph(self) -> str:
        if self.kind == "door":
            return "/" if self.is_open else "L"
        if self.kind == "key":
            return "X" if self.defective else "K"
        return "O" if self.kind == "ball" else "B"


def _turns(heading: int, direction: int) -> int:
    diff = (direction - heading) % 4
    return min(diff, 4 - diff)


def _region(x0: int, x1: int, y0: int, y1: int) -> list[Cell]:
    return [(x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)]


def _spaced_cells(rng: np.random.Generator, candidates: list[Cell], n: int) -> list[Cell]:
    """n cells, no two of them touching (diagonals included), so objects never wall each other in."""
    for _ in range(100):
        chosen: list[Cell] = []
        for idx in rng.permutation(len(candidates)):
            cell = candidates[int(idx)]
            if all(max(abs(cell[0] - c[0]), abs(cell[1] - c[1])) >= 2 for c in chosen):
                chosen.append(cell)
                if len(chosen) == n:
                    return chosen
    raise RuntimeError(f"could not place {n} objects in a region of {len(candidates)} cells")


class GridWorld(Environment):
    """Rooms, doors, keys, balls and boxes, driven by scripted navigate-and-interact controllers."""

    task_ids = ("UnlockReach", "KeyCorridorV0", "KeyCorridorV1")

    def __init__(self, task_id: str, **kwargs):
        self.width = self.height = GRID_SIZE
        self.skill_budget = 4 * (self.width + self.height)
        self.walls: set[Cell] = set()
        self.objects: dict[Cell, WorldObj] = {}
        self.agent_pos: Cell = (1, 1)
        self.heading = 0
        self.carrying: WorldObj | None = None
        self._door: WorldObj | None = None
        self._target: WorldObj | None = None
        self._reached = False
        super().__init__(task_id, **kwargs)

    @classmethod
    def skill_descriptions(cls, task_id: str) -> list[str]:
        return [f"{verb}:{color}:{kind}" for verb, kind in SKILL_TEMPLATES for color in PALETTES[task_id]]

    @classmethod
    def plans_for_goal(cls, goal_text: str) -> list[list[str]] | None:
        match = UNLOCK_REACH_GOAL.match(goal_text) or KEY_CORRIDOR_GOAL.match(goal_text)
        if match is None:
            return None
        door_color, target_color, target_kind = match.group(1, 2, 3)
        return [[f"pick:{door_color}:key", f"unlock:{door_color}:door", f"goto:{target_color}:{target_kind}"]]

    # --- Layouts ---
    def _build(self, goal_rng: np.random.Generator, layout_rng: np.random.Generator) -> str:
        self.walls = {(x, y) for x in range(self.width) for y in range(self.height)
                      if x in (0, self.width - 1) or y in (0, self.height - 1)}
        self.objects = {}
        self.carrying = None
        self._reached = False
        if self.task_id == "UnlockReach":
            return self._build_unlock_reach(goal_rng, layout_rng)
        return self._build_key_corridor(goal_rng, layout_rng)

    def _build_unlock_reach(self, goal_rng: np.random.Generator, layout_rng: np.random.Generator) -> str:
        palette = PALETTES[self.task_id]
        door_color = str(goal_rng.choice(palette))
        target_kind = str(goal_rng.choice(["ball", "box"]))
        target_color = str(goal_rng.choice(palette))
        spare_key = str(goal_rng.choice([c for c in palette if c != door_color]))
        ball_color = str(goal_rng.choice([c for c in palette if (c, "ball") != (target_color, target_kind)]))
        decoys = [(kind, c) for kind in ("ball", "box") for c in palette if (kind, c) != (target_kind, target_color)]
        decoy_kind, decoy_color = decoys[int(goal_rng.integers(len(decoys)))]

        mid = self.width // 2
        door_y = int(layout_rng.integers(2, self.height - 2))
        self.walls |= {(mid, y) for y in range(1, self.height - 1) if y != door_y}
        self._door = WorldObj("door", door_color, locked=True)
        self.objects[(mid, door_y)] = self._door
        fronts = {(mid - 1, door_y), (mid + 1, door_y)}

        left = [c for c in _region(1, mid - 1, 1, self.height - 2) if c not in fronts]
        right = [c for c in _region(mid + 1, self.width - 2, 1, self.height - 2) if c not in fronts]
        key_cell, spare_cell, ball_cell = _spaced_cells(layout_rng, left, 3)
        self.objects[key_cell] = WorldObj("key", door_color)
        self.objects[spare_cell] = WorldObj("key", spare_key)
        self.objects[ball_cell] = WorldObj("ball", ball_color)
        target_cell, decoy_cell = _spaced_cells(layout_rng, right, 2)
        self._target = WorldObj(target_kind, target_color)
        self.objects[target_cell] = self._target
        self.objects[decoy_cell] = WorldObj(decoy_kind, decoy_color)

        free = [c for c in left if c not in self.objects]
        self.agent_pos = free[int(layout_rng.integers(len(free)))]
        self.heading = int(layout_rng.integers(4))
        return f"open the locked {door_color} door and go to the {target_color} {target_kind}"

    def _build_key_corridor(self, goal_rng: np.random.Generator, layout_rng: np.random.Generator) -> str:
        palette = PALETTES[self.task_id]
        colors = [str(c) for c in goal_rng.permutation(palette)]
        target_color, key_color = colors[0], colors[1]
        v1 = self.task_id == "KeyCorridorV1"

        left_x, corridor_x, right_x = 5, 6, 7
        room_rows = [(1, 3), (5, 7), (9, 11)]
        for y in range(1, self.height - 1):
            self.walls.add((left_x, y))
            self.walls.add((right_x, y))
        for y in (4, 8):
            self.walls |= {(x, y) for x in range(1, left_x)} | {(x, y) for x in range(right_x + 1, self.width - 1)}

        if v1:
            avoid = colors[2:4]
            right_contents = [
                (key_color, WorldObj("ball", target_color)),
                (avoid[0], WorldObj("ball", target_color)),
                (avoid[1], WorldObj("box", colors[4])),
            ]
            keys = [WorldObj("key", key_color)] + [WorldObj("key", c, defective=True) for c in avoid]
            # one key per palette color; only the key-colored one opens a door the goal needs
            keys += [WorldObj("key", c) for c in (target_color, *colors[4:6])]
        else:
            avoid = []
            right_contents = [
                (key_color, WorldObj("ball", target_color)),
                (colors[2], WorldObj("box", target_color)),
                (colors[3], WorldObj("ball", colors[2])),
            ]
            keys = [WorldObj("key", c) for c in (key_color, colors[2], colors[3])]
        self._target = right_contents[0][1]

        for row, idx in zip(room_rows, layout_rng.permutation(3)):
            door_color, content = right_contents[int(idx)]
            door_y = (row[0] + row[1]) // 2
            self.walls.discard((right_x, door_y))
            door = WorldObj("door", door_color, locked=True)
            self.objects[(right_x, door_y)] = door
            if door_color == key_color:
                self._door = door
            room = [c for c in _region(right_x + 1, self.width - 2, *row) if c != (right_x + 1, door_y)]
            (cell,) = _spaced_cells(layout_rng, room, 1)
            self.objects[cell] = content

        order = [keys[int(i)] for i in layout_rng.permutation(len(keys))]
        capacities = [len(order) // 3] * 3
        for row, cap in zip([room_rows[int(i)] for i in layout_rng.permutation(3)], capacities):
            door_y = (row[0] + row[1]) // 2
            self.walls.discard((left_x, door_y))
            room = [c for c in _region(1, left_x - 1, *row) if c != (left_x - 1, door_y)]
            for cell in _spaced_cells(layout_rng, room, cap):
                self.objects[cell] = order.pop()

        self.agent_pos = (corridor_x, int(layout_rng.integers(1, self.height - 1)))
        self.heading = int(layout_rng.integers(4))
        text = f"pick up a {key_color} key, then open the {key_color} door and go to the {target_color} ball"
        if avoid:
            text += f", avoid the {avoid[0]} and {avoid[1]} doors"
        return text

    # --- Navigation ---
    def _passable(self, cell: Cell) -> bool:
        if cell in self.walls:
            return False
        obj = self.objects.get(cell)
        return obj is None or (obj.kind == "door" and obj.is_open)

    def _bfs(self) -> dict[Cell, Cell | None]:
        parents: dict[Cell, Cell | None] = {self.agent_pos: None}
        queue = deque([self.agent_pos])
        while queue:
            x, y = queue.popleft()
            for dx, dy in DIRECTIONS:
                nxt = (x + dx, y + dy)
                if nxt not in parents and self._passable(nxt):
                    parents[nxt] = (x, y)
                    queue.append(nxt)
        return parents

    def _path_cost(self, parents: dict[Cell, Cell | None], approach: Cell, target: Cell) -> tuple[int, int]:
        path = []
        cell = approach
        while parents[cell] is not None:
            path.append(cell)
            cell = parents[cell]
        heading, prev, cost = self.heading, self.agent_pos, 0
        for cell in reversed(path):
            direction = DIRECTIONS.index((cell[0] - prev[0], cell[1] - prev[1]))
            cost += _turns(heading, direction) + 1
            heading, prev = direction, cell
        facing = DIRECTIONS.index((target[0] - approach[0], target[1] - approach[1]))
        return cost + _turns(heading, facing), facing

    def _route(self, targets: list[Cell]) -> tuple[Cell, int, Cell, int] | None:
        """Cheapest (target, cost, approach cell, final heading) among reachable targets."""
        parents = self._bfs()
        best = None
        for target in targets:
            for dx, dy in DIRECTIONS:
                approach = (target[0] - dx, target[1] - dy)
                if approach not in parents:
                    continue
                cost, heading = self._path_cost(parents, approach, target)
                if best is None or cost < best[1]:
                    best = (target, cost, approach, heading)
        return best

    # --- Skills ---
    def _run_skill(self, skill: Skill) -> SkillOutcome:
        verb, color, kind = skill.executor_ref
        if verb == "unlock":
            return self._unlock(color)
        targets = [c for c, o in sorted(self.objects.items()) if o.kind == kind and o.color == color]
        if not targets:
            return failed("absent")
        route = self._route(targets)
        if route is None:
            return failed("unreachable")
        cell, cost, approach, heading = route
        if cost > self.skill_budget:
            return failed("budget", self.skill_budget)
        self.agent_pos, self.heading = approach, heading
        if verb == "goto":
            if self.objects[cell] is self._target:
                self._reached = True
            return SkillOutcome(completed=True, primitive_steps_used=cost)
        picked = self.objects.pop(cell)
        steps = cost + 1
        if self.carrying is not None:
            # hands are full: drop what we hold where the new item lay
            self.objects[cell] = self.carrying
            steps += 1
        self.carrying = picked
        return SkillOutcome(completed=True, primitive_steps_used=steps)

    def _unlock(self, color: str) -> SkillOutcome:
        doors = [c for c, o in sorted(self.objects.items()) if o.kind == "door" and o.color == color and o.locked]
        if not doors:
            return failed("absent")
        held = self.carrying
        if held is None or held.kind != "key" or held.color != color:
            return failed("no matching key")
        route = self._route(doors)
        if route is None:
            return failed("unreachable")
        cell, cost, approach, heading = route
        if cost + 1 > self.skill_budget:
            return failed("budget", self.skill_budget)
        self.agent_pos, self.heading = approach, heading
        if held.defective:
            return failed("defective", cost + 1)
        door = self.objects[cell]
        door.locked, door.is_open = False, True
        return SkillOutcome(completed=True, primitive_steps_used=cost + 1)

    # --- Observation and ground truth ---
    def _is_success(self) -> bool:
        return self._reached

    def _holds_working_key(self) -> bool:
        held = self.carrying
        return held is not None and held.kind == "key" and held.color == self._door.color and not held.defective

    def observation(self) -> dict[str, Any]:
        open_doors = sorted(o.color for o in self.objects.values() if o.kind == "door" and o.is_open)
        return {
            "task": self.task_id,
            "goal": self.goal.text if self.goal else "",
            "carrying": self.carrying.label if self.carrying else "none",
            "open": open_doors,
        }

    def subgoals_achieved(self) -> set[str]:
        color = self._door.color
        achieved = set()
        if self._holds_working_key():
            achieved.add(f"pick:{color}:key")
        if self._door.is_open:
            achieved.add(f"unlock:{color}:door")
        if self._reached:
            achieved.add(f"goto:{self._target.label}")
        return achieved

    def oracle_next(self) -> int:
        color = self._door.color
        if self._door.locked:
            if self._holds_working_key():
                return self.skill_id(f"unlock:{color}:door")
            return self.skill_id(f"pick:{color}:key")
        return self.skill_id(f"goto:{self._target.label}")

    def render(self) -> str:
        lines = []
        for y in range(self.height):
            row = []
            for x in range(self.width):
                cell = (x, y)
                if cell == self.agent_pos:
                    row.append(AGENT_GLYPHS[self.heading])
                elif cell in self.walls:
                    row.append("#")
                elif cell in self.objects:
                    row.append(self.objects[cell].glyph)
                else:
                    row.append(".")
            lines.append("".join(row))
        if self.goal is not None:
            lines.append(f"Goal: {self.goal.text}")
        lines.append(f"Carrying: {self.carrying.label if self.carrying else 'nothing'}")
        for (x, y), obj in sorted(self.objects.items(), key=lambda item: (item[0][1], item[0][0])):
            state = " locked" if obj.locked else " defective" if obj.defective else ""
            lines.append(f"  ({x},{y}) {obj.glyph} {obj.label}{state}")
        return "\n".join(lines)
