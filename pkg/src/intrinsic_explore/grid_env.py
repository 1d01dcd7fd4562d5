"""Procedurally generated sparse-reward gridworlds with egocentric partial views.

Three layouts are available, selected by name:

* ``multiroom-n3-s4``: three 2x2 rooms chained by closed (unlocked) doors,
  goal tile in the last room.
* ``doorkey-8x8``: two rooms split by a wall with a locked door; the key lies
  next to the agent, the goal behind the door.
* ``keycorridor-s3r1``: five-cell corridor, key behind a closed door on one
  side, ball behind a locked door on the other.

The grid is stored as two small integer arrays (object kind and door state),
indexed ``[row, col]``.  Positions are ``(col, row)`` tuples.  Headings follow
the usual screen convention: 0 = right, 1 = down, 2 = left, 3 = up.

Layouts are a deterministic function of ``(env_kind, seed)``; the generator is
numpy's PCG64 seeded through ``SeedSequence``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, GenerationError, UsageError

VIEW_SIZE = 7
NUM_KINDS = 11
NUM_STATES = 3
OBS_SHAPE = (VIEW_SIZE, VIEW_SIZE, NUM_KINDS, NUM_STATES)
OBS_DIM = VIEW_SIZE * VIEW_SIZE * NUM_KINDS * NUM_STATES  # 1617
MAX_GENERATION_ATTEMPTS = 1000


class Kind(IntEnum):
    UNSEEN = 0
    EMPTY = 1
    WALL = 2
    FLOOR = 3
    DOOR = 4
    KEY = 5
    BALL = 6
    BOX = 7
    GOAL = 8
    LAVA = 9
    AGENT = 10


class DoorState(IntEnum):
    OPEN = 0
    CLOSED = 1
    LOCKED = 2


class Action(IntEnum):
    LEFT = 0
    RIGHT = 1
    FORWARD = 2
    PICKUP = 3
    DROP = 4
    TOGGLE = 5
    DONE = 6


NUM_ACTIONS = len(Action)


class EnvKind(str, Enum):
    MULTIROOM = "multiroom-n3-s4"
    DOORKEY = "doorkey-8x8"
    KEYCORRIDOR = "keycorridor-s3r1"

    @classmethod
    def parse(cls, name: "str | EnvKind") -> "EnvKind":
        try:
            return cls(name)
        except ValueError:
            known = ", ".join(k.value for k in cls)
            raise ConfigurationError(f"unknown env_kind {name!r}; expected one of {known}") from None


# 20 * rooms, 10 * size**2, 30 * size**2
DEFAULT_MAX_STEPS = {
    EnvKind.MULTIROOM: 60,
    EnvKind.DOORKEY: 640,
    EnvKind.KEYCORRIDOR: 270,
}

DIR_TO_VEC = ((1, 0), (0, 1), (-1, 0), (0, -1))

# Plain ints: IntEnum attribute access is slow in the per-frame path.
_UNSEEN, _EMPTY, _WALL, _DOOR, _KEY, _BALL, _GOAL, _LAVA = (
    int(k) for k in (Kind.UNSEEN, Kind.EMPTY, Kind.WALL, Kind.DOOR, Kind.KEY, Kind.BALL, Kind.GOAL, Kind.LAVA))
_OPEN, _CLOSED, _LOCKED = int(DoorState.OPEN), int(DoorState.CLOSED), int(DoorState.LOCKED)
_WALKABLE_KINDS = frozenset(int(k) for k in (Kind.EMPTY, Kind.FLOOR, Kind.GOAL, Kind.LAVA))
_PICKABLE_KINDS = frozenset(int(k) for k in (Kind.KEY, Kind.BALL, Kind.BOX))


class Cell(NamedTuple):
    kind: int
    state: int = 0


@dataclass
class Observation:
    """Egocentric 7x7 view; the agent sits at ``[6, 3]`` facing row 0."""

    kinds: np.ndarray
    states: np.ndarray

    def cell(self, row: int, col: int) -> Cell:
        return Cell(int(self.kinds[row, col]), int(self.states[row, col]))


@dataclass
class EnvState:
    kinds: np.ndarray
    states: np.ndarray
    agent_pos: tuple[int, int]
    agent_dir: int
    env_kind: EnvKind
    max_steps: int
    rng: np.random.Generator = field(repr=False)
    carrying: Cell | None = None
    step_count: int = 0
    done: bool = False

    @property
    def width(self) -> int:
        return self.kinds.shape[1]

    @property
    def height(self) -> int:
        return self.kinds.shape[0]

    def cell(self, x: int, y: int) -> Cell:
        return Cell(int(self.kinds[y, x]), int(self.states[y, x]))

    def front_pos(self) -> tuple[int, int]:
        dx, dy = DIR_TO_VEC[self.agent_dir]
        return self.agent_pos[0] + dx, self.agent_pos[1] + dy

    def copy(self) -> "EnvState":
        # The rng is shared; it is only consumed during generation.
        return EnvState(
            kinds=self.kinds.copy(),
            states=self.states.copy(),
            agent_pos=self.agent_pos,
            agent_dir=self.agent_dir,
            env_kind=self.env_kind,
            max_steps=self.max_steps,
            rng=self.rng,
            carrying=self.carrying,
            step_count=self.step_count,
            done=self.done,
        )

    def key(self) -> tuple:
        """Hashable snapshot of everything that influences future transitions."""
        return (
            self.kinds.tobytes(),
            self.states.tobytes(),
            self.agent_pos,
            self.agent_dir,
            self.carrying,
        )


def _walled_box(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    kinds = np.full((height, width), Kind.EMPTY, dtype=np.int8)
    kinds[0, :] = kinds[-1, :] = Kind.WALL
    kinds[:, 0] = kinds[:, -1] = Kind.WALL
    return kinds, np.zeros((height, width), dtype=np.int8)


def _new_state(kinds, states, pos, direction, env_kind, rng, max_steps) -> EnvState:
    return EnvState(
        kinds=kinds,
        states=states,
        agent_pos=(int(pos[0]), int(pos[1])),
        agent_dir=int(direction),
        env_kind=env_kind,
        max_steps=max_steps if max_steps is not None else DEFAULT_MAX_STEPS[env_kind],
        rng=rng,
    )


# --------------------------------------------------------------------------
# Layout generators


@dataclass(frozen=True)
class _Room:
    x: int
    y: int
    size: int = 4

    def contains(self, px: int, py: int) -> bool:
        return self.x <= px < self.x + self.size and self.y <= py < self.y + self.size

    def overlaps(self, other: "_Room") -> bool:
        return not (
            self.x + self.size <= other.x
            or other.x + other.size <= self.x
            or self.y + self.size <= other.y
            or other.y + other.size <= self.y
        )

    def interior(self) -> list[tuple[int, int]]:
        return [(x, y) for y in range(self.y + 1, self.y + self.size - 1)
                for x in range(self.x + 1, self.x + self.size - 1)]


def _try_multiroom(rng: np.random.Generator, grid_size: int, num_rooms: int, room_size: int):
    first = _Room(int(rng.integers(0, grid_size - room_size + 1)),
                  int(rng.integers(0, grid_size - room_size + 1)), room_size)
    rooms = [first]
    doors: list[tuple[int, int]] = []
    entry_side = None
    for _ in range(num_rooms - 1):
        prev = rooms[-1]
        sides = [s for s in range(4) if s != entry_side]
        side = sides[int(rng.integers(0, len(sides)))]
        along = int(rng.integers(1, room_size - 1))
        offset = int(rng.integers(1, room_size - 1))
        last = room_size - 1
        # side: 0 = right wall, 1 = bottom wall, 2 = left wall, 3 = top wall
        if side == 0:
            door = (prev.x + last, prev.y + along)
            new = _Room(door[0], door[1] - offset, room_size)
        elif side == 1:
            door = (prev.x + along, prev.y + last)
            new = _Room(door[0] - offset, door[1], room_size)
        elif side == 2:
            door = (prev.x, prev.y + along)
            new = _Room(door[0] - last, door[1] - offset, room_size)
        else:
            door = (prev.x + along, prev.y)
            new = _Room(door[0] - offset, door[1] - last, room_size)
        if new.x < 0 or new.y < 0 or new.x + room_size > grid_size or new.y + room_size > grid_size:
            return None
        # The new room may only touch its predecessor, along the door wall.
        if any(new.overlaps(r) for r in rooms[:-1]):
            return None
        if any(new.contains(*d) for d in doors):
            return None
        rooms.append(new)
        doors.append(door)
        entry_side = (side + 2) % 4
    return rooms, doors


def generate_multiroom(rng: np.random.Generator, max_steps: int | None = None,
                       grid_size: int = 25, num_rooms: int = 3, room_size: int = 4) -> EnvState:
    """Chain of ``num_rooms`` square rooms joined by closed doors.

    The agent starts in the first room and the goal lies in the last one.
    """
    for _ in range(MAX_GENERATION_ATTEMPTS):
        placed = _try_multiroom(rng, grid_size, num_rooms, room_size)
        if placed is not None:
            break
    else:
        raise GenerationError("multiroom: no valid room chain found")
    rooms, doors = placed

    kinds = np.full((grid_size, grid_size), Kind.WALL, dtype=np.int8)
    states = np.zeros_like(kinds)
    for room in rooms:
        for x, y in room.interior():
            kinds[y, x] = Kind.EMPTY
    for x, y in doors:
        kinds[y, x] = Kind.DOOR
        states[y, x] = DoorState.CLOSED

    start_cells = rooms[0].interior()
    pos = start_cells[int(rng.integers(0, len(start_cells)))]
    goal_cells = rooms[-1].interior()
    gx, gy = goal_cells[int(rng.integers(0, len(goal_cells)))]
    kinds[gy, gx] = Kind.GOAL
    direction = int(rng.integers(0, 4))
    return _new_state(kinds, states, pos, direction, EnvKind.MULTIROOM, rng, max_steps)


def _pick(rng: np.random.Generator, cells: list[tuple[int, int]], taken: set) -> tuple[int, int]:
    for _ in range(MAX_GENERATION_ATTEMPTS):
        cell = cells[int(rng.integers(0, len(cells)))]
        if cell not in taken:
            return cell
    raise GenerationError("no free cell found")


def generate_doorkey(rng: np.random.Generator, max_steps: int | None = None, size: int = 8) -> EnvState:
    kinds, states = _walled_box(size, size)
    split = int(rng.integers(2, size - 2))
    kinds[:, split] = Kind.WALL
    door_row = int(rng.integers(1, size - 1))
    kinds[door_row, split] = Kind.DOOR
    states[door_row, split] = DoorState.LOCKED

    left = [(x, y) for y in range(1, size - 1) for x in range(1, split)]
    right = [(x, y) for y in range(1, size - 1) for x in range(split + 1, size - 1)]
    pos = _pick(rng, left, set())
    key = _pick(rng, left, {pos})
    kinds[key[1], key[0]] = Kind.KEY
    goal = _pick(rng, right, set())
    kinds[goal[1], goal[0]] = Kind.GOAL
    direction = int(rng.integers(0, 4))
    return _new_state(kinds, states, pos, direction, EnvKind.DOORKEY, rng, max_steps)


def generate_keycorridor(rng: np.random.Generator, max_steps: int | None = None) -> EnvState:
    """Corridor of five cells: key room, door, agent, locked door, ball room.

    The layout is mirrored left/right at random.
    """
    kinds, states = _walled_box(7, 3)
    row = [Kind.KEY, Kind.DOOR, Kind.EMPTY, Kind.DOOR, Kind.BALL]
    door_states = [0, DoorState.CLOSED, 0, DoorState.LOCKED, 0]
    if rng.integers(0, 2):
        row.reverse()
        door_states.reverse()
    for i, (k, s) in enumerate(zip(row, door_states)):
        kinds[1, 1 + i] = k
        states[1, 1 + i] = s
    direction = int(rng.integers(0, 4))
    return _new_state(kinds, states, (3, 1), direction, EnvKind.KEYCORRIDOR, rng, max_steps)


_GENERATORS = {
    EnvKind.MULTIROOM: generate_multiroom,
    EnvKind.DOORKEY: generate_doorkey,
    EnvKind.KEYCORRIDOR: generate_keycorridor,
}


# --------------------------------------------------------------------------
# Dynamics


def reset(env_kind: "str | EnvKind", seed: int, max_steps: int | None = None) -> tuple[EnvState, Observation]:
    kind = EnvKind.parse(env_kind)
    rng = np.random.default_rng(seed)
    state = _GENERATORS[kind](rng, max_steps=max_steps)
    return state, egocentric_view(state)


def _goal_event_pickup(state: EnvState, kind: int) -> bool:
    return kind == _BALL and state.env_kind is EnvKind.KEYCORRIDOR


def step(state: EnvState, action: "int | Action") -> tuple[EnvState, Observation, float, bool]:
    """Advance ``state`` in place by one action."""
    reward = _transition(state, action)
    return state, egocentric_view(state), reward, state.done


_LEFT, _RIGHT, _FORWARD, _PICKUP, _DROP, _TOGGLE = range(6)


def _transition(state: EnvState, action: "int | Action") -> float:
    if state.done:
        raise UsageError("step() called on a terminated episode; call reset() first")
    action = int(action)
    if not 0 <= action < NUM_ACTIONS:
        raise UsageError(f"invalid action {action}")

    state.step_count += 1
    goal = False
    fx, fy = state.front_pos()
    in_bounds = 0 <= fx < state.width and 0 <= fy < state.height
    fkind = int(state.kinds[fy, fx]) if in_bounds else _WALL
    fstate = int(state.states[fy, fx]) if in_bounds else 0

    if action == _LEFT:
        state.agent_dir = (state.agent_dir - 1) % 4
    elif action == _RIGHT:
        state.agent_dir = (state.agent_dir + 1) % 4
    elif action == _FORWARD:
        if fkind in _WALKABLE_KINDS or (fkind == _DOOR and fstate == _OPEN):
            state.agent_pos = (fx, fy)
            if fkind == _GOAL:
                goal = True
            elif fkind == _LAVA:
                state.done = True
    elif action == _PICKUP:
        if fkind in _PICKABLE_KINDS and state.carrying is None:
            state.carrying = Cell(fkind, 0)
            state.kinds[fy, fx] = _EMPTY
            goal = _goal_event_pickup(state, fkind)
    elif action == _DROP:
        if state.carrying is not None and fkind == _EMPTY and in_bounds:
            state.kinds[fy, fx] = state.carrying.kind
            state.states[fy, fx] = 0
            state.carrying = None
    elif action == _TOGGLE:
        if fkind == _DOOR:
            if fstate == _LOCKED:
                if state.carrying is not None and state.carrying.kind == _KEY:
                    state.states[fy, fx] = _OPEN
            elif fstate == _CLOSED:
                state.states[fy, fx] = _OPEN
            else:
                state.states[fy, fx] = _CLOSED
    # DONE is a no-op.

    if goal:
        state.done = True
    if state.step_count >= state.max_steps:
        state.done = True
    return 1.0 if goal else 0.0


# --------------------------------------------------------------------------
# Observation


_VIEW_AHEAD = (VIEW_SIZE - 1 - np.arange(VIEW_SIZE))[:, None]
_VIEW_LATERAL = (np.arange(VIEW_SIZE) - VIEW_SIZE // 2)[None, :]
_VIEW_ORIGIN = (VIEW_SIZE - 1, VIEW_SIZE // 2)
_EIGHT_NEIGHBOURS = np.ones((3, 3), dtype=bool)


def egocentric_view(state: EnvState) -> Observation:
    """7x7 window in front of the agent with flood-fill occlusion.

    Transparent cells reachable from the agent cell through 4-connected
    transparent cells are visible, together with every cell 8-adjacent to one
    of them (so walls and closed doors bounding the visible area show up).
    Walls and closed or locked doors are opaque; cells off the map are unseen.
    """
    fdx, fdy = DIR_TO_VEC[state.agent_dir]
    rdx, rdy = DIR_TO_VEC[(state.agent_dir + 1) % 4]
    ax, ay = state.agent_pos
    xs = ax + _VIEW_AHEAD * fdx + _VIEW_LATERAL * rdx
    ys = ay + _VIEW_AHEAD * fdy + _VIEW_LATERAL * rdy
    inside = (xs >= 0) & (xs < state.width) & (ys >= 0) & (ys < state.height)
    xc = np.clip(xs, 0, state.width - 1)
    yc = np.clip(ys, 0, state.height - 1)
    raw_kinds = state.kinds[yc, xc]
    raw_states = state.states[yc, xc]

    # The agent's own cell shows what it carries, else what it stands on.
    if state.carrying is not None:
        raw_kinds[_VIEW_ORIGIN] = state.carrying.kind
        raw_states[_VIEW_ORIGIN] = state.carrying.state

    opaque = (raw_kinds == _WALL) | ((raw_kinds == _DOOR) & (raw_states != _OPEN))
    transparent = inside & ~opaque
    transparent[_VIEW_ORIGIN] = True
    labels, _ = ndimage.label(transparent)
    reached = labels == labels[_VIEW_ORIGIN]
    visible = ndimage.binary_dilation(reached, structure=_EIGHT_NEIGHBOURS) & inside
    kinds = np.where(visible, raw_kinds, _UNSEEN).astype(np.int8)
    states = np.where(visible, raw_states, 0).astype(np.int8)
    return Observation(kinds=kinds, states=states)


_CELL_OFFSETS = np.arange(VIEW_SIZE * VIEW_SIZE) * (NUM_KINDS * NUM_STATES)


def encode_binary(obs: Observation) -> np.ndarray:
    """One-hot ``[i, j, k, l]`` encoding of an observation (colors dropped)."""
    bits = np.zeros(OBS_SHAPE, dtype=np.uint8)
    i, j = np.indices((VIEW_SIZE, VIEW_SIZE))
    bits[i, j, obs.kinds, obs.states] = 1
    return bits


def encode_flat(obs: Observation) -> np.ndarray:
    """``encode_binary(obs).ravel()`` as float64, computed without the 4-D detour."""
    x = np.zeros(OBS_DIM)
    x[_CELL_OFFSETS + obs.kinds.ravel().astype(np.intp) * NUM_STATES + obs.states.ravel()] = 1.0
    return x


# --------------------------------------------------------------------------
# Solver and rendering


_SOLVER_ACTIONS = (Action.LEFT, Action.RIGHT, Action.FORWARD, Action.PICKUP, Action.DROP, Action.TOGGLE)


def solve_bfs(state: EnvState) -> list[Action] | None:
    """Shortest goal-reaching action sequence within the step cap, or None.

    DONE is a no-op apart from consuming a step, so it is left out of the
    search.
    """
    start = state.copy()
    seen = {start.key()}
    frontier = deque([(start, ())])
    while frontier:
        node, path = frontier.popleft()
        if node.done:
            continue
        for action in _SOLVER_ACTIONS:
            child = node.copy()
            reward = _transition(child, action)
            if reward > 0:
                return list(path) + [action]
            k = child.key()
            if k in seen:
                continue
            seen.add(k)
            frontier.append((child, path + (action,)))
    return None


_GLYPHS = {
    Kind.UNSEEN: "?",
    Kind.EMPTY: ".",
    Kind.WALL: "#",
    Kind.FLOOR: "_",
    Kind.KEY: "k",
    Kind.BALL: "o",
    Kind.BOX: "x",
    Kind.GOAL: "G",
    Kind.LAVA: "~",
    Kind.AGENT: "A",
}
_DOOR_GLYPHS = {DoorState.OPEN: "/", DoorState.CLOSED: "+", DoorState.LOCKED: "L"}
_AGENT_GLYPHS = ">v<^"


def _glyph(kind: int, door_state: int) -> str:
    if kind == Kind.DOOR:
        return _DOOR_GLYPHS[DoorState(door_state)]
    return _GLYPHS[Kind(kind)]


def render_grid(state: EnvState) -> str:
    rows = []
    for y in range(state.height):
        line = [_glyph(state.kinds[y, x], state.states[y, x]) for x in range(state.width)]
        if y == state.agent_pos[1]:
            line[state.agent_pos[0]] = _AGENT_GLYPHS[state.agent_dir]
        rows.append("".join(line))
    return "\n".join(rows)


def render_view(obs: Observation) -> str:
    rows = []
    for r in range(VIEW_SIZE):
        line = [_glyph(obs.kinds[r, c], obs.states[r, c]) for c in range(VIEW_SIZE)]
        if r == VIEW_SIZE - 1:
            line[VIEW_SIZE // 2] = "^"
        rows.append("".join(line))
    return "\n".join(rows)


class GridEnv:
    """Stateful wrapper: ``reset(seed)`` then ``step(action)`` until done."""

    def __init__(self, env_kind: "str | EnvKind", max_steps: int | None = None):
        self.env_kind = EnvKind.parse(env_kind)
        self.max_steps = max_steps
        self.state: EnvState | None = None

    def reset(self, seed: int) -> Observation:
        self.state, obs = reset(self.env_kind, seed, self.max_steps)
        return obs

    def step(self, action: "int | Action") -> tuple[Observation, float, bool]:
        if self.state is None:
            raise UsageError("reset() must be called before step()")
        _, obs, reward, done = step(self.state, action)
        return obs, reward, done

    def render(self) -> str:
        if self.state is None:
            return ""
        return render_grid(self.state) + "\n\n" + render_view(egocentric_view(self.state))
