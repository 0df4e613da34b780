"""Top-down corridor driving with ray-cast observations.

The agent is a point with a collision radius moving at constant speed; each
action in [-1, 1] rotates the heading by ``30 * action`` degrees before the
move. Observations are the last ``k_frames`` ray scans, oldest first, with
zero frames before the episode has produced enough of them.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from samo.envs.geometry import (COLORS, DIRS, Layout, cast_rays, crosses_wall,
                                point_wall_distance, turn_dir)
from samo.errors import ConfigError, UsageError
from samo.policy import ActionSpace

STEER_DEG = 30.0
TURNS = ("left", "right", "none")


@dataclass
class Segment:
    length: int  # cells, including the junction cell at its end
    turn: str = "none"  # turn taken at the end of the segment
    color: str = "none"  # cue painted at the junction; non-"none" makes it a T-junction

    def __post_init__(self):
        if self.length < 1:
            raise ConfigError("segment length must be >= 1 cell")
        if self.turn not in TURNS:
            raise ConfigError(f"unknown turn {self.turn!r}")
        if self.color not in COLORS:
            raise ConfigError(f"unknown wall color {self.color!r}")
        if self.color != "none" and self.turn == "none":
            raise ConfigError("a colored junction needs a turn")


@dataclass
class CorridorMap:
    segments: list[Segment]
    half_width: float = 1.0
    dead_end: int = 3  # cells in the wrong branch of a colored junction

    def __post_init__(self):
        if not self.segments:
            raise ConfigError("a corridor map needs at least one segment")
        if self.segments[-1].turn != "none":
            raise ConfigError("the last segment cannot end in a turn")


def parse_map(text: str) -> CorridorMap:
    """Parse the line-based map format.

    ::

        half_width 1.0
        dead_end 3
        segment 10 right
        segment 20 left green
        segment 40 none
    """
    half_width, dead_end, segments = 1.0, 3, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "half_width":
                half_width = float(parts[1])
            elif parts[0] == "dead_end":
                dead_end = int(parts[1])
            elif parts[0] == "segment":
                segments.append(Segment(int(parts[1]), *(parts[2:4])))
            else:
                raise ConfigError(f"unknown directive {parts[0]!r}")
        except (IndexError, ValueError, TypeError) as exc:
            raise ConfigError(f"map line {lineno}: {raw.strip()!r}: {exc}") from exc
    return CorridorMap(segments, half_width, dead_end)


def format_map(cmap: CorridorMap) -> str:
    lines = [f"half_width {cmap.half_width!r}", f"dead_end {cmap.dead_end}"]
    lines += [f"segment {s.length} {s.turn} {s.color}" for s in cmap.segments]
    return "\n".join(lines) + "\n"


def load_map(path: str | Path) -> CorridorMap:
    return parse_map(Path(path).read_text())


def build_layout(cmap: CorridorMap, both_ends: bool = True) -> Layout:
    """Lay the segments out on the grid; raises ConfigError if corridors touch."""
    cell, d = (0, 0), 0
    path: list[tuple[int, int]] = []
    extra: list[tuple[int, int]] = []
    colors: dict = {}
    for seg in cmap.segments:
        for m in range(seg.length):
            if m:
                cell = (cell[0] + DIRS[d][0], cell[1] + DIRS[d][1])
            path.append(cell)
        if seg.turn == "none":
            continue
        d_new = turn_dir(d, seg.turn)
        if seg.color != "none":
            wrong = (d_new + 2) % 4
            branch = cell
            for _ in range(cmap.dead_end):
                branch = (branch[0] + DIRS[wrong][0], branch[1] + DIRS[wrong][1])
                extra.append(branch)
            cue = d_new if seg.color == "green" else wrong
            colors[(cell, d)] = seg.color
            side = (cell[0] + DIRS[cue][0], cell[1] + DIRS[cue][1])
            colors[(side, d)] = seg.color
        d = d_new
        cell = (cell[0] + DIRS[d][0], cell[1] + DIRS[d][1])
    cells = set(path) | set(extra)
    if len(cells) != len(path) + len(extra):
        raise ConfigError("corridor map overlaps itself")
    _check_no_touching(path, extra, cmap)
    spawns = [(path[0], _heading_index(path, 0))]
    if both_ends and len(path) > 1:
        spawns.append((path[-1], (_heading_index(path, len(path) - 2) + 2) % 4))
    return Layout(cmap.half_width, cells, colors, spawns)


def _heading_index(path, i) -> int:
    if len(path) == 1:
        return 0
    a, b = path[i], path[i + 1]
    return DIRS.index((b[0] - a[0], b[1] - a[1]))


def _check_no_touching(path, extra, cmap) -> None:
    linked = set()
    for a, b in zip(path, path[1:]):
        linked.add((a, b))
        linked.add((b, a))
    # dead-end branches chain from their junction
    branch_cells = iter(extra)
    junction = -1
    for seg in cmap.segments:
        junction += seg.length
        if seg.color == "none" or seg.turn == "none":
            continue
        prev = path[junction]
        for _ in range(cmap.dead_end):
            c = next(branch_cells)
            linked.add((prev, c))
            linked.add((c, prev))
            prev = c
    cells = set(path) | set(extra)
    for c in cells:
        for dx, dy in DIRS:
            n = (c[0] + dx, c[1] + dy)
            if n in cells and (c, n) not in linked:
                raise ConfigError(f"corridor cells {c} and {n} touch without being connected")


DEFAULT_CORRIDOR = CorridorMap([Segment(10, "right"), Segment(84, "left"), Segment(10, "none")])


@dataclass
class Geometry:
    speed: float = 0.5
    radius: float = 0.35
    n_rays: int = 9
    fov_deg: float = 180.0
    ray_range: float = 8.0
    spawn_heading_jitter_deg: float = 5.0
    spawn_lateral_jitter: float = 0.2


class CorridorEnv:
    """Stay-alive corridor: -1 and episode end on collision, 0 otherwise."""

    name = "corridor"
    colors = False

    def __init__(self, cmap: CorridorMap | None = None, max_steps: int = 400, k_frames: int = 10,
                 geometry: Geometry | None = None, both_ends: bool = True,
                 seed: int | None = None):
        if max_steps < 1 or k_frames < 1:
            raise ConfigError("max_steps and k_frames must be >= 1")
        self.cmap = cmap or DEFAULT_CORRIDOR
        self.geometry = geometry or Geometry()
        self.max_steps = max_steps
        self.k_frames = k_frames
        self.both_ends = both_ends
        self.layout = self._make_layout()
        self.action_space = ActionSpace("continuous", 1)
        g = self.geometry
        half = math.radians(g.fov_deg) / 2.0
        self._ray_offsets = np.linspace(-half, half, g.n_rays)
        self.rng = np.random.default_rng(seed)
        self._frames: deque = deque(maxlen=k_frames)
        self.pos = np.zeros(2)
        self.theta = 0.0
        self.t = 0
        self.done = True

    def _make_layout(self) -> Layout:
        return build_layout(self.cmap, self.both_ends)

    @property
    def frame_dim(self) -> int:
        return self.geometry.n_rays * (1 + len(COLORS) if self.colors else 1)

    @property
    def obs_dim(self) -> int:
        return self.frame_dim * self.k_frames

    @property
    def pose(self) -> tuple[float, float, float]:
        return float(self.pos[0]), float(self.pos[1]), float(self.theta)

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self._on_reset()
        g = self.geometry
        cell, d = self.layout.spawns[int(self.rng.integers(len(self.layout.spawns)))]
        heading = math.atan2(DIRS[d][1], DIRS[d][0])
        lateral = self.rng.uniform(-g.spawn_lateral_jitter, g.spawn_lateral_jitter)
        self.theta = heading + math.radians(
            self.rng.uniform(-g.spawn_heading_jitter_deg, g.spawn_heading_jitter_deg))
        normal = np.array([-DIRS[d][1], DIRS[d][0]], dtype=np.float64)
        self.pos = self.layout.center(cell) + lateral * normal
        self.t = 0
        self.done = False
        self._frames.clear()
        for _ in range(self.k_frames - 1):
            self._frames.append(np.zeros(self.frame_dim))
        self._frames.append(self._scan())
        return self._observe()

    def _on_reset(self) -> None:
        pass

    def _scan(self) -> np.ndarray:
        g = self.geometry
        dist, color = cast_rays(self.layout, self.pos, self.theta + self._ray_offsets, g.ray_range)
        dist = dist / g.ray_range
        if not self.colors:
            return dist
        onehot = np.eye(len(COLORS))[color]
        return np.concatenate([dist[:, None], onehot], axis=1).ravel()

    def _observe(self) -> np.ndarray:
        return np.concatenate(self._frames)

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        if self.done:
            raise UsageError("step() called on a finished episode; call reset()")
        a = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0], -1.0, 1.0))
        g = self.geometry
        self.theta = _wrap(self.theta + math.radians(STEER_DEG) * a)
        new = self.pos + g.speed * np.array([math.cos(self.theta), math.sin(self.theta)])
        collided = (crosses_wall(self.layout, self.pos, new)
                    or point_wall_distance(self.layout, new) < g.radius)
        self.pos = new
        self.t += 1
        self._frames.append(self._scan())
        if collided:
            return self._finish(-1.0, "failure")
        outcome = self._zone_outcome()
        if outcome is not None:
            return self._finish(*outcome)
        if self.t >= self.max_steps:
            return self._finish(0.0, "cap")
        return self._observe(), 0.0, False, {"outcome": None}

    def _zone_outcome(self) -> tuple[float, str] | None:
        return None

    def _finish(self, reward: float, outcome: str):
        self.done = True
        return self._observe(), reward, True, {"outcome": outcome}


def _wrap(theta: float) -> float:
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


class ColorCorridorEnv(CorridorEnv):
    """T-junctions with a colored cue wall; a fresh random layout each episode.

    Green paints the correct branch side, red paints the dead-end side.
    Each ray reports distance plus a one-hot of the wall color it hit.
    """

    name = "color_corridor"
    colors = True

    def __init__(self, cmap: CorridorMap | None = None, n_junctions: int = 3,
                 seg_range: tuple[int, int] = (6, 10), final_length: int = 80, **kw):
        self.fixed_map = cmap
        self.n_junctions = n_junctions
        self.seg_range = seg_range
        self.final_length = final_length
        kw.setdefault("both_ends", False)
        super().__init__(cmap or _placeholder_color_map(), **kw)

    def _on_reset(self) -> None:
        if self.fixed_map is not None:
            return
        for _ in range(1000):
            segs = []
            for _ in range(self.n_junctions):
                length = int(self.rng.integers(self.seg_range[0], self.seg_range[1] + 1))
                turn = ("left", "right")[int(self.rng.integers(2))]
                color = ("green", "red")[int(self.rng.integers(2))]
                segs.append(Segment(length, turn, color))
            segs.append(Segment(self.final_length, "none"))
            cmap = CorridorMap(segs, self.cmap.half_width, self.cmap.dead_end)
            try:
                self.layout = build_layout(cmap, both_ends=False)
            except ConfigError:
                continue
            self.cmap = cmap
            return
        raise ConfigError("could not generate a non-overlapping color corridor")


def _placeholder_color_map() -> CorridorMap:
    return CorridorMap([Segment(8, "right", "green"), Segment(8, "left", "red"),
                        Segment(8, "right", "green"), Segment(80, "none")])


INSTRUCTIONS = ("left", "center", "right")


def goal_layout(entry: int = 4, branch: int = 3, center: int = 3, half_width: float = 1.0) -> Layout:
    """Entry corridor heading east with a left branch, then a right branch, then the center run."""
    left_x, right_x = entry, entry + 2
    cells = {(x, 0) for x in range(right_x + center + 1)}
    zones: dict = {}
    for m in range(1, branch + 1):
        cells.add((left_x, m))
        zones[(left_x, m)] = ("left", m == branch)
        cells.add((right_x, -m))
        zones[(right_x, -m)] = ("right", m == branch)
    for m in range(1, center + 1):
        zones[(right_x + m, 0)] = ("center", m == center)
    return Layout(half_width, cells, {}, [((0, 0), 0)], zones)


class GoalCorridorEnv(CorridorEnv):
    """Instruction-conditioned corridor choice.

    Rewards: +1 on reaching the instructed corridor's goal cell, -0.5 on
    entering another corridor, -1 on collision, 0 otherwise. The instruction
    one-hot (left, center, right) is appended to every observation.
    """

    name = "goal_corridor"

    def __init__(self, max_steps: int = 100, k_frames: int = 20, **kw):
        kw.setdefault("both_ends", False)
        self.instruction = 0
        super().__init__(None, max_steps=max_steps, k_frames=k_frames, **kw)

    def _make_layout(self) -> Layout:
        return goal_layout()

    @property
    def obs_dim(self) -> int:
        return self.frame_dim * self.k_frames + len(INSTRUCTIONS)

    def _on_reset(self) -> None:
        self.instruction = int(self.rng.integers(len(INSTRUCTIONS)))

    def _observe(self) -> np.ndarray:
        onehot = np.zeros(len(INSTRUCTIONS))
        onehot[self.instruction] = 1.0
        return np.concatenate([*self._frames, onehot])

    def _zone_outcome(self):
        zone = self.layout.zones.get(self.layout.cell_of(*self.pos))
        if zone is None:
            return None
        corridor, is_goal = zone
        if corridor != INSTRUCTIONS[self.instruction]:
            return -0.5, "wrong_corridor"
        if is_goal:
            return 1.0, "goal"
        return None
