"""Built-in object-centric toy environments with dual observations.

Each env exposes a stacked multi-channel occupancy grid (raw observation)
and an object-centric matrix (one row per object slot) that stay cell-level
consistent. Modification flags mirror the robustness toggles used for
evaluation: removed enemies, relocated ladders, randomized starts, disabled
coconuts, and eval-time objectness noise.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .valuation import N_COLUMNS, OBJ, ObjectState

ENV_NAMES = ("mini-kangaroo", "mini-seaquest")
FRAME_STACK = 4


class EnvSpecError(ValueError):
    pass


class EpisodeDone(RuntimeError):
    """step() called on a finished episode."""


@dataclass(frozen=True)
class Modification:
    no_enemies: bool = False
    relocated_ladders: bool = False
    random_position: bool = False
    disable_falling_coconut: bool = False
    objectness_noise_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.objectness_noise_rate <= 0.5:
            raise EnvSpecError(
                f"objectness_noise_rate {self.objectness_noise_rate} outside [0, 0.5]"
            )

    @classmethod
    def from_names(cls, names, noise: float = 0.0) -> "Modification":
        flags = {}
        for name in names:
            key = name.strip().replace("-", "_")
            if not key:
                continue
            if key not in cls.__dataclass_fields__ or key == "objectness_noise_rate":
                raise EnvSpecError(f"unknown modification flag {name!r}")
            flags[key] = True
        return cls(objectness_noise_rate=noise, **flags)

    def names(self) -> list[str]:
        return [
            k for k in ("no_enemies", "relocated_ladders", "random_position",
                        "disable_falling_coconut")
            if getattr(self, k)
        ]


@dataclass(frozen=True)
class EnvSpec:
    name: str
    width: int = 16
    height: int = 12
    max_steps: int = 512
    mods: Modification = field(default_factory=Modification)
    seed: int = 0

    def __post_init__(self):
        if self.name not in ENV_NAMES:
            raise EnvSpecError(f"unknown env {self.name!r}; choose from {ENV_NAMES}")


def apply_objectness_noise(z: ObjectState, rate: float, rng) -> ObjectState:
    """Zero each non-player row's objectness independently with prob ``rate``."""
    if not 0.0 <= rate <= 0.5:
        raise EnvSpecError(f"noise rate {rate} outside [0, 0.5]")
    if rate == 0.0:
        return z
    data = z.data.clone()
    for row, name in enumerate(z.slot_types):
        if name == "player":
            continue
        if rng.random() < rate:
            data[row, OBJ] = 0.0
    return ObjectState(data, z.slot_types)


class ToyEnv:
    """Shared frame-stack/bookkeeping layer for the two toy games."""

    action_names: tuple[str, ...] = ()
    channel_names: tuple[str, ...] = ()
    slot_types: tuple[str, ...] = ()

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self.W, self.H = spec.width, spec.height
        self.rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
        self.frames: deque = deque(maxlen=FRAME_STACK)
        self.steps = 0
        self.done = True
        self.last_event = ""  # terminal cause: goal/hazard/timeout, for telemetry

    # -- observation plumbing ------------------------------------------------

    def _raw_obs(self) -> torch.Tensor:
        return torch.stack(tuple(self.frames), dim=0)

    def _push_frame(self):
        frame = torch.zeros((self.W, self.H, len(self.channel_names)),
                            dtype=torch.float64)
        self._render(frame)
        self.frames.append(frame)

    def _observe(self):
        self._push_frame()
        z = self._object_state()
        rate = self.spec.mods.objectness_noise_rate
        if rate > 0.0:
            z = apply_objectness_noise(z, rate, self.rng)
        return self._raw_obs(), z

    def reset(self):
        self.steps = 0
        self.done = False
        self._reset_entities()
        self.frames.clear()
        first = torch.zeros((self.W, self.H, len(self.channel_names)),
                            dtype=torch.float64)
        self._render(first)
        for _ in range(FRAME_STACK):
            self.frames.append(first.clone())
        z = self._object_state()
        rate = self.spec.mods.objectness_noise_rate
        if rate > 0.0:
            z = apply_objectness_noise(z, rate, self.rng)
        return self._raw_obs(), z

    def step(self, action: int):
        if self.done:
            raise EpisodeDone("step() after episode end; call reset()")
        if not 0 <= int(action) < len(self.action_names):
            raise ValueError(f"action {action} outside the action set")
        reward, done = self._advance(int(action))
        self.steps += 1
        if not done and self.steps >= self.spec.max_steps:
            done = True
            self.last_event = "timeout"
        self.done = done
        raw, z = self._observe()
        return raw, z, float(reward), done

    # -- snapshot support ----------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "steps": self.steps,
            "done": self.done,
            "rng": self.rng.bit_generator.state,
            "frames": [self._sparse(f) for f in self.frames],
            "entities": self._entity_state(),
        }

    def load_state_dict(self, state: dict):
        self.steps = state["steps"]
        self.done = state["done"]
        self.rng.bit_generator.state = state["rng"]
        self.frames.clear()
        for cells in state["frames"]:
            frame = torch.zeros((self.W, self.H, len(self.channel_names)),
                                dtype=torch.float64)
            for x, y, c in cells:
                frame[x, y, c] = 1.0
            self.frames.append(frame)
        self._load_entity_state(state["entities"])

    @staticmethod
    def _sparse(frame) -> list:
        return [[int(x), int(y), int(c)] for x, y, c in frame.nonzero().tolist()]

    # subclass hooks
    def _reset_entities(self): raise NotImplementedError
    def _advance(self, action: int): raise NotImplementedError
    def _render(self, frame): raise NotImplementedError
    def _object_state(self) -> ObjectState: raise NotImplementedError
    def _entity_state(self) -> dict: raise NotImplementedError
    def _load_entity_state(self, state: dict): raise NotImplementedError


class MiniKangaroo(ToyEnv):
    """Climb three ladder floors to the joey while monkeys close in and
    coconuts fall on a fixed column schedule."""

    action_names = ("noop", "left", "right", "up", "down", "punch")
    channel_names = ("player", "ladder", "monkey", "coconut", "joey")
    slot_types = ("player", "ladder1", "ladder2", "ladder3",
                  "monkey1", "monkey2", "coconut1", "joey1")

    FLOORS = (11, 8, 5, 2)          # walkable rows, bottom to top
    DEFAULT_LADDER_COLS = (11, 4, 8)
    START = (8, 11)
    MONKEY_HOMES = ((15, 8), (12, 5))
    MONKEY_RESPAWN = 60
    MONKEY_AGGRO = 3                # chase the player within this many columns
    PUNCH_REACH = 2
    COCONUT_COLS = (14, 1, 6, 13)
    COCONUT_PERIOD = 48
    JOEY = (8, 2)

    def __init__(self, spec: EnvSpec):
        if spec.name != "mini-kangaroo":
            raise EnvSpecError("spec is not for mini-kangaroo")
        if (spec.width, spec.height) != (16, 12):
            raise EnvSpecError("mini-kangaroo floor layout requires a 16x12 grid")
        super().__init__(spec)

    # ladders: index k spans rows FLOORS[k+1]+1 .. FLOORS[k] in one column
    def _rungs(self, k: int) -> range:
        return range(self.FLOORS[k + 1] + 1, self.FLOORS[k] + 1)

    def _ladder_at(self, x: int, y: int):
        for k, col in enumerate(self.ladder_cols):
            if x == col and y in self._rungs(k):
                return k
        return None

    def _reset_entities(self):
        if self.spec.mods.relocated_ladders:
            perm = self.rng.permutation(len(self.DEFAULT_LADDER_COLS))
            self.ladder_cols = tuple(self.DEFAULT_LADDER_COLS[i] for i in perm)
        else:
            self.ladder_cols = self.DEFAULT_LADDER_COLS
        if self.spec.mods.random_position:
            px = int(self.rng.integers(0, self.W))
        else:
            px = self.START[0]
        self.player = [px, self.FLOORS[0]]
        self.player_ori = 0
        self.monkeys = []
        for hx, hy in self.MONKEY_HOMES:
            self.monkeys.append({
                "x": hx, "y": hy, "alive": not self.spec.mods.no_enemies,
                "ori": 0, "timer": 0,
            })
        self.coconut = {"x": 0, "y": 0, "active": False}
        self.coconut_cycle = 0

    def _advance(self, action: int):
        reward = 0.0
        px, py = self.player
        name = self.action_names[action]
        on_floor = py in self.FLOORS

        if name == "left" and on_floor:
            px = max(0, px - 1)
            self.player_ori = -1
        elif name == "right" and on_floor:
            px = min(self.W - 1, px + 1)
            self.player_ori = 1
        elif name == "up":
            if self._ladder_at(px, py) is not None:
                py -= 1
        elif name == "down":
            if self._ladder_at(px, py + 1) is not None:
                py += 1
        elif name == "punch":
            target = None
            for m in self.monkeys:
                if m["alive"] and m["y"] == py and abs(m["x"] - px) <= self.PUNCH_REACH:
                    if target is None or abs(m["x"] - px) < abs(target["x"] - px):
                        target = m
            if target is not None:
                target["alive"] = False
                target["timer"] = self.MONKEY_RESPAWN
                reward += 5.0
        self.player = [px, py]

        if (px, py) == self.JOEY:
            self.last_event = "joey"
            return reward + 100.0, True
        if self._hazard_contact():
            return reward - 10.0, True

        self._move_monkeys()
        self._move_coconut()

        if self._hazard_contact():
            return reward - 10.0, True
        return reward, False

    def _hazard_contact(self) -> bool:
        px, py = self.player
        for m in self.monkeys:
            if m["alive"] and m["x"] == px and m["y"] == py:
                self.last_event = "monkey"
                return True
        c = self.coconut
        if c["active"] and c["x"] == px and c["y"] == py:
            self.last_event = "coconut"
            return True
        return False

    def _move_monkeys(self):
        px, py = self.player
        for i, m in enumerate(self.monkeys):
            if not m["alive"]:
                if m["timer"] > 0:
                    m["timer"] -= 1
                    if m["timer"] == 0 and not self.spec.mods.no_enemies:
                        home = self.MONKEY_HOMES[i]
                        m["x"], m["y"], m["alive"] = home[0], home[1], True
                continue
            if self.steps % 3 != 0:
                continue
            chasing = py == m["y"] and abs(px - m["x"]) <= self.MONKEY_AGGRO
            target_x = px if chasing else self.MONKEY_HOMES[i][0]
            dx = int(np.sign(target_x - m["x"]))
            m["x"] += dx
            if dx != 0:
                m["ori"] = dx

    def _move_coconut(self):
        if self.spec.mods.disable_falling_coconut:
            return
        c = self.coconut
        if c["active"]:
            c["y"] += 1
            if c["y"] > self.H - 1:
                c["active"] = False
        elif self.steps % self.COCONUT_PERIOD == 0:
            c["x"] = self.COCONUT_COLS[self.coconut_cycle % len(self.COCONUT_COLS)]
            c["y"] = 0
            c["active"] = True
            self.coconut_cycle += 1

    def _render(self, frame):
        px, py = self.player
        frame[px, py, 0] = 1.0
        for k, col in enumerate(self.ladder_cols):
            for y in self._rungs(k):
                frame[col, y, 1] = 1.0
        for m in self.monkeys:
            if m["alive"]:
                frame[m["x"], m["y"], 2] = 1.0
        if self.coconut["active"]:
            frame[self.coconut["x"], self.coconut["y"], 3] = 1.0
        frame[self.JOEY[0], self.JOEY[1], 4] = 1.0

    def _object_state(self) -> ObjectState:
        z = torch.zeros((len(self.slot_types), N_COLUMNS), dtype=torch.float64)
        px, py = self.player
        z[0] = torch.tensor([1.0, px, py, self.player_ori, 0.0])
        for k, col in enumerate(self.ladder_cols):
            rung = min(max(py, self.FLOORS[k + 1] + 1), self.FLOORS[k])
            z[1 + k] = torch.tensor([1.0, col, rung, 0.0, 0.0])
        for j, m in enumerate(self.monkeys):
            z[4 + j] = torch.tensor(
                [1.0 if m["alive"] else 0.0, m["x"], m["y"], m["ori"], 0.0]
            )
        c = self.coconut
        z[6] = torch.tensor([1.0 if c["active"] else 0.0, c["x"], c["y"], 0.0, 0.0])
        z[7] = torch.tensor([1.0, self.JOEY[0], self.JOEY[1], 0.0, 0.0])
        return ObjectState(z, self.slot_types)

    def _entity_state(self) -> dict:
        return {
            "player": list(self.player), "player_ori": self.player_ori,
            "ladder_cols": list(self.ladder_cols),
            "monkeys": [dict(m) for m in self.monkeys],
            "coconut": dict(self.coconut), "coconut_cycle": self.coconut_cycle,
        }

    def _load_entity_state(self, s: dict):
        self.player = list(s["player"])
        self.player_ori = s["player_ori"]
        self.ladder_cols = tuple(s["ladder_cols"])
        self.monkeys = [dict(m) for m in s["monkeys"]]
        self.coconut = dict(s["coconut"])
        self.coconut_cycle = s["coconut_cycle"]


class MiniSeaquest(ToyEnv):
    """Collect divers underwater, surface to drop them off and refill
    oxygen, and shoot patrolling enemies on your row."""

    action_names = ("noop", "left", "right", "up", "down", "fire")
    channel_names = ("player", "diver", "enemy", "oxygen")
    slot_types = ("player", "diver1", "diver2", "diver3",
                  "enemy1", "enemy2", "enemy3", "oxygen1")

    DIVER_HOMES = ((3, 9), (12, 6), (6, 11))
    DIVER_RESPAWN = 30
    ENEMY_ROWS = (4, 7, 10)
    ENEMY_START = ((2, 1), (13, -1), (7, 1))  # (x, direction)
    ENEMY_RESPAWN = 25
    DIVER_CAPACITY = 4
    SURFACE = 0

    def __init__(self, spec: EnvSpec):
        if spec.name != "mini-seaquest":
            raise EnvSpecError("spec is not for mini-seaquest")
        if (spec.width, spec.height) != (16, 12):
            raise EnvSpecError("mini-seaquest layout requires a 16x12 grid")
        bad = [n for n in spec.mods.names() if n != "no_enemies"]
        if bad:
            raise EnvSpecError(f"mini-seaquest does not support flags {bad}")
        super().__init__(spec)

    def _reset_entities(self):
        self.player = [8, 3]
        self.player_ori = 0
        self.oxygen = 100.0
        self.carried = 0
        self.divers = [
            {"x": hx, "y": hy, "alive": True, "dir": d, "timer": 0}
            for (hx, hy), d in zip(self.DIVER_HOMES, (1, -1, 1))
        ]
        self.enemies = [
            {"x": x, "y": row, "alive": not self.spec.mods.no_enemies,
             "dir": d, "timer": 0}
            for row, (x, d) in zip(self.ENEMY_ROWS, self.ENEMY_START)
        ]

    def _advance(self, action: int):
        reward = 0.0
        px, py = self.player
        was_underwater = py > self.SURFACE
        name = self.action_names[action]

        if name == "left":
            px = max(0, px - 1)
            self.player_ori = -1
        elif name == "right":
            px = min(self.W - 1, px + 1)
            self.player_ori = 1
        elif name == "up":
            py = max(self.SURFACE, py - 1)
        elif name == "down":
            py = min(self.H - 1, py + 1)
        elif name == "fire":
            target = None
            for e in self.enemies:
                if e["alive"] and e["y"] == py:
                    if target is None or abs(e["x"] - px) < abs(target["x"] - px):
                        target = e
            if target is not None:
                target["alive"] = False
                target["timer"] = self.ENEMY_RESPAWN
                reward += 2.0
        self.player = [px, py]

        if was_underwater and py == self.SURFACE:
            if self.carried > 0:
                reward += 20.0 * self.carried
                self.carried = 0
            else:
                reward -= 5.0

        if py > self.SURFACE:
            self.oxygen -= 1.0
            if self.oxygen <= 0.0:
                self.oxygen = 0.0
                self.last_event = "oxygen"
                return reward - 10.0, True
        else:
            self.oxygen = 100.0

        for d in self.divers:
            if d["alive"] and d["x"] == px and d["y"] == py and self.carried < self.DIVER_CAPACITY:
                d["alive"] = False
                d["timer"] = self.DIVER_RESPAWN
                self.carried += 1
                reward += 5.0

        if self._enemy_contact():
            return reward - 10.0, True

        self._move_divers()
        self._move_enemies()

        if self._enemy_contact():
            return reward - 10.0, True
        return reward, False

    def _enemy_contact(self) -> bool:
        px, py = self.player
        hit = any(e["alive"] and e["x"] == px and e["y"] == py for e in self.enemies)
        if hit:
            self.last_event = "enemy"
        return hit

    def _move_divers(self):
        for i, d in enumerate(self.divers):
            if not d["alive"]:
                if d["timer"] > 0:
                    d["timer"] -= 1
                    if d["timer"] == 0:
                        home = self.DIVER_HOMES[i]
                        d["x"], d["y"], d["alive"] = home[0], home[1], True
                continue
            if self.steps % 3 != 0:
                continue
            nx = d["x"] + d["dir"]
            if nx < 0 or nx > self.W - 1:
                d["dir"] = -d["dir"]
                nx = d["x"] + d["dir"]
            d["x"] = nx

    def _move_enemies(self):
        for i, e in enumerate(self.enemies):
            if not e["alive"]:
                if e["timer"] > 0:
                    e["timer"] -= 1
                    if e["timer"] == 0 and not self.spec.mods.no_enemies:
                        e["dir"] = self.ENEMY_START[i][1]
                        e["x"] = 0 if e["dir"] > 0 else self.W - 1
                        e["alive"] = True
                continue
            if self.steps % 3 != 0:
                continue
            nx = e["x"] + e["dir"]
            if nx < 0 or nx > self.W - 1:
                e["dir"] = -e["dir"]
                nx = e["x"] + e["dir"]
            e["x"] = nx

    def _oxygen_cells(self) -> int:
        return max(1, round(self.W * self.oxygen / 100.0))

    def _render(self, frame):
        px, py = self.player
        frame[px, py, 0] = 1.0
        for d in self.divers:
            if d["alive"]:
                frame[d["x"], d["y"], 1] = 1.0
        for e in self.enemies:
            if e["alive"]:
                frame[e["x"], e["y"], 2] = 1.0
        for x in range(self._oxygen_cells()):
            frame[x, 0, 3] = 1.0

    def _object_state(self) -> ObjectState:
        z = torch.zeros((len(self.slot_types), N_COLUMNS), dtype=torch.float64)
        px, py = self.player
        z[0] = torch.tensor([1.0, px, py, self.player_ori, float(self.carried)])
        for i, d in enumerate(self.divers):
            z[1 + i] = torch.tensor(
                [1.0 if d["alive"] else 0.0, d["x"], d["y"], d["dir"], 0.0]
            )
        for i, e in enumerate(self.enemies):
            z[4 + i] = torch.tensor(
                [1.0 if e["alive"] else 0.0, e["x"], e["y"], e["dir"], 0.0]
            )
        z[7] = torch.tensor([1.0, 0.0, 0.0, 0.0, self.oxygen])
        return ObjectState(z, self.slot_types)

    def _entity_state(self) -> dict:
        return {
            "player": list(self.player), "player_ori": self.player_ori,
            "oxygen": self.oxygen, "carried": self.carried,
            "divers": [dict(d) for d in self.divers],
            "enemies": [dict(e) for e in self.enemies],
        }

    def _load_entity_state(self, s: dict):
        self.player = list(s["player"])
        self.player_ori = s["player_ori"]
        self.oxygen = s["oxygen"]
        self.carried = s["carried"]
        self.divers = [dict(d) for d in s["divers"]]
        self.enemies = [dict(e) for e in s["enemies"]]


ENV_CLASSES = {"mini-kangaroo": MiniKangaroo, "mini-seaquest": MiniSeaquest}


def make_env(spec: EnvSpec) -> ToyEnv:
    return ENV_CLASSES[spec.name](spec)


class VectorEnv:
    """Synchronous vector of N envs with auto-reset, ordered by index."""

    def __init__(self, spec: EnvSpec, num_envs: int):
        self.spec = spec
        self.envs = [
            make_env(replace(spec, seed=spec.seed + i)) for i in range(num_envs)
        ]
        self.num_envs = num_envs
        self._returns = np.zeros(num_envs)
        self._lengths = np.zeros(num_envs, dtype=int)

    @property
    def action_names(self):
        return self.envs[0].action_names

    @property
    def slot_types(self):
        return self.envs[0].slot_types

    def reset(self):
        raws, zs = [], []
        for env in self.envs:
            raw, z = env.reset()
            raws.append(raw)
            zs.append(z.data)
        self._returns[:] = 0.0
        self._lengths[:] = 0
        return torch.stack(raws), torch.stack(zs)

    def step(self, actions):
        raws, zs, rewards, dones, finished = [], [], [], [], []
        for i, env in enumerate(self.envs):
            raw, z, r, done = env.step(int(actions[i]))
            self._returns[i] += r
            self._lengths[i] += 1
            if done:
                finished.append((i, float(self._returns[i]), int(self._lengths[i])))
                self._returns[i] = 0.0
                self._lengths[i] = 0
                raw, z = env.reset()
            raws.append(raw)
            zs.append(z.data)
            rewards.append(r)
            dones.append(done)
        return (
            torch.stack(raws), torch.stack(zs),
            torch.tensor(rewards, dtype=torch.float64),
            torch.tensor(dones, dtype=torch.float64),
            finished,
        )

    def state_dict(self) -> dict:
        return {
            "envs": [e.state_dict() for e in self.envs],
            "returns": self._returns.tolist(),
            "lengths": self._lengths.tolist(),
        }

    def load_state_dict(self, state: dict):
        for env, s in zip(self.envs, state["envs"]):
            env.load_state_dict(s)
        self._returns = np.array(state["returns"])
        self._lengths = np.array(state["lengths"], dtype=int)
