"""Hover/takeoff task environment: goal definition, reward, episode bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from arsquad.dynamics import PlantParams, QuadState, RotorCommand, step_dynamics

# takeoff shaping constants
APPROACH_REWARD = 1.0
RETREAT_PENALTY = 1.0
CROSSING_BONUS = 10.0


class TaskKind(str, Enum):
    HOVER = "hover"
    TAKEOFF = "takeoff"


class DoneReason(str, Enum):
    TIME_LIMIT = "TimeLimit"
    STEP_LIMIT = "StepLimit"
    GROUND_CONTACT = "GroundContact"
    GIMBAL_GUARD = "GimbalGuard"
    NUMERIC_GUARD = "NumericGuard"


class EpisodeDoneError(RuntimeError):
    """Raised when stepping an episode that has already terminated."""


def _tuple3(value) -> tuple[float, float, float]:
    out = tuple(float(v) for v in value)
    if len(out) != 3:
        raise ValueError(f"expected 3 components, got {len(out)}")
    return out


@dataclass(frozen=True)
class TaskConfig:
    """Episode setup.

    With ``crash_tail`` set, an episode ending in a crash is charged the
    distance reward of the ground point below the crash for every step it
    still had left, so terminating early never beats flying.

    The ``*_noise`` fields are standard deviations of a Gaussian disturbance
    added to the initial state when :func:`reset` is handed a generator; with
    no generator the nominal initial state is used.
    """

    init_position: tuple[float, float, float] = (0.0, 0.0, 10.0)
    init_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    init_euler: tuple[float, float, float] = (0.0, 0.0, 0.0)
    init_body_rates: tuple[float, float, float] = (0.0, 0.0, 0.0)
    runtime: float = 5.0
    target: tuple[float, float, float] = (0.0, 0.0, 10.0)
    task_kind: TaskKind = TaskKind.HOVER
    max_steps: int = 1000
    position_noise: float = 0.5
    velocity_noise: float = 0.25
    euler_noise: float = 0.05
    rate_noise: float = 0.1
    crash_tail: bool = True

    def __post_init__(self) -> None:
        for name in ("init_position", "init_velocity", "init_euler", "init_body_rates", "target"):
            object.__setattr__(self, name, _tuple3(getattr(self, name)))
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        values = [
            *self.init_position, *self.init_velocity, *self.init_euler,
            *self.init_body_rates, *self.target, self.runtime,
        ]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("task configuration contains non-finite values")
        if not self.runtime > 0:
            raise ValueError("runtime must be positive")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ValueError("max_steps must be a positive integer")
        object.__setattr__(self, "max_steps", int(self.max_steps))
        noises = (self.position_noise, self.velocity_noise, self.euler_noise, self.rate_noise)
        if not all(math.isfinite(v) and v >= 0 for v in noises):
            raise ValueError("initial-state noise levels must be finite and >= 0")

    @classmethod
    def takeoff(cls, **overrides) -> "TaskConfig":
        """Climb from (0, 0, 10) towards (0, 0, 150)."""
        kwargs = dict(target=(0.0, 0.0, 150.0), task_kind=TaskKind.TAKEOFF)
        kwargs.update(overrides)
        return cls(**kwargs)

    def with_target(self, target) -> "TaskConfig":
        return replace(self, target=_tuple3(target))


@dataclass(frozen=True)
class ShapingState:
    """Per-episode bookkeeping carried alongside the plant state.

    ``prev_z`` and ``crossed_target`` drive the takeoff shaping term;
    ``steps`` counts environment steps taken so far.
    """

    prev_z: float
    crossed_target: bool = False
    steps: int = 0


@dataclass(frozen=True)
class StepResult:
    next_state: QuadState
    shaping: ShapingState
    reward: float
    done: bool
    done_reason: DoneReason | None = None

    def __post_init__(self) -> None:
        if self.done != (self.done_reason is not None):
            raise ValueError("done must be set exactly when a done_reason is given")


def reset(
    config: TaskConfig, rng: np.random.Generator | None = None
) -> tuple[QuadState, ShapingState]:
    """Initial plant state and shaping state for a fresh episode.

    Without ``rng`` the result is the nominal initial state and is fully
    deterministic. With ``rng`` a Gaussian disturbance scaled by the config's
    noise levels is drawn (12 normals, in state order).
    """
    position = np.array(config.init_position)
    velocity = np.array(config.init_velocity)
    euler = np.array(config.init_euler)
    rates = np.array(config.init_body_rates)
    if rng is not None:
        z = rng.standard_normal(12)
        position = position + config.position_noise * z[0:3]
        velocity = velocity + config.velocity_noise * z[3:6]
        euler = euler + config.euler_noise * z[6:9]
        rates = rates + config.rate_noise * z[9:12]
    state = QuadState(position, velocity, euler, rates, 0.0)
    if not state.is_finite():
        raise ValueError("initial state is not finite")
    return state, ShapingState(prev_z=float(state.position[2]))


def reward_distance(position, target) -> float:
    """Negative L1 distance between the copter position and the target."""
    x, y, z = (float(v) for v in position)
    tx, ty, tz = (float(v) for v in target)
    return -(abs(x - tx) + abs(y - ty) + abs(z - tz))


def reward_takeoff(shaping: ShapingState, z: float, target_z: float) -> tuple[float, ShapingState]:
    """Approach/retreat shaping plus a one-off bonus for reaching the target height."""
    if abs(target_z - z) < abs(target_z - shaping.prev_z):
        reward = APPROACH_REWARD
    else:
        reward = -RETREAT_PENALTY
    crossed = shaping.crossed_target
    if not crossed and z >= target_z:
        reward += CROSSING_BONUS
        crossed = True
    return reward, replace(shaping, prev_z=float(z), crossed_target=crossed)


_CRASHES = (DoneReason.GROUND_CONTACT, DoneReason.GIMBAL_GUARD, DoneReason.NUMERIC_GUARD)


def remaining_steps(state: QuadState, steps: int, config: TaskConfig, params: PlantParams) -> int:
    by_time = max(0, math.ceil((config.runtime - state.time) / params.dt - 1e-9))
    return min(config.max_steps - steps, by_time)


def crash_tail_penalty(state: QuadState, steps: int, config: TaskConfig, params: PlantParams) -> float:
    """Reward for sitting on the ground below ``state`` until the episode would have ended."""
    x, y, _ = state.position.tolist()
    return remaining_steps(state, steps, config, params) * reward_distance((x, y, 0.0), config.target)


def env_step(
    state: QuadState,
    shaping: ShapingState,
    cmd: RotorCommand,
    config: TaskConfig,
    params: PlantParams,
) -> StepResult:
    """Step the plant once under ``cmd`` and score the new state."""
    if shaping.steps >= config.max_steps or state.time >= config.runtime - 1e-9 or state.position[2] <= 0:
        raise EpisodeDoneError("episode already terminated; call reset()")
    next_state, guard = step_dynamics(state, cmd, params)
    steps = shaping.steps + 1

    reward = reward_distance(next_state.position, config.target)
    new_shaping = replace(shaping, steps=steps)
    if config.task_kind is TaskKind.TAKEOFF:
        bonus, new_shaping = reward_takeoff(new_shaping, float(next_state.position[2]), config.target[2])
        reward += bonus

    if guard is not None:
        reason = DoneReason(guard)
    elif next_state.position[2] <= 0:
        reason = DoneReason.GROUND_CONTACT
    elif next_state.time >= config.runtime - 1e-9:
        reason = DoneReason.TIME_LIMIT
    elif steps >= config.max_steps:
        reason = DoneReason.STEP_LIMIT
    else:
        reason = None
    if reason in _CRASHES and config.crash_tail:
        reward += crash_tail_penalty(next_state, steps, config, params)
    return StepResult(next_state, new_shaping, reward, reason is not None, reason)


@dataclass
class QuadTask:
    """Stateful wrapper around :func:`reset` / :func:`env_step`."""

    config: TaskConfig = field(default_factory=TaskConfig)
    params: PlantParams = field(default_factory=PlantParams)

    def __post_init__(self) -> None:
        self.state, self.shaping = reset(self.config)
        self.done = False

    def reset(self, rng: np.random.Generator | None = None) -> QuadState:
        self.state, self.shaping = reset(self.config, rng)
        self.done = False
        return self.state

    def step(self, cmd: RotorCommand) -> StepResult:
        if self.done:
            raise EpisodeDoneError("episode already terminated; call reset()")
        result = env_step(self.state, self.shaping, cmd, self.config, self.params)
        self.state, self.shaping, self.done = result.next_state, result.shaping, result.done
        return result
