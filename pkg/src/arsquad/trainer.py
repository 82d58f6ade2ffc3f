"""ARS training loop for the quadcopter tasks.

Each iteration snapshots the normalizer, samples directions from the shared
noise table, runs the 2N antithetic rollouts (optionally in a process pool),
merges the rollouts' normalizer statistics in direction order, applies the
update and finally measures the unperturbed policy on an evaluation episode.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from arsquad import ars
from arsquad.dynamics import PlantParams, QuadState, RotorCommand
from arsquad.task import DoneReason, ShapingState, TaskConfig, env_step, reset

log = logging.getLogger(__name__)

ACTION_DIM = 4
STATE_DIM = 12
RUNNING_AVG_WINDOW = 10
SEED_INTERVAL = 1000

# SeedSequence keys for per-episode initial-state disturbances
_TRAIN_DISTURBANCE = 2
_EVAL_DISTURBANCE = 3


@dataclass(frozen=True)
class ArsHyperparams:
    step_size: float = 0.01
    num_directions: int = 16
    noise_std: float = 0.1
    top_directions: int = 4
    num_iterations: int = 200
    episode_length: int = 1000

    def __post_init__(self) -> None:
        if not 1 <= self.top_directions <= self.num_directions:
            raise ValueError("need 1 <= top_directions <= num_directions")
        if not (self.step_size > 0 and math.isfinite(self.step_size)):
            raise ValueError("step_size must be positive")
        if not (self.noise_std > 0 and math.isfinite(self.noise_std)):
            raise ValueError("noise_std must be positive")
        if self.num_iterations < 0 or self.episode_length < 1:
            raise ValueError("num_iterations must be >= 0 and episode_length >= 1")


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a training run.

    ``out_dir`` and ``workers`` choose where and how the run executes and do
    not influence any result.
    """

    master_seed: int = 0
    hyperparams: ArsHyperparams = field(default_factory=ArsHyperparams)
    task: TaskConfig = field(default_factory=TaskConfig)
    plant: PlantParams = field(default_factory=PlantParams)
    action_scale: float = 3.0
    eval_every: int = 1
    noise_table_size: int = ars.DEFAULT_TABLE_SIZE
    save_noise: bool = False
    out_dir: Path | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if int(self.master_seed) != self.master_seed or self.master_seed < 0:
            raise ValueError("master_seed must be a non-negative integer")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not (self.action_scale >= 0 and math.isfinite(self.action_scale)):
            raise ValueError("action_scale must be finite and >= 0")

    @property
    def task_has_noise(self) -> bool:
        t = self.task
        return any(v > 0 for v in (t.position_noise, t.velocity_noise, t.euler_noise, t.rate_noise))


@dataclass
class EpisodeTrace:
    """Per-step log of an episode: post-step states, commands and rewards."""

    times: list[float] = field(default_factory=list)
    states: list[list[float]] = field(default_factory=list)
    commands: list[list[float]] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    total_reward: float = 0.0
    done_reason: DoneReason | None = None

    def record(self, state: QuadState, cmd: RotorCommand, reward: float) -> None:
        self.times.append(state.time)
        self.states.append(state.as_vector())
        self.commands.append(cmd.speeds.tolist())
        self.rewards.append(reward)
        self.total_reward += reward

    def __len__(self) -> int:
        return len(self.rewards)

    def quad_states(self) -> list[QuadState]:
        return [QuadState.from_vector(y, t) for y, t in zip(self.states, self.times)]


@dataclass
class IterationRecord:
    iteration: int
    offsets: list[int]
    rewards_plus: list[float]
    rewards_minus: list[float]
    sigma_r: float
    update_norm: float
    eval_reward: float | None = None


@dataclass
class TrainResult:
    policy: np.ndarray
    stats: ars.NormalizerStats
    records: list[IterationRecord]
    best_trace: EpisodeTrace | None = None


def features(state: QuadState, target) -> np.ndarray:
    """Policy input: position error, velocity, Euler angles, body rates."""
    return np.concatenate(
        [state.position - np.asarray(target, dtype=np.float64), state.velocity, state.euler, state.body_rates]
    )


def action_to_command(action, action_scale: float, params: PlantParams) -> RotorCommand:
    """Map policy output to rotor speeds centred on the hover speed."""
    action = np.asarray(action, dtype=np.float64)
    speeds = np.clip(params.hover_speed + action_scale * action, params.speed_min, params.speed_max)
    return RotorCommand(speeds)


def disturbance_rng(master_seed: int, iteration: int | None, direction: int | None = None) -> np.random.Generator:
    """Initial-state disturbance stream.

    Training episodes of one direction share a stream across both signs, so
    the antithetic pair is scored on the same initial state. Evaluation uses a
    single fixed stream per run so the eval series only reflects the policy.
    """
    if iteration is None:
        key = [int(master_seed), _EVAL_DISTURBANCE]
    else:
        key = [int(master_seed), _TRAIN_DISTURBANCE, int(iteration), int(direction)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def rollout(
    M: np.ndarray,
    delta: np.ndarray | None,
    sign: int,
    noise_std: float,
    stats: ars.NormalizerStats,
    config: RunConfig,
    rng: np.random.Generator | None = None,
) -> tuple[float, EpisodeTrace, ars.NormalizerStats]:
    """Fly one episode with ``(M + sign * noise_std * delta)``.

    ``rng`` draws the initial-state disturbance; ``None`` starts from the
    nominal state. Returns the total reward, the trace and the statistics of
    the feature vectors the policy saw.
    """
    W = ars.perturbed_matrix(M, delta, sign, noise_std)
    task, plant = config.task, config.plant
    target = np.asarray(task.target, dtype=np.float64)
    mean, scale = stats.mean, stats.scale
    state, shaping = reset(task, rng)
    trace = EpisodeTrace()
    seen = []
    for _ in range(config.hyperparams.episode_length):
        x = features(state, target)
        seen.append(x)
        cmd = action_to_command(W @ ((x - mean) / scale), config.action_scale, plant)
        result = env_step(state, shaping, cmd, task, plant)
        state, shaping = result.next_state, result.shaping
        trace.record(state, cmd, result.reward)
        if result.done:
            trace.done_reason = result.done_reason
            break
    else:
        trace.done_reason = DoneReason.STEP_LIMIT
    return trace.total_reward, trace, ars.NormalizerStats.from_batch(np.array(seen))


def _rollout_job(args):
    M, delta, sign, noise_std, stats, config, key = args
    rng = disturbance_rng(*key) if config.task_has_noise else None
    reward, _, partial = rollout(M, delta, sign, noise_std, stats, config, rng)
    return reward, partial


class _SerialMap:
    def map(self, fn, items):
        return map(fn, items)

    def shutdown(self):
        pass


def evaluate(M: np.ndarray, stats: ars.NormalizerStats, config: RunConfig) -> EpisodeTrace:
    """Evaluation episode of the unperturbed policy on the run's fixed disturbance."""
    rng = disturbance_rng(config.master_seed, None) if config.task_has_noise else None
    _, trace, _ = rollout(M, None, 0, config.hyperparams.noise_std, stats, config, rng)
    return trace


def train(config: RunConfig, write: bool = True) -> TrainResult:
    """Run ARS for ``config.hyperparams.num_iterations`` iterations.

    When ``write`` is set and ``config.out_dir`` is given, the run's artifacts
    are written there once training finishes.
    """
    hp = config.hyperparams
    M = np.zeros((ACTION_DIM, STATE_DIM))
    stats = ars.NormalizerStats.empty(STATE_DIM)
    records: list[IterationRecord] = []
    best: EpisodeTrace | None = None
    table = ars.NoiseTable.generate(config.master_seed, config.noise_table_size) if hp.num_iterations else None

    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else _SerialMap()
    try:
        for it in range(hp.num_iterations):
            snapshot = stats
            batch = ars.sample_directions(
                table, ars.offset_stream(config.master_seed, it), hp.num_directions, ACTION_DIM, STATE_DIM
            )
            jobs = [
                (M, delta, sign, hp.noise_std, snapshot, config, (config.master_seed, it, k))
                for k, delta in enumerate(batch.deltas)
                for sign in (1, -1)
            ]
            results = list(pool.map(_rollout_job, jobs))
            for _, partial in results:
                stats = ars.normalizer_merge(stats, partial)
            batch.rewards_plus = np.array([r for r, _ in results[0::2]])
            batch.rewards_minus = np.array([r for r, _ in results[1::2]])

            top = ars.select_top(batch, hp.top_directions)
            M_next, sigma = ars.ars_update(M, top, hp.step_size)
            record = IterationRecord(
                iteration=it,
                offsets=batch.offsets,
                rewards_plus=batch.rewards_plus.tolist(),
                rewards_minus=batch.rewards_minus.tolist(),
                sigma_r=sigma,
                update_norm=float(np.linalg.norm(M_next - M)),
            )
            M = M_next
            if (it + 1) % config.eval_every == 0:
                trace = evaluate(M, stats, config)
                record.eval_reward = trace.total_reward
                if best is None or trace.total_reward > best.total_reward:
                    best = trace
                log.info("iteration %d: eval reward %.3f, sigma_R %.3g", it, trace.total_reward, sigma)
            records.append(record)
    finally:
        pool.shutdown()

    result = TrainResult(M, stats, records, best)
    if write and config.out_dir is not None:
        from arsquad.artifacts import write_run_artifacts

        write_run_artifacts(config, result, table)
    return result


def draw_seeds(num_seeds: int, sweep_seed: int) -> list[int]:
    if not 1 <= num_seeds <= SEED_INTERVAL:
        raise ValueError(f"num_seeds must lie in [1, {SEED_INTERVAL}]")
    rng = np.random.default_rng(sweep_seed)
    return [int(s) for s in rng.choice(SEED_INTERVAL, size=num_seeds, replace=False)]


def seed_sweep(base: RunConfig, num_seeds: int, sweep_seed: int = 0) -> dict[int, TrainResult]:
    """Train once per distinct seed drawn from [0, 1000).

    Each run writes into ``<out_dir>/seed_<seed>``; a ``summary.csv`` with the
    final and best evaluation reward per seed goes into ``out_dir``.
    """
    results = {}
    for seed in draw_seeds(num_seeds, sweep_seed):
        out = None if base.out_dir is None else Path(base.out_dir) / f"seed_{seed:03d}"
        results[seed] = train(replace(base, master_seed=seed, out_dir=out))
    if base.out_dir is not None:
        from arsquad.artifacts import write_sweep_summary

        write_sweep_summary(Path(base.out_dir) / "summary.csv", results)
    return results
