"""BLiN cube elimination run against a batched-feedback channel.

A run alternates between the policy, which decides a whole batch of pulls from
committed data only, and the channel, which withholds every reward until the
batch is committed.  Rewards of a batch cut short by the horizon are never
committed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .environments import NoiseModel, RewardInstance
from .geometry import CubeSet, StandardCube
from .sequences import DEFAULT_LOGS, EdgeLengthSchedule, LogBases, samples_per_cube

ARM_POLICIES = ("center", "uniform")
CLEANUP_POLICIES = ("best-center",)


class ConfigurationError(ValueError):
    pass


class ChannelViolation(RuntimeError):
    """Read of rewards that have not been committed."""


@dataclass(frozen=True)
class RunConfig:
    T: int
    schedule: EdgeLengthSchedule
    arm_policy: str = "center"
    seed: int = 0
    cleanup_policy: str = "best-center"
    noise_sigma: float = 1.0
    logs: LogBases = DEFAULT_LOGS

    def __post_init__(self):
        if self.T < 2:
            raise ConfigurationError(f"horizon T must be >= 2, got {self.T}")
        if self.arm_policy not in ARM_POLICIES:
            raise ConfigurationError(f"unknown arm policy {self.arm_policy!r}")
        if self.cleanup_policy not in CLEANUP_POLICIES:
            raise ConfigurationError(f"unknown cleanup policy {self.cleanup_policy!r}")

    def describe(self) -> dict:
        return {
            "T": self.T,
            "seed": self.seed,
            "schedule": self.schedule.describe(),
            "arm_policy": self.arm_policy,
            "cleanup_policy": self.cleanup_policy,
            "noise_sigma": self.noise_sigma,
            "logs": self.logs.as_dict(),
        }


class BatchedChannel:
    """Pull log whose rewards become readable only after the batch commits."""

    def __init__(self, instance: RewardInstance, noise: NoiseModel):
        self.instance = instance
        self.noise = noise
        self.grid = [0]
        self._arms: list[np.ndarray] = []
        self._rewards: list[np.ndarray] = []
        self._committed = 0  # number of committed batches
        self._pending = 0
        self._t = 0

    @property
    def t(self) -> int:
        return self._t

    @property
    def commits(self) -> int:
        return self._committed

    def play(self, arms: np.ndarray) -> None:
        arms = np.asarray(arms, dtype=float)
        if not len(arms):
            return
        if len(self._arms) == self._committed:
            self._arms.append(arms)
            self._rewards.append(self.instance.mean(arms) + self.noise.draw(len(arms)))
        else:
            self._arms[-1] = np.concatenate([self._arms[-1], arms])
            fresh = self.instance.mean(arms) + self.noise.draw(len(arms))
            self._rewards[-1] = np.concatenate([self._rewards[-1], fresh])
        self._pending += len(arms)
        self._t += len(arms)

    def commit(self) -> np.ndarray:
        if self._pending == 0:
            raise ChannelViolation("commit with no pending pulls")
        self._committed += 1
        self._pending = 0
        self.grid.append(self._t)
        return self.read(self._committed)

    def read(self, batch: int) -> np.ndarray:
        """Rewards of committed batch ``batch`` (1-based)."""
        if not 1 <= batch <= self._committed:
            raise ChannelViolation(f"batch {batch} has not been committed")
        return self._rewards[batch - 1].copy()

    def all_rewards(self) -> np.ndarray:
        """Every realised reward, for the trace log after the run is over."""
        if not self._rewards:
            return np.empty(0)
        return np.concatenate(self._rewards)


@dataclass
class ActiveCubeStats:
    cube: StandardCube
    pulls: int
    reward_sum: float

    @property
    def estimate(self) -> float:
        return self.reward_sum / self.pulls


def eliminate(stats: list[ActiveCubeStats], r_m: float):
    """Split cubes into (survivors, eliminated): drop C iff max estimate - est(C) > 4 r_m."""
    if not stats:
        raise ValueError("elimination needs at least one cube")
    est = np.array([s.estimate for s in stats])
    keep = elimination_mask(est, r_m)
    survivors = [s for s, k in zip(stats, keep) if k]
    eliminated = [s for s, k in zip(stats, keep) if not k]
    return survivors, eliminated


def elimination_mask(estimates: np.ndarray, r_m: float) -> np.ndarray:
    """True for survivors; ties at exactly 4 r_m survive."""
    return ~(estimates.max() - estimates > 4.0 * r_m)


@dataclass
class BatchPlan:
    m: int
    r: float
    depth: int
    n: int
    cubes: CubeSet
    arms: np.ndarray
    rows: np.ndarray  # active-cube row of every pull

    @property
    def size(self) -> int:
        return len(self.arms)


@dataclass
class BatchRecord:
    m: int
    r: float
    depth: int
    n: int
    active: CubeSet
    start: int
    end: int
    completed: bool
    estimates: np.ndarray | None = None
    survived: np.ndarray | None = None

    @property
    def eliminated_count(self) -> int:
        return 0 if self.survived is None else int(np.count_nonzero(~self.survived))

    @property
    def mu_hat_max(self) -> float | None:
        return None if self.estimates is None else float(self.estimates.max())

    def summary(self) -> dict:
        return {
            "batch": self.m,
            "r": self.r,
            "depth": self.depth,
            "n": self.n,
            "active": len(self.active),
            "eliminated": self.eliminated_count,
            "start": self.start,
            "end": self.end,
            "completed": self.completed,
            "mu_hat_max": self.mu_hat_max,
        }


class BLiNPolicy:
    """Decision side of the algorithm; sees rewards only through ``observe``."""

    def __init__(self, config: RunConfig, d: int):
        schedule = config.schedule
        if not schedule.partitionable:
            raise ConfigurationError(
                f"schedule {schedule.kind!r} has non power-of-two edge ratios; "
                "use doubling, rounded-ace or a dyadic custom list"
            )
        self.config = config
        self.d = d
        self._depths: Iterator[int] = schedule.depths()
        self._next_depth: int | None = next(self._depths, None)
        self.m = 0
        self.active: CubeSet | None = None
        if self._next_depth is not None:
            self.active = CubeSet.full_grid(self._next_depth, d)
        self._survivors: CubeSet | None = None
        self._survivor_estimates: np.ndarray | None = None
        self._arm_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xA2]))

    def next_plan(self) -> BatchPlan | None:
        """Plan for the next batch, or None once the schedule is exhausted."""
        if self._next_depth is None:
            return None
        depth = self._next_depth
        assert self.active is not None and self.active.depth == depth
        r = math.ldexp(1.0, -depth)
        n = samples_per_cube(r, self.config.T, self.config.logs)
        k = len(self.active)
        rows = np.tile(np.arange(k), n)  # round-robin over active cubes
        if self.config.arm_policy == "center":
            arms = self.active.centers()[rows]
        else:
            lows = self.active.lowers()[rows]
            arms = lows + r * self._arm_rng.random((len(rows), self.d))
        self.m += 1
        return BatchPlan(self.m, r, depth, n, self.active, arms, rows)

    def observe(self, plan: BatchPlan, rewards: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Estimate, eliminate and refine after batch ``plan`` commits."""
        k = len(plan.cubes)
        sums = np.bincount(plan.rows, weights=rewards, minlength=k)
        counts = np.bincount(plan.rows, minlength=k)
        estimates = sums / counts
        survived = elimination_mask(estimates, plan.r)
        survivors = plan.cubes.subset(survived)
        self._next_depth = next(self._depths, None)
        if self._next_depth is not None:
            factor = 1 << (self._next_depth - plan.depth)
            self.active = survivors.partition(factor)
        else:
            self.active = None
        self._survivors = survivors
        self._survivor_estimates = estimates[survived]
        return estimates, survived

    def cleanup_arm(self) -> tuple[np.ndarray, StandardCube]:
        """Centre of the surviving cube with the best last committed estimate."""
        if self._survivors is None:
            cube = StandardCube.unit(self.d)
        else:
            best = int(np.argmax(self._survivor_estimates))
            cube = self._survivors[best]
        return cube.lower + 0.5 * cube.edge, cube


@dataclass
class RunTrace:
    algorithm: str
    T: int
    d: int
    arms: np.ndarray
    rewards: np.ndarray
    batch: np.ndarray
    cube_depth: np.ndarray
    cube_index: np.ndarray
    batches: list[BatchRecord]
    grid: list[int]
    commits: int
    config: dict
    cleanup_start: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def rounds_used(self) -> int:
        """Batches in the communication grid 0 = t_0 < ... < t_B = T."""
        return len(self.grid) - 1

    @property
    def completed_batches(self) -> list[BatchRecord]:
        return [b for b in self.batches if b.completed]


def run_blin(config: RunConfig, instance: RewardInstance) -> RunTrace:
    T, d = config.T, instance.d
    policy = BLiNPolicy(config, d)
    channel = BatchedChannel(instance, NoiseModel(config.seed, config.noise_sigma))
    records: list[BatchRecord] = []
    depth_log, index_log, batch_log = [], [], []

    def log(depth, idx, m):
        depth_log.append(np.full(len(idx), depth, dtype=np.int64))
        index_log.append(np.asarray(idx, dtype=np.int64))
        batch_log.append(np.full(len(idx), m, dtype=np.int64))

    while channel.t < T:
        plan = policy.next_plan()
        if plan is None:
            break
        start = channel.t
        take = min(plan.size, T - start)
        channel.play(plan.arms[:take])
        log(plan.depth, plan.cubes.indices[plan.rows[:take]], plan.m)
        if take < plan.size:
            # horizon reached mid-batch: exit without committing
            records.append(BatchRecord(plan.m, plan.r, plan.depth, plan.n, plan.cubes,
                                       start, channel.t, False))
            break
        estimates, survived = policy.observe(plan, channel.commit())
        records.append(BatchRecord(plan.m, plan.r, plan.depth, plan.n, plan.cubes,
                                   start, channel.t, True, estimates, survived))

    cleanup_start = None
    if channel.t < T:
        cleanup_start = channel.t
        cube, rest = cleanup(policy, channel, T)
        log(cube.depth, np.tile(cube.index, (rest, 1)), policy.m + 1)

    grid = list(channel.grid)
    if grid[-1] < T:
        grid.append(T)
    return RunTrace(
        algorithm="blin",
        T=T,
        d=d,
        arms=np.concatenate(channel._arms),
        rewards=channel.all_rewards(),
        batch=np.concatenate(batch_log),
        cube_depth=np.concatenate(depth_log),
        cube_index=np.concatenate(index_log),
        batches=records,
        grid=grid,
        commits=channel.commits,
        config=config.describe(),
        cleanup_start=cleanup_start,
    )


def cleanup(policy: BLiNPolicy, channel: BatchedChannel, T: int) -> tuple[StandardCube, int]:
    """Play the best surviving centre for the remaining T - t steps; no commit.

    Returns the cube played and the number of pulls added (0 when t == T).
    """
    arm, cube = policy.cleanup_arm()
    rest = max(0, T - channel.t)
    channel.play(np.tile(arm, (rest, 1)))
    return cube, rest


def verify_feedback_isolation(trace: RunTrace, config: RunConfig) -> bool:
    """Replay the policy on the logged rewards, revealing each batch only after
    its arms are fixed, and check every logged arm is reproduced."""
    policy = BLiNPolicy(config, trace.d)
    for rec in trace.batches:
        plan = policy.next_plan()
        if plan is None or plan.m != rec.m:
            return False
        span = slice(rec.start, rec.end)
        logged = trace.arms[span]
        if not np.array_equal(plan.arms[: len(logged)], logged):
            return False
        if rec.completed:
            policy.observe(plan, trace.rewards[span])
    if trace.cleanup_start is not None:
        arm, _ = policy.cleanup_arm()
        if not np.all(trace.arms[trace.cleanup_start:] == arm):
            return False
    return True


# -- zooming baseline -----------------------------------------------------------------


def default_zooming_depth(d: int) -> int:
    """Candidate arms are cube centres at this depth (about 4096 of them)."""
    return max(1, 12 // d)


def run_zooming_baseline(config: RunConfig, instance: RewardInstance, depth: int | None = None) -> RunTrace:
    """Zooming algorithm with per-pull feedback over a dyadic candidate grid.

    Confidence radius sqrt(8 log T / (1 + pulls)); index estimate + 2 radius;
    an uncovered candidate (first in lexicographic order) is activated whenever
    the active balls stop covering the grid.
    """
    T, d = config.T, instance.d
    depth = default_zooming_depth(d) if depth is None else depth
    cands = CubeSet.full_grid(depth, d)
    points = cands.centers()
    C = len(points)
    noise = NoiseModel(config.seed, config.noise_sigma)
    scale = 8.0 * config.logs.sample_log(T)

    cover = np.zeros(C, dtype=np.int64)
    arm_rows: list[int] = []
    dists: list[np.ndarray] = []
    pulls = np.zeros(0, dtype=np.int64)
    sums = np.zeros(0)
    radii = np.zeros(0)

    chosen = np.empty(T, dtype=np.int64)
    rewards = np.empty(T)
    eps = noise.draw(T)  # one variate per pull, in pull order
    means = instance.mean(points)

    def activate(row: int):
        nonlocal pulls, sums, radii
        dist = np.max(np.abs(points - points[row]), axis=1)
        rad = math.sqrt(scale)
        cover[dist <= rad] += 1
        arm_rows.append(row)
        dists.append(dist)
        pulls = np.append(pulls, 0)
        sums = np.append(sums, 0.0)
        radii = np.append(radii, rad)

    for t in range(T):
        if not arm_rows or cover.min() == 0:
            activate(int(np.flatnonzero(cover == 0)[0]) if arm_rows else 0)
        est = np.divide(sums, pulls, out=np.zeros_like(sums), where=pulls > 0)
        a = int(np.argmax(est + 2.0 * radii))
        row = arm_rows[a]
        y = means[row] + eps[t]
        chosen[t], rewards[t] = row, y
        pulls[a] += 1
        sums[a] += y
        old, new = radii[a], math.sqrt(scale / (1 + pulls[a]))
        radii[a] = new
        dist = dists[a]
        shrink = (dist > new) & (dist <= old)
        if shrink.any():
            cover[shrink] -= 1

    grid = list(range(T + 1))
    return RunTrace(
        algorithm="zooming",
        T=T,
        d=d,
        arms=points[chosen],
        rewards=rewards,
        batch=np.arange(1, T + 1),
        cube_depth=np.full(T, depth, dtype=np.int64),
        cube_index=cands.indices[chosen],
        batches=[],
        grid=grid,
        commits=T,
        config={**config.describe(), "schedule": {"kind": "per-pull"}, "candidate_depth": depth},
        extra={"active_arms": len(arm_rows)},
    )
