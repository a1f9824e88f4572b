"""Trajectories, segments, and the random segment sampler.

A segment is a (start, goal) index pair into a trajectory; only the two
endpoint frames are ever materialized by consumers. The sampler draws the
start uniformly over all frames but the last, then the goal uniformly over
the frames after it, which makes later frames increasingly likely goals.
``goal_probability`` gives that goal distribution in closed form for the
raw process where the start may also land on the final frame (in which
case no goal exists and the draw is a no-op).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .encoders import Instruction
from .errors import EmptyInputError, ShapeMismatchError


@dataclass
class Trajectory:
    """An observation sequence with an instruction label and optional actions.

    ``progression`` is the generator's ground-truth completion level per
    frame; it is carried for evaluation oracles and is not consumed by
    training.
    """

    observations: np.ndarray  # (h, d_obs)
    instruction: Instruction
    actions: Optional[np.ndarray] = None  # (h - 1, d_act)
    progression: Optional[np.ndarray] = None  # (h,)

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float64)
        if self.observations.ndim != 2 or self.observations.shape[0] < 2:
            raise ShapeMismatchError(
                f"trajectory needs a (h>=2, d_obs) observation matrix, got {self.observations.shape}"
            )
        if self.actions is not None:
            self.actions = np.asarray(self.actions, dtype=np.float64)
            if self.actions.shape[0] != self.h - 1:
                raise ShapeMismatchError(
                    f"expected {self.h - 1} actions for {self.h} frames, got {self.actions.shape[0]}"
                )
        if self.progression is not None:
            self.progression = np.asarray(self.progression, dtype=np.float64)
            if self.progression.shape != (self.h,):
                raise ShapeMismatchError("progression length must equal trajectory length")

    @property
    def h(self) -> int:
        return self.observations.shape[0]


@dataclass(frozen=True)
class Segment:
    """A start/goal frame pair within one trajectory (0-based, start < goal)."""

    trajectory: Trajectory
    start: int
    goal: int

    def __post_init__(self):
        if not (0 <= self.start < self.goal <= self.trajectory.h - 1):
            raise ShapeMismatchError(
                f"segment indices ({self.start}, {self.goal}) invalid for length {self.trajectory.h}"
            )

    @property
    def instruction(self) -> Instruction:
        return self.trajectory.instruction

    @property
    def length(self) -> int:
        return self.goal - self.start

    def start_observation(self) -> np.ndarray:
        return self.trajectory.observations[self.start]

    def goal_observation(self) -> np.ndarray:
        return self.trajectory.observations[self.goal]

    def frame_indices(self, k: int) -> np.ndarray:
        """The k+1 evenly spaced frame indices start + floor(length * i / k)."""
        i = np.arange(k + 1)
        return self.start + (self.length * i) // k


@dataclass
class SegmentBatch:
    """A batch of segments; instruction labels come from each segment's trajectory."""

    segments: list[Segment]

    def __post_init__(self):
        if len(self.segments) < 2:
            raise EmptyInputError("a segment batch needs at least 2 segments")

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def instructions(self) -> list[Instruction]:
        return [s.instruction for s in self.segments]


def sample_segment(traj: Trajectory, rng: np.random.Generator) -> Segment:
    """Draw start uniform over frames 0..h-2, goal uniform over the later frames."""
    h = traj.h
    if h < 2:
        raise EmptyInputError(f"cannot sample a segment from a length-{h} trajectory")
    start = int(rng.integers(0, h - 1))
    goal = int(rng.integers(start + 1, h))
    return Segment(traj, start, goal)


def goal_probability(h: int, t: int) -> float:
    """Probability that 1-based frame t is drawn as the goal under the raw
    process (start uniform over all h frames, including the degenerate last
    frame whose goal set is empty)."""
    if h < 2:
        raise EmptyInputError(f"need h >= 2, got {h}")
    if not (1 <= t <= h):
        raise ShapeMismatchError(f"frame index t={t} outside 1..{h}")
    i = np.arange(1, t)
    return float(np.sum(1.0 / (h - i)) / h)


def empirical_goal_histogram(
    h: int, n_samples: int, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    """Simulate the raw sampling process and tally goal frequencies.

    Returns (freq, no_goal_fraction) where freq[t-1] estimates
    goal_probability(h, t); draws whose start lands on the last frame are
    tallied as "no goal" and estimate 1/h.
    """
    if h < 2:
        raise EmptyInputError(f"need h >= 2, got {h}")
    if n_samples < 1:
        raise EmptyInputError("need at least one sample")
    starts = rng.integers(1, h + 1, size=n_samples)  # 1-based
    room = h - starts
    has_goal = room > 0
    u = rng.random(n_samples)
    goals = starts + 1 + np.floor(u * room).astype(np.int64)
    counts = np.bincount(goals[has_goal], minlength=h + 1)[1 : h + 1]
    return counts / n_samples, float((~has_goal).sum() / n_samples)


def sample_batch(dataset: Sequence[Trajectory], batch_size: int, rng: np.random.Generator) -> SegmentBatch:
    """Uniform-with-replacement trajectory draws, one segment per slot."""
    if len(dataset) == 0:
        raise EmptyInputError("cannot sample a batch from an empty dataset")
    if batch_size < 2:
        raise EmptyInputError(f"batch size must be >= 2, got {batch_size}")
    idx = rng.integers(0, len(dataset), size=batch_size)
    return SegmentBatch([sample_segment(dataset[i], rng) for i in idx])
