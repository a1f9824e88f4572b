"""A procedural video-language world with ground-truth task progression.

Tasks come in mirror pairs ("open door" / "close door"). Each pair owns a
random linear rendering map applied to the progression features
(s, s^2, sin 2*pi*s); the mirror task renders with a negated argument
s = -z, so both halves of a pair start from the same all-zero feature point
and move in opposite directions. On top of the task signal, observations
carry a per-trajectory scene offset with slow drift, a block of random-walk
distractor dimensions, and per-frame Gaussian noise; none of these carry
task information.

A scripted expert advances the completion level z from 0 to exactly 1 with
random per-step increments and records its actions, which makes every
generated trajectory a replayable demonstration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .encoders import Instruction
from .errors import DatasetFormatError, EmptyInputError, VocabularyError
from .sampling import Trajectory

# Step gain: one fully aligned unit action advances z by this much.
STEP_GAIN = 0.05
# Expert per-step increment is uniform in [0.5, 1.5] times STEP_GAIN.
EXPERT_PACE = (0.5, 1.5)
# Scale of the per-trajectory scene offset (task-irrelevant appearance).
SCENE_SIGMA = 3.0
# Per-step drift of the scene offset; keeps it from being perfectly static
# so displacement-based objectives see (and learn to ignore) scene content.
SCENE_DRIFT = 0.15
# Per-step standard deviation of the distractor random walk.
WALK_SIGMA = 0.4
# Fraction of observation dimensions given to each task-irrelevant block
# (scene offset and distractor walk); the rest carry the task rendering.
DISTRACTOR_FRACTION = 0.25
# The squared-progression feature is shared between mirror tasks; its
# rendering weight is tempered so mirrored motions stay distinguishable.
EVEN_CHANNEL_SCALE = 0.35
# Progression level above which an instruction counts as accomplished.
SUCCESS_THRESHOLD = 0.9

VERB_NAMES = ("open", "close", "push", "pull", "lift", "lower", "turn-on", "turn-off")
OBJECT_NAMES = ("door", "drawer", "box", "lamp")

DATASET_FORMAT = "segnce-dataset"
DATASET_VERSION = 1


@dataclass(frozen=True)
class WorldConfig:
    task_pairs: int = 4
    d_obs: int = 32
    noise: float = 0.05
    h_min: int = 20
    h_max: int = 40
    d_act: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.task_pairs < 1 or self.d_obs < 4 or self.d_act < 1:
            raise EmptyInputError("world dimensions must be positive")
        if not (2 <= self.h_min <= self.h_max):
            raise EmptyInputError("need 2 <= h_min <= h_max")
        if self.task_pairs > len(OBJECT_NAMES):
            raise VocabularyError(f"at most {len(OBJECT_NAMES)} task pairs are nameable")

    @property
    def n_tasks(self) -> int:
        return 2 * self.task_pairs

    @property
    def vocab_size(self) -> int:
        # verbs occupy ids 0..2P-1, objects 2P..3P-1
        return 3 * self.task_pairs


@dataclass
class LatentState:
    """Ground-truth state: task id, completion level z, task-irrelevant latent."""

    task: int
    z: float
    distractors: np.ndarray  # scene offset block + walk block


class World:
    """Owns the rendering maps, task directions, and dynamics for one config.

    The map and direction draws depend only on ``config.seed``, so datasets
    generated with different data seeds share the same underlying tasks.
    """

    def __init__(self, config: WorldConfig):
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x57A7]))
        # observation layout: [task rendering | scene offset | distractor walk]
        self.n_walk = max(1, int(config.d_obs * DISTRACTOR_FRACTION))
        self.n_scene = max(1, int(config.d_obs * DISTRACTOR_FRACTION))
        self.n_task = config.d_obs - self.n_scene - self.n_walk
        # one rendering map per pair, shared by the pair's two tasks
        self.render_maps = rng.normal(0.0, 1.0, (config.task_pairs, self.n_task, 3)) / np.sqrt(3.0)
        self.render_maps[:, :, 1] *= EVEN_CHANNEL_SCALE
        dirs = rng.normal(0.0, 1.0, (config.task_pairs, config.d_act))
        self.pair_directions = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        self.action_clamps = 0  # incremented whenever step() has to clamp an action

    # ---- instructions ---------------------------------------------------------

    def instruction_for_task(self, task: int) -> Instruction:
        if not (0 <= task < self.config.n_tasks):
            raise VocabularyError(f"task {task} outside 0..{self.config.n_tasks - 1}")
        return Instruction(verb=task, obj=2 * self.config.task_pairs + task // 2)

    def task_for_instruction(self, instruction: Instruction) -> int:
        task = instruction.verb
        if not (0 <= task < self.config.n_tasks):
            raise VocabularyError(f"unknown verb token {instruction.verb}")
        if instruction.obj != 2 * self.config.task_pairs + task // 2:
            raise VocabularyError(
                f"instruction {instruction} does not name a task in this world"
            )
        return task

    def mirror_task(self, task: int) -> int:
        return task ^ 1

    def instructions(self) -> list[Instruction]:
        return [self.instruction_for_task(t) for t in range(self.config.n_tasks)]

    def instruction_name(self, instruction: Instruction) -> str:
        verb = VERB_NAMES[instruction.verb]
        obj = OBJECT_NAMES[instruction.obj - 2 * self.config.task_pairs]
        return f"{verb} {obj}"

    def parse_instruction(self, text: str) -> Instruction:
        parts = text.strip().split()
        if len(parts) != 2:
            raise VocabularyError(f"instruction must be '<verb> <object>', got {text!r}")
        verb_txt, obj_txt = parts
        try:
            verb = VERB_NAMES.index(verb_txt)
            obj = OBJECT_NAMES.index(obj_txt)
        except ValueError:
            raise VocabularyError(f"unknown instruction token in {text!r}") from None
        instruction = Instruction(verb=verb, obj=2 * self.config.task_pairs + obj)
        self.task_for_instruction(instruction)  # validates the pairing
        return instruction

    # ---- dynamics and rendering ----------------------------------------------

    def direction(self, task: int) -> np.ndarray:
        d = self.pair_directions[task // 2]
        return d if task % 2 == 0 else -d

    def clamp_actions(self, actions: np.ndarray) -> np.ndarray:
        return np.clip(actions, -1.0, 1.0)

    def step(self, state: LatentState, action: np.ndarray) -> LatentState:
        """Deterministic latent transition; out-of-range actions are clamped
        (and counted) rather than rejected. Distractors do not move here."""
        action = np.asarray(action, dtype=np.float64)
        clamped = self.clamp_actions(action)
        if not np.array_equal(clamped, action):
            self.action_clamps += 1
        gain = float(clamped @ self.direction(state.task))
        z = float(np.clip(state.z + STEP_GAIN * gain, 0.0, 1.0))
        return LatentState(task=state.task, z=z, distractors=state.distractors)

    def _features(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        return np.stack([s, s * s, np.sin(2.0 * np.pi * s)], axis=-1)

    def _signed_progress(self, task: int, z):
        return z if task % 2 == 0 else -np.asarray(z, dtype=np.float64)

    def render(self, state: LatentState, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Observation vector for a state; pass an rng to add sensor noise."""
        obs = np.empty(self.config.d_obs)
        s = self._signed_progress(state.task, state.z)
        obs[: self.n_task] = self.render_maps[state.task // 2] @ self._features(s)
        obs[self.n_task :] = state.distractors
        if rng is not None and self.config.noise > 0:
            obs += rng.normal(0.0, self.config.noise, self.config.d_obs)
        return obs

    def render_batch(self, task: int, zs: np.ndarray, distractors: np.ndarray) -> np.ndarray:
        """Noise-free render of many completion levels under one fixed
        task-irrelevant latent; used by planning rollouts."""
        s = self._signed_progress(task, np.asarray(zs, dtype=np.float64))
        obs = np.empty((len(zs), self.config.d_obs))
        obs[:, : self.n_task] = self._features(s) @ self.render_maps[task // 2].T
        obs[:, self.n_task :] = distractors
        return obs

    def sample_start(self, task: int, rng: np.random.Generator, z_jitter: float = 0.0) -> LatentState:
        distractors = np.empty(self.n_scene + self.n_walk)
        distractors[: self.n_scene] = rng.normal(0.0, SCENE_SIGMA, self.n_scene)
        distractors[self.n_scene :] = rng.normal(0.0, 1.0, self.n_walk)
        z = float(rng.uniform(0.0, z_jitter)) if z_jitter > 0 else 0.0
        return LatentState(task=task, z=z, distractors=distractors)

    def advance_distractors(self, state: LatentState, rng: np.random.Generator) -> None:
        """One step of the task-irrelevant processes: slow scene drift plus
        the distractor random walk. Used by generation and closed-loop
        evaluation; planning rollouts keep distractors frozen."""
        state.distractors[: self.n_scene] += rng.normal(0.0, SCENE_DRIFT, self.n_scene)
        state.distractors[self.n_scene :] += rng.normal(0.0, WALK_SIGMA, self.n_walk)

    # ---- ground-truth evaluation ----------------------------------------------

    def progression_for(self, task: int, z, instruction: Instruction):
        """Completion level of ``instruction`` given a state of ``task`` at z."""
        other = self.task_for_instruction(instruction)
        if other == task:
            return z
        if other == self.mirror_task(task):
            return 1.0 - np.asarray(z, dtype=np.float64) if np.ndim(z) else 1.0 - z
        return np.full_like(np.asarray(z, dtype=np.float64), 0.5) if np.ndim(z) else 0.5

    def progression_oracle(self, traj: Trajectory, instruction: Instruction) -> np.ndarray:
        """Ground-truth per-frame completion of ``instruction`` along a
        generated trajectory (matched task: z; mirror: 1 - z; unrelated: 0.5)."""
        if traj.progression is None:
            raise EmptyInputError("trajectory carries no ground-truth progression")
        task = self.task_for_instruction(traj.instruction)
        return np.asarray(self.progression_for(task, traj.progression, instruction))

    def success(self, state: LatentState, instruction: Instruction) -> bool:
        return float(self.progression_for(state.task, state.z, instruction)) > SUCCESS_THRESHOLD

    # ---- scripted expert generation --------------------------------------------

    def _expert_trajectory(self, task: int, rng: np.random.Generator) -> Trajectory:
        cfg = self.config
        d = self.direction(task)
        state = self.sample_start(task, rng)

        observations = [self.render(state, rng)]
        zs = [state.z]
        actions = []
        while True:
            n_frames = len(zs)
            if state.z >= 1.0 and n_frames >= cfg.h_min:
                break
            if n_frames >= cfg.h_max:
                break
            if state.z >= 1.0:
                action = np.zeros(cfg.d_act)  # task done, hold still
            else:
                pace = rng.uniform(*EXPERT_PACE)
                if n_frames == cfg.h_max - 1:
                    pace = (1.0 - state.z) / STEP_GAIN  # last chance, finish exactly
                action = self.clamp_actions(pace * d)
            state = self.step(state, action)
            self.advance_distractors(state, rng)
            actions.append(action)
            zs.append(state.z)
            observations.append(self.render(state, rng))

        return Trajectory(
            observations=np.array(observations),
            instruction=self.instruction_for_task(task),
            actions=np.array(actions),
            progression=np.array(zs),
        )

    def generate(self, n_trajectories: int, seed: Optional[int] = None) -> list[Trajectory]:
        """Uniform-random tasks, one scripted-expert trajectory each."""
        if n_trajectories < 1:
            raise EmptyInputError("need at least one trajectory")
        root = np.random.SeedSequence([self.config.seed if seed is None else seed, 0xDA7A])
        children = root.spawn(n_trajectories)
        out = []
        for child in children:
            rng = np.random.default_rng(child)
            task = int(rng.integers(0, self.config.n_tasks))
            out.append(self._expert_trajectory(task, rng))
        return out

    def generate_demos(self, per_task: int, seed: Optional[int] = None) -> list[Trajectory]:
        """Balanced demonstrations: exactly ``per_task`` trajectories per task."""
        if per_task < 1:
            raise EmptyInputError("need at least one demo per task")
        root = np.random.SeedSequence([self.config.seed if seed is None else seed, 0xDE40])
        children = root.spawn(per_task * self.config.n_tasks)
        out = []
        for i, child in enumerate(children):
            rng = np.random.default_rng(child)
            out.append(self._expert_trajectory(i % self.config.n_tasks, rng))
        return out


def generate_dataset(config: WorldConfig, n_trajectories: int, seed: Optional[int] = None) -> list[Trajectory]:
    return World(config).generate(n_trajectories, seed=seed)


# ---- serialization -----------------------------------------------------------------


def save_dataset(path, config: WorldConfig, trajectories: list[Trajectory]) -> None:
    """Line-delimited records, one trajectory per line, bit-exact round trip.

    Floats are emitted with Python's shortest round-trip repr, so loading
    reproduces the exact float64 values.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        header = {
            "format": DATASET_FORMAT,
            "version": DATASET_VERSION,
            "config": asdict(config),
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for traj in trajectories:
            record = {
                "instruction": [traj.instruction.verb, traj.instruction.obj],
                "h": traj.h,
                "observations": traj.observations.reshape(-1).tolist(),
                "actions": None if traj.actions is None else traj.actions.reshape(-1).tolist(),
                "progression": None if traj.progression is None else traj.progression.tolist(),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_dataset(path) -> tuple[WorldConfig, list[Trajectory]]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"unreadable dataset header: {exc}") from exc
        if header.get("format") != DATASET_FORMAT:
            raise DatasetFormatError(f"not a {DATASET_FORMAT} file: {path}")
        if header.get("version") != DATASET_VERSION:
            raise DatasetFormatError(f"unsupported dataset version {header.get('version')}")
        config = WorldConfig(**header["config"])
        trajectories = []
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                h = rec["h"]
                obs = np.array(rec["observations"], dtype=np.float64).reshape(h, config.d_obs)
                actions = rec.get("actions")
                progression = rec.get("progression")
                trajectories.append(
                    Trajectory(
                        observations=obs,
                        instruction=Instruction(*rec["instruction"]),
                        actions=None
                        if actions is None
                        else np.array(actions, dtype=np.float64).reshape(h - 1, config.d_act),
                        progression=None
                        if progression is None
                        else np.array(progression, dtype=np.float64),
                    )
                )
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise DatasetFormatError(f"bad record at line {line_no}: {exc}") from exc
    return config, trajectories


