"""Zero-shot language-reward planning with a path-integral controller.

Action sequences are proposed as Gaussian noise around a nominal sequence
(the warmstart, or zeros), rolled out through the world's deterministic
latent dynamics, and scored with the per-step embedding reward: the change
in frame/instruction cosine similarity. Returns are normalized across the
proposal set, turned into softmax weights at the configured temperature,
and the weighted average becomes the next nominal sequence. The final
nominal sequence is executed open loop.

An oracle reward (ground-truth progression change) is available as an
upper-bound sanity arm, and a uniform random-action baseline as the floor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .analysis import embed_frames, embed_instruction
from .autodiff import normalize_rows
from .encoders import Instruction
from .errors import EmptyInputError, ShapeMismatchError
from .training import Checkpoint
from .world import STEP_GAIN, LatentState, World


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 50
    n_sequences: int = 64
    iterations: int = 1
    temperature: float = 10.0
    gamma: float = 1.0
    noise_scale: float = 0.3
    warmstart: Optional[np.ndarray] = None  # (horizon, d_act) nominal sequence

    def __post_init__(self):
        if self.horizon < 1 or self.n_sequences < 2 or self.iterations < 1:
            raise EmptyInputError("need horizon >= 1, n_sequences >= 2, iterations >= 1")
        if self.temperature <= 0 or not (0 < self.gamma <= 1):
            raise EmptyInputError("need temperature > 0 and gamma in (0, 1]")


@dataclass
class RolloutScore:
    actions: np.ndarray
    raw_return: float
    normalized_return: float


def _roll_z(world: World, task: int, z0: float, actions: np.ndarray) -> np.ndarray:
    """Latent completion path (n, horizon+1) for a batch of action sequences."""
    acts = world.clamp_actions(np.asarray(actions, dtype=np.float64))
    proj = acts @ world.direction(task)  # (n, horizon)
    n, horizon = proj.shape
    zs = np.empty((n, horizon + 1))
    zs[:, 0] = z0
    z = np.full(n, z0)
    for t in range(horizon):
        z = np.clip(z + STEP_GAIN * proj[:, t], 0.0, 1.0)
        zs[:, t + 1] = z
    return zs


def _embedding_similarity_curve(
    ckpt: Checkpoint, world: World, state: LatentState, zs: np.ndarray, psi_hat: np.ndarray
) -> np.ndarray:
    """Frame/instruction cosine for every z in a (n, horizon+1) grid."""
    n, steps = zs.shape
    obs = world.render_batch(state.task, zs.reshape(-1), state.distractors)
    emb = normalize_rows(embed_frames(ckpt, obs))
    return (emb @ psi_hat).reshape(n, steps)


def rollout_return(
    ckpt: Checkpoint,
    world: World,
    start_state: LatentState,
    actions: np.ndarray,
    instruction: Instruction,
    gamma: float = 1.0,
) -> float:
    """Discounted sum of per-step similarity changes along one noise-free rollout.

    With gamma = 1 this telescopes to the endpoint similarity difference.
    """
    actions = np.asarray(actions, dtype=np.float64)
    if actions.ndim != 2 or actions.shape[1] != world.config.d_act:
        raise ShapeMismatchError(f"actions must be (horizon, {world.config.d_act}), got {actions.shape}")
    psi = embed_instruction(ckpt, instruction)
    psi_hat = psi / max(float(np.linalg.norm(psi)), 1e-8)
    zs = _roll_z(world, start_state.task, start_state.z, actions[None])
    sim = _embedding_similarity_curve(ckpt, world, start_state, zs, psi_hat)[0]
    steps = np.diff(sim)
    weights = gamma ** np.arange(len(steps))
    return float(np.sum(weights * steps))


def normalize_returns(returns: np.ndarray) -> np.ndarray:
    """Standardize returns over the proposal set; std floored at 1e-8."""
    returns = np.asarray(returns, dtype=np.float64)
    return (returns - returns.mean()) / max(float(returns.std()), 1e-8)


def score_rollouts(
    ckpt: Checkpoint,
    world: World,
    start_state: LatentState,
    proposals: np.ndarray,
    instruction: Instruction,
    gamma: float = 1.0,
) -> list[RolloutScore]:
    """Embedding-reward returns for a proposal set, raw and normalized."""
    psi = embed_instruction(ckpt, instruction)
    psi_hat = psi / max(float(np.linalg.norm(psi)), 1e-8)
    zs = _roll_z(world, start_state.task, start_state.z, proposals)
    sim = _embedding_similarity_curve(ckpt, world, start_state, zs, psi_hat)
    gammas = gamma ** np.arange(proposals.shape[1])
    raw = np.sum(np.diff(sim, axis=1) * gammas, axis=1)
    normalized = normalize_returns(raw)
    return [
        RolloutScore(actions=p, raw_return=float(r), normalized_return=float(n))
        for p, r, n in zip(proposals, raw, normalized)
    ]


def mppi_weights(normalized_returns: np.ndarray, temperature: float) -> np.ndarray:
    scaled = np.asarray(normalized_returns, dtype=np.float64) / temperature
    scaled = scaled - scaled.max()
    w = np.exp(scaled)
    return w / w.sum()


def weighted_average(proposals: np.ndarray, normalized_returns: np.ndarray, temperature: float) -> np.ndarray:
    """Softmax-weighted average of proposal sequences (a convex combination)."""
    w = mppi_weights(normalized_returns, temperature)
    return np.tensordot(w, proposals, axes=(0, 0))


ReturnsFn = Callable[[np.ndarray], np.ndarray]


def _mppi(returns_fn: ReturnsFn, config: PlannerConfig, d_act: int, rng: np.random.Generator) -> np.ndarray:
    nominal = (
        np.array(config.warmstart, dtype=np.float64)
        if config.warmstart is not None
        else np.zeros((config.horizon, d_act))
    )
    if nominal.shape != (config.horizon, d_act):
        raise ShapeMismatchError(f"warmstart shape {nominal.shape} != ({config.horizon}, {d_act})")
    for _ in range(config.iterations):
        noise = rng.normal(0.0, config.noise_scale, (config.n_sequences, config.horizon, d_act))
        proposals = nominal[None] + noise
        returns = returns_fn(proposals)
        nominal = weighted_average(proposals, normalize_returns(returns), config.temperature)
    return nominal


def plan(
    ckpt: Checkpoint,
    world: World,
    start_state: LatentState,
    instruction: Instruction,
    config: PlannerConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Optimize an action sequence against the embedding reward."""
    psi = embed_instruction(ckpt, instruction)
    psi_hat = psi / max(float(np.linalg.norm(psi)), 1e-8)
    gammas = config.gamma ** np.arange(config.horizon)

    def returns_fn(proposals: np.ndarray) -> np.ndarray:
        zs = _roll_z(world, start_state.task, start_state.z, proposals)
        sim = _embedding_similarity_curve(ckpt, world, start_state, zs, psi_hat)
        return np.sum(np.diff(sim, axis=1) * gammas, axis=1)

    return _mppi(returns_fn, config, world.config.d_act, rng)


def plan_with_oracle(
    world: World,
    start_state: LatentState,
    instruction: Instruction,
    config: PlannerConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Same controller, but scored with ground-truth progression changes."""
    world.task_for_instruction(instruction)  # validates the instruction
    gammas = config.gamma ** np.arange(config.horizon)

    def returns_fn(proposals: np.ndarray) -> np.ndarray:
        zs = _roll_z(world, start_state.task, start_state.z, proposals)
        prog = np.asarray(world.progression_for(start_state.task, zs, instruction))
        return np.sum(np.diff(prog, axis=1) * gammas, axis=1)

    return _mppi(returns_fn, config, world.config.d_act, rng)


def execute_plan(world: World, start_state: LatentState, actions: np.ndarray) -> LatentState:
    state = start_state
    for action in actions:
        state = world.step(state, action)
    return state


def evaluate_planner(
    ckpt: Optional[Checkpoint],
    world: World,
    instructions: Sequence[Instruction],
    episodes: int,
    config: PlannerConfig,
    seed: int = 0,
    reward: str = "embedding",
    z_jitter: float = 0.1,
) -> dict:
    """Open-loop planning success rates, instructions assigned round-robin.

    ``reward`` selects the scoring arm: "embedding" (needs a checkpoint),
    "oracle" (ground truth), or "random" (no planning, uniform actions).
    """
    if episodes < 1:
        raise EmptyInputError("need at least one episode")
    if reward not in ("embedding", "oracle", "random"):
        raise EmptyInputError(f"unknown reward arm {reward!r}")
    if reward == "embedding" and ckpt is None:
        raise EmptyInputError("embedding reward needs a checkpoint")
    root = np.random.SeedSequence([seed, 0x9147])
    successes = {world.instruction_name(ins): [] for ins in instructions}
    for episode, child in enumerate(root.spawn(episodes)):
        rng = np.random.default_rng(child)
        instruction = instructions[episode % len(instructions)]
        task = world.task_for_instruction(instruction)
        start = world.sample_start(task, rng, z_jitter=z_jitter)
        if reward == "random":
            actions = rng.uniform(-1.0, 1.0, (config.horizon, world.config.d_act))
        elif reward == "oracle":
            actions = plan_with_oracle(world, start, instruction, config, rng)
        else:
            actions = plan(ckpt, world, start, instruction, config, rng)
        final = execute_plan(world, start, actions)
        successes[world.instruction_name(instruction)].append(world.success(final, instruction))
    per_instruction = {
        name: (float(np.mean(vals)) if vals else float("nan")) for name, vals in successes.items()
    }
    overall = float(np.mean([s for vals in successes.values() for s in vals]))
    cfg = asdict(config)
    cfg["warmstart"] = None if config.warmstart is None else np.asarray(config.warmstart).tolist()
    return {
        "reward": reward,
        "episodes": episodes,
        "seed": seed,
        "config": cfg,
        "per_instruction": per_instruction,
        "success_rate": overall,
    }


def write_planner_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
