"""Read-only consumers of a trained checkpoint: reward curves, heatmaps,
and first-frame clustering statistics.

All functions here run the frozen (numpy) encoder paths, so nothing can
backpropagate into a checkpoint by construction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import cosine_similarity, mlp_apply, normalize_rows
from .encoders import Instruction, encode_instruction
from .errors import EmptyInputError, ShapeMismatchError
from .objectives import (
    multiframe_transition_reward,
    segment_reward_potential,
    segment_reward_transition,
)
from .sampling import Segment, Trajectory
from .training import Checkpoint


@dataclass
class RewardCurve:
    """Per-frame similarity of one trajectory to one instruction.

    ``normalized`` is the min-max rescaling of ``raw`` onto [0, 1]; a
    constant curve maps to all 0.5 by convention.
    """

    instruction: Instruction
    raw: np.ndarray
    normalized: np.ndarray


@dataclass
class HeatmapGrid:
    """Segment-by-instruction reward matrix; matched pairs sit where a row's
    source instruction equals the column instruction."""

    segments: list[Segment]
    instructions: list[Instruction]
    values: np.ndarray  # (n_segments, n_instructions)
    row_labels: list[str]
    col_labels: list[str]


def embed_frames(ckpt: Checkpoint, observations: np.ndarray) -> np.ndarray:
    """Frozen vision embeddings for a (h, d_obs) observation matrix."""
    return mlp_apply(ckpt.encoders.vision, np.asarray(observations, dtype=np.float64))


def embed_instruction(ckpt: Checkpoint, instruction: Instruction) -> np.ndarray:
    return encode_instruction(ckpt.encoders.language, instruction)


def normalize_curve(raw: np.ndarray) -> np.ndarray:
    lo, hi = float(raw.min()), float(raw.max())
    if hi > lo:
        return (raw - lo) / (hi - lo)
    return np.full_like(raw, 0.5)


def reward_curve(ckpt: Checkpoint, traj: Trajectory, instruction: Instruction) -> RewardCurve:
    """Raw per-frame frame/instruction cosine similarities plus their
    min-max normalization."""
    d_obs = ckpt.encoders.config.d_obs
    if traj.observations.shape[1] != d_obs:
        raise ShapeMismatchError(
            f"trajectory observation width {traj.observations.shape[1]} != checkpoint d_obs {d_obs}"
        )
    phi = embed_frames(ckpt, traj.observations)
    psi = embed_instruction(ckpt, instruction)
    raw = normalize_rows(phi) @ (psi / max(float(np.linalg.norm(psi)), 1e-8))
    return RewardCurve(instruction=instruction, raw=raw, normalized=normalize_curve(raw))


def segment_score(ckpt: Checkpoint, segment: Segment, instruction: Instruction) -> float:
    """Segment reward under the checkpoint's own objective family."""
    psi = embed_instruction(ckpt, instruction)
    variant = ckpt.objective.variant
    if variant == "p":
        phi_start = embed_frames(ckpt, segment.start_observation()[None])[0]
        phi_goal = embed_frames(ckpt, segment.goal_observation()[None])[0]
        return float(segment_reward_potential(phi_start, phi_goal, psi))
    if variant == "frame-align":
        phi_goal = embed_frames(ckpt, segment.goal_observation()[None])[0]
        return float(cosine_similarity(phi_goal, psi))
    hops = ckpt.objective.hops
    if hops > 1:
        idx = segment.frame_indices(hops)
        frames = embed_frames(ckpt, segment.trajectory.observations[idx])
        return float(multiframe_transition_reward(list(frames), psi, hops))
    phi_start = embed_frames(ckpt, segment.start_observation()[None])[0]
    phi_goal = embed_frames(ckpt, segment.goal_observation()[None])[0]
    return float(segment_reward_transition(phi_start, phi_goal, psi))


def reward_heatmap(
    ckpt: Checkpoint,
    segments: Sequence[Segment],
    instructions: Sequence[Instruction],
    row_labels: Sequence[str] | None = None,
    col_labels: Sequence[str] | None = None,
) -> HeatmapGrid:
    if len(segments) == 0 or len(instructions) == 0:
        raise EmptyInputError("heatmap needs at least one segment and one instruction")
    values = np.array(
        [[segment_score(ckpt, seg, ins) for ins in instructions] for seg in segments]
    )
    return HeatmapGrid(
        segments=list(segments),
        instructions=list(instructions),
        values=values,
        row_labels=list(row_labels) if row_labels else [f"segment{i}" for i in range(len(segments))],
        col_labels=list(col_labels) if col_labels else [f"instruction{j}" for j in range(len(instructions))],
    )


def first_image_similarity_stats(
    ckpt: Checkpoint,
    dataset: Sequence[Trajectory],
    vocabulary: Sequence[Instruction],
    rng: np.random.Generator | None = None,
    max_trajectories: int = 100,
) -> dict:
    """Mean pairwise cosine among first-frame embeddings over up to 100
    trajectories, plus their mean cosine to the average instruction embedding."""
    if len(dataset) < 2:
        raise EmptyInputError("need at least two trajectories")
    picks = list(range(len(dataset)))
    if len(dataset) > max_trajectories:
        rng = rng or np.random.default_rng(0)
        picks = list(rng.choice(len(dataset), size=max_trajectories, replace=False))
    firsts = np.stack([dataset[i].observations[0] for i in picks])
    emb = normalize_rows(embed_frames(ckpt, firsts))
    gram = emb @ emb.T
    n = len(picks)
    iu = np.triu_indices(n, k=1)
    pairwise_mean = float(gram[iu].mean())

    psi_all = np.stack([embed_instruction(ckpt, ins) for ins in vocabulary])
    psi_mean = psi_all.mean(axis=0)
    psi_mean = psi_mean / max(float(np.linalg.norm(psi_mean)), 1e-8)
    to_mean_instruction = float((emb @ psi_mean).mean())
    return {
        "n_trajectories": n,
        "first_image_pairwise_mean": pairwise_mean,
        "first_image_to_mean_instruction": to_mean_instruction,
    }


def random_frame_pair_similarity(
    ckpt: Checkpoint,
    dataset: Sequence[Trajectory],
    rng: np.random.Generator,
    n_pairs: int = 2000,
) -> float:
    """Mean pairwise cosine over random mid-trajectory frames (frame index
    >= 1) drawn from random trajectories; the comparison baseline for the
    first-frame clustering statistic."""
    if len(dataset) < 2:
        raise EmptyInputError("need at least two trajectories")
    frames = []
    for _ in range(2 * n_pairs):
        traj = dataset[int(rng.integers(0, len(dataset)))]
        t = int(rng.integers(1, traj.h))
        frames.append(traj.observations[t])
    emb = normalize_rows(embed_frames(ckpt, np.stack(frames)))
    a, b = emb[:n_pairs], emb[n_pairs:]
    return float(np.sum(a * b, axis=1).mean())


# ---- exports -------------------------------------------------------------------


def write_curve_csv(path, curve: RewardCurve) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "raw", "normalized"])
        for t, (r, n) in enumerate(zip(curve.raw, curve.normalized)):
            writer.writerow([t, repr(float(r)), repr(float(n))])


def write_heatmap_csv(path, grid: HeatmapGrid) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", *grid.col_labels])
        for label, row in zip(grid.row_labels, grid.values):
            writer.writerow([label, *(repr(float(v)) for v in row)])


def write_stats_json(path, stats: dict) -> None:
    Path(path).write_text(json.dumps(stats, sort_keys=True, indent=2) + "\n", encoding="utf-8")
