"""Segment rewards and the contrastive batch losses built on them.

Two reward parameterizations score a segment against an instruction
embedding:

* potential form: the change in frame/instruction cosine similarity
  between the segment's endpoints (per-step changes telescope, so only the
  endpoints matter);
* transition form: the cosine similarity between the embedding
  displacement goal - start and the instruction embedding.

Each batch loss contrasts every segment's matched instruction against all
in-batch mismatches, in both directions (over segments for a fixed
instruction, and over instructions for a fixed segment), InfoNCE style.
The multi-frame variants split a segment into 4 or 8 evenly spaced hops
and sum the per-hop transition rewards; the single-frame alignment loss
drops segments entirely and aligns one frame with the instruction, and
exists as a comparison arm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import (
    Tensor,
    cosine_matrix,
    cosine_similarity,
    logsumexp_axis,
)
from .errors import EmptyInputError, ShapeMismatchError

VARIANTS = ("p", "t", "t4", "t8", "frame-align")
_MULTIFRAME_HOPS = {"t4": 4, "t8": 8}


@dataclass(frozen=True)
class ObjectiveSpec:
    """Selects a loss variant and the embedding dimension it operates in."""

    variant: str = "t"
    embed_dim: int = 32
    temperature: float = 1.0  # divides logits; left at 1 everywhere by default

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ShapeMismatchError(f"unknown objective variant {self.variant!r}; pick from {VARIANTS}")
        if self.temperature <= 0:
            raise ShapeMismatchError("temperature must be positive")

    @property
    def hops(self) -> int:
        """Number of transition hops scored per segment (1 unless multi-frame)."""
        return _MULTIFRAME_HOPS.get(self.variant, 1)

    @property
    def n_sample_points(self) -> int:
        return self.hops + 1


@dataclass
class BatchEmbeddings:
    """Per-segment embeddings a batch loss consumes.

    ``starts``/``goals``/``instructions`` are (B, K) matrices (Tensor while
    training, ndarray for pure evaluation). ``intermediates`` holds the
    k+1 evenly spaced frame embeddings for multi-frame variants, as a list
    of (B, K) matrices ordered along the segment. ``single`` is the one
    randomly chosen frame per trajectory used by the frame-alignment arm.
    """

    starts: "Tensor | np.ndarray | None" = None
    goals: "Tensor | np.ndarray | None" = None
    instructions: "Tensor | np.ndarray | None" = None
    intermediates: Optional[list] = None
    single: "Tensor | np.ndarray | None" = None

    @property
    def batch_size(self) -> int:
        for m in (self.instructions, self.starts, self.single):
            if m is not None:
                return (m.value if isinstance(m, Tensor) else m).shape[0]
        raise EmptyInputError("batch embeddings are empty")


# ---- rewards ---------------------------------------------------------------------


def bt_probability(total_reward_pos: float, total_reward_neg: float) -> float:
    """Probability the positive segment wins a pairwise comparison:
    a stable sigmoid of the total-reward difference."""
    d = float(total_reward_pos) - float(total_reward_neg)
    if d >= 0:
        return 1.0 / (1.0 + np.exp(-d))
    e = np.exp(d)
    return float(e / (1.0 + e))


def potential_step_reward(phi_t, phi_next, psi_l):
    """Single-step reward: similarity gain of the next frame over the current one."""
    return cosine_similarity(phi_next, psi_l) - cosine_similarity(phi_t, psi_l)


def segment_reward_potential(phi_start, phi_goal, psi_l):
    """Endpoint similarity change; equals the sum of per-step rewards over
    any chain with the same endpoints (exact telescoping)."""
    return cosine_similarity(phi_goal, psi_l) - cosine_similarity(phi_start, psi_l)


def segment_reward_transition(phi_start, phi_goal, psi_l):
    """Similarity between the embedding displacement and the instruction;
    ~0 for (near-)zero displacements under the eps-floored cosine."""
    return cosine_similarity(phi_goal - phi_start, psi_l)


def multiframe_transition_reward(frames, psi_l, k: int):
    """Sum of per-hop transition rewards over k evenly spaced hops.

    ``frames`` must hold exactly k+1 embeddings; with k=1 this reduces to
    segment_reward_transition on the endpoints.
    """
    if len(frames) != k + 1:
        raise ShapeMismatchError(f"expected {k + 1} frame embeddings, got {len(frames)}")
    total = None
    for a, b in zip(frames[:-1], frames[1:]):
        term = cosine_similarity(b - a, psi_l)
        total = term if total is None else total + term
    return total


# ---- batch losses ----------------------------------------------------------------


def infonce_pair_loss(logits: "Tensor | np.ndarray"):
    """Two-sided contrastive loss over a (B, B) logit matrix.

    ``logits[j, i]`` scores segment j under instruction i. For each i the
    matched entry is contrasted against the i-th column (all segments) and
    the i-th row (all instructions); with all logits equal the value is
    exactly 2*ln(B).
    """
    values = logits.value if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ShapeMismatchError(f"logits must be square, got {values.shape}")
    b = values.shape[0]
    if b < 2:
        raise EmptyInputError(f"contrastive loss needs a batch of >= 2, got {b}")
    if isinstance(logits, Tensor):
        col = logsumexp_axis(logits, axis=0)
        row = logsumexp_axis(logits, axis=1)
        matched = logits.diagonal()
        return (col.sum() + row.sum() - 2.0 * matched.sum()) * (1.0 / b)
    m0 = values.max(axis=0, keepdims=True)
    col = np.log(np.exp(values - m0).sum(axis=0)) + m0[0]
    m1 = values.max(axis=1, keepdims=True)
    row = np.log(np.exp(values - m1).sum(axis=1)) + m1[:, 0]
    return float((col.sum() + row.sum() - 2.0 * np.trace(values)) / b)


def _transition_logits(batch: BatchEmbeddings) -> "Tensor | np.ndarray":
    return cosine_matrix(batch.goals - batch.starts, batch.instructions)


def potential_batch_loss(batch: BatchEmbeddings, temperature: float = 1.0):
    """Endpoint similarity-change logits, contrasted both ways."""
    logits = cosine_matrix(batch.goals, batch.instructions) - cosine_matrix(
        batch.starts, batch.instructions
    )
    return infonce_pair_loss(logits * (1.0 / temperature))


def transition_batch_loss(batch: BatchEmbeddings, temperature: float = 1.0):
    """Displacement-direction logits, contrasted both ways."""
    return infonce_pair_loss(_transition_logits(batch) * (1.0 / temperature))


def multiframe_batch_loss(batch: BatchEmbeddings, k: int, temperature: float = 1.0):
    """Sum of per-hop displacement logits over k evenly spaced hops."""
    frames = batch.intermediates
    if frames is None or len(frames) != k + 1:
        got = 0 if frames is None else len(frames)
        raise ShapeMismatchError(f"expected {k + 1} frame embedding matrices, got {got}")
    logits = None
    for a, b in zip(frames[:-1], frames[1:]):
        term = cosine_matrix(b - a, batch.instructions)
        logits = term if logits is None else logits + term
    return infonce_pair_loss(logits * (1.0 / temperature))


def frame_alignment_loss(batch: BatchEmbeddings, temperature: float = 1.0):
    """Symmetric single-frame/instruction contrastive loss (comparison arm)."""
    if batch.single is None:
        raise ShapeMismatchError("frame-alignment loss needs single-frame embeddings")
    logits = cosine_matrix(batch.single, batch.instructions)
    return infonce_pair_loss(logits * (1.0 / temperature))


def batch_loss(spec: ObjectiveSpec, batch: BatchEmbeddings):
    """Dispatch to the loss selected by ``spec``."""
    if spec.variant == "p":
        return potential_batch_loss(batch, spec.temperature)
    if spec.variant == "t":
        return transition_batch_loss(batch, spec.temperature)
    if spec.variant in _MULTIFRAME_HOPS:
        return multiframe_batch_loss(batch, _MULTIFRAME_HOPS[spec.variant], spec.temperature)
    return frame_alignment_loss(batch, spec.temperature)
