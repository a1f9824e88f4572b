"""Segment-contrastive vision-language representation learning, end to end.

The library trains a pair of encoders (observation vectors and two-token
instructions into one embedding space) with trajectory-segment contrastive
losses derived from pairwise-preference modeling, on a procedurally
generated video-language world. The learned embeddings then drive the
downstream consumers: per-frame reward curves and segment/instruction
heatmaps, zero-shot path-integral planning, and language-conditioned
behavior cloning on frozen features.
"""

from .autodiff import (
    MlpParams,
    Tensor,
    cosine_similarity,
    finite_difference_check,
    init_mlp,
    logsumexp,
    mlp_apply,
)
from .encoders import (
    EncoderConfig,
    Encoders,
    Instruction,
    InstructionEncoderParams,
    encode_instruction,
    encode_observation,
    init_params,
)
from .objectives import (
    BatchEmbeddings,
    ObjectiveSpec,
    batch_loss,
    bt_probability,
    frame_alignment_loss,
    multiframe_transition_reward,
    potential_batch_loss,
    potential_step_reward,
    segment_reward_potential,
    segment_reward_transition,
    transition_batch_loss,
)
from .sampling import (
    Segment,
    SegmentBatch,
    Trajectory,
    empirical_goal_histogram,
    goal_probability,
    sample_batch,
    sample_segment,
)
from .training import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train
from .world import LatentState, World, WorldConfig, generate_dataset, load_dataset, save_dataset

__all__ = [
    "BatchEmbeddings",
    "Checkpoint",
    "EncoderConfig",
    "Encoders",
    "Instruction",
    "InstructionEncoderParams",
    "LatentState",
    "MlpParams",
    "ObjectiveSpec",
    "Segment",
    "SegmentBatch",
    "Tensor",
    "TrainConfig",
    "Trajectory",
    "World",
    "WorldConfig",
    "batch_loss",
    "bt_probability",
    "cosine_similarity",
    "empirical_goal_histogram",
    "encode_instruction",
    "encode_observation",
    "finite_difference_check",
    "frame_alignment_loss",
    "generate_dataset",
    "goal_probability",
    "init_mlp",
    "init_params",
    "load_checkpoint",
    "load_dataset",
    "logsumexp",
    "mlp_apply",
    "multiframe_transition_reward",
    "potential_batch_loss",
    "potential_step_reward",
    "sample_batch",
    "sample_segment",
    "save_checkpoint",
    "save_dataset",
    "segment_reward_potential",
    "segment_reward_transition",
    "train",
    "transition_batch_loss",
]

__version__ = "0.1.0"
