"""Stochastic-gradient training loop, optimizers, and checkpoint persistence.

One iteration samples a batch of segments, embeds their endpoint frames and
instruction labels, evaluates the configured contrastive loss, and updates
both encoders jointly. The loop is fully determined by (seed, config,
dataset); the loss and global gradient norm are recorded every iteration.

Checkpoints are a small binary container: magic, format version, a JSON
header with configuration and array shapes, then raw little-endian float64
buffers. Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autodiff import Tensor
from .encoders import (
    EncoderConfig,
    Encoders,
    InstructionEncoderParams,
    MlpParams,
    encode_instructions,
    encode_observations,
    init_params,
)
from .errors import (
    CheckpointFormatError,
    EmptyInputError,
    NumericalError,
    TrainingDivergedError,
)
from .objectives import BatchEmbeddings, ObjectiveSpec, batch_loss
from .sampling import Trajectory, sample_batch

CHECKPOINT_MAGIC = b"SEGNCEAR"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    iterations: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # "adam" or "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    checkpoint_interval: int = 0  # 0: only the final checkpoint is kept
    encoder: Optional[EncoderConfig] = None

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 2 or self.learning_rate < 0:
            raise EmptyInputError("need iterations >= 1, batch_size >= 2, learning_rate >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise EmptyInputError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class Checkpoint:
    """Everything downstream consumers need: both encoders plus provenance."""

    encoders: Encoders
    objective: ObjectiveSpec
    config: TrainConfig
    iteration: int
    history: np.ndarray  # (n, 3): iteration, loss, grad norm


class Sgd:
    def __init__(self, leaves: Sequence[Tensor], lr: float, weight_decay: float = 0.0):
        self.leaves = list(leaves)
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self):
        for leaf in self.leaves:
            g = leaf.grad
            if self.weight_decay:
                g = g + self.weight_decay * leaf.value
            leaf.value -= self.lr * g


class Adam:
    """Adam with L2 coupled into the gradient (not decoupled decay)."""

    def __init__(self, leaves: Sequence[Tensor], lr: float, beta1=0.9, beta2=0.999,
                 eps=1e-8, weight_decay: float = 0.0):
        self.leaves = list(leaves)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(l.value) for l in self.leaves]
        self.v = [np.zeros_like(l.value) for l in self.leaves]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, leaf in enumerate(self.leaves):
            g = leaf.grad
            if self.weight_decay:
                g = g + self.weight_decay * leaf.value
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            leaf.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(config: TrainConfig, leaves: Sequence[Tensor]):
    if config.optimizer == "sgd":
        return Sgd(leaves, config.learning_rate, config.weight_decay)
    return Adam(
        leaves,
        config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.adam_eps,
        weight_decay=config.weight_decay,
    )


def _grad_norm(leaves: Sequence[Tensor]) -> float:
    total = 0.0
    for leaf in leaves:
        total += float((leaf.grad * leaf.grad).sum())
    return float(np.sqrt(total))


def _embed_batch(encoders: Encoders, spec: ObjectiveSpec, segments, rng) -> BatchEmbeddings:
    instructions = encode_instructions(
        encoders.language, [s.instruction for s in segments], tensor=True
    )
    if spec.variant == "frame-align":
        frames = np.stack(
            [s.trajectory.observations[rng.integers(0, s.trajectory.h)] for s in segments]
        )
        return BatchEmbeddings(
            single=encode_observations(encoders.vision, frames, tensor=True),
            instructions=instructions,
        )
    if spec.hops > 1:
        mats = []
        index_sets = [s.frame_indices(spec.hops) for s in segments]
        for pos in range(spec.n_sample_points):
            frames = np.stack(
                [s.trajectory.observations[idx[pos]] for s, idx in zip(segments, index_sets)]
            )
            mats.append(encode_observations(encoders.vision, frames, tensor=True))
        return BatchEmbeddings(
            starts=mats[0], goals=mats[-1], instructions=instructions, intermediates=mats
        )
    starts = np.stack([s.start_observation() for s in segments])
    goals = np.stack([s.goal_observation() for s in segments])
    return BatchEmbeddings(
        starts=encode_observations(encoders.vision, starts, tensor=True),
        goals=encode_observations(encoders.vision, goals, tensor=True),
        instructions=instructions,
    )


def default_encoder_config(config: TrainConfig, dataset: Sequence[Trajectory],
                           vocab_size: int | None = None) -> EncoderConfig:
    d_obs = dataset[0].observations.shape[1]
    if vocab_size is None:
        vocab_size = 1 + max(max(t.instruction.verb, t.instruction.obj) for t in dataset)
    return EncoderConfig(d_obs=d_obs, embed_dim=config.objective.embed_dim, vocab_size=vocab_size)


def train(config: TrainConfig, dataset: Sequence[Trajectory],
          vocab_size: int | None = None, checkpoint_path=None) -> Checkpoint:
    """Run the full loop and return the final checkpoint.

    With ``checkpoint_path`` set and a positive ``checkpoint_interval`` the
    current state is persisted every interval iterations (overwriting).
    Raises :class:`TrainingDivergedError` naming the iteration if the loss
    goes non-finite.
    """
    if len(dataset) == 0:
        raise EmptyInputError("cannot train on an empty dataset")
    enc_config = config.encoder or default_encoder_config(config, dataset, vocab_size)
    encoders = init_params(enc_config, config.seed)
    leaves = encoders.leaves()
    optimizer = make_optimizer(config, leaves)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7E41]))

    history = np.zeros((config.iterations, 3))
    for it in range(config.iterations):
        segments = sample_batch(dataset, config.batch_size, rng).segments
        try:
            loss = batch_loss(config.objective, _embed_batch(encoders, config.objective, segments, rng))
            loss_value = float(loss.value)
        except NumericalError as exc:
            raise TrainingDivergedError(
                it, f"non-finite values at iteration {it} (seed {config.seed}): {exc}"
            ) from exc
        if not np.isfinite(loss_value):
            raise TrainingDivergedError(
                it, f"non-finite loss {loss_value} at iteration {it} (seed {config.seed})"
            )
        loss.backward()
        optimizer.step()
        history[it] = (it, loss_value, _grad_norm(leaves))
        if (
            checkpoint_path is not None
            and config.checkpoint_interval > 0
            and (it + 1) % config.checkpoint_interval == 0
            and (it + 1) < config.iterations
        ):
            snapshot = Checkpoint(
                encoders=encoders, objective=config.objective, config=config,
                iteration=it + 1, history=history[: it + 1],
            )
            save_checkpoint(snapshot, checkpoint_path)

    return Checkpoint(
        encoders=encoders,
        objective=config.objective,
        config=config,
        iteration=config.iterations,
        history=history,
    )


# ---- checkpoint container -----------------------------------------------------------


def _config_to_json(config: TrainConfig) -> dict:
    d = asdict(config)
    return d


def _config_from_json(d: dict) -> TrainConfig:
    d = dict(d)
    d["objective"] = ObjectiveSpec(**d["objective"])
    if d.get("encoder") is not None:
        enc = dict(d["encoder"])
        enc["vision_hidden"] = tuple(enc["vision_hidden"])
        enc["projection_hidden"] = tuple(enc["projection_hidden"])
        d["encoder"] = EncoderConfig(**enc)
    return TrainConfig(**d)


def write_array_archive(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Binary container: magic, version, JSON header, little-endian f64 blobs."""
    names = list(arrays.keys())
    header = {
        "meta": meta,
        "arrays": [{"name": n, "shape": list(arrays[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes())


def read_array_archive(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < len(CHECKPOINT_MAGIC) + 12:
        raise CheckpointFormatError(f"file too short to be a checkpoint: {path}")
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"bad magic string in {path}")
    off = len(CHECKPOINT_MAGIC)
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    (header_len,) = struct.unpack_from("<Q", data, off)
    off += 8
    if off + header_len > len(data):
        raise CheckpointFormatError(f"truncated checkpoint header in {path}")
    try:
        header = json.loads(data[off : off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable checkpoint header: {exc}") from exc
    off += header_len
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(int(s) for s in spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if off + nbytes > len(data):
            raise CheckpointFormatError(f"truncated array {spec['name']!r} in {path}")
        arrays[spec["name"]] = (
            np.frombuffer(data[off : off + nbytes], dtype="<f8").astype(np.float64).reshape(shape)
        )
        off += nbytes
    if off != len(data):
        raise CheckpointFormatError(f"{len(data) - off} trailing bytes in {path}")
    return header["meta"], arrays


def _encoder_arrays(encoders: Encoders) -> dict[str, np.ndarray]:
    out = {}
    for i, (w, b) in enumerate(zip(encoders.vision.weights, encoders.vision.biases)):
        out[f"vision/w{i}"] = w.value
        out[f"vision/b{i}"] = b.value
    out["language/table"] = encoders.language.table.value
    proj = encoders.language.projection
    for i, (w, b) in enumerate(zip(proj.weights, proj.biases)):
        out[f"language/proj_w{i}"] = w.value
        out[f"language/proj_b{i}"] = b.value
    return out


def _encoders_from_arrays(enc_config: EncoderConfig, arrays: dict[str, np.ndarray]) -> Encoders:
    def mlp(widths, prefix):
        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            w = arrays[f"{prefix}w{i}"]
            b = arrays[f"{prefix}b{i}"]
            if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
                raise CheckpointFormatError(
                    f"array {prefix}w{i}/b{i} shapes {w.shape}/{b.shape} do not match widths {widths}"
                )
            weights.append(Tensor(w.copy()))
            biases.append(Tensor(b.copy()))
        return MlpParams(widths=list(widths), weights=weights, biases=biases)

    vision = mlp(enc_config.vision_widths(), "vision/")
    table = arrays["language/table"]
    if table.shape != (enc_config.vocab_size, enc_config.token_dim):
        raise CheckpointFormatError(f"token table shape {table.shape} does not match config")
    projection = mlp(enc_config.projection_widths(), "language/proj_")
    return Encoders(
        vision=vision,
        language=InstructionEncoderParams(Tensor(table.copy()), projection),
        config=enc_config,
    )


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    enc_config = ckpt.encoders.config
    meta = {
        "kind": "encoder-checkpoint",
        "objective": asdict(ckpt.objective),
        "train_config": _config_to_json(ckpt.config),
        "encoder_config": asdict(enc_config),
        "iteration": ckpt.iteration,
    }
    arrays = _encoder_arrays(ckpt.encoders)
    arrays["history"] = ckpt.history
    write_array_archive(path, meta, arrays)


def load_checkpoint(path) -> Checkpoint:
    meta, arrays = read_array_archive(path)
    if meta.get("kind") != "encoder-checkpoint":
        raise CheckpointFormatError(f"not an encoder checkpoint: kind={meta.get('kind')!r}")
    enc = dict(meta["encoder_config"])
    enc["vision_hidden"] = tuple(enc["vision_hidden"])
    enc["projection_hidden"] = tuple(enc["projection_hidden"])
    enc_config = EncoderConfig(**enc)
    return Checkpoint(
        encoders=_encoders_from_arrays(enc_config, arrays),
        objective=ObjectiveSpec(**meta["objective"]),
        config=_config_from_json(meta["train_config"]),
        iteration=int(meta["iteration"]),
        history=arrays["history"],
    )
