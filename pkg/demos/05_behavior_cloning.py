"""Language-conditioned behavior cloning on frozen representations.

A small action head is regressed onto scripted-expert demonstrations,
taking the frozen frame embedding, the frozen instruction embedding, and
the completion level as input. The same protocol run on an untrained
random encoder shows how much of the success comes from the learned
representation rather than the policy head.
"""

import numpy as np

from segnce import EncoderConfig, ObjectiveSpec, TrainConfig, World, WorldConfig, init_params, train
from segnce.imitation import BcConfig, evaluate_bc_all, train_bc
from segnce.training import Checkpoint

config = WorldConfig()
world = World(config)
dataset = world.generate(800)
demos = world.generate_demos(5, seed=55)
print(f"{len(demos)} demonstrations (5 per task)")

trained = train(
    TrainConfig(objective=ObjectiveSpec(variant="t"), iterations=600, batch_size=64, seed=0),
    dataset,
    vocab_size=config.vocab_size,
)
random_enc = Checkpoint(
    encoders=init_params(EncoderConfig(d_obs=config.d_obs, vocab_size=config.vocab_size), seed=0),
    objective=ObjectiveSpec(variant="t"),
    config=TrainConfig(seed=0),
    iteration=0,
    history=np.zeros((1, 3)),
)

for label, ckpt in [("trained encoders", trained), ("random encoders ", random_enc)]:
    policy = train_bc(ckpt, demos, BcConfig(seed=0))
    report = evaluate_bc_all(policy, ckpt, world, episodes_per_instruction=10, seed=0)
    print(
        f"{label}: imitation loss {policy.loss_history[0]:.3f} -> {policy.loss_history[-1]:.4f}, "
        f"closed-loop success {report['success_rate']:.2f}"
    )
