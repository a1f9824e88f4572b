"""Zero-shot planning against the learned embedding reward.

A path-integral controller proposes noisy action sequences, scores them by
the change in frame/instruction similarity along the rollout, and averages
them by exponentiated normalized return. No policy is trained; the reward
comes straight from the frozen encoders.
"""

import numpy as np

from segnce import ObjectiveSpec, TrainConfig, World, WorldConfig, train
from segnce.planning import PlannerConfig, evaluate_planner

config = WorldConfig()
world = World(config)
dataset = world.generate(800)
ckpt = train(
    TrainConfig(objective=ObjectiveSpec(variant="t"), iterations=600, batch_size=64, seed=0),
    dataset,
    vocab_size=config.vocab_size,
)

planner = PlannerConfig(
    horizon=50, n_sequences=64, iterations=16, temperature=1.0, noise_scale=0.3
)
episodes = 24

for reward, ck in [("embedding", ckpt), ("oracle", None), ("random", None)]:
    report = evaluate_planner(
        ck, world, world.instructions(), episodes, planner, seed=0, reward=reward
    )
    print(f"{reward:>9} reward: success {report['success_rate']:.2f} over {episodes} episodes")

report = evaluate_planner(ckpt, world, world.instructions(), episodes, planner, seed=0)
print("\nper-instruction success with the learned reward:")
for name, rate in report["per_instruction"].items():
    print(f"  {name:<14} {rate:.2f}")
