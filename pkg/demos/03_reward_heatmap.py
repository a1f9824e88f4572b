"""Segment-by-instruction reward matrix over varied segment lengths.

Rows are segments (short, medium, long, whole trajectory) cut from one
held-out demonstration per task; columns are the eight instructions. After
training, the matched column carries the largest score in almost every row
and the mirror column goes negative.
"""

import numpy as np

from segnce import ObjectiveSpec, TrainConfig, World, WorldConfig, train
from segnce.analysis import reward_heatmap
from segnce.cli import heatmap_segments

config = WorldConfig()
world = World(config)
dataset = world.generate(800)
ckpt = train(
    TrainConfig(objective=ObjectiveSpec(variant="t"), iterations=600, batch_size=64, seed=0),
    dataset,
    vocab_size=config.vocab_size,
)

demos = world.generate_demos(1, seed=7)
segments, row_labels = heatmap_segments(world, demos, ["2", "5", "10", "full"])
instructions = world.instructions()
grid = reward_heatmap(
    ckpt, segments, instructions,
    row_labels=row_labels,
    col_labels=[world.instruction_name(i) for i in instructions],
)

header = " ".join(f"{c.split()[0][:6]:>7}" for c in grid.col_labels)
print(f"{'segment':<22} {header}")
diag_hits = 0
for i, (label, row) in enumerate(zip(grid.row_labels, grid.values)):
    task = world.task_for_instruction(segments[i].instruction)
    marks = " ".join(f"{v:>+7.2f}" for v in row)
    hit = int(np.argmax(row)) == task
    diag_hits += hit
    print(f"{label:<22} {marks} {'<- matched max' if hit else ''}")

print(f"\nmatched cell is the row maximum in {diag_hits}/{len(segments)} rows")
