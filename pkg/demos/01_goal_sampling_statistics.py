"""How random segment sampling weights later frames as goals.

Drawing a segment start uniformly and then a goal uniformly from the later
frames makes the chance of a frame being picked as the goal grow with its
position. This script compares the closed-form distribution against a
million simulated draws.
"""

import numpy as np

from segnce import empirical_goal_histogram, goal_probability

h = 10
n_samples = 1_000_000
rng = np.random.default_rng(0)

freqs, no_goal = empirical_goal_histogram(h, n_samples, rng)

print(f"video length h = {h}, {n_samples:,} raw draws")
print(f"{'frame':>6} {'analytic':>10} {'empirical':>10}")
for t in range(1, h + 1):
    print(f"{t:>6} {goal_probability(h, t):>10.5f} {freqs[t - 1]:>10.5f}")
print(f"{'none':>6} {1 / h:>10.5f} {no_goal:>10.5f}   (start landed on the last frame)")

analytic = np.array([goal_probability(h, t) for t in range(1, h + 1)])
print(f"\nmax |empirical - analytic| = {np.max(np.abs(freqs - analytic)):.2e}")
print("later frames are goals more often, so training sees every frame more")
print("frequently as a goal the later it sits in its video.")
