"""Subensembles of runs and their consistency.

Any subset of runs must itself relax to a mixture of the two outcome
states, and merging subsets must reproduce the parent weights.
"""
from fractions import Fraction

import numpy as np

from cwmeas.subensemble import (SubensembleWeights, final_state_matrix, merge_random_tree, random_decomposition,
                                relax_subensemble, relaxed_weights)

rng = np.random.default_rng(3)
D = final_state_matrix(0.3, G=4)
dec = random_decomposition(D, rng)
print(f"split with weight k = {dec.k:.4f}")

# Relaxing a subensemble keeps its outcome weights and ends diagonal.
K = dec.sub
for s in (0.0, 0.5, 1.0):
    Ks = relax_subensemble(K, s)
    off = np.abs(Ks.K - np.diag(np.diag(Ks.K))).max()
    print(f"  s={s:.1f}  q_up={Ks.q()[0]:.6f}  largest coherence {off:.2e}")
print(f"relaxed weights: {relaxed_weights(K)}")

# Merging 1000 single runs in any order reproduces the ensemble frequency.
runs = [SubensembleWeights.single_run(bool(u)) for u in rng.random(1000) < 0.3]
freq = Fraction(sum(r.q_up for r in runs), len(runs))
for i in range(3):
    tree = merge_random_tree(runs, rng)
    print(f"  tree {i}: q_up = {tree.q_up} ({'exact' if tree.q_up == freq else 'MISMATCH'})")
