"""Two apparatuses measuring s_z and s_x at once.

The two pointers end in one of four corners.  Their weights are linear
in the initial <s_z> and <s_x>, so the initial state can be read back.
"""
import math

import numpy as np

from cwmeas.two_apparatus import TwoAppParams, final_weights, invert_weights, joint_stationary_points, sample_outcomes

tp = TwoAppParams()
mins = [s for s in joint_stationary_points(tp) if s.kind == "minimum"]
print(f"{len(mins)} minima of the joint landscape at the default couplings:")
for s in mins:
    print(f"  ({s.m:+.4f}, {s.mp:+.4f})")

lam = lamp = 1 / math.sqrt(2)
w = final_weights(1.0, 0.0, lam, lamp)
for o, pr in w.P.items():
    print(f"  outcome {o}: {pr:.7f}")
print(f"wrong sign for s_z: {w.wrong_sign_z():.7f}")

# Tomography from finite statistics.
rng = np.random.default_rng(7)
sz, sx = 0.6, -0.3
counts = sample_outcomes(final_weights(sz, sx, lam, lamp), 200_000, rng)
est = invert_weights(counts / counts.sum(), lam, lamp)
print(f"true (sz, sx) = ({sz}, {sx}), estimated ({est[0]:.3f}, {est[1]:.3f})")
