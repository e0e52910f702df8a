"""Fast decay of the off-diagonal blocks.

With identical couplings the dephasing factor is cos(2gt)^N: it
collapses on tau_trunc and then revives at multiples of pi/(2g).
Spreading the couplings or adding the bath kills the revivals.
"""
import numpy as np

from cwmeas.bath import BathSpec
from cwmeas.truncation import CouplingSet, dephasing_factor, evol, tau_recur, tau_trunc

N, g, T, gamma = 1000, 0.045, 0.2, 0.05
print(f"tau_trunc = {tau_trunc(N, g):.5f}, tau_recur = {tau_recur(g):.4f}")

t = np.linspace(0, 5 * tau_trunc(N, g), 6)
uni = CouplingSet.uniform(g, N)
print("short times, uniform couplings vs Gaussian law exp(-(t/tau)^2):")
for ti, e in zip(t, dephasing_factor(t, uni)):
    print(f"  t={ti:.4f}  {e:.6e}  {np.exp(-(ti / tau_trunc(N, g)) ** 2):.6e}")

# Recurrence is exact for identical couplings.
tr = tau_recur(g)
print(f"at t = tau_recur: uniform {dephasing_factor([tr], uni)[0]:+.6f}")

# A small random spread dg destroys it.
spread = CouplingSet.gaussian(g, 1e-3, N, seed=1)
print(f"               spread dg=1e-3 {abs(dephasing_factor([tr], spread)[0]):.3e}")

# With the bath the revival is gone for good.
bath = BathSpec(T=T, gamma=gamma)
print(f"               uniform + bath {abs(evol([tr], uni, bath, 'bath')[0]):.3e}")
