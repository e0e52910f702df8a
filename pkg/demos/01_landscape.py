"""Free-energy landscape of the quartic magnet.

Walks through the phase structure at zero field, then switches on the
field h = g that a spin-up tested system exerts on the pointer.
"""
import numpy as np

from cwmeas.thermo import (critical_field, critical_temperature, ferro_onset, free_energy,
                           mean_field_roots, spontaneous_magnetization)

# At h = 0 the paramagnet is always locally stable; ferromagnetic
# minima appear below the onset temperature.
T_on, m_on = ferro_onset()
T_c = critical_temperature()
print(f"ferromagnetic minima appear below T = {T_on:.5f} (m = {m_on:.5f})")
print(f"first-order transition at T_c = {T_c:.6f}, m_F = {spontaneous_magnetization(T_c):.5f}")

# The working temperature sits well below T_c, so m = 0 is metastable.
T = 0.2
for p in mean_field_roots(0.0, T):
    print(f"  h=0  m={p.m:+.6f}  {p.kind:<10s} f={p.f:+.6f}")

# Above h_c the paramagnetic well disappears and only m_up survives.
crit = critical_field(T)
print(f"critical field at T={T}: h_c = {crit.h_c:.7f} (barrier merges at m_c = {crit.m_c:.4f})")
for h in (0.5 * crit.h_c, 0.045):
    mins = [p.m for p in mean_field_roots(h, T) if p.kind == "minimum"]
    print(f"  h={h:.4f}: minima at {np.round(mins, 6)}")

# A coarse text plot of f(m) at h = 0.045.
m = np.linspace(-0.99, 0.99, 45)
f = free_energy(m, 0.045, T)
lo, hi = f.min(), f.max()
for mi, fi in zip(m[::3], f[::3]):
    bar = int(40 * (fi - lo) / (hi - lo))
    print(f"{mi:+.2f} " + "#" * bar)
