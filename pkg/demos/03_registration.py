"""Registration of the spin-up outcome in the pointer.

Starts from the paramagnetic distribution and lets the master equation
carry it to the ferromagnetic state selected by the field g.  Writes
the snapshots to registration.csv in the working directory.
"""
import csv

import numpy as np

from cwmeas.core import ModelParams, tau_J
from cwmeas.registration import MasterEquation, mean_field_trajectory
from cwmeas.thermo import initial_distribution, spontaneous_magnetization

p = ModelParams(N=500)
tJ = tau_J(p.gamma)

# Mean-field estimate first: it is cheap and sets the time scale.
mf = mean_field_trajectory(0.0, p)
print(f"mean-field tau_reg = {mf.tau_reg_in_tau_J(p.gamma):.2f} tau_J")
print(f"target m_up = {spontaneous_magnetization(p.T, p.g):.6f}")

eq = MasterEquation(p, "up")
times = np.linspace(0, 3 * mf.tau_reg, 13)
run = eq.run(initial_distribution(p), times[-1], snapshots=times)
print(f"{run.steps} RK4 steps, probability drift {run.max_drift:.1e}")
for t, mean, std in zip(run.times, run.mean, run.std):
    print(f"  t={t / tJ:6.2f} tau_J  <m>={mean:+.5f}  std={std:.5f}")

# Same data on disk; one row per (time, m).
with open("registration.csv", "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["t_over_tauJ", "m", "P"])
    for t, row in zip(run.times, run.p):
        for m, prob in zip(run.grid.values, row):
            w.writerow([f"{t / tJ:.6g}", f"{m:.6g}", f"{prob:.6e}"])
print("wrote registration.csv")
