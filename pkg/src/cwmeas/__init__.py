"""Numerical toolkit for the Curie-Weiss model of a quantum measurement.

A spin-1/2 S is measured by an apparatus made of N Ising spins with
quartic coupling (the magnet M, whose magnetization m is the pointer)
and a phonon bath B.  Modules:

core           parameters, magnetization grid, distributions, spin matrices
thermo         equilibrium landscape, mean-field roots, critical field and temperature
bath           bath spectrum, finite-time kernels, damping coefficients
truncation     decay of the off-diagonal sector (dephasing and decoherence)
registration   master equation, Fokker-Planck and mean-field dynamics
two_apparatus  simultaneous s_z and s_x measurement
subensemble    decompositions of the final state and their relaxation
"""
__version__ = "0.1.0"

from .core import MagDistribution, MagGrid, ModelParams, SpinMatrix, make_grid, tau_J, validate_spin

__all__ = ["MagDistribution", "MagGrid", "ModelParams", "SpinMatrix", "make_grid", "tau_J", "validate_spin",
           "__version__"]
