"""Decay of the off-diagonal sector r_updown(t) of the tested spin.

Neglecting J, every magnet spin evolves independently and the
off-diagonal block factorizes into per-spin 2x2 factors.  Its trace gives

    r_ud(t) = r_ud(0) Evol(t),
    Evol(t) = prod_n cos(2 g_n t) * exp(-sum_n (gamma g_n/2) coth(g_n/T) t).

The cosine product is the dephasing by the pointer; the exponential is
bath-induced decoherence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bath import BathSpec, damping_coefficients, lambda_infinity, x_coth
from .core import ModelParams, SpinMatrix, validate_spin

MODES = ("dephasing", "bath", "bath-exact")


@dataclass(frozen=True)
class CouplingSet:
    g: np.ndarray

    @classmethod
    def uniform(cls, g: float, N: int):
        return cls(np.full(N, float(g)))

    @classmethod
    def gaussian(cls, g: float, dg: float, N: int, seed: int = 0):
        """g_n = g + dg z_n with z_n standard normal from a seeded PCG64 stream."""
        z = np.random.default_rng(seed).standard_normal(N)
        return cls(g + dg * z)

    @classmethod
    def from_params(cls, params: ModelParams):
        if params.dg == 0:
            return cls.uniform(params.g, params.N)
        return cls.gaussian(params.g, params.dg, params.N, params.seed)

    @property
    def N(self) -> int:
        return self.g.size


def tau_trunc(N: int, g: float) -> float:
    """Gaussian dephasing time 1/(sqrt(2N) g); inf when g = 0."""
    if g <= 0:
        return math.inf
    return 1.0 / (math.sqrt(2 * N) * g)


def tau_recur(g: float) -> float:
    """First time pi/(2g) at which every cos(2 g t) returns to +-1."""
    if g <= 0:
        return math.inf
    return math.pi / (2 * g)


def spin_decoherence_rates(g, T: float, gamma: float) -> np.ndarray:
    """lambda(inf) at Omega = 2 g_n: (gamma g_n/2) coth(g_n/T)."""
    return 0.5 * gamma * T * x_coth(np.abs(np.asarray(g, dtype=float)) / T)


def dephasing_factor(t, couplings: CouplingSet) -> np.ndarray:
    """prod_n cos(2 g_n t), accumulated as a log-magnitude and a sign."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t.shape)
    for i, ti in enumerate(t):
        c = np.cos(2 * couplings.g * ti)
        if np.any(c == 0):
            out[i] = 0.0
            continue
        negatives = np.count_nonzero(c < 0)
        out[i] = (-1.0) ** negatives * math.exp(np.sum(np.log(np.abs(c))))
    return out


def bath_factor(t, couplings: CouplingSet, T: float, gamma: float) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.exp(-np.sum(spin_decoherence_rates(couplings.g, T, gamma)) * t)


def evol(t, couplings: CouplingSet, bath: BathSpec, mode: str = "bath", include_mu: bool = False) -> np.ndarray:
    """Evol(t) for scalar or array t.

    ``mode`` is "dephasing" (gamma = 0), "bath" (the product-of-cosines
    times exponential form) or "bath-exact" (product of the full
    single-spin factors rho_0 from :func:`single_spin_factor`, optionally
    with the frequency shift mu).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "dephasing" or bath.gamma == 0:
        return dephasing_factor(t, couplings)
    if mode == "bath":
        return dephasing_factor(t, couplings) * bath_factor(t, couplings, bath.T, bath.gamma)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    # distinct couplings only: uniform sets need one factor
    gs, counts = np.unique(couplings.g, return_counts=True)
    logmag = np.zeros(t.shape)
    sign = np.ones(t.shape)
    for g, c in zip(gs, counts):
        Omega = 2 * abs(g)
        if include_mu:
            lam, mu = damping_coefficients(Omega, math.inf, bath)
        else:
            lam, mu = lambda_infinity(Omega, bath), 0.0
        rho0 = single_spin_factor(Omega, t, lam, mu).rho0
        with np.errstate(divide="ignore"):
            logmag += c * np.log(np.abs(rho0))
        sign *= np.where(rho0 < 0, (-1.0) ** c, 1.0)
    return sign * np.exp(logmag)


@dataclass(frozen=True)
class OffDiagonal:
    t: np.ndarray
    r_ud: np.ndarray
    sx: np.ndarray
    sy: np.ndarray


def offdiag_amplitude(t, r0: SpinMatrix, couplings: CouplingSet, bath: BathSpec, mode: str = "bath") -> OffDiagonal:
    """r_updown(t) = r_updown(0) Evol(t) together with <s_x>, <s_y>.

    The diagonal entries of r are conserved and not touched here.
    """
    bad = validate_spin(r0)
    if bad:
        raise ValueError(f"invalid initial spin state: {', '.join(bad)}")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    r = r0.ud * evol(t, couplings, bath, mode)
    return OffDiagonal(t, r, 2 * r.real, -2 * r.imag)


class SpinFactor(NamedTuple):
    rho0: np.ndarray
    rho3: np.ndarray
    overdamped: bool


def single_spin_factor(Omega: float, t, lam: float, mu: float = 0.0) -> SpinFactor:
    """(rho_0, rho_3) solving rho_0' = -Omega rho_3, rho_3' = (Omega + mu) rho_0 - 2 lam rho_3.

    Initial values (1, 0).  The underdamped branch uses
    Omega' = sqrt(Omega^2 + Omega mu - lam^2); when that is imaginary the
    hyperbolic branch is used and ``overdamped`` is set.
    """
    t = np.asarray(t, dtype=float)
    disc = Omega * Omega + Omega * mu - lam * lam
    env = np.exp(-lam * t)
    if disc > 0:
        w = math.sqrt(disc)
        s, c = np.sin(w * t), np.cos(w * t)
        return SpinFactor(env * (c + lam * s / w), env * (Omega + mu) * s / w, False)
    if disc == 0:
        return SpinFactor(env * (1 + lam * t), env * (Omega + mu) * t, False)
    w = math.sqrt(-disc)
    s, c = np.sinh(w * t), np.cosh(w * t)
    return SpinFactor(env * (c + lam * s / w), env * (Omega + mu) * s / w, True)


def is_overdamped(Omega: float, lam: float, mu: float = 0.0) -> bool:
    return Omega * Omega + Omega * mu - lam * lam < 0
