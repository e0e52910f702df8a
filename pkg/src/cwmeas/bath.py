"""Quasi-Ohmic phonon bath reduced to its spectral function.

    K(w) = (1/4) w exp(-|w|/Gamma) / (exp(w/T) - 1)        (hbar = 1)

Everything the magnet feels from the bath is derived from K(w): the
finite-time kernel K_t(w), the single-spin damping rate lambda and
frequency shift mu, and the spin-flip rates of the registration master
equation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import exp1, expi

EULER_GAMMA = 0.5772156649015329
SERIES_CUT = 1e-6


class QuadratureError(RuntimeError):
    def __init__(self, what: str, error: float, message: str = ""):
        super().__init__(f"{what}: quadrature did not converge (error estimate {error:.3e}) {message}".strip())
        self.error = error


@dataclass(frozen=True)
class BathSpec:
    T: float
    Gamma: float = 50.0
    gamma: float = 0.05

    def __post_init__(self):
        if not self.T > 0 or not self.Gamma > 0 or self.gamma < 0:
            raise ValueError(f"invalid bath parameters {self!r}")

    @property
    def beta(self) -> float:
        return 1.0 / self.T

    @classmethod
    def from_params(cls, params) -> "BathSpec":
        return cls(params.T, params.Gamma, params.gamma)

    def check_frequency(self, omega) -> None:
        if np.max(np.abs(omega)) > self.Gamma:
            warnings.warn(f"|omega| exceeds the Debye cutoff Gamma={self.Gamma}", stacklevel=3)


def bose_weight(x):
    """x/(e^x - 1), with the removable point x = 0 handled by its series."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_CUT
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = x / np.expm1(x)
    return np.where(small, 1 - x / 2 + x * x / 12, out)


def x_coth(x):
    """x coth x, equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_CUT
    with np.errstate(invalid="ignore", divide="ignore"):
        out = x / np.tanh(np.where(small, 1.0, x))
    return np.where(small, 1 + x * x / 3, out)


def spectrum(omega, T: float, Gamma: float = math.inf):
    """K(w) for hbar = 1; K(0) = T/4."""
    omega = np.asarray(omega, dtype=float)
    cutoff = np.exp(-np.abs(omega) / Gamma) if math.isfinite(Gamma) else 1.0
    return 0.25 * T * bose_weight(omega / T) * cutoff


def finite_time_kernel(omega: float, t: float, bath: BathSpec) -> float:
    """K_t(w) = int dw'/pi sin((w'-w)t)/(w'-w) K(w').

    The integral is split as K(w) (the full sinc weight) plus a Fourier
    sine integral of the smooth second difference
    [K(w+x) + K(w-x) - 2K(w)]/x over x in (0, inf), evaluated with
    QUADPACK's QAWF routine.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return 0.0
    if math.isinf(t):
        return float(spectrum(omega, bath.T, bath.Gamma))
    k0 = float(spectrum(omega, bath.T, bath.Gamma))

    def second_diff(x):
        if x < 1e-9:
            return 0.0
        return (float(spectrum(omega + x, bath.T, bath.Gamma)) + float(spectrum(omega - x, bath.T, bath.Gamma)) - 2 * k0) / x

    val, err, *rest = integrate.quad(second_diff, 0, np.inf, weight="sin", wvar=t, limlst=200, limit=400, full_output=1)
    if len(rest) >= 2 and rest[0] and abs(err) > 1e-6 * max(abs(k0), 1e-12):
        raise QuadratureError(f"K_t(omega={omega}, t={t})", err, str(rest[1])[:120])
    return k0 + val / math.pi


def _hilbert_part(omega0: float, t: float, bath: BathSpec) -> float:
    """(1/pi) int dw' K(w') (1 - cos((w'-w0) t))/(w'-w0); t may be inf."""

    def q(x):
        if x < 1e-9:
            x = 1e-9
        return (float(spectrum(omega0 + x, bath.T, bath.Gamma)) - float(spectrum(omega0 - x, bath.T, bath.Gamma))) / x

    scale = max(bath.T, abs(omega0))
    breaks = sorted({abs(omega0), 10 * scale, 50 * scale})
    edges = [0.0, *[b for b in breaks if b > 0]]
    steady = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        steady += integrate.quad(q, lo, hi, limit=200)[0]
    steady += integrate.quad(q, edges[-1], np.inf, limit=200)[0]
    if math.isinf(t):
        return steady / math.pi
    osc, err = integrate.quad(q, 0, np.inf, weight="cos", wvar=t, limlst=200, limit=400)
    return (steady - osc) / math.pi


def damping_coefficients(Omega: float, t: float, bath: BathSpec) -> tuple[float, float]:
    """Damping rate lambda(t) and frequency shift mu(t) of one magnet spin.

    lambda(t) = gamma [K_t(Omega) + K_t(-Omega)] is the u-integral of
    2 gamma int_0^t du [K(u)+K(-u)] cos(Omega u) carried out analytically;
    for t = inf it reduces to (gamma Omega/4) coth(Omega/2T), with the
    Debye cutoff neglected.

    mu(t) follows the sign convention of the explicit large-t expression,
    mu(inf) = (gamma Omega/pi)(ln(Gamma/Omega) - gamma_E) + thermal part.
    """
    if Omega < 0:
        raise ValueError("Omega must be non-negative")
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0 or bath.gamma == 0:
        return 0.0, 0.0
    if math.isinf(t):
        return lambda_infinity(Omega, bath), mu_infinity(Omega, bath)
    lam = bath.gamma * (finite_time_kernel(Omega, t, bath) + finite_time_kernel(-Omega, t, bath))
    if Omega == 0:
        return lam, 0.0
    mu = 2 * bath.gamma * (_hilbert_part(Omega, t, bath) - _hilbert_part(-Omega, t, bath))
    return lam, mu


def lambda_infinity(Omega: float, bath: BathSpec) -> float:
    """(gamma Omega/4) coth(Omega/2T); gamma T/2 at Omega = 0."""
    return 0.5 * bath.gamma * bath.T * float(x_coth(Omega / (2 * bath.T)))


def mu_infinity(Omega: float, bath: BathSpec) -> float:
    """Asymptotic frequency shift.

    The coth = 1 + (coth - 1) split gives a cutoff-dependent piece, done in
    closed form with exponential integrals (it tends to
    2 Omega [ln(Gamma/Omega) - gamma_E] for Gamma >> Omega), and a thermal
    piece without cutoff, done as a principal-value quadrature.
    """
    if Omega == 0 or bath.gamma == 0:
        return 0.0
    a = Omega / bath.Gamma
    cutoff_part = Omega * (math.exp(a) * exp1(a) - math.exp(-a) * expi(a))

    def thermal(w):
        # w (coth(w/2T) - 1) * 2 Omega/(w + Omega); the 1/(w - Omega) is the Cauchy weight
        return 2 * bath.T * bose_weight(w / bath.T) * 2 * Omega / (w + Omega)

    hi = 2 * Omega
    pv = integrate.quad(thermal, 0, hi, weight="cauchy", wvar=Omega, limit=200)[0]
    tail = integrate.quad(lambda w: thermal(w) / (w - Omega), hi, np.inf, limit=200)[0]
    return bath.gamma / (2 * math.pi) * (cutoff_part + pv + tail)


def mu_log_term(Omega: float, bath: BathSpec) -> float:
    """(gamma Omega/pi)(ln(Gamma/Omega) - gamma_E), the large-Gamma form of the cutoff piece."""
    return bath.gamma * Omega / math.pi * (math.log(bath.Gamma / Omega) - EULER_GAMMA)


def rate_coefficient(omega, N: int, T: float, Gamma: float = math.inf):
    """Spin-flip rate gamma N K(w) in units of 1/tau_J.

    Equals (N w/8) [coth(w/2T) - 1] exp(-|w|/Gamma); N T/4 at w = 0.
    """
    return N * spectrum(omega, T, Gamma)
