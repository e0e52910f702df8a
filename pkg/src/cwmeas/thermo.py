"""Equilibrium statistical mechanics of the quartic Curie-Weiss magnet.

The free energy per spin is

    f(m) = -J m^4/4 - h m + T [(1+m)/2 ln((1+m)/2) + (1-m)/2 ln((1-m)/2)] + T ln 2

where the constant T ln 2 makes f(0) = 0 at h = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import gammaln, logsumexp, xlogy

from .core import MagDistribution, ModelParams, make_grid

SCAN_POINTS = 2001
ROOT_XTOL = 1e-12


@dataclass(frozen=True)
class StationaryPoint:
    m: float
    kind: str  # "minimum", "maximum" or "inflection"
    f: float


@dataclass(frozen=True)
class CriticalPoint:
    m_c: float
    h_c: float
    T: float


@dataclass(frozen=True)
class FreeEnergyCurve:
    h: float
    T: float
    m: np.ndarray
    f: np.ndarray
    stationary: tuple[StationaryPoint, ...]


def log_multiplicity(N: int, m) -> np.ndarray:
    """ln G(m) = ln C(N, N(1+m)/2), exact via log-Gamma."""
    grid = make_grid(N)
    k = grid.index(m)
    return gammaln(N + 1.0) - gammaln(k + 1.0) - gammaln(N - k + 1.0)


def stirling_entropy(N: int, m) -> np.ndarray:
    """Large-N form of ln G(m), including the Gaussian prefactor."""
    m = np.asarray(m, dtype=float)
    a, b = (1 + m) / 2, (1 - m) / 2
    return -N * (xlogy(a, a) + xlogy(b, b)) + 0.5 * np.log(2.0 / (math.pi * N * (1 - m**2)))


def free_energy(m, h: float, T: float, J: float = 1.0) -> np.ndarray:
    """Free energy per spin, shifted so that f(0) = 0 at any h."""
    m = np.asarray(m, dtype=float)
    a, b = (1 + m) / 2, (1 - m) / 2
    return -J * m**4 / 4 - h * m + T * (xlogy(a, a) + xlogy(b, b) + math.log(2.0))


def free_energy_slope(m, h: float, T: float, J: float = 1.0):
    m = np.asarray(m, dtype=float)
    return -J * m**3 - h + T * np.arctanh(m)


def free_energy_curvature(m, T: float, J: float = 1.0):
    m = np.asarray(m, dtype=float)
    return T / (1 - m**2) - 3 * J * m**2


def _classify(curv: float, scale: float) -> str:
    if abs(curv) <= 1e-9 * scale:
        return "inflection"
    return "minimum" if curv > 0 else "maximum"


def mean_field_roots(h: float, T: float, J: float = 1.0) -> list[StationaryPoint]:
    """All solutions of m = tanh[(h + J m^3)/T], labelled by the sign of f''.

    The search runs in y = artanh(m), where the equation reads
    T y = h + J tanh(y)^3; this keeps roots near m = +-1 resolvable.
    Nodes are the 2001-point uniform m grid (mapped to y) merged with a
    uniform y grid covering every possible root.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    ymax = (abs(h) + J) / T + 1.0
    m_nodes = np.linspace(-1, 1, SCAN_POINTS)[1:-1]
    nodes = np.union1d(np.arctanh(m_nodes), np.linspace(-ymax, ymax, SCAN_POINTS))

    def resid(y):
        return T * y - h - J * np.tanh(y) ** 3

    r = resid(nodes)
    ys = list(nodes[r == 0.0])
    flips = np.nonzero(r[:-1] * r[1:] < 0)[0]
    for i in flips:
        ys.append(optimize.brentq(resid, nodes[i], nodes[i + 1], xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps))
    out = []
    for y in sorted(ys):
        m = math.tanh(y)
        # f'' = T cosh^2 y - 3J tanh^2 y, accurate even when m rounds to 1
        curv = T * math.cosh(y) ** 2 - 3 * J * m**2
        out.append(StationaryPoint(m, _classify(curv, T + J), float(free_energy(m, h, T, J))))
    return out


def spontaneous_magnetization(T: float, h: float = 0.0, J: float = 1.0) -> float | None:
    """Largest stable root m_up(h); None when only the paramagnetic branch exists."""
    mins = [p.m for p in mean_field_roots(h, T, J) if p.kind == "minimum" and p.m > 0.5]
    return max(mins) if mins else None


def free_energy_curve(h: float, T: float, J: float = 1.0, n: int = 2001) -> FreeEnergyCurve:
    m = np.linspace(-1, 1, n)
    return FreeEnergyCurve(h, T, m, free_energy(m, h, T, J), tuple(mean_field_roots(h, T, J)))


def critical_field(T: float, J: float = 1.0) -> CriticalPoint:
    """Field h_c at which the paramagnetic minimum merges with the barrier.

    Solves f' = f'' = 0: 2 m_c^2 = 1 - sqrt(1 - 4T/3J) and
    h_c = (T/2) ln[(1+m_c)/(1-m_c)] - J m_c^3.
    """
    if not 0 < T < 0.75 * J:
        raise ValueError(f"no critical field for T={T!r}: requires 0 < T < 3J/4")
    m_c = math.sqrt((1 - math.sqrt(1 - 4 * T / (3 * J))) / 2)
    h_c = T * math.atanh(m_c) - J * m_c**3
    return CriticalPoint(m_c, h_c, T)


def ferro_onset(J: float = 1.0) -> tuple[float, float]:
    """Temperature below which ferromagnetic minima exist at h = 0, and m_F there.

    At the onset the ferromagnetic minimum and barrier coincide, so
    f' = f'' = 0 with m != 0, i.e. 3(1 - m^2) artanh(m) = m and
    T = 3 J m^2 (1 - m^2).
    """
    m = optimize.brentq(lambda x: 3 * (1 - x * x) * math.atanh(x) - x, 0.5, 0.99, xtol=1e-14)
    return 3 * J * m * m * (1 - m * m), m


def critical_temperature(J: float = 1.0, bracket: tuple[float, float] = (0.2, 0.5)) -> float:
    """First-order transition temperature where f(m_F) = f(0) at h = 0."""
    T_lo, T_hi = bracket
    T_hi = min(T_hi, ferro_onset(J)[0] * (1 - 1e-3))

    def gap(T):
        mF = spontaneous_magnetization(T, 0.0, J)
        return float(free_energy(mF, 0.0, T, J))

    return optimize.bisect(gap, T_lo, T_hi, xtol=1e-13)


def initial_distribution(params: ModelParams, total: float = 1.0) -> MagDistribution:
    """Paramagnetic preparation at temperature T0: P ~ G(m) exp[N J m^4/(4 T0)]."""
    grid = make_grid(params.N)
    m = grid.values
    logw = log_multiplicity(params.N, m)
    if math.isfinite(params.T0):
        logw = logw + params.N * params.J * m**4 / (4 * params.T0)
    p = np.exp(logw - logsumexp(logw))
    return MagDistribution(grid, total * p, total)


def ferro_peak(m_i: float, h: float, T: float, N: int, J: float = 1.0) -> tuple[float, float]:
    """Centre and width of the Gaussian approximating the peak at a stable root."""
    curv = 1.0 / (1 - m_i**2) - 3 * J * m_i**2 / T
    if not curv > 0:
        raise ValueError(f"m={m_i!r} is not a minimum of f at h={h!r}, T={T!r}")
    return m_i, 1.0 / math.sqrt(N * curv)
