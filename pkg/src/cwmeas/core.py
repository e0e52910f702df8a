"""Shared types for the Curie-Weiss measurement model.

Units: hbar = k_B = J = 1.  Energies and temperatures are in units of J,
times in units of hbar/J.  The natural registration time unit is
tau_J = hbar/(gamma J), exposed as :func:`tau_J`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

#: Weights more negative than this are treated as a genuine error, not round-off.
NEGATIVE_SLACK = 1e-12


def tau_J(gamma: float, J: float = 1.0) -> float:
    """Bath time unit hbar/(gamma J) expressed in hbar/J."""
    if gamma <= 0:
        return math.inf
    return 1.0 / (gamma * J)


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of one apparatus (magnet + bath).

    ``dg`` is the standard deviation of the spin-apparatus couplings g_n
    around their mean ``g``, in units of J.
    """

    N: int = 1000
    J: float = 1.0
    g: float = 0.045
    T: float = 0.2
    T0: float = math.inf
    gamma: float = 0.05
    Gamma: float = 50.0
    dg: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if self.J != 1.0:
            raise ValueError(f"J is the energy unit and must equal 1, got {self.J!r}")
        checks = {
            "g": self.g >= 0,
            "T": self.T > 0,
            "T0": self.T0 > 0,
            "gamma": self.gamma >= 0,
            "Gamma": self.Gamma > 0,
            "dg": self.dg >= 0,
        }
        for name, ok in checks.items():
            if not ok:
                raise ValueError(f"{name} out of range: {getattr(self, name)!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed!r}")

    @property
    def beta(self) -> float:
        return 1.0 / self.T

    @property
    def tau_J(self) -> float:
        return tau_J(self.gamma, self.J)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class MagGrid:
    """The N+1 eigenvalues m_k = -1 + 2k/N of the magnetization per spin."""

    N: int
    values: np.ndarray = field(repr=False)

    @property
    def spacing(self) -> float:
        return 2.0 / self.N

    def __len__(self):
        return self.N + 1

    def index(self, m) -> np.ndarray:
        """Grid index k of value(s) m; raises if any m is off-grid."""
        k = (np.asarray(m, dtype=float) + 1.0) * self.N / 2.0
        kr = np.rint(k)
        if np.any(np.abs(k - kr) > 1e-9 * max(1, self.N)) or np.any((kr < 0) | (kr > self.N)):
            raise ValueError(f"m not on the grid of N={self.N}: {m!r}")
        return kr.astype(int)


def make_grid(N: int) -> MagGrid:
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    k = np.arange(N + 1)
    # (2k - N)/N keeps the grid exactly antisymmetric: m_k == -m_{N-k}
    values = (2.0 * k - N) / N
    values.flags.writeable = False
    return MagGrid(N, values)


@dataclass(frozen=True)
class MagDistribution:
    """Discrete weights P^dis(m_k) on a :class:`MagGrid`.

    ``total`` is 1 for a full magnet state and r_ii(0) for one sector of
    the S+M density matrix.
    """

    grid: MagGrid
    p: np.ndarray = field(repr=False)
    total: float = 1.0

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.shape != (len(self.grid),):
            raise ValueError(f"expected {len(self.grid)} weights, got shape {p.shape}")
        p = clip_round_off(p)
        p.flags.writeable = False
        object.__setattr__(self, "p", p)

    @classmethod
    def from_density(cls, grid: MagGrid, density, total: float = 1.0):
        """Build from the continuum density P(m) = (N/2) P^dis(m)."""
        return cls(grid, np.asarray(density, dtype=float) * 2.0 / grid.N, total)

    @property
    def m(self) -> np.ndarray:
        return self.grid.values

    def density(self) -> np.ndarray:
        return self.p * self.grid.N / 2.0

    def sum(self) -> float:
        return float(np.sum(self.p))

    def mean(self) -> float:
        return float(np.dot(self.m, self.p) / self.sum())

    def std(self) -> float:
        mu = self.mean()
        return float(np.sqrt(np.dot((self.m - mu) ** 2, self.p) / self.sum()))

    def peak(self) -> float:
        return float(self.m[np.argmax(self.p)])


def clip_round_off(p: np.ndarray) -> np.ndarray:
    """Zero tiny negative weights left by a stepper; reject real negatives."""
    lowest = p.min(initial=0.0)
    if lowest < -NEGATIVE_SLACK:
        raise ValueError(f"negative probability weight {lowest:.3e}")
    if lowest < 0:
        log.warning("clipping negative round-off weights (min %.3e) to 0", lowest)
        p = np.where(p < 0, 0.0, p)
    return p


@dataclass(frozen=True)
class SpinMatrix:
    """2x2 density matrix of the tested spin S in the s_z basis."""

    uu: complex
    ud: complex
    du: complex
    dd: complex

    @classmethod
    def from_bloch(cls, sx: float = 0.0, sy: float = 0.0, sz: float = 0.0):
        """r = (1 + <s> . sigma)/2."""
        ud = 0.5 * (sx - 1j * sy)
        return cls(0.5 * (1 + sz), ud, ud.conjugate(), 0.5 * (1 - sz))

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=complex)
        return cls(a[0, 0], a[0, 1], a[1, 0], a[1, 1])

    def as_array(self) -> np.ndarray:
        return np.array([[self.uu, self.ud], [self.du, self.dd]], dtype=complex)

    def bloch(self) -> tuple[float, float, float]:
        """Expectations (<s_x>, <s_y>, <s_z>) with s the Pauli matrices."""
        return (2 * self.ud.real, -2 * self.ud.imag, (self.uu - self.dd).real)


def validate_spin(r: SpinMatrix, tol: float = 1e-12) -> tuple[str, ...]:
    """Names of the violated density-matrix conditions; empty when valid."""
    bad = []
    if abs(r.uu + r.dd - 1) > tol:
        bad.append("trace")
    if abs(complex(r.uu).imag) > tol or abs(complex(r.dd).imag) > tol or abs(r.du - np.conj(r.ud)) > tol:
        bad.append("hermiticity")
    if complex(r.uu).real * complex(r.dd).real - abs(r.ud) ** 2 < -tol or min(
        complex(r.uu).real, complex(r.dd).real
    ) < -tol:
        bad.append("positivity")
    return tuple(bad)
