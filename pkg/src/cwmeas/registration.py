"""Registration: dynamics of the diagonal sectors P_ii(m, t).

Each sector is a birth-death chain on the magnetization grid.  A flip of
one magnet spin moves m by +-dm = +-2/N and costs the magnet the energy
Omega_i^+-(m) = H_i(m +- dm) - H_i(m), exchanged with the bath at rate
gamma N K(Omega).  Three levels of description are provided:

* the exact master equation (:class:`MasterEquation`),
* its large-N Fokker-Planck reduction (:class:`FokkerPlanck`),
* the mean-field flow d mu/dt = v(mu) (:func:`mean_field_trajectory`).

Time is measured in hbar/J throughout; ``tau_J = 1/gamma`` converts.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline

from .bath import BathSpec, finite_time_kernel, spectrum, x_coth
from .core import MagDistribution, MagGrid, ModelParams, make_grid, tau_J
from .thermo import initial_distribution, spontaneous_magnetization

log = logging.getLogger(__name__)

SECTOR_SIGN = {"up": 1, "down": -1}
# RK4 is stable on the negative real axis up to |z| = 2.785; eigenvalues of
# the generator are bounded by twice the largest outflow rate.
RK4_BOUND = 2.785 / 2
DEFAULT_CFL = 0.1
REG_FRACTION = 0.9


class StabilityError(RuntimeError):
    def __init__(self, dt: float, suggested_dt: float):
        super().__init__(f"dt={dt:.4g} exceeds the explicit stability bound; use dt <= {suggested_dt:.4g}")
        self.dt = dt
        self.suggested_dt = suggested_dt


class RegistrationError(RuntimeError):
    """The magnet did not reach the ferromagnetic state in the allotted time."""


def sector_sign(sector) -> int:
    if sector in (1, -1):
        return int(sector)
    try:
        return SECTOR_SIGN[sector]
    except KeyError:
        raise ValueError(f"sector must be 'up' or 'down', got {sector!r}") from None


def hamiltonian(m, s: int, g: float, N: int, J: float = 1.0):
    """H_i(m) = -N g s_i m - N J m^4/4."""
    m = np.asarray(m, dtype=float)
    return -N * g * s * m - N * J * m**4 / 4


def excitation_frequencies(m, sector, params: ModelParams):
    """(Omega_i^+, Omega_i^-)(m) = H_i(m +- dm) - H_i(m) in closed form."""
    s = sector_sign(sector)
    m = np.asarray(m, dtype=float)
    N, g, J = params.N, params.g, params.J
    a = 3 * m**2 / N + 2 / N**3
    b = m**3 + 4 * m / N**2
    return -2 * g * s + 2 * J * (-b - a), 2 * g * s + 2 * J * (b - a)


@dataclass(frozen=True)
class SectorState:
    sector: str
    dist: MagDistribution
    t: float = 0.0

    @classmethod
    def initial(cls, params: ModelParams, sector: str = "up", r_ii: float = 1.0):
        sector_sign(sector)
        return cls(sector, initial_distribution(params, total=r_ii), 0.0)


@dataclass
class MasterRun:
    """Result of :meth:`MasterEquation.run`: snapshots and bookkeeping."""

    sector: str
    grid: MagGrid
    times: np.ndarray
    p: np.ndarray  # (n_snapshots, N+1)
    total0: float
    dt: float
    steps: int
    max_drift: float
    mean: np.ndarray = field(init=False)
    std: np.ndarray = field(init=False)

    def __post_init__(self):
        m = self.grid.values
        w = self.p.sum(axis=1)
        self.mean = self.p @ m / w
        self.std = np.sqrt(np.maximum(self.p @ m**2 / w - self.mean**2, 0.0))

    def peak(self) -> np.ndarray:
        return self.grid.values[np.argmax(self.p, axis=1)]

    def final(self) -> MagDistribution:
        return MagDistribution(self.grid, self.p[-1], self.total0)

    def crossing_time(self, level: float) -> float:
        """First snapshot time at which |mean| reaches ``level`` (linear interpolation)."""
        s = sector_sign(self.sector)
        x = s * self.mean
        idx = np.nonzero(x >= level)[0]
        if idx.size == 0:
            return math.inf
        i = idx[0]
        if i == 0:
            return float(self.times[0])
        t0, t1, x0, x1 = self.times[i - 1], self.times[i], x[i - 1], x[i]
        return float(t0 + (level - x0) * (t1 - t0) / (x1 - x0))


class MasterEquation:
    """dP/dt = gamma N {D+[(1+m) K(Omega^-) P] + D-[(1-m) K(Omega^+) P]}.

    Implemented in flux form: up[k] = gamma N (1-m_k) K(Omega^+(m_k)) and
    down[k] = gamma N (1+m_k) K(Omega^-(m_k)) are the rates to leave m_k
    upwards and downwards.  The end rates vanish identically, which is the
    ghost-cell condition P(+-(1+dm)) = 0, and every flux leaving one cell
    enters another, so the total is conserved to round-off.

    With ``finite_time=True`` the rates use K_t instead of K, refreshed on a
    time schedule until t = ``kernel_horizon`` (default 50/T) after which the
    asymptotic form is used.
    """

    def __init__(self, params: ModelParams, sector="up", finite_time: bool = False, kernel_horizon: float | None = None,
                 kernel_nodes: int = 48):
        self.params = params
        self.sector = "up" if sector_sign(sector) > 0 else "down"
        self.grid = make_grid(params.N)
        self.bath = BathSpec.from_params(params)
        self.omega_up, self.omega_down = excitation_frequencies(self.grid.values, self.sector, params)
        self.bath.check_frequency(np.concatenate([self.omega_up, self.omega_down]))
        self.finite_time = finite_time
        self.kernel_horizon = 50.0 / params.T if kernel_horizon is None else kernel_horizon
        self.kernel_nodes = kernel_nodes
        self._kernel_t = None
        self.up, self.down = self._rates(math.inf)

    def _rates(self, t: float):
        m = self.grid.values
        pref = self.params.gamma * self.params.N
        if math.isinf(t):
            k_up = spectrum(self.omega_up, self.params.T, self.params.Gamma)
            k_down = spectrum(self.omega_down, self.params.T, self.params.Gamma)
        else:
            spline = self._kernel_spline(t)
            k_up, k_down = spline(self.omega_up), spline(self.omega_down)
        up = pref * (1 - m) * k_up
        down = pref * (1 + m) * k_down
        up[-1] = 0.0
        down[0] = 0.0
        return up, down

    def _kernel_spline(self, t: float) -> CubicSpline:
        lo = min(self.omega_up.min(), self.omega_down.min())
        hi = max(self.omega_up.max(), self.omega_down.max())
        nodes = np.linspace(lo, hi, self.kernel_nodes)
        vals = [finite_time_kernel(w, t, self.bath) for w in nodes]
        return CubicSpline(nodes, vals)

    def max_outflow(self) -> float:
        return float(np.max(self.up + self.down))

    def stable_dt(self, cfl: float = DEFAULT_CFL) -> float:
        return cfl / self.max_outflow()

    def check_dt(self, dt: float) -> None:
        bound = RK4_BOUND / self.max_outflow()
        if dt > bound:
            raise StabilityError(dt, self.stable_dt())

    def rhs(self, p: np.ndarray) -> np.ndarray:
        fu = self.up * p
        fd = self.down * p
        out = -(fu + fd)
        out[1:] += fu[:-1]
        out[:-1] += fd[1:]
        return out

    def generator(self) -> np.ndarray:
        """Dense rate matrix L with dP/dt = L P (small N only)."""
        n = len(self.grid)
        L = np.zeros((n, n))
        idx = np.arange(n)
        L[idx, idx] = -(self.up + self.down)
        L[idx[1:], idx[:-1]] = self.up[:-1]
        L[idx[:-1], idx[1:]] = self.down[1:]
        return L

    def rk4(self, p: np.ndarray, dt: float) -> np.ndarray:
        k1 = self.rhs(p)
        k2 = self.rhs(p + 0.5 * dt * k1)
        k3 = self.rhs(p + 0.5 * dt * k2)
        k4 = self.rhs(p + dt * k3)
        return p + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def stationary(self) -> np.ndarray:
        """Normalized null vector of the generator, from the detailed-balance recursion."""
        # P[k+1]/P[k] = up[k]/down[k+1], done in logs to avoid overflow
        logp = np.concatenate([[0.0], np.cumsum(np.log(self.up[:-1]) - np.log(self.down[1:]))])
        w = np.exp(logp - logp.max())
        return w / w.sum()

    def run(self, p0: MagDistribution | np.ndarray, t_end: float, snapshots=None, dt: float | None = None,
            cfl: float = DEFAULT_CFL) -> MasterRun:
        """Integrate from t = 0 to ``t_end`` with fixed-step RK4.

        ``snapshots`` are the times (ascending, within [0, t_end]) at which
        P is recorded; steps are shortened to land on them exactly.
        """
        p = np.array(p0.p if isinstance(p0, MagDistribution) else p0, dtype=float)
        total0 = float(p.sum())
        dt = self.stable_dt(cfl) if dt is None else dt
        self.check_dt(dt)
        snaps = np.unique(np.concatenate([[0.0], np.asarray(snapshots if snapshots is not None else [], float), [t_end]]))
        if snaps[0] < 0 or snaps[-1] > t_end:
            raise ValueError("snapshot times must lie in [0, t_end]")
        refresh = _refresh_schedule(self.kernel_horizon) if self.finite_time else np.array([])
        out = [p.copy()]
        t, steps, max_drift = 0.0, 0, 0.0
        for target in snaps[1:]:
            while t < target - 1e-12 * max(1.0, target):
                if self.finite_time:
                    self._update_kernel(t, refresh)
                h = min(dt, target - t)
                p = self.rk4(p, h)
                t = target if h < dt else t + h
                steps += 1
                low = p.min()
                if low < 0:
                    if low < -1e-12:
                        raise FloatingPointError(f"negative weight {low:.3e} at t={t:.6g}")
                    p[p < 0] = 0.0
            max_drift = max(max_drift, abs(p.sum() - total0))
            out.append(p.copy())
        return MasterRun(self.sector, self.grid, snaps, np.array(out), total0, dt, steps, max_drift)

    def _update_kernel(self, t, refresh):
        if self._kernel_t is None or (self._kernel_t < len(refresh) and t >= refresh[self._kernel_t]):
            i = int(np.searchsorted(refresh, t, side="right"))
            self._kernel_t = i
            t_eff = refresh[i] if i < len(refresh) else math.inf
            # evaluate at the midpoint of the refresh interval
            t_mid = 0.5 * (refresh[i - 1] + t_eff) if 0 < i < len(refresh) else t_eff
            if i == 0:
                t_mid = 0.5 * refresh[0]
            self.up, self.down = self._rates(t_mid)


def _refresh_schedule(horizon: float, n: int = 24) -> np.ndarray:
    return np.geomspace(horizon / 200.0, horizon, n)


def master_step(state: SectorState, dt: float, params: ModelParams) -> SectorState:
    """One RK4 step of the master equation for a single sector."""
    eq = MasterEquation(params, state.sector)
    eq.check_dt(dt)
    p = eq.rk4(np.array(state.dist.p), dt)
    return SectorState(state.sector, MagDistribution(state.dist.grid, p, state.dist.total), state.t + dt)


def drift_velocity(m, params: ModelParams, sector="up"):
    """Mean-field drift v(m) = gamma w (1 - m coth(w/T)), w = g s_i + J m^3.

    The product w coth(w/T) is evaluated as T x coth(x), regular at w = 0.
    """
    s = sector_sign(sector)
    m = np.asarray(m, dtype=float)
    w = params.g * s + params.J * m**3
    return params.gamma * (w - m * params.T * x_coth(w / params.T))


@dataclass(frozen=True)
class DriftDiffusion:
    m: np.ndarray
    v: np.ndarray
    w: np.ndarray


def fokker_planck_coefficients(m, params: ModelParams, sector="up") -> DriftDiffusion:
    """v = 2 gamma [(1-m) K(-2w) - (1+m) K(2w)], w_diff = 2 gamma [(1-m) K(-2w) + (1+m) K(2w)].

    Here w = g s_i + J m^3 and K carries the Debye cutoff; for Gamma -> inf
    the drift reduces to :func:`drift_velocity`.
    """
    s = sector_sign(sector)
    m = np.asarray(m, dtype=float)
    om = 2 * (params.g * s + params.J * m**3)
    k_minus = spectrum(-om, params.T, params.Gamma)
    k_plus = spectrum(om, params.T, params.Gamma)
    a, b = (1 - m) * k_minus, (1 + m) * k_plus
    return DriftDiffusion(m, 2 * params.gamma * (a - b), 2 * params.gamma * (a + b))


class FokkerPlanck:
    """dP/dt = d/dm[-v P] + (1/N) d^2/dm^2[w P] by finite volumes.

    Cells are centred on the master-equation grid (width dm = 2/N) with
    zero flux through the outer faces.  Advection uses the central face
    average; since |v| <= w the cell Peclet number v dm N/(2w) is at most
    one and the scheme stays monotone.
    """

    def __init__(self, params: ModelParams, sector="up"):
        if params.N < 100:
            log.warning("Fokker-Planck reduction used at small N=%d", params.N)
        self.params = params
        self.sector = "up" if sector_sign(sector) > 0 else "down"
        self.grid = make_grid(params.N)
        dd = fokker_planck_coefficients(self.grid.values, params, self.sector)
        self.v = dd.v
        self.w = dd.w / params.N
        faces = 0.5 * (self.grid.values[1:] + self.grid.values[:-1])
        self.v_face = fokker_planck_coefficients(faces, params, self.sector).v
        self.dm = self.grid.spacing

    def flux(self, p: np.ndarray) -> np.ndarray:
        adv = self.v_face * 0.5 * (p[1:] + p[:-1])
        wp = self.w * p
        return adv - (wp[1:] - wp[:-1]) / self.dm

    def rhs(self, p: np.ndarray) -> np.ndarray:
        f = self.flux(p) / self.dm
        out = np.zeros_like(p)
        out[:-1] -= f
        out[1:] += f
        return out

    def stable_dt(self, cfl: float = DEFAULT_CFL) -> float:
        rate = np.max(2 * self.w / self.dm**2 + np.abs(self.v) / self.dm)
        return cfl / rate

    def check_dt(self, dt: float) -> None:
        if dt > self.stable_dt(RK4_BOUND):
            raise StabilityError(dt, self.stable_dt())

    def step(self, p: np.ndarray, dt: float) -> np.ndarray:
        k1 = self.rhs(p)
        k2 = self.rhs(p + 0.5 * dt * k1)
        k3 = self.rhs(p + 0.5 * dt * k2)
        k4 = self.rhs(p + dt * k3)
        return p + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def run(self, p0, t_end: float, snapshots=None, dt: float | None = None) -> MasterRun:
        p = np.array(p0.p if isinstance(p0, MagDistribution) else p0, dtype=float)
        total0 = float(p.sum())
        dt = self.stable_dt() if dt is None else dt
        self.check_dt(dt)
        snaps = np.unique(np.concatenate([[0.0], np.asarray(snapshots if snapshots is not None else [], float), [t_end]]))
        out = [p.copy()]
        t, steps, max_drift = 0.0, 0, 0.0
        for target in snaps[1:]:
            while t < target - 1e-12 * max(1.0, target):
                h = min(dt, target - t)
                p = self.step(p, h)
                t = target if h < dt else t + h
                steps += 1
            max_drift = max(max_drift, abs(p.sum() - total0))
            out.append(p.copy())
        return MasterRun(self.sector, self.grid, snaps, np.array(out), total0, dt, steps, max_drift)


def fokker_planck_step(p: np.ndarray, dt: float, params: ModelParams, sector="up") -> np.ndarray:
    fp = FokkerPlanck(params, sector)
    fp.check_dt(dt)
    return fp.step(np.asarray(p, dtype=float), dt)


@dataclass(frozen=True)
class MeanFieldTrajectory:
    t: np.ndarray
    mu: np.ndarray
    target: float
    tau_reg: float  # hbar/J; inf when the target is never reached
    registered: bool
    reason: str = ""

    def tau_reg_in_tau_J(self, gamma: float) -> float:
        return self.tau_reg / tau_J(gamma)


def registration_target(params: ModelParams, sector="up") -> float:
    """0.9 times the stable ferromagnetic root in the field h = g s_i."""
    s = sector_sign(sector)
    m_up = spontaneous_magnetization(params.T, params.g, params.J)
    if m_up is None:
        raise RegistrationError(f"no ferromagnetic state at T={params.T}, h={params.g}")
    return s * REG_FRACTION * m_up


def mean_field_trajectory(mu0: float, params: ModelParams, sector="up", t_max: float | None = None,
                          n_out: int = 400) -> MeanFieldTrajectory:
    """Integrate d mu/dt = v(mu) and record the registration time.

    tau_reg is the first time mu reaches 0.9 m_up.  If a zero of v lies
    between mu0 and the target the flow can never cross it, and the run
    is reported as non-registering without integrating to t_max.
    """
    if not abs(mu0) < 1:
        raise ValueError("|mu0| must be < 1")
    s = sector_sign(sector)
    target = registration_target(params, sector)
    t_max = 2000.0 * tau_J(params.gamma) if t_max is None else t_max
    if params.gamma == 0:
        return MeanFieldTrajectory(np.array([0.0]), np.array([mu0]), target, math.inf, False, "gamma = 0")
    if s * mu0 >= abs(target):
        return MeanFieldTrajectory(np.array([0.0]), np.array([mu0]), target, 0.0, True)
    blocked = _blocking_root(mu0, target, params, s)
    if blocked is not None:
        t = np.linspace(0, t_max, n_out)
        return MeanFieldTrajectory(t, np.full_like(t, np.nan), target, math.inf, False,
                                   f"drift vanishes at m={blocked:.6g} before the target")

    def rhs(_, y):
        return drift_velocity(y[0], params, sector)

    def hit(_, y):
        return s * (y[0] - target)

    hit.terminal = True
    hit.direction = 1
    sol = integrate.solve_ivp(rhs, (0.0, t_max), [mu0], method="RK45", rtol=1e-10, atol=1e-12, events=hit,
                              dense_output=True)
    if not sol.success:
        raise RegistrationError(sol.message)
    if sol.t_events[0].size:
        tau = float(sol.t_events[0][0])
        t = np.linspace(0, tau, n_out)
        return MeanFieldTrajectory(t, sol.sol(t)[0], target, tau, True)
    t = np.linspace(0, t_max, n_out)
    return MeanFieldTrajectory(t, sol.sol(t)[0], target, math.inf, False, "target not reached within t_max")


def _blocking_root(mu0, target, params, s):
    lo, hi = sorted((mu0, target))
    m = np.linspace(lo, hi, 4001)
    v = s * drift_velocity(m, params, s)
    bad = np.nonzero(v <= 0)[0]
    if bad.size == 0:
        return None
    return float(m[bad[0]])


@dataclass(frozen=True)
class ThresholdResult:
    g_min: float
    h_c: float
    T: float
    t_cap: float
    evaluations: int


def registration_threshold(T: float, params: ModelParams | None = None, bracket=(1e-4, 0.5), xtol: float = 1e-6,
                           t_cap: float | None = None, mu0: float = 0.0) -> ThresholdResult:
    """Smallest g for which mu(t), started at mu0, reaches 0.9 m_up within t_cap.

    Bisection over g at fixed T and gamma; t_cap defaults to 1000 tau_J.
    """
    from .thermo import critical_field

    base = replace(params or ModelParams(), T=T)
    t_cap = 1000.0 * tau_J(base.gamma) if t_cap is None else t_cap
    count = 0

    def registers(g):
        nonlocal count
        count += 1
        return mean_field_trajectory(mu0, replace(base, g=g), "up", t_cap, n_out=2).registered

    lo, hi = bracket
    if registers(lo):
        raise RegistrationError(f"registration already occurs at g={lo}")
    if not registers(hi):
        raise RegistrationError(f"no registration at g={hi}")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if registers(mid):
            hi = mid
        else:
            lo = mid
    try:
        h_c = critical_field(T, base.J).h_c
    except ValueError:
        h_c = math.nan
    return ThresholdResult(hi, h_c, T, t_cap, count)


def bottleneck(params: ModelParams, sector="up") -> tuple[float, float]:
    """Location and value of the smallest positive drift between 0 and the target."""
    s = sector_sign(sector)
    target = abs(registration_target(params, sector))
    res = optimize.minimize_scalar(lambda x: s * float(drift_velocity(s * x, params, sector)),
                                   bounds=(0.0, target), method="bounded", options={"xatol": 1e-10})
    return s * float(res.x), float(res.fun)
