"""Two apparatuses measuring s_z and s_x of the same spin.

Apparatus A couples through -N g m s_z and A' through -N' g' m' s_x.  For
fixed magnetizations the combined coupling is a field of strength w(m, m')
along the unit vector u in the z-x plane, so the tested spin precesses
about u.  The components of the correlators along u are conserved, the
(v, y) components rotate.  Registration ends in one of four corners
(+-m_F, +-m'_F) with weights

    P_ee' = [1 + e lam <s_z(0)> + e' lam' <s_x(0)>]/4

where the efficiency factors obey lam^2 + lam'^2 <= 1.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .core import ModelParams
from .thermo import free_energy, free_energy_slope, initial_distribution, mean_field_roots

DEFAULT_EFFICIENCY = 1 / math.pi
FULL_GRID_MAX_N = 300
CONTINUUM_POINTS = 301
SIMILAR_RATIO = 10.0
OUTCOMES = ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass(frozen=True)
class TwoAppParams:
    a: ModelParams = field(default_factory=ModelParams)
    b: ModelParams = field(default_factory=ModelParams)

    def __post_init__(self):
        pairs = {"N": (self.a.N, self.b.N), "g": (self.a.g, self.b.g), "gamma": (self.a.gamma, self.b.gamma)}
        for name, (x, y) in pairs.items():
            if x > 0 and y > 0 and not 1 / SIMILAR_RATIO <= x / y <= SIMILAR_RATIO:
                warnings.warn(f"apparatuses are not similar in {name}: {x} vs {y}", stacklevel=3)

    @property
    def T(self) -> float:
        return self.a.T


@dataclass(frozen=True)
class JointField:
    m: np.ndarray
    mp: np.ndarray
    u_z: np.ndarray
    u_x: np.ndarray
    w: np.ndarray
    undefined: np.ndarray  # cells with w = 0, where u is set to z by convention


def joint_field(m, mp, tp: TwoAppParams) -> JointField:
    """w = 2 sqrt((N g m)^2 + (N' g' m')^2) and u = (2 N g m/w) z + (2 N' g' m'/w) x.

    Broadcasts over ``m`` and ``mp``.  Where w = 0 the direction is
    undefined; those cells are flagged and given u = z.
    """
    m, mp = np.broadcast_arrays(np.asarray(m, float), np.asarray(mp, float))
    a = tp.a.N * tp.a.g * m
    b = tp.b.N * tp.b.g * mp
    w = 2 * np.hypot(a, b)
    zero = (a == 0) & (b == 0)
    # rescale first so that subnormal a, b keep full relative precision
    big = np.where(zero, 1.0, np.maximum(np.abs(a), np.abs(b)))
    an, bn = a / big, b / big
    r = np.where(zero, 1.0, np.hypot(an, bn))
    u_z = np.where(zero, 1.0, an / r)
    u_x = np.where(zero, 0.0, bn / r)
    return JointField(m, mp, u_z, u_x, w, zero)


def joint_free_energy(m, mp, tp: TwoAppParams, branch: int = -1):
    """Joint free energy per spin of A, F/N = branch w/2N + f(m) + (N'/N) f'(m').

    f and f' are the single-magnet free energies at zero field.  branch = -1
    selects the spin state along -u, which lowers the energy when the
    magnets align with the couplings and is the branch that registers.
    """
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    m, mp = np.asarray(m, float), np.asarray(mp, float)
    N = tp.a.N
    w = joint_field(m, mp, tp).w
    return branch * w / (2 * N) + free_energy(m, 0.0, tp.a.T, tp.a.J) + tp.b.N / N * free_energy(mp, 0.0, tp.b.T, tp.b.J)


def joint_gradient(m, mp, tp: TwoAppParams, branch: int = -1):
    """(dF/dm, dF/dm') per spin of A; the cone term is taken as 0 at w = 0."""
    N = tp.a.N
    # N'/N first so that identical apparatuses give bitwise identical terms
    kb = tp.b.N / N * tp.b.g
    a = tp.a.g * m
    b = kb * mp
    r = math.hypot(a, b)
    cone_m = branch * tp.a.g * a / r if r > 0 else 0.0
    cone_mp = branch * kb * b / r if r > 0 else 0.0
    return (cone_m + float(free_energy_slope(m, 0.0, tp.a.T, tp.a.J)),
            cone_mp + tp.b.N / N * float(free_energy_slope(mp, 0.0, tp.b.T, tp.b.J)))


@dataclass(frozen=True)
class JointStationaryPoint:
    m: float
    mp: float
    kind: str  # "minimum", "saddle" or "maximum"
    F: float


def _classify(H: np.ndarray, scale: float) -> str:
    ev = np.linalg.eigvalsh(H)
    if np.all(ev > 1e-9 * scale):
        return "minimum"
    if np.all(ev < -1e-9 * scale):
        return "maximum"
    return "saddle"


def joint_stationary_points(tp: TwoAppParams, branch: int = -1) -> list[JointStationaryPoint]:
    """Stationary points of the joint landscape, typed by the Hessian.

    Without coupling the landscape separates and every pair of
    single-magnet roots is returned.  With coupling, the gradient is
    solved for from every such pair, written in y = artanh(m) so that
    points within 1e-5 of |m| = 1 keep full precision.
    """
    ra = mean_field_roots(0.0, tp.a.T, tp.a.J)
    rb = mean_field_roots(0.0, tp.b.T, tp.b.J)
    N = tp.a.N
    ka, kb = tp.a.g, tp.b.N / N * tp.b.g
    rel = tp.b.N / N
    scale = tp.a.T + tp.a.J

    def grad(y):
        m, mp = np.tanh(y)
        a, b = ka * m, kb * mp
        r = math.hypot(a, b)
        cm = branch * ka * a / r if r > 0 else 0.0
        cmp_ = branch * kb * b / r if r > 0 else 0.0
        return [cm + tp.a.T * y[0] - tp.a.J * m**3, cmp_ + rel * (tp.b.T * y[1] - tp.b.J * mp**3)]

    def hessian(y):
        m, mp = np.tanh(y)
        H = np.diag([tp.a.T * math.cosh(y[0]) ** 2 - 3 * tp.a.J * m * m,
                     rel * (tp.b.T * math.cosh(y[1]) ** 2 - 3 * tp.b.J * mp * mp)])
        a, b = ka * m, kb * mp
        r = math.hypot(a, b)
        if r > 0:
            H = H + branch / r**3 * np.array([[ka * ka * b * b, -ka * kb * a * b], [-ka * kb * a * b, kb * kb * a * a]])
        return H

    if ka == 0 and kb == 0:
        seeds = [np.arctanh([p.m, q.m]) for p, q in itertools.product(ra, rb)]
    else:
        # the cone moves the roots away from the h = 0 ones; add a coarse scan
        ya = sorted({*(math.atanh(p.m) for p in ra), *np.linspace(-6, 6, 25)})
        yb = sorted({*(math.atanh(q.m) for q in rb), *np.linspace(-6, 6, 25)})
        seeds = [np.array(s) for s in itertools.product(ya, yb)]
    found: list[np.ndarray] = []
    for y0 in seeds:
        if ka == 0 and kb == 0:
            found.append(y0)
            continue
        res = optimize.root(grad, y0 + 1e-6, method="hybr", options={"xtol": 1e-13})
        if res.success and np.max(np.abs(grad(res.x))) <= 1e-9:
            # the landscape is even in m and in m' separately
            found.extend(res.x * np.array(f) for f in itertools.product((1, -1), repeat=2))
    out: list[JointStationaryPoint] = []
    ys: list[np.ndarray] = []
    for y in found:
        y = y + 0.0  # no signed zeros
        if any(np.max(np.abs(y - yo)) < 1e-6 for yo in ys):
            continue
        ys.append(y)
        m, mp = np.tanh(y)
        out.append(JointStationaryPoint(float(m), float(mp), _classify(hessian(y), scale),
                                        float(joint_free_energy(m, mp, tp, branch))))
    return sorted(out, key=lambda p: (p.m, p.mp))


@dataclass(frozen=True)
class ThresholdPoint:
    g: float
    gp: float
    T: float
    end: tuple[float, float]


def descend(tp: TwoAppParams, start=None, branch: int = -1, r0: float = 1e-3, t_max: float = 1e7,
            escape: float = 0.5) -> tuple[float, float, bool]:
    """Steepest-descent flow of the joint free energy from near the origin.

    Starts at radius ``r0`` along (N g, N' g').  Returns the end point and
    whether every coupled magnet escaped past |m| = ``escape``.
    """
    a, b = tp.a.N * tp.a.g, tp.b.N * tp.b.g
    if start is None:
        norm = math.hypot(a, b)
        start = (r0 * a / norm, r0 * b / norm)
    driven = (tp.a.g > 0, tp.b.g > 0)

    def rhs(_, x):
        m, mp = np.clip(x, -1 + 1e-15, 1 - 1e-15)
        gm, gmp = joint_gradient(m, mp, tp, branch)
        # the (1 - m^2) mobility keeps the flow inside (-1, 1) without changing its fixed points
        return [-(1 - m * m) * gm, -(1 - mp * mp) * gmp]

    def escaped(_, x):
        vals = [abs(xi) - escape for xi, d in zip(x, driven) if d]
        return min(vals)

    escaped.terminal = True
    escaped.direction = 1

    def stalled(_, x):
        g = np.hypot(*rhs(0, x))
        return g - 1e-12

    stalled.terminal = True
    stalled.direction = -1
    sol = integrate.solve_ivp(rhs, (0, t_max), list(start), method="LSODA", events=(escaped, stalled),
                              rtol=1e-9, atol=1e-12)
    m, mp = sol.y[:, -1]
    return float(m), float(mp), bool(sol.t_events[0].size)


def landscape_threshold(T: float, tp: TwoAppParams | None = None, ratio: float | None = None, xtol: float = 1e-6,
                        bracket=(1e-5, 1.0)) -> ThresholdPoint:
    """Smallest couplings (g, g' = ratio g) for which the descent reaches the ferromagnetic corner.

    ``ratio`` defaults to g'/g of ``tp`` (1 when both are zero).  The
    property bisected is :func:`descend` escaping past |m| = 0.5 for every
    coupled magnet, i.e. no free-energy minimum blocks the path.
    """
    if not T < 0.496:
        raise ValueError("ferromagnetic minima require T < 0.496 J")
    tp = tp or TwoAppParams()
    if ratio is None:
        ratio = tp.b.g / tp.a.g if tp.a.g > 0 else 1.0
    from dataclasses import replace

    def make(c):
        return TwoAppParams(replace(tp.a, T=T, g=c), replace(tp.b, T=T, g=ratio * c))

    lo, hi = bracket
    if descend(make(lo))[2] or not descend(make(hi))[2]:
        raise RuntimeError(f"bracket {bracket} does not straddle the threshold")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if descend(make(mid))[2]:
            hi = mid
        else:
            lo = mid
    end = descend(make(hi))
    return ThresholdPoint(hi, ratio * hi, T, (end[0], end[1]))


def joint_grid(N: int):
    """Magnetization values for one axis of the joint grid and their weights at T0 = inf."""
    if N <= FULL_GRID_MAX_N:
        d = initial_distribution(ModelParams(N=N))
        return d.m.copy(), d.p.copy()
    m = np.linspace(-1, 1, CONTINUUM_POINTS)
    p = np.exp(-N * m**2 / 2)
    return m, p / p.sum()


@dataclass(frozen=True)
class CorrelatorState:
    """P(m, m') and the correlators C_u, C_v, C_y on the joint grid."""

    m: np.ndarray
    mp: np.ndarray
    P: np.ndarray
    Cu: np.ndarray
    Cv: np.ndarray
    Cy: np.ndarray
    field: JointField
    t: float = 0.0

    def expectations(self) -> dict[str, float]:
        """Grid-summed <s_x>, <s_y>, <s_z> and the frame components <s_u>, <s_v>."""
        f = self.field
        return {
            "sx": float(np.sum(f.u_x * self.Cu + f.u_z * self.Cv)),
            "sy": float(np.sum(self.Cy)),
            "sz": float(np.sum(f.u_z * self.Cu - f.u_x * self.Cv)),
            "su": float(np.sum(self.Cu)),
            "sv": float(np.sum(self.Cv)),
        }

    def cone_violation(self) -> float:
        """max(C_u^2 + C_v^2 + C_y^2 - P^2), non-positive for a physical state."""
        return float(np.max(self.Cu**2 + self.Cv**2 + self.Cy**2 - self.P**2))


def initial_correlators(tp: TwoAppParams, s0=(0.0, 0.0, 1.0)) -> CorrelatorState:
    """Product state: C_i = <s_i(0)> P_M(m) P_M'(m'), with s0 = (<s_x>, <s_y>, <s_z>)."""
    sx, sy, sz = s0
    if sx * sx + sy * sy + sz * sz > 1 + 1e-12:
        raise ValueError("Bloch vector longer than 1")
    m, pm = joint_grid(tp.a.N)
    mp, pmp = joint_grid(tp.b.N)
    M, MP = np.meshgrid(m, mp, indexing="ij")
    P = np.outer(pm, pmp)
    f = joint_field(M, MP, tp)
    Cx, Cy, Cz = sx * P, sy * P, sz * P
    Cu = f.u_z * Cz + f.u_x * Cx
    Cv = f.u_z * Cx - f.u_x * Cz
    return CorrelatorState(m, mp, P, Cu, Cv, Cy, f, 0.0)


def rotate_correlators(state: CorrelatorState, dt: float) -> CorrelatorState:
    """Precession of (C_y, C_v) by the angle w dt in each cell; P and C_u fixed."""
    phase = state.field.w * dt
    c, s = np.cos(phase), np.sin(phase)
    Cy = state.Cy * c - state.Cv * s
    Cv = state.Cv * c + state.Cy * s
    return CorrelatorState(state.m, state.mp, state.P, state.Cu, Cv, Cy, state.field, state.t + dt)


def rotation_series(state: CorrelatorState, times) -> dict[str, np.ndarray]:
    """Grid-summed expectations at each absolute time in ``times``."""
    rows = {k: [] for k in ("t", "sx", "sy", "sz", "su", "sv")}
    for t in np.asarray(times, float):
        e = rotate_correlators(state, t - state.t).expectations()
        rows["t"].append(t)
        for k, v in e.items():
            rows[k].append(v)
    return {k: np.array(v) for k, v in rows.items()}


@dataclass(frozen=True)
class OutcomeWeights:
    P: dict  # (e, e') -> probability
    lam: float
    lamp: float

    def as_array(self) -> np.ndarray:
        return np.array([self.P[o] for o in OUTCOMES])

    def wrong_sign_z(self) -> float:
        return self.P[(-1, 1)] + self.P[(-1, -1)]


def outcome_probabilities(sz: float, sx: float, lam: float, lamp: float) -> np.ndarray:
    """Raw weights in OUTCOMES order, without any validation."""
    e = np.array([o[0] for o in OUTCOMES], float)
    ep = np.array([o[1] for o in OUTCOMES], float)
    return 0.25 * (1 + e * lam * sz + ep * lamp * sx)


def check_efficiencies(lam: float, lamp: float) -> None:
    if not (0 <= lam <= 1 and 0 <= lamp <= 1):
        raise ValueError(f"efficiency factors must lie in [0, 1], got {lam}, {lamp}")
    if lam * lam + lamp * lamp > 1 + 1e-15:
        raise ValueError(f"lam^2 + lam'^2 = {lam * lam + lamp * lamp:.6g} exceeds 1")


def final_weights(sz: float, sx: float, lam: float = DEFAULT_EFFICIENCY, lamp: float = DEFAULT_EFFICIENCY) -> OutcomeWeights:
    """Weights of the four corner peaks for an initial spin with <s_z>, <s_x>."""
    check_efficiencies(lam, lamp)
    P = outcome_probabilities(sz, sx, lam, lamp)
    if P.min() < 0:
        raise ValueError(f"negative outcome weight {P.min():.3g}: state inconsistent with efficiencies")
    return OutcomeWeights(dict(zip(OUTCOMES, P.tolist())), lam, lamp)


def invert_weights(weights, lam: float, lamp: float) -> tuple[float, float]:
    """(<s_z(0)>, <s_x(0)>) from the four weights (OutcomeWeights, dict or array in OUTCOMES order)."""
    if lam == 0 or lamp == 0:
        raise ValueError("weights cannot be inverted when an efficiency factor vanishes")
    if isinstance(weights, OutcomeWeights):
        weights = weights.P
    if isinstance(weights, dict):
        pp, pm, mp, mm = (weights[o] for o in OUTCOMES)
    else:
        pp, pm, mp, mm = np.asarray(weights, float)
    return (pp + pm - mp - mm) / lam, (pp - pm + mp - mm) / lamp


def sample_outcomes(weights: OutcomeWeights, n: int, rng: np.random.Generator) -> np.ndarray:
    """Counts of the four outcomes in ``n`` independent runs."""
    return rng.multinomial(n, weights.as_array())


def final_state(weights: OutcomeWeights, tp: TwoAppParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """P(m, m') at the end of registration: four Gaussian peaks on the joint grid."""
    from .thermo import ferro_peak, spontaneous_magnetization

    axes = []
    for p in (tp.a, tp.b):
        m, _ = joint_grid(p.N)
        mF = spontaneous_magnetization(p.T, 0.0, p.J)
        if mF is None:
            raise ValueError(f"no ferromagnetic state at T={p.T}")
        _, width = ferro_peak(mF, 0.0, p.T, p.N, p.J)
        peaks = {}
        for e in (1, -1):
            prof = np.exp(-0.5 * ((m - e * mF) / width) ** 2)
            if prof.sum() == 0:
                prof = (np.abs(m - e * mF) == np.abs(m - e * mF).min()).astype(float)
            peaks[e] = prof / prof.sum()
        axes.append((m, peaks))
    (m, pa), (mp, pb) = axes
    P = sum(weights.P[(e, ep)] * np.outer(pa[e], pb[ep]) for e, ep in OUTCOMES)
    return m, mp, P
