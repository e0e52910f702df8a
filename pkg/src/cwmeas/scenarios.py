"""Scenario runners behind the command line.

Each runner takes a :class:`ScenarioConfig` and returns a
:class:`ScenarioResult` holding CSV tables and summary metrics.  Writing
files is kept separate (:func:`write_result`) so runners stay pure and
sweep children can run in worker processes.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .bath import BathSpec, damping_coefficients, finite_time_kernel, spectrum
from .config import ScenarioConfig
from .core import SpinMatrix, tau_J
from .registration import FokkerPlanck, MasterEquation, RegistrationError, mean_field_trajectory
from .subensemble import (check_decomposition, final_state_matrix, merge_random_tree, random_decomposition,
                          relax_subensemble, relaxed_weights, SubensembleWeights)
from .thermo import (critical_field, critical_temperature, ferro_peak, free_energy_curve, initial_distribution,
                     spontaneous_magnetization)
from .truncation import CouplingSet, evol, offdiag_amplitude, tau_recur, tau_trunc
from .two_apparatus import (TwoAppParams, final_weights, initial_correlators, invert_weights, joint_free_energy,
                            joint_stationary_points, rotation_series, sample_outcomes, OUTCOMES)

UNITS = "units: hbar = k_B = J = 1; energies in J, times in hbar/J"
DEFAULT_OUT = "cwmeas-out"
ENV_OUT = "CWMEAS_OUT"


class SolverError(RuntimeError):
    """A numerical stage failed; carries the scenario name."""


@dataclass
class Table:
    header: list[str]
    rows: list[list]


@dataclass
class ScenarioResult:
    scenario: str
    tables: dict[str, Table] = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    failures: int = 0


@dataclass
class RunRecord:
    config_hash: str
    scenario: str
    seed: int
    version: str
    wall_time: float
    metrics: dict
    files: list[str]

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True, default=_json_default)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def run_thermo(cfg: ScenarioConfig) -> ScenarioResult:
    p = cfg.params
    h = p.g if cfg.options["h"] is None else cfg.options["h"]
    curve = free_energy_curve(h, p.T, p.J, cfg.options["points"])
    res = ScenarioResult("thermo")
    res.tables["thermo"] = Table(["m", "F_over_N"], [[m, f] for m, f in zip(curve.m, curve.f)])
    res.tables["thermo-stationary"] = Table(["m", "kind", "F_over_N"],
                                            [[s.m, s.kind, s.f] for s in curve.stationary])
    try:
        cp = critical_field(p.T, p.J)
        m_c, h_c = cp.m_c, cp.h_c
    except ValueError:
        m_c = h_c = math.nan
    T_c = critical_temperature(p.J)
    res.metrics = {"h": h, "T": p.T, "m_c": m_c, "h_c": h_c, "T_c": T_c,
                   "roots": [s.m for s in curve.stationary], "m_up": spontaneous_magnetization(p.T, h, p.J)}
    res.tables["thermo-summary"] = Table(["h", "T", "roots", "m_c", "h_c", "T_c"],
                                         [[h, p.T, " ".join(_fmt(r) for r in res.metrics["roots"]), m_c, h_c, T_c]])
    return res


def run_kernel(cfg: ScenarioConfig) -> ScenarioResult:
    o, p = cfg.options, cfg.params
    bath = BathSpec.from_params(p)
    t = o["t"]
    rows = []
    for w in np.linspace(o["omega_min"], o["omega_max"], o["points"]):
        lam, mu = damping_coefficients(abs(w), t, bath)
        rows.append([w, float(spectrum(w, p.T, p.Gamma)), finite_time_kernel(w, t, bath), lam, mu])
    res = ScenarioResult("kernel")
    res.tables["kernel"] = Table(["omega", "K", "K_t", "lambda", "mu"], rows)
    res.metrics = {"t": t, "points": len(rows)}
    return res


def run_truncate(cfg: ScenarioConfig) -> ScenarioResult:
    o, p = cfg.options, cfg.params
    couplings = CouplingSet.from_params(p)
    bath = BathSpec(p.T, p.Gamma, p.gamma)
    t_max = 2 * tau_recur(p.g) if o["t_max"] is None else o["t_max"]
    if not math.isfinite(t_max):
        t_max = 10.0
    times = np.linspace(0, t_max, o["samples"])
    r0 = SpinMatrix.from_bloch(o["sx0"], o["sy0"], o["sz0"])
    off = offdiag_amplitude(times, r0, couplings, bath, o["mode"])
    factor = evol(times, couplings, bath, o["mode"])
    res = ScenarioResult("truncate")
    res.tables["truncate"] = Table(["t", "abs_evol", "re_r_ud", "im_r_ud"],
                                   [[t, abs(e), r.real, r.imag] for t, e, r in zip(times, factor, off.r_ud)])
    res.metrics = {"tau_trunc": tau_trunc(p.N, p.g), "tau_recur": tau_recur(p.g), "mean_g": float(couplings.g.mean()),
                   "abs_evol_at_tau_recur": float(abs(_evol_at(tau_recur(p.g), couplings, bath, o["mode"])))}
    return res


def _evol_at(t, couplings, bath, mode):
    return evol(t, couplings, bath, mode)[0] if math.isfinite(t) else math.nan


def run_register(cfg: ScenarioConfig) -> ScenarioResult:
    o, p = cfg.options, cfg.params
    sector = o["sector"]
    mf = mean_field_trajectory(o["mu0"], p, sector)
    tj = tau_J(p.gamma)
    t_max = o["t_max"] * tj if o["t_max"] is not None else (1.5 * mf.tau_reg if mf.registered else 100 * tj)
    res = ScenarioResult("register")
    res.metrics = {"tau_J": tj, "tau_reg_mean_field": mf.tau_reg / tj, "registered_mean_field": mf.registered,
                   "target": mf.target, "t_max": t_max / tj}
    m_up = spontaneous_magnetization(p.T, p.g, p.J)
    res.metrics["m_i"] = None if m_up is None else (m_up if sector == "up" else -m_up)
    if o["method"] == "mean-field":
        res.tables["register-mean-field"] = Table(["t_over_tau_J", "mu"], [[t / tj, m] for t, m in zip(mf.t, mf.mu)])
        return res
    snaps = np.linspace(0, t_max, o["snapshots"])
    # the dynamics is linear: evolve the normalised sector distribution, scale P by the sector weight
    weight = o["r_up"] if sector == "up" else 1 - o["r_up"]
    p0 = initial_distribution(p)
    if o["method"] == "master":
        run = MasterEquation(p, sector, finite_time=o["finite_time"]).run(p0, t_max, snaps)
    else:
        run = FokkerPlanck(p, sector).run(p0, t_max, snaps)
    grid = run.grid
    rows = []
    for t, prob in zip(run.times, run.p):
        dens = prob * grid.N / 2
        rows.extend([t / tj, m, q, d] for m, q, d in zip(grid.values, weight * prob, dens))
    res.tables["register"] = Table(["t_over_tau_J", "m", "P", "density"], rows)
    res.tables["register-moments"] = Table(["t_over_tau_J", "mean", "std", "peak"],
                                           [[t / tj, a, b, c] for t, a, b, c in zip(run.times, run.mean, run.std, run.peak())])
    cross = run.crossing_time(abs(mf.target))
    res.metrics.update({
        "tau_reg_distribution_mean": cross / tj, "final_mean": float(run.mean[-1]), "final_std": float(run.std[-1]),
        "max_conservation_drift": run.max_drift, "steps": run.steps, "dt": run.dt, "sector_weight": weight,
    })
    if m_up is not None and m_up < 1:
        try:
            res.metrics["equilibrium_width"] = ferro_peak(m_up, p.g, p.T, p.N, p.J)[1]
        except ValueError:
            pass
    return res


def run_two_apparatus(cfg: ScenarioConfig) -> ScenarioResult:
    o = cfg.options
    tp = TwoAppParams(cfg.params, cfg.params2 or cfg.params)
    res = ScenarioResult("two-apparatus")
    mode = o["mode"]
    if mode == "landscape":
        m = np.linspace(-1, 1, o["points"])[1:-1]
        M, MP = np.meshgrid(m, m, indexing="ij")
        F = joint_free_energy(M, MP, tp, o["branch"])
        res.tables["two-apparatus-landscape"] = Table(["m", "m_prime", "F_over_N"],
                                                      [[a, b, c] for a, b, c in zip(M.ravel(), MP.ravel(), F.ravel())])
        pts = joint_stationary_points(tp, o["branch"])
        res.tables["two-apparatus-stationary"] = Table(["m", "m_prime", "kind", "F_over_N"],
                                                       [[s.m, s.mp, s.kind, s.F] for s in pts])
        res.metrics = {"minima": sum(s.kind == "minimum" for s in pts), "stationary_points": len(pts)}
    elif mode == "rotate":
        state = initial_correlators(tp, (o["sx0"], o["sy0"], o["sz0"]))
        ser = rotation_series(state, np.linspace(0, o["t_max"], o["samples"]))
        keys = ["t", "sx", "sy", "sz", "su", "sv"]
        res.tables["two-apparatus-rotate"] = Table(keys, [list(r) for r in zip(*(ser[k] for k in keys))])
        res.metrics = {"su_drift": float(np.max(np.abs(ser["su"] - ser["su"][0]))), "cone_violation": state.cone_violation()}
    else:
        w = final_weights(o["sz0"], o["sx0"], o["lam"], o["lamp"])
        rng = cfg.params.rng()
        counts = sample_outcomes(w, o["runs"], rng) if o["runs"] else np.zeros(4, int)
        rows = [[f"{e:+d}", f"{ep:+d}", w.P[(e, ep)], c] for (e, ep), c in zip(OUTCOMES, counts)]
        res.tables["two-apparatus-weights"] = Table(["eps", "eps_prime", "P", "count"], rows)
        sz, sx = invert_weights(w, o["lam"], o["lamp"])
        res.metrics = {"sz_from_weights": sz, "sx_from_weights": sx, "wrong_sign_z": w.wrong_sign_z()}
        if o["runs"]:
            ez, ex = invert_weights(counts / o["runs"], o["lam"], o["lamp"])
            res.metrics.update({"sz_from_counts": ez, "sx_from_counts": ex})
    return res


def run_subensemble(cfg: ScenarioConfig) -> ScenarioResult:
    o = cfg.options
    rng = cfg.params.rng()
    D = final_state_matrix(o["p_up"], o["G"])
    rows = []
    worst = 0.0
    for i in range(o["decompositions"]):
        dec = random_decomposition(D, rng)
        bad = check_decomposition(D, dec.sub, dec.csub, dec.k)
        qs = relaxed_weights(relax_subensemble(dec.sub, 1.0))
        qc = relaxed_weights(relax_subensemble(dec.csub, 1.0))
        born = dec.k * qs.q_up + (1 - dec.k) * qc.q_up
        worst = max(worst, abs(born - o["p_up"]))
        rows.append([i, dec.k, qs.q_up, qs.q_down, qc.q_up, qc.q_down, born, ";".join(bad) or "ok"])
    res = ScenarioResult("subensemble")
    res.tables["subensemble"] = Table(["index", "k", "q_up_sub", "q_down_sub", "q_up_csub", "q_down_csub",
                                       "recombined_q_up", "check"], rows)
    tree_rows = []
    for j in range(o["trees"]):
        ups = rng.random(o["runs"]) < o["p_up"]
        root = merge_random_tree([SubensembleWeights.single_run(bool(u)) for u in ups], rng)
        n_up = int(ups.sum())
        tree_rows.append([j, o["runs"], n_up, str(root.q_up), root.q_up == Fraction(n_up, o["runs"])])
    res.tables["subensemble-hierarchy"] = Table(["tree", "runs", "up_runs", "root_q_up", "exact"], tree_rows)
    res.metrics = {"max_born_deviation": worst, "hierarchy_exact": all(r[-1] for r in tree_rows),
                   "invalid_decompositions": sum(r[-1] != "ok" for r in rows)}
    return res


RUNNERS = {
    "thermo": run_thermo,
    "kernel": run_kernel,
    "truncate": run_truncate,
    "register": run_register,
    "two-apparatus": run_two_apparatus,
    "subensemble": run_subensemble,
}


def run_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    if cfg.scenario == "sweep":
        raise ValueError("use run_sweep for sweep configs")
    try:
        return RUNNERS[cfg.scenario](cfg)
    except (RegistrationError, FloatingPointError, RuntimeError, ArithmeticError) as exc:
        raise SolverError(f"{cfg.scenario}: {exc}") from exc


def _sweep_child(args):
    point, child = args
    try:
        res = run_scenario(child)
        return point, child.config_hash(), res.metrics, ""
    except Exception as exc:  # recorded per child, never fatal to the sweep
        return point, child.config_hash(), {}, f"{type(exc).__name__}: {exc}"


def run_sweep(cfg: ScenarioConfig, workers: int = 1) -> ScenarioResult:
    """Run every child; rows keep the lexicographic axis order regardless of completion order."""
    children = cfg.children()
    if workers > 1 and len(children) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_child, children))
    else:
        outcomes = [_sweep_child(c) for c in children]
    metric_keys = sorted({k for _, _, m, _ in outcomes for k, v in m.items() if np.isscalar(v) or v is None})
    axis_names = [a.name for a in cfg.axes]
    rows = []
    failures = 0
    for point, h, metrics, err in outcomes:
        failures += bool(err)
        rows.append([point[n] for n in axis_names] + [h[:16]] + [metrics.get(k, "") for k in metric_keys] +
                    ["failed" if err else "ok", err])
    res = ScenarioResult("sweep", failures=failures)
    res.tables["sweep"] = Table(axis_names + ["config_hash"] + metric_keys + ["status", "error"], rows)
    res.metrics = {"children": len(children), "failed": failures, "child_scenario": cfg.child}
    return res


def output_dir(cfg: ScenarioConfig, override: str | None = None) -> Path:
    return Path(override or cfg.out or os.environ.get(ENV_OUT) or DEFAULT_OUT)


def write_result(res: ScenarioResult, cfg: ScenarioConfig, out: Path, wall_time: float) -> RunRecord:
    out.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()
    files = []
    for name, table in res.tables.items():
        path = out / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# cwmeas {cfg.scenario} config={h} seed={cfg.params.seed}; {UNITS}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(table.header)
            for row in table.rows:
                w.writerow([_fmt(x) for x in row])
        files.append(path.name)
    rec = RunRecord(h, cfg.scenario, cfg.params.seed, __version__, wall_time, res.metrics, files)
    (out / f"{cfg.scenario}.run.json").write_text(rec.to_json() + "\n", encoding="utf-8")
    return rec


def execute(cfg: ScenarioConfig, out: Path, workers: int = 1) -> tuple[RunRecord, ScenarioResult]:
    start = time.perf_counter()
    res = run_sweep(cfg, workers) if cfg.scenario == "sweep" else run_scenario(cfg)
    rec = write_result(res, cfg, out, time.perf_counter() - start)
    return rec, res
