import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, linalg
from scipy.special import gammaln

from cwmeas.core import ModelParams, make_grid
from cwmeas.registration import (FokkerPlanck, MasterEquation, RegistrationError, SectorState, StabilityError,
                                 bottleneck, drift_velocity, excitation_frequencies, fokker_planck_coefficients,
                                 fokker_planck_step, hamiltonian, master_step, mean_field_trajectory,
                                 registration_target, registration_threshold, sector_sign)
from cwmeas.thermo import critical_field, initial_distribution, mean_field_roots, spontaneous_magnetization

FIG = ModelParams()  # N=1000, T=0.2, g=0.045, gamma=0.05


@pytest.fixture(scope="module")
def fig_run():
    eq = MasterEquation(FIG, "up")
    mf = mean_field_trajectory(0.0, FIG)
    times = np.linspace(0, 1.5 * mf.tau_reg, 151)
    return eq.run(initial_distribution(FIG), times[-1], times), mf


def test_sector_sign():
    assert sector_sign("up") == 1 and sector_sign("down") == -1 and sector_sign(-1) == -1
    with pytest.raises(ValueError):
        sector_sign("left")


@pytest.mark.parametrize("sector", ["up", "down"])
@pytest.mark.parametrize("N", [4, 37, 1000])
def test_frequency_identity_on_grid(sector, N):
    p = replace(FIG, N=N)
    m = make_grid(N).values
    up, down = excitation_frequencies(m, sector, p)
    up_shift, _ = excitation_frequencies(m[1:] - 2 / N, sector, p)
    _, down_shift = excitation_frequencies(m[:-1] + 2 / N, sector, p)
    np.testing.assert_allclose(up_shift, -down[1:], rtol=0, atol=1e-15)
    np.testing.assert_allclose(down_shift, -up[:-1], rtol=0, atol=1e-15)


def test_frequencies_large_n_origin():
    up, down = excitation_frequencies(0.0, "up", replace(FIG, N=10**9))
    assert up == pytest.approx(-2 * FIG.g, abs=1e-15)
    assert down == pytest.approx(2 * FIG.g, abs=1e-15)


@pytest.mark.parametrize("sector", ["up", "down"])
def test_frequencies_match_hamiltonian_difference(sector):
    N, m, dm = 1000, 0.5, 0.002
    s = sector_sign(sector)
    H = lambda x: hamiltonian(x, s, FIG.g, N)
    up, down = excitation_frequencies(m, sector, FIG)
    assert up == pytest.approx(H(m + dm) - H(m), abs=1e-12)
    assert down == pytest.approx(H(m - dm) - H(m), abs=1e-12)


def _gibbs(p, sector):
    m = make_grid(p.N).values
    k = np.arange(p.N + 1)
    logw = gammaln(p.N + 1) - gammaln(k + 1) - gammaln(p.N - k + 1) - hamiltonian(m, sector_sign(sector), p.g, p.N) / p.T
    w = np.exp(logw - logw.max())
    return w / w.sum()


@pytest.mark.parametrize("N", [2, 3, 5, 8, 12])
@pytest.mark.parametrize("sector", ["up", "down"])
def test_stationary_state_matches_null_space(N, sector):
    p = replace(FIG, N=N, Gamma=math.inf)
    eq = MasterEquation(p, sector)
    ns = linalg.null_space(eq.generator())
    assert ns.shape[1] == 1
    brute = ns[:, 0] / ns[:, 0].sum()
    assert np.max(np.abs(eq.stationary() - brute)) < 1e-8
    assert np.max(np.abs(eq.stationary() - _gibbs(p, sector))) < 1e-8


def test_stationary_state_with_cutoff_is_gibbs():
    # the Debye factor is even in omega and drops out of detailed balance
    p = replace(FIG, N=10, Gamma=0.5)
    with pytest.warns(UserWarning, match="cutoff"):
        eq = MasterEquation(p)
    assert np.max(np.abs(eq.stationary() - _gibbs(p, "up"))) < 1e-12


def test_generator_columns_sum_to_zero():
    L = MasterEquation(replace(FIG, N=30)).generator()
    np.testing.assert_allclose(L.sum(axis=0), 0, atol=1e-13)


def test_conservation_per_thousand_steps():
    eq = MasterEquation(FIG, "up")
    p = np.array(initial_distribution(FIG).p) * 0.6
    dt = eq.stable_dt()
    for _ in range(1000):
        p = eq.rk4(p, dt)
    assert abs(p.sum() - 0.6) < 1e-12


def test_master_step_state():
    s = SectorState.initial(replace(FIG, N=50), "down", r_ii=0.3)
    eq = MasterEquation(replace(FIG, N=50), "down")
    s2 = master_step(s, eq.stable_dt(), replace(FIG, N=50))
    assert s2.t == pytest.approx(eq.stable_dt())
    assert s2.dist.sum() == pytest.approx(0.3, abs=1e-15)
    assert s2.dist.total == 0.3


def test_unstable_step_rejected():
    eq = MasterEquation(FIG)
    with pytest.raises(StabilityError) as err:
        eq.run(initial_distribution(FIG), 1.0, dt=20 * eq.stable_dt())
    assert err.value.suggested_dt == pytest.approx(eq.stable_dt())


def test_registration_final_peak():
    p = replace(FIG, N=200)
    eq = MasterEquation(p)
    mf = mean_field_trajectory(0.0, p)
    run = eq.run(initial_distribution(p, total=0.7), 5 * mf.tau_reg)
    m_up = spontaneous_magnetization(p.T, p.g)
    assert run.mean[-1] == pytest.approx(m_up, abs=0.01)
    assert run.p[-1].sum() == pytest.approx(0.7, abs=1e-12)
    assert run.p.min() >= 0


def test_down_sector_mirrors_up():
    p = replace(FIG, N=100)
    t = 200.0
    up = MasterEquation(p, "up").run(initial_distribution(p), t)
    down = MasterEquation(p, "down").run(initial_distribution(p), t)
    np.testing.assert_allclose(down.p[-1], up.p[-1][::-1], atol=1e-14)


def test_born_rule_and_positivity_on_figure_run(fig_run):
    run, _ = fig_run
    assert run.max_drift < 1e-10
    assert run.p.min() >= -1e-12


def test_peak_follows_mean_field_outside_bottleneck(fig_run):
    # argmax tracks mu(t) while the peak is narrow; in the bottleneck it spreads out and the argmax jumps
    run, mf = fig_run
    sol = integrate.solve_ivp(lambda _, y: drift_velocity(y, FIG), (0, run.times[-1]), [0.0], t_eval=run.times,
                              rtol=1e-10, atol=1e-12)
    dev = np.abs(run.peak() - sol.y[0]) / (2 / FIG.N)
    outside = (run.times <= 0.4 * mf.tau_reg) | (run.times >= 1.1 * mf.tau_reg)
    assert np.all(dev[outside] <= 3)
    assert np.max(dev) > 3  # documented: the argmax leaves mu(t) while the peak crosses the bottleneck


def test_registration_time_from_master(fig_run):
    run, mf = fig_run
    tau = run.crossing_time(mf.target) / FIG.tau_J
    assert tau == pytest.approx(38, rel=0.25)


def test_drift_vanishes_at_roots():
    for g in (0.02, 0.045):
        p = replace(FIG, g=g)
        for r in mean_field_roots(g, p.T):
            assert abs(drift_velocity(r.m, p)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.999, 0.999), st.floats(0.0, 0.2), st.floats(0.05, 0.6))
def test_drift_bounded_by_diffusion(m, g, T):
    p = replace(FIG, g=g, T=T, Gamma=math.inf)
    dd = fokker_planck_coefficients(m, p)
    assert dd.w > 0
    assert abs(dd.v) <= dd.w * (1 + 1e-12)
    assert dd.v == pytest.approx(drift_velocity(m, p), rel=1e-9, abs=1e-15)


def test_bottleneck_location():
    m, v = bottleneck(FIG)
    assert m == pytest.approx(0.270, abs=2e-3)
    assert 0 < v < 1e-3


def test_bottleneck_closed_below_h_c():
    p = replace(FIG, g=0.03)
    m = np.linspace(0, spontaneous_magnetization(p.T, p.g), 2001)
    assert np.any(drift_velocity(m, p) < 0)
    assert not mean_field_trajectory(0.0, p).registered


def test_mean_field_fixed_point():
    mF = spontaneous_magnetization(FIG.T, FIG.g)
    assert abs(drift_velocity(mF, FIG)) < 1e-13
    sol = integrate.solve_ivp(lambda _, y: drift_velocity(y, FIG), (0, 1000.0), [mF], rtol=1e-12, atol=1e-14)
    assert np.max(np.abs(sol.y[0] - mF)) < 1e-12


def test_mean_field_constant_at_root():
    roots = [r.m for r in mean_field_roots(0.02, FIG.T) if r.kind == "minimum" and abs(r.m) < 0.5]
    p = replace(FIG, g=0.02)
    mf = mean_field_trajectory(roots[0], p, t_max=500.0)
    assert not mf.registered


def test_mean_field_registration_time():
    mf = mean_field_trajectory(0.0, FIG)
    assert mf.registered
    assert mf.tau_reg_in_tau_J(FIG.gamma) == pytest.approx(38, rel=0.25)
    assert mf.mu[-1] == pytest.approx(mf.target, abs=1e-8)


def test_registration_time_scales_with_gamma():
    a = mean_field_trajectory(0.0, FIG).tau_reg_in_tau_J(FIG.gamma)
    b = mean_field_trajectory(0.0, replace(FIG, gamma=0.001)).tau_reg_in_tau_J(0.001)
    assert a == pytest.approx(b, rel=1e-6)


def test_slowing_down_near_h_c():
    h_c = critical_field(FIG.T).h_c
    taus = [mean_field_trajectory(0.0, replace(FIG, g=h_c + d)).tau_reg for d in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert all(a < b for a, b in zip(taus, taus[1:]))
    assert taus[-1] > 5 * taus[0]


def test_down_sector_target():
    assert registration_target(FIG, "down") == -registration_target(FIG, "up")
    mf = mean_field_trajectory(0.0, FIG, "down")
    assert mf.tau_reg == pytest.approx(mean_field_trajectory(0.0, FIG).tau_reg, rel=1e-8)


def test_no_ferro_state_above_onset():
    with pytest.raises(RegistrationError):
        registration_target(replace(FIG, T=0.6, g=0.0))


@pytest.mark.parametrize("T", [0.2, 0.363])
def test_threshold_matches_h_c(T):
    res = registration_threshold(T)
    assert res.g_min == pytest.approx(critical_field(T).h_c, abs=1e-3)


def test_threshold_increases_with_temperature():
    hs = [critical_field(T).h_c for T in np.linspace(0.1, 0.363, 12)]
    assert all(a < b for a, b in zip(hs, hs[1:]))
    g1, g2 = registration_threshold(0.15, xtol=1e-5).g_min, registration_threshold(0.3, xtol=1e-5).g_min
    assert g1 < g2


def test_fokker_planck_conserves_and_tracks_master():
    p = replace(FIG, N=300)
    t_end = 1.5 * mean_field_trajectory(0.0, p).tau_reg
    times = np.linspace(0, t_end, 31)
    p0 = initial_distribution(p)
    me = MasterEquation(p).run(p0, t_end, times)
    fp = FokkerPlanck(p).run(p0, t_end, times)
    assert fp.max_drift < 1e-12
    assert np.max(np.abs(fp.mean - me.mean)) < 2 * (2 / p.N)


def test_fokker_planck_step_stability():
    p = replace(FIG, N=200)
    fp = FokkerPlanck(p)
    p0 = np.array(initial_distribution(p).p)
    out = fokker_planck_step(p0, fp.stable_dt(), p)
    assert out.sum() == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(StabilityError):
        fokker_planck_step(p0, 100 * fp.stable_dt(), p)


def test_fokker_planck_converges_to_characteristics():
    # start with the thermal width 1/sqrt(N) away from the bottleneck; mean -> mu(t) as 1/N -> 0
    devs = []
    for n in (250, 500, 1000, 2000):
        p = replace(FIG, N=n, g=0.1)
        m = make_grid(n).values
        p0 = np.exp(-0.5 * ((m - 0.3) * math.sqrt(n)) ** 2)
        fp = FokkerPlanck(p).run(p0 / p0.sum(), 50.0)
        devs.append(abs(fp.mean[-1] - mean_field_trajectory(0.3, p, t_max=50.0).mu[-1]))
    assert all(a > b for a, b in zip(devs, devs[1:]))
    assert devs[-1] < devs[0] / 10


def test_cutoff_insensitivity():
    p = replace(FIG, N=300)
    t_end = 60 * FIG.tau_J
    times = np.linspace(0, t_end, 121)
    a = MasterEquation(p).run(initial_distribution(p), t_end, times)
    b = MasterEquation(replace(p, Gamma=1e6)).run(initial_distribution(p), t_end, times)
    level = 0.9 * spontaneous_magnetization(p.T, p.g)
    assert a.crossing_time(level) == pytest.approx(b.crossing_time(level), rel=0.01)


def test_finite_time_kernel_flag():
    p = replace(FIG, N=60)
    t_end = 400.0
    a = MasterEquation(p).run(initial_distribution(p), t_end)
    b = MasterEquation(p, finite_time=True).run(initial_distribution(p), t_end)
    assert b.max_drift < 1e-12
    assert abs(a.mean[-1] - b.mean[-1]) < 5e-3
