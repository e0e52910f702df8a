import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cwmeas.core import (MagDistribution, ModelParams, SpinMatrix, clip_round_off, make_grid, tau_J,
                         validate_spin)


@pytest.mark.parametrize("N, expected", [(2, [-1, 0, 1]), (4, [-1, -0.5, 0, 0.5, 1])])
def test_small_grids(N, expected):
    np.testing.assert_array_equal(make_grid(N).values, expected)


def test_grid_n1000():
    g = make_grid(1000)
    assert len(g) == 1001
    assert g.spacing == 0.002
    np.testing.assert_allclose(np.diff(g.values), 0.002, rtol=1e-12)


@given(st.integers(1, 5000))
def test_grid_antisymmetric(N):
    m = make_grid(N).values
    assert np.array_equal(m, -m[::-1])


def test_grid_index_rejects_off_grid():
    g = make_grid(4)
    assert g.index(0.5) == 3
    with pytest.raises(ValueError):
        g.index(0.3)


@pytest.mark.parametrize("bad", [dict(N=0), dict(N=-5), dict(N=2.5), dict(T=0), dict(g=-0.1), dict(gamma=-1),
                                 dict(J=2.0), dict(seed=-1), dict(dg=-0.01)])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        ModelParams(**bad)


def test_params_defaults():
    p = ModelParams()
    assert (p.N, p.T, p.g, p.gamma) == (1000, 0.2, 0.045, 0.05)
    assert p.tau_J == tau_J(0.05) == 20.0


def test_rng_reproducible():
    a = ModelParams(seed=7).rng().standard_normal(5)
    b = ModelParams(seed=7).rng().standard_normal(5)
    assert np.array_equal(a, b)


def test_distribution_round_off_clipped(caplog):
    g = make_grid(2)
    d = MagDistribution(g, [0.5, 0.5, -1e-14])
    assert d.p.min() == 0.0
    assert "clipping" in caplog.text


def test_distribution_rejects_negative():
    with pytest.raises(ValueError):
        MagDistribution(make_grid(2), [0.5, 0.6, -0.1])
    with pytest.raises(ValueError):
        clip_round_off(np.array([-1e-9, 1.0]))


def test_distribution_shape_checked():
    with pytest.raises(ValueError):
        MagDistribution(make_grid(2), [1.0, 0.0])


def test_density_round_trip():
    g = make_grid(10)
    d = MagDistribution(g, np.full(11, 1 / 11))
    d2 = MagDistribution.from_density(g, d.density())
    np.testing.assert_allclose(d2.p, d.p, rtol=1e-15)
    assert d.mean() == pytest.approx(0.0, abs=1e-15)


def test_spin_pure_up_ok():
    assert validate_spin(SpinMatrix(1, 0, 0, 0)) == ()


def test_spin_pure_x_ok():
    # all entries 1/2 saturates positivity
    assert validate_spin(SpinMatrix(0.5, 0.5, 0.5, 0.5)) == ()


def test_spin_positivity_violation():
    assert "positivity" in validate_spin(SpinMatrix(0.5, 0.9, 0.9, 0.5))


def test_spin_trace_and_hermiticity():
    assert "trace" in validate_spin(SpinMatrix(0.7, 0, 0, 0.7))
    assert "hermiticity" in validate_spin(SpinMatrix(0.5, 0.1j, 0.1j, 0.5))


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_bloch_round_trip(sx, sy, sz):
    r = SpinMatrix.from_bloch(sx, sy, sz)
    np.testing.assert_allclose(r.bloch(), (sx, sy, sz), atol=1e-15)
    inside = sx * sx + sy * sy + sz * sz <= 1 - 1e-9
    if inside:
        assert validate_spin(r) == ()
    elif sx * sx + sy * sy + sz * sz > 1 + 1e-9:
        assert "positivity" in validate_spin(r)


def test_tau_j_inverse_gamma():
    assert tau_J(0.001) == pytest.approx(1000.0)
    assert math.isinf(tau_J(0.0))
