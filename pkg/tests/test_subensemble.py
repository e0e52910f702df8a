from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cwmeas.subensemble import (KMatrix, SubensembleWeights, check_decomposition, final_state_matrix,
                                hierarchic_merge, matrix_violations, merge_random_tree, random_decomposition,
                                random_kmatrix, relax_subensemble, relaxed_endpoint, relaxed_weights)


def test_trivial_split():
    D = final_state_matrix(0.3, 4)
    assert check_decomposition(D, D, D, 0.37) == ()


def test_extremal_split():
    D = np.diag([0.5, 0.5])
    assert check_decomposition(D, np.diag([1.0, 0.0]), np.diag([0.0, 1.0]), 0.5) == ()


def test_coherent_subensemble_of_diagonal_state_rejected():
    # an up-down coherence in D_sub must be compensated by D_Csub, which then fails positivity
    rng = np.random.default_rng(0)
    G = 4
    D = final_state_matrix(0.5, G)
    for _ in range(20):
        v = rng.standard_normal(2 * G) + 1j * rng.standard_normal(2 * G)
        Ds = np.outer(v, v.conj())
        Ds /= np.trace(Ds).real
        Dc = (D.K - 0.5 * Ds) / 0.5
        bad = check_decomposition(D, Ds, Dc, 0.5)
        assert np.linalg.eigvalsh(Dc).min() < -1e-10
        assert "positivity:csub" in bad


def test_identity_violation_detected():
    D = final_state_matrix(0.3, 2)
    assert check_decomposition(D, D.K, np.eye(4) / 4, 0.5) == ("identity",)


def test_k_range():
    D = final_state_matrix(0.5, 2)
    with pytest.raises(ValueError):
        check_decomposition(D, D, D, 1.0)


def test_matrix_violations_names():
    assert matrix_violations(np.diag([0.5, 0.5])) == ()
    assert "trace" in matrix_violations(np.diag([0.5, 0.6]))
    assert "positivity" in matrix_violations(np.diag([1.5, -0.5]))
    assert "hermiticity" in matrix_violations(np.array([[0.5, 0.1], [0.2, 0.5]]))


def test_kmatrix_validation():
    with pytest.raises(ValueError):
        KMatrix(np.eye(3), 2)
    with pytest.raises(ValueError):
        KMatrix(np.eye(130), 65)


def test_relax_identity_at_zero():
    K = random_kmatrix(3, np.random.default_rng(1))
    assert relax_subensemble(K, 0.0) is K


def test_relax_endpoint():
    K = random_kmatrix(5, np.random.default_rng(2))
    R = relax_subensemble(K, 1.0)
    G = K.G
    np.testing.assert_array_equal(R.block(0, 1), 0)
    for i in (0, 1):
        b = R.block(i, i)
        np.testing.assert_array_equal(b, np.diag(np.diag(b)))
        assert np.ptp(np.diag(b).real) == 0
    np.testing.assert_allclose(R.q(), [np.trace(K.block(0, 0)).real, np.trace(K.block(1, 1)).real], atol=1e-12)
    assert R.q()[0] + R.q()[1] == pytest.approx(1.0, abs=1e-12)
    assert R.K.shape == (2 * G, 2 * G)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_relax_preserves_trace_and_positivity(G, s, seed):
    K = random_kmatrix(G, np.random.default_rng(seed), rank=1 + seed % (2 * G))
    R = relax_subensemble(K, s)
    assert R.trace() == pytest.approx(1.0, abs=1e-12)
    assert R.violations() == ()
    np.testing.assert_allclose(R.q(), K.q(), atol=1e-12)


def test_positivity_preserved_over_many_inputs():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        G = int(rng.integers(1, 7))
        K = random_kmatrix(G, rng, rank=int(rng.integers(1, 2 * G + 1)))
        R = relax_subensemble(K, float(rng.uniform()))
        worst = min(worst, np.linalg.eigvalsh(R.K).min())
    assert worst >= -1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_endpoint_idempotent(G, seed):
    R = relaxed_endpoint(random_kmatrix(G, np.random.default_rng(seed)))
    np.testing.assert_allclose(relax_subensemble(R, 1.0).K, R.K, atol=1e-15)


def test_interpolation_scales_coherences():
    K = random_kmatrix(3, np.random.default_rng(5))
    R = relax_subensemble(K, 0.25)
    np.testing.assert_allclose(R.block(0, 1), 0.75 * K.block(0, 1), atol=1e-15)


def test_random_decompositions_relax_to_born_form():
    rng = np.random.default_rng(6)
    D = final_state_matrix(0.35, 6)
    for _ in range(50):
        d = random_decomposition(D, rng)
        assert check_decomposition(d.D, d.sub, d.csub, d.k) == ()
        for part in (d.sub, d.csub):
            q = relaxed_endpoint(part).q()
            assert min(q) >= -1e-12
            assert sum(q) == pytest.approx(1.0, abs=1e-12)
        # the weighted sub-ensemble weights add back to the full-ensemble ones
        q_total = d.k * np.array(d.sub.q()) + (1 - d.k) * np.array(d.csub.q())
        np.testing.assert_allclose(q_total, [0.35, 0.65], atol=1e-12)


def test_merge_example():
    m = hierarchic_merge(SubensembleWeights(Fraction(1), 30), SubensembleWeights(Fraction(0), 70))
    assert m.q_up == Fraction(3, 10) and m.count == 100
    assert m.q_down == Fraction(7, 10)


def test_merge_empty():
    with pytest.raises(ValueError):
        hierarchic_merge(SubensembleWeights(0.5, 0), SubensembleWeights(0.5, 0))


fractions = st.builds(lambda a, b, n: SubensembleWeights(Fraction(a, max(a, b, 1)), n),
                      st.integers(0, 50), st.integers(1, 50), st.integers(1, 1000))


@given(fractions, fractions, fractions)
def test_merge_associative_commutative(a, b, c):
    assert hierarchic_merge(a, b) == hierarchic_merge(b, a)
    assert hierarchic_merge(hierarchic_merge(a, b), c) == hierarchic_merge(a, hierarchic_merge(b, c))


def test_born_consistency():
    p_up = Fraction(37, 100)
    sub = SubensembleWeights(Fraction(1, 2), 40)
    # complement chosen so the whole ensemble of 100 carries p_up
    comp = SubensembleWeights((p_up * 100 - sub.q_up * 40) / 60, 60)
    assert hierarchic_merge(sub, comp).q_up == p_up


@pytest.mark.parametrize("seed", range(5))
def test_random_tree_reproduces_root_frequency(seed):
    rng = np.random.default_rng(seed)
    outcomes = rng.random(10_000) < 0.42
    root = merge_random_tree([SubensembleWeights.single_run(bool(u)) for u in outcomes], rng)
    assert root.count == 10_000
    assert root.q_up == Fraction(int(outcomes.sum()), 10_000)


def test_weights_validation():
    with pytest.raises(ValueError):
        SubensembleWeights(1.5, 3)
    with pytest.raises(ValueError):
        SubensembleWeights(0.5, -1)
    with pytest.raises(ValueError):
        merge_random_tree([], np.random.default_rng(0))


def test_relaxed_weights():
    K = relaxed_endpoint(final_state_matrix(0.25, 3))
    w = relaxed_weights(K, 7)
    assert w.q_up == pytest.approx(0.25) and w.count == 7
