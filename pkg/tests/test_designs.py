import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arb.designs import (
    DesignPolicyError,
    clifford_group_1q,
    completely_depolarizing,
    depolarizing_deviation,
    depolarizing_parameter,
    depolarizing_superop,
    frame_potential_exact,
    frame_potential_mc,
    frame_potential_sweep,
    haar_moment_operator,
    haar_unitary,
    identity_channel,
    is_trace_preserving,
    moment_operator,
    moment_operator_distance,
    pauli_group_1q,
    random_channel,
    random_products,
    twirl_channel,
)
from arb.hamiltonians import DisorderSpec, XYModelSpec, generate_ensemble


@pytest.fixture(scope="module")
def cliffords():
    return clifford_group_1q()


def test_clifford_group_is_closed(cliffords):
    assert len(cliffords) == 24
    for u in cliffords:
        assert np.allclose(u.conj().T @ u, np.eye(2), atol=1e-12)
    prods = np.einsum("aij,bjk->abik", cliffords, cliffords).reshape(-1, 2, 2)
    # every product equals some element up to a phase
    ov = np.abs(np.einsum("pij,cij->pc", prods.conj(), cliffords))
    assert np.allclose(ov.max(axis=1), 2.0, atol=1e-9)


def test_frame_potential_examples(cliffords):
    assert frame_potential_exact([np.eye(2)]) == pytest.approx(16.0)
    assert frame_potential_exact(pauli_group_1q()) == pytest.approx(4.0)
    assert abs(frame_potential_exact(cliffords) - 2.0) < 1e-9


@given(seed=st.integers(0, 2**31))
@settings(max_examples=15)
def test_frame_potential_left_invariance(seed):
    rng = np.random.default_rng(seed)
    u = haar_unitary(3, rng, size=6)
    v = haar_unitary(3, rng)
    assert frame_potential_exact(v @ u) == pytest.approx(frame_potential_exact(u), rel=1e-10)


def test_frame_potential_mc_single_element():
    ens = generate_ensemble(XYModelSpec(6), DisorderSpec("global"), 1, 0.005, 0)
    est = frame_potential_mc(ens, 3, 10, np.random.default_rng(0))
    assert est.estimate == pytest.approx(64.0**4, rel=1e-9)
    assert est.stderr == pytest.approx(0.0, abs=1e-3)


def test_frame_potential_mc_haar_oracle():
    rng = np.random.default_rng(11)
    haar = haar_unitary(4, rng, size=20_000)
    est = frame_potential_mc(haar, 1, 20_000, rng)
    assert abs(est.estimate - 2.0) < 4 * est.stderr
    assert est.estimate > 0 and est.haar_reference == 2.0


def test_frame_potential_mc_rejects_bad_input(cliffords):
    with pytest.raises(ValueError):
        frame_potential_mc(cliffords, 1, 1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        frame_potential_mc(cliffords, 0, 5, np.random.default_rng(0))


def test_frame_potential_sweep_on_clifford_products(cliffords):
    rows = frame_potential_sweep(cliffords, [1, 2, 4], 4000, np.random.default_rng(2))
    assert [r.L for r in rows] == [1, 2, 4]
    for r in rows:
        assert abs(r.estimate - 2.0) < 4 * r.stderr


def test_random_products_order():
    rng = np.random.default_rng(0)
    u = haar_unitary(2, rng, size=3)
    idx_rng = np.random.default_rng(5)
    idx = np.random.default_rng(5).integers(0, 3, size=(1, 2))
    p = random_products(u, 2, 1, idx_rng)
    assert np.allclose(p[0], u[idx[0, 1]] @ u[idx[0, 0]])


def test_moment_distance_examples(cliffords):
    assert moment_operator_distance(cliffords) < 1e-10
    assert moment_operator_distance([np.eye(2)]) > 0.1
    assert moment_operator_distance(pauli_group_1q()) > 0.1


@pytest.mark.parametrize("d", [2, 3])
def test_weingarten_matches_sampled_haar(d):
    exact = haar_moment_operator(d)
    sampled = haar_moment_operator(d, method="sampled", n_samples=100_000, rng=np.random.default_rng(d))
    assert np.max(np.abs(exact - sampled)) < 0.01


def test_haar_moment_is_projector_like():
    g = haar_moment_operator(2)
    assert np.allclose(g @ g, g, atol=1e-12)
    assert np.trace(g).real == pytest.approx(2.0)


def test_design_policy_errors():
    with pytest.raises(DesignPolicyError):
        moment_operator(np.eye(8)[None])
    with pytest.raises(DesignPolicyError):
        haar_moment_operator(5)
    with pytest.raises(DesignPolicyError):
        random_channel(16, np.random.default_rng(0))
    with pytest.raises(DesignPolicyError):
        twirl_channel(identity_channel(16), [np.eye(16)])


def test_twirl_examples(cliffords):
    rng = np.random.default_rng(0)
    lam = random_channel(2, rng)
    assert np.allclose(twirl_channel(lam, [np.eye(2)]), lam, atol=1e-14)
    assert np.allclose(twirl_channel(identity_channel(2), cliffords), identity_channel(2), atol=1e-12)
    tw = twirl_channel(lam, cliffords)
    p = (np.trace(lam).real - 1) / 3
    assert np.allclose(tw, depolarizing_superop(p, 2), atol=1e-12)


def test_depolarizing_deviation_examples():
    p, res = depolarizing_deviation(depolarizing_superop(0.7, 2))
    assert p == pytest.approx(0.7, abs=1e-12) and res < 1e-12
    p, res = depolarizing_deviation(identity_channel(3))
    assert p == pytest.approx(1.0, abs=1e-12) and res < 1e-12
    assert depolarizing_parameter(completely_depolarizing(2)) == pytest.approx(0.0, abs=1e-12)


@given(seed=st.integers(0, 2**31), n_kraus=st.integers(1, 4))
@settings(max_examples=20)
def test_twirl_preserves_trace_and_depolarizes(cliffords, seed, n_kraus):
    lam = random_channel(2, np.random.default_rng(seed), n_kraus)
    assert is_trace_preserving(lam)
    tw = twirl_channel(lam, cliffords)
    assert is_trace_preserving(tw)
    p, res = depolarizing_deviation(tw)
    assert res < 1e-9
    assert abs(p - (np.trace(lam).real - 1) / 3) < 1e-9


def test_moment_distance_decreases_with_products():
    ens = generate_ensemble(XYModelSpec(2), DisorderSpec("local"), 200, 0.5, 4)
    u = ens.unitaries
    pairs = np.einsum("aij,bjk->abik", u, u).reshape(-1, 4, 4)
    assert moment_operator_distance(pairs) <= moment_operator_distance(u) + 1e-12
