import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from arb.quantum import (
    PAULI,
    ContractViolationError,
    DimensionMismatchError,
    HilbertSpace,
    basis_index,
    basis_state,
    cdw_state,
    expm_hermitian,
    is_hermitian,
    is_unitary,
    site_operator,
    survival_probability,
    two_site_coupling,
    unitarity_error,
)

I2 = np.eye(2)


def kron_all(ops):
    out = np.ones((1, 1))
    for op in ops:
        out = np.kron(out, op)
    return out


def random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


# -- basis bookkeeping -------------------------------------------------------------
def test_hilbert_space_dim():
    for n in range(1, 8):
        assert HilbertSpace(n).dim == 2**n
    with pytest.raises(ValueError):
        HilbertSpace(0)


@pytest.mark.parametrize(
    "config, n, expected",
    [(["up"], 1, 0), (["down"], 1, 1), (["up", "down", "up", "down"], 4, 5)],
)
def test_basis_index_examples(config, n, expected):
    assert basis_index(config, n) == expected


def test_basis_index_wrong_length():
    with pytest.raises(DimensionMismatchError):
        basis_index(["up", "down"], 3)


def test_cdw_examples():
    assert np.array_equal(cdw_state(HilbertSpace(1)), basis_state(HilbertSpace(1), 0))
    assert np.argmax(np.abs(cdw_state(HilbertSpace(2)))) == 1
    psi = cdw_state(HilbertSpace(6))
    assert np.argmax(np.abs(psi)) == 21 and np.isclose(np.linalg.norm(psi), 1.0)


# -- operators ------------------------------------------------------------------------
def test_site_operator_single_site():
    sp = HilbertSpace(1)
    assert np.array_equal(site_operator("z", 0, sp), np.diag([1, -1]))
    assert np.array_equal(site_operator("+", 0, sp), np.array([[0, 1], [0, 0]]))
    # sigma+ raises down (index 1) to up (index 0)
    assert np.array_equal(site_operator("+", 0, sp) @ basis_state(sp, 1), basis_state(sp, 0))


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("axis", ["x", "y", "z", "+", "-"])
def test_site_operator_matches_kron(n, axis):
    sp = HilbertSpace(n)
    for site in range(n):
        ops = [I2] * n
        ops[site] = PAULI[axis]
        assert np.allclose(site_operator(axis, site, sp), kron_all(ops))


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("axis", ["x", "y", "z"])
def test_two_site_coupling_matches_kron(n, axis):
    sp = HilbertSpace(n)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            ops = [I2] * n
            ops[i] = PAULI[axis]
            ops[j] = PAULI[axis]
            op = two_site_coupling(axis, i, j, sp)
            assert np.allclose(op, kron_all(ops))
            assert is_hermitian(op)


def test_two_site_coupling_examples():
    sp = HilbertSpace(2)
    xx = two_site_coupling("x", 0, 1, sp)
    assert np.array_equal(xx, np.fliplr(np.eye(4)))
    assert np.array_equal(xx @ basis_state(sp, 0), basis_state(sp, 3))
    with pytest.raises(ValueError):
        two_site_coupling("x", 1, 1, sp)
    with pytest.raises(IndexError):
        site_operator("x", 2, sp)


# -- propagators ----------------------------------------------------------------------
def test_expm_examples():
    t = 0.37
    z = PAULI["z"]
    assert np.allclose(expm_hermitian(z, t), np.diag([np.exp(-1j * t), np.exp(1j * t)]))
    assert np.allclose(expm_hermitian(random_hermitian(np.random.default_rng(0), 8), 0.0), np.eye(8), atol=1e-12)
    assert np.allclose(expm_hermitian(PAULI["x"], np.pi / 2), -1j * PAULI["x"])


def test_expm_rejects_non_hermitian():
    with pytest.raises(ContractViolationError):
        expm_hermitian(np.array([[0, 1], [0, 0]], dtype=complex), 1.0)


@given(seed=st.integers(0, 2**32 - 1), t1=st.floats(-3, 3), t2=st.floats(-3, 3), n=st.integers(1, 4))
def test_expm_group_properties(seed, t1, t2, n):
    h = random_hermitian(np.random.default_rng(seed), 2**n)
    u1, u2 = expm_hermitian(h, t1), expm_hermitian(h, t2)
    assert unitarity_error(u1) < 1e-10
    assert np.max(np.abs(u1 @ expm_hermitian(h, -t1) - np.eye(2**n))) < 1e-10
    assert np.max(np.abs(expm_hermitian(h, t1 + t2) - u1 @ u2)) < 1e-10


# -- overlaps ----------------------------------------------------------------------------
def test_survival_examples():
    sp = HilbertSpace(1)
    e0, e1 = basis_state(sp, 0), basis_state(sp, 1)
    psi = (e0 + e1) / np.sqrt(2)
    assert survival_probability(psi, psi) == pytest.approx(1.0)
    assert survival_probability(e0, e1) == 0.0
    assert survival_probability(psi, e0) == pytest.approx(0.5)
    with pytest.raises(DimensionMismatchError):
        survival_probability(e0, np.ones(4) / 2)


@given(seed=st.integers(0, 2**32 - 1), phase=st.floats(0, 2 * np.pi))
def test_survival_phase_invariant(seed, phase):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=8) + 1j * rng.normal(size=8)
    b = rng.normal(size=8) + 1j * rng.normal(size=8)
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    p = survival_probability(a, b)
    assert 0.0 <= p <= 1.0
    assert survival_probability(np.exp(1j * phase) * a, b) == pytest.approx(p, abs=1e-12)
    assert survival_probability(a, np.exp(1j * phase) * b) == pytest.approx(p, abs=1e-12)


def test_is_unitary():
    assert is_unitary(PAULI["y"])
    assert not is_unitary(2 * PAULI["y"])
