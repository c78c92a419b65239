import numpy as np
import pytest

from iontangle import qop
from iontangle.qop import (
    DensityMatrix,
    HilbertSpace,
    InputError,
    Operator,
    dissipator_super,
    hamiltonian_super,
    kron,
    partial_trace,
    vec,
)

from conftest import random_density, random_hermitian


def space1(d, label="q"):
    return HilbertSpace(((label, d),))


def test_hilbert_space_invariants():
    sp = HilbertSpace((("a", 2), ("b", 3)))
    assert sp.total_dim == 6
    assert sp.labels == ("a", "b")
    with pytest.raises(InputError):
        HilbertSpace((("a", 2), ("a", 3)))
    with pytest.raises(InputError):
        HilbertSpace((("a", 0),))


def test_kron_identity():
    i2 = qop.identity(space1(2, "a"))
    i3 = qop.identity(space1(3, "b"))
    out = kron(i2, i3)
    assert out.space.total_dim == 6
    np.testing.assert_allclose(out.data, np.eye(6))


def test_kron_index_formula():
    sx = Operator(space1(2, "a"), np.array([[0, 1], [1, 0]], dtype=complex))
    p0 = np.zeros((2, 2), dtype=complex)
    p0[0, 0] = 1.0
    proj = Operator(space1(2, "b"), p0)
    out = kron(sx, proj)
    # entry ((0,1),(1,1)): row = 0*2+1, col = 1*2+1
    assert out.data[0 * 2 + 1, 1 * 2 + 1] == sx.data[0, 1] * p0[1, 1]


def test_kron_mixed_product(rng):
    a, b, c, d = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
                  for _ in range(4))
    sa, sb = space1(2, "a"), space1(2, "b")
    lhs = kron(Operator(sa, a), Operator(sb, b)) @ kron(Operator(sa, c), Operator(sb, d))
    rhs = kron(Operator(sa, a @ c), Operator(sb, b @ d))
    np.testing.assert_allclose(lhs.data, rhs.data, atol=1e-12)


def test_kron_associativity(rng):
    spaces = [space1(2, "a"), space1(3, "b"), space1(2, "c")]
    ops = [Operator(s, rng.standard_normal((s.total_dim,) * 2)
                    + 1j * rng.standard_normal((s.total_dim,) * 2)) for s in spaces]
    left = kron(kron(ops[0], ops[1]), ops[2])
    right = kron(ops[0], kron(ops[1], ops[2]))
    np.testing.assert_allclose(left.data, right.data, atol=1e-12)


def test_partial_trace_product_state(rng):
    sp = HilbertSpace((("a", 2), ("b", 3)))
    rho_a = random_density(rng, 2)
    rho_b = random_density(rng, 3)
    joint = DensityMatrix(sp, np.kron(rho_a, rho_b))
    reduced = partial_trace(joint, {"a"})
    np.testing.assert_allclose(reduced.data, rho_a, atol=1e-12)
    assert reduced.space.labels == ("a",)
    np.testing.assert_allclose(reduced.data.trace(), joint.data.trace(), atol=1e-12)


def test_partial_trace_entangled_ion_phonon():
    # (|e,0> + |r,1>)/sqrt(2) on a 3-level ion x 2-level mode
    sp = HilbertSpace((("ion", 3), ("mode", 2)))
    psi = np.zeros(6, dtype=complex)
    psi[qop.basis_ket(sp, {"ion": 1, "mode": 0}).argmax()] = 1 / np.sqrt(2)
    psi[qop.basis_ket(sp, {"ion": 2, "mode": 1}).argmax()] = 1 / np.sqrt(2)
    rho = DensityMatrix(sp, np.outer(psi, psi.conj()))
    reduced = partial_trace(rho, {"ion"})
    expected = np.diag([0.0, 0.5, 0.5]).astype(complex)
    np.testing.assert_allclose(reduced.data, expected, atol=1e-12)


def test_partial_trace_unknown_label():
    sp = HilbertSpace((("a", 2), ("b", 2)))
    rho = DensityMatrix(sp, np.eye(4) / 4)
    with pytest.raises(InputError):
        partial_trace(rho, {"c"})
    with pytest.raises(InputError):
        partial_trace(rho, set())


def test_dissipator_zero_operator():
    c = Operator(space1(3), np.zeros((3, 3)))
    lind = dissipator_super(c, 1.0)
    assert lind.data.nnz == 0


def test_dissipator_direct_rhs_oracle(rng):
    sp = space1(4)
    c = Operator(sp, rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    rate = 0.37
    lind = dissipator_super(c, rate)
    for _ in range(5):
        rho = random_density(rng, 4)
        got = lind.apply(rho)
        cd = c.data
        want = rate * (cd @ rho @ cd.conj().T
                       - 0.5 * (cd.conj().T @ cd @ rho + rho @ cd.conj().T @ cd))
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_dissipator_trace_preserving(rng):
    sp = space1(3)
    c = Operator(sp, rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    assert dissipator_super(c, 2.0).trace_defect() < 1e-10


def test_dissipator_negative_rate():
    c = Operator(space1(2), np.array([[0, 1], [0, 0]]))
    with pytest.raises(InputError):
        dissipator_super(c, -1.0)


def test_hamiltonian_super_identity_is_zero():
    h = qop.identity(space1(3))
    gen = hamiltonian_super(h)
    assert np.abs(gen.data.toarray()).max() < 1e-14


def test_hamiltonian_super_commutator_oracle(rng):
    sp = space1(4)
    h = Operator(sp, random_hermitian(rng, 4))
    gen = hamiltonian_super(h)
    rho = random_density(rng, 4)
    got = gen.data @ vec(rho)
    want = vec(1j * (rho @ h.data - h.data @ rho))
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_hamiltonian_super_spectrum_imaginary(rng):
    h = Operator(space1(3), random_hermitian(rng, 3))
    evals = np.linalg.eigvals(hamiltonian_super(h).data.toarray())
    assert np.max(np.abs(evals.real)) < 1e-10


def test_hamiltonian_super_rejects_non_hermitian(rng):
    h = Operator(space1(3), rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    with pytest.raises(InputError):
        hamiltonian_super(h)


def test_assembled_generator_properties(rng):
    sp = space1(4)
    h = Operator(sp, random_hermitian(rng, 4))
    c1 = Operator(sp, rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    c2 = Operator(sp, rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    gen = hamiltonian_super(h) + dissipator_super(c1, 0.5) + dissipator_super(c2, 1.3)
    assert gen.trace_defect() < 1e-10
    # one application preserves Hermiticity to rounding
    rho = random_density(rng, 4)
    out = gen.apply(rho)
    assert np.max(np.abs(out - out.conj().T)) < 1e-10


def test_density_matrix_validation():
    sp = space1(2)
    with pytest.raises(InputError):
        DensityMatrix(sp, np.array([[0.5, 0.5], [0.4, 0.5]]))  # not Hermitian
    with pytest.raises(InputError):
        DensityMatrix(sp, np.diag([0.7, 0.7]))  # trace 1.4
    with pytest.raises(InputError):
        DensityMatrix(sp, np.diag([1.5, -0.5]))  # negative eigenvalue
    DensityMatrix(sp, np.diag([0.5, 0.5]))


def test_operators_are_immutable():
    op = qop.identity(space1(2))
    with pytest.raises(ValueError):
        op.data[0, 0] = 2.0
