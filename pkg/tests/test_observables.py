import numpy as np
import pytest

from iontangle import model, observables, qop
from iontangle.observables import (
    bell_state,
    chsh_correlation,
    chsh_operator,
    embedded_pauli,
    population,
    population_operator,
    qubit_projector,
)
from iontangle.qop import DensityMatrix, HilbertSpace, InputError

TSIRELSON = 2 * np.sqrt(2)


class TestQubitEmbedding:
    def test_paulis_hermitian(self):
        for axis in "xyz":
            m = embedded_pauli(axis)
            np.testing.assert_allclose(m, m.conj().T)

    def test_paulis_square_to_qubit_projector(self):
        proj = qubit_projector()
        for axis in "xy":
            m = embedded_pauli(axis)
            np.testing.assert_allclose(m @ m, proj, atol=1e-15)

    def test_zero_extension_on_metastable_level(self):
        for axis in "xy":
            m = embedded_pauli(axis)
            assert np.max(np.abs(m[model.R, :])) == 0
            assert np.max(np.abs(m[:, model.R])) == 0


class TestBellStates:
    def test_normalization(self):
        s = bell_state("S")
        assert np.linalg.norm(s) == pytest.approx(1.0)

    def test_orthogonality(self):
        assert abs(bell_state("S").conj() @ bell_state("T")) < 1e-15

    def test_swap_antisymmetry(self):
        s = bell_state("S")
        space = model.internal_space()
        d = 3
        swapped = s.reshape(d, d).T.reshape(-1)
        np.testing.assert_allclose(swapped, -s, atol=1e-15)
        t = bell_state("T")
        np.testing.assert_allclose(t.reshape(d, d).T.reshape(-1), t, atol=1e-15)

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            bell_state("X")


class TestPopulation:
    def test_product_with_phonons(self):
        space = model.full_space(2)
        s = bell_state("S")
        rho_int = np.outer(s, s.conj())
        ph = np.diag([0.25, 0.75]).astype(complex)
        rho = np.kron(np.kron(rho_int, ph), ph)
        dm = DensityMatrix(space, rho)
        assert population(dm, "S") == pytest.approx(1.0, abs=1e-12)
        assert population(dm, "T") == pytest.approx(0.0, abs=1e-12)

    def test_fully_mixed_quarters(self):
        space = model.internal_space()
        rho = DensityMatrix(space, model.mixed_qubit_state(space))
        for label in ("S", "T", "ee", "gg"):
            assert population(rho, label) == pytest.approx(0.25, abs=1e-12)

    def test_unnormalized_vector_rejected(self):
        space = model.internal_space()
        rho = DensityMatrix(space, model.mixed_qubit_state(space))
        with pytest.raises(InputError):
            population(rho, np.ones(9))

    def test_population_closure(self, rng):
        # S, T, ee, gg plus all r-involving basis projectors resolve unity
        from conftest import random_density

        space = model.internal_space()
        rho = DensityMatrix(space, random_density(rng, 9))
        labels = ["S", "T", "ee", "gg", "gr", "rg", "er", "re", "rr"]
        total = sum(population(rho, lbl) for lbl in labels)
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_population_operator_expectation_matches(self, rng):
        from conftest import random_density

        space = model.full_space(2)
        rho = DensityMatrix(space, random_density(rng, 36))
        for label in ("S", "T", "ee", "gg"):
            op = population_operator(space, label)
            via_op = float(np.real(np.trace(op.data @ rho.data)))
            assert via_op == pytest.approx(population(rho, label), abs=1e-12)


class TestChsh:
    def test_operator_hermitian_and_spectrum(self):
        o = chsh_operator()
        np.testing.assert_allclose(o.data, o.data.conj().T, atol=1e-14)
        evals = np.linalg.eigvalsh(o.data)
        assert evals.min() >= -TSIRELSON - 1e-12
        assert evals.max() <= TSIRELSON + 1e-12

    def test_singlet_reaches_tsirelson(self):
        s = bell_state("S")
        o = chsh_operator()
        assert np.real(s.conj() @ o.data @ s) == pytest.approx(TSIRELSON, abs=1e-12)

    def test_gg_expectation_zero(self):
        space = model.internal_space()
        gg = qop.basis_ket(space, {"ion1": model.G, "ion2": model.G})
        o = chsh_operator()
        assert abs(gg.conj() @ o.data @ gg) < 1e-14

    def test_correlation_on_states(self):
        space = model.internal_space()
        s = bell_state("S")
        rho_s = DensityMatrix(space, np.outer(s, s.conj()))
        assert chsh_correlation(rho_s) == pytest.approx(TSIRELSON, abs=1e-12)
        rho_mixed = DensityMatrix(space, model.mixed_qubit_state(space))
        assert chsh_correlation(rho_mixed) == pytest.approx(0.0, abs=1e-12)

    def test_invariant_under_phonon_factors(self):
        s = bell_state("S")
        rho_int = np.outer(s, s.conj())
        space = model.full_space(3)
        ph = np.diag([0.5, 0.3, 0.2]).astype(complex)
        rho = DensityMatrix(space, np.kron(np.kron(rho_int, ph), ph))
        assert chsh_correlation(rho) == pytest.approx(TSIRELSON, abs=1e-12)

    def test_separable_mixtures_respect_classical_bound(self, rng):
        # classical mixtures of product qubit states stay within |S| <= 2
        space = model.internal_space()
        for _ in range(25):
            weights = rng.dirichlet(np.ones(4))
            rho = np.zeros((9, 9), dtype=complex)
            for w in weights:
                kets = []
                for _ in range(2):
                    amp = rng.standard_normal(2) + 1j * rng.standard_normal(2)
                    amp /= np.linalg.norm(amp)
                    v = np.zeros(3, dtype=complex)
                    v[model.G], v[model.E] = amp
                    kets.append(v)
                prod = np.kron(kets[0], kets[1])
                rho += w * np.outer(prod, prod.conj())
            rho /= rho.trace()
            s_val = chsh_correlation(DensityMatrix(space, rho))
            assert abs(s_val) <= 2 + 1e-10
