import json
import math

import numpy as np
import pytest

from bqpe.consts import DEFAULT_T, DEFAULT_T_SPLIT
from bqpe.hamiltonian import HamiltonianModel, load_dataset, pauli_exponential, pauli_matrix
from bqpe.models import SpinHamiltonian, TrotterConfig

# two-level block of H in span{|00>, |11>}
DIAG_00 = -0.3980 - 0.3980 + 0.0112 - 0.3322
DIAG_11 = 0.3980 + 0.3980 + 0.0112 - 0.3322
OFF_DIAG = 0.1809


@pytest.fixture
def h2() -> SpinHamiltonian:
    hamiltonian, _ = load_dataset()
    return hamiltonian


class TestPauli:
    """Test Pauli helpers."""

    def test_tensor_order(self):
        """Test that the first character acts on the leftmost factor."""
        zi = pauli_matrix("ZI")
        assert np.allclose(np.diag(zi), [1, 1, -1, -1])

    def test_exponential_is_unitary(self):
        """Test exp(-i a P) is unitary."""
        U = pauli_exponential("YX", 0.37)
        assert np.allclose(U.conj().T @ U, np.eye(4))


class TestDataset:
    """Test the Hamiltonian dataset loader."""

    def test_bundled(self, h2):
        """Test the bundled coefficients."""
        assert h2.h == (-0.3980, -0.3980, -0.1809, 0.0112, -0.3322)
        assert h2.r_hh_angstrom == pytest.approx(0.73486)

    def test_custom_file(self, tmp_path):
        """Test loading coefficients from a file."""
        path = tmp_path / "h.json"
        path.write_text(json.dumps({"h": [1, 2, 3, 4, 5], "t": 0.2, "s": 3}))
        h, cfg = load_dataset(path)
        assert h.h == (1.0, 2.0, 3.0, 4.0, 5.0)
        assert cfg.t == 0.2
        assert cfg.s == 3

    def test_missing_coefficients(self, tmp_path):
        """Test that files without coefficients are rejected."""
        path = tmp_path / "h.json"
        path.write_text(json.dumps({"t": 0.2}))
        with pytest.raises(ValueError, match="no 'h' field"):
            load_dataset(path)


class TestExactSpectrum:
    """Test exact diagonalization against the two-level closed form."""

    def test_ground_energy(self, h2):
        """Test E0 = mean - sqrt(half_gap^2 + off^2)."""
        mean, half_gap = (DIAG_00 + DIAG_11) / 2, (DIAG_11 - DIAG_00) / 2
        expected = mean - math.sqrt(half_gap**2 + OFF_DIAG**2)
        ground = HamiltonianModel.exact_ground(h2)
        assert ground.ground_energy == pytest.approx(expected, abs=1e-12)
        assert ground.ground_energy == pytest.approx(-1.1375, abs=5e-4)

    def test_energies_ascending(self, h2):
        """Test that energies come sorted."""
        energies = HamiltonianModel.exact_ground(h2).energies
        assert np.all(np.diff(energies) >= 0)

    def test_ground_vector_even_parity(self, h2):
        """Test that the ground state lives in span{|00>, |11>}."""
        vec = HamiltonianModel.exact_ground(h2).ground_vector
        assert np.linalg.norm(vec) == pytest.approx(1.0)
        assert abs(vec[1]) < 1e-12 and abs(vec[2]) < 1e-12

    def test_hartree_fock_fidelity(self, h2):
        """Test |<00|g>|^2 = cos^2(theta) with tan(2 theta) = 2 off / (DIAG_11 - DIAG_00)."""
        theta = 0.5 * math.atan2(2 * OFF_DIAG, DIAG_11 - DIAG_00)
        vec = HamiltonianModel.exact_ground(h2).ground_vector
        assert abs(vec[0]) ** 2 == pytest.approx(math.cos(theta) ** 2, abs=1e-12)
        assert abs(vec[0]) ** 2 == pytest.approx(0.98757, abs=1e-4)

    def test_hartree_fock_energy(self, h2):
        """Test <00|H|00>."""
        assert HamiltonianModel.hartree_fock_energy(h2) == pytest.approx(DIAG_00)


class TestTrotterization:
    """Test Trotter operators and phases."""

    @pytest.mark.parametrize("t, s, k", [(DEFAULT_T, 1, 1), (0.7, 3, 5), (-0.2, 2, 4)])
    def test_unitary(self, h2, t, s, k):
        """Test U^dagger U = I."""
        U = HamiltonianModel.trotter_unitary(h2, TrotterConfig(t, s, k))
        assert np.allclose(U.conj().T @ U, np.eye(4), atol=1e-12)

    def test_split_unitary(self, h2):
        """Test unitarity with alternating step times."""
        U = HamiltonianModel.trotter_unitary(h2, TrotterConfig(DEFAULT_T, 1, 6), DEFAULT_T_SPLIT)
        assert np.allclose(U.conj().T @ U, np.eye(4), atol=1e-12)

    def test_repetitions_compose(self, h2):
        """Test that k repetitions equal the k-th power of one repetition."""
        one = HamiltonianModel.trotter_unitary(h2, TrotterConfig(DEFAULT_T, 2, 1))
        four = HamiltonianModel.trotter_unitary(h2, TrotterConfig(DEFAULT_T, 2, 4))
        assert np.allclose(np.linalg.matrix_power(one, 4), four, atol=1e-12)

    def test_converges_to_exact(self, h2):
        """Test that many steps approach exact evolution."""
        U = HamiltonianModel.trotter_unitary(h2, TrotterConfig(DEFAULT_T, 400, 1))
        assert np.abs(U - HamiltonianModel.exact_unitary(h2, DEFAULT_T)).max() < 1e-3

    @pytest.mark.parametrize("k", [1, 4])
    def test_first_order_error(self, h2, k):
        """Test that ||U_trot - U_exact|| s / (k t^2) stays within 20% of its mean over s."""
        steps = np.array([1, 2, 4, 8, 16])
        exact = HamiltonianModel.exact_unitary(h2, k * DEFAULT_T)
        errors = np.array(
            [
                np.linalg.norm(HamiltonianModel.trotter_unitary(h2, TrotterConfig(DEFAULT_T, int(s), k)) - exact, 2)
                for s in steps
            ]
        )
        constants = errors * steps / (k * DEFAULT_T**2)
        assert np.all(np.abs(constants / constants.mean() - 1) < 0.2)

    def test_step_times(self):
        """Test alternating split times with an unpaired tail."""
        times = HamiltonianModel.step_times(0.3, 3, (-0.15, 0.75))
        np.testing.assert_allclose(times, [-0.15, 0.75, 0.3])

    def test_eigenphase_is_eigenvalue(self, h2):
        """Test U v = exp(i phi) v for the selected eigenpair."""
        cfg = TrotterConfig(DEFAULT_T, 1)
        phi, vec = HamiltonianModel.trotter_eigenphase(h2, cfg)
        U = HamiltonianModel.trotter_unitary(h2, cfg)
        assert np.allclose(U @ vec, np.exp(1j * phi) * vec, atol=1e-12)
        assert 0.0 <= phi < 2 * math.pi

    def test_trotter_energy_shift(self, h2):
        """Test that the s=1 Trotter energy sits within a millihartree of E0."""
        phi, _ = HamiltonianModel.trotter_eigenphase(h2, TrotterConfig(DEFAULT_T, 1))
        energy = HamiltonianModel.energy_from_phase(phi, DEFAULT_T, HamiltonianModel.hartree_fock_energy(h2))
        shift = energy - HamiltonianModel.exact_ground(h2).ground_energy
        assert 1e-5 < abs(shift) < 1e-3

    def test_split_phase_near_unsplit(self, h2):
        """Test that the split schedule keeps the phase branch of the plain schedule."""
        cfg = TrotterConfig(DEFAULT_T, 1)
        plain, _ = HamiltonianModel.trotter_eigenphase(h2, cfg)
        split, _ = HamiltonianModel.trotter_eigenphase(h2, cfg, DEFAULT_T_SPLIT)
        assert abs(np.angle(np.exp(1j * (split - plain)))) < 0.05


class TestEnergyFromPhase:
    """Test phase-to-energy conversion."""

    def test_exact_evolution_phase(self, h2):
        """Test that the exact ground phase recovers E0."""
        e0 = HamiltonianModel.exact_ground(h2).ground_energy
        phi = (-e0 * DEFAULT_T) % (2 * math.pi)
        assert HamiltonianModel.energy_from_phase(phi, DEFAULT_T, -1.1) == pytest.approx(e0)

    def test_branch_selection(self):
        """Test that the representative nearest the branch center is returned."""
        t = 1.0
        assert HamiltonianModel.energy_from_phase(0.5, t, -0.4) == pytest.approx(-0.5)
        assert HamiltonianModel.energy_from_phase(0.5, t, -0.5 + 2 * math.pi) == pytest.approx(-0.5 + 2 * math.pi)


class TestPreparation:
    """Test exact-state preparation angles."""

    def test_reconstructs_state(self, h2):
        """Test Rz_1(chi) exp(-i theta Y1X2/2)|00> equals the target up to phase."""
        _, vec = HamiltonianModel.trotter_eigenphase(h2, TrotterConfig(DEFAULT_T, 1))
        theta, chi = HamiltonianModel.preparation_angles(vec)
        zero = np.array([1, 0, 0, 0], dtype=complex)
        prepared = pauli_exponential("ZI", chi / 2) @ pauli_exponential("YX", theta / 2) @ zero
        assert abs(np.vdot(vec, prepared)) == pytest.approx(1.0, abs=1e-12)

    def test_odd_parity_rejected(self):
        """Test that states outside the even-parity span are rejected."""
        with pytest.raises(ValueError, match="span"):
            HamiltonianModel.preparation_angles(np.array([0, 1, 0, 0], dtype=complex))

    def test_leakage_bound(self):
        """Test (1 - c0^2)/c0^2."""
        assert HamiltonianModel.leakage_bias_bound(0.8) == pytest.approx(0.25)
        with pytest.raises(ValueError, match="Overlap"):
            HamiltonianModel.leakage_bias_bound(0.0)
