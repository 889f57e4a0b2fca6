import json
import logging
import math
from importlib.resources import files
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from bqpe.consts import DEFAULT_S, DEFAULT_T, H2_DATASET
from bqpe.models import EigenSolution, SpinHamiltonian, TrotterConfig

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

I2 = np.eye(2, dtype=complex)
PAULI = {
    "I": I2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
OVERLAP_TIE_TOLERANCE = 1e-9


def pauli_matrix(label: str) -> np.ndarray:
    """Dense matrix of a Pauli string, first character on the leftmost tensor factor."""
    out = np.ones((1, 1), dtype=complex)
    for char in label:
        out = np.kron(out, PAULI[char])
    return out


def pauli_exponential(label: str, angle: float) -> np.ndarray:
    """exp(-i angle P) = cos(angle) I - i sin(angle) P."""
    P = pauli_matrix(label)
    return math.cos(angle) * np.eye(P.shape[0]) - 1j * math.sin(angle) * P


def load_dataset(path: Optional[Union[str, Path]] = None) -> Tuple[SpinHamiltonian, TrotterConfig]:
    """Read {"h": [...], "t": ..., "s": ...}; the bundled H2 coefficients when no path is given."""
    if path is None:
        text = (files("bqpe") / "data" / H2_DATASET).read_text()
        source = f"bundled {H2_DATASET}"
    else:
        text = Path(path).read_text()
        source = str(path)
    data = json.loads(text)
    if "h" not in data:
        raise ValueError(f"Hamiltonian dataset {source} has no 'h' field")
    hamiltonian = SpinHamiltonian(
        tuple(data["h"]),
        name=data.get("name", "H2"),
        r_hh_angstrom=data.get("r_hh_angstrom"),
    )
    trotter = TrotterConfig(t=float(data.get("t", DEFAULT_T)), s=int(data.get("s", DEFAULT_S)))
    logger.info(f"Loaded Hamiltonian {hamiltonian.name} from {source}: h={hamiltonian.h}")
    return hamiltonian, trotter


class HamiltonianModel:
    """Two-qubit spin Hamiltonian h1 Z1 + h2 Z2 + h3 Y1Y2 + h4 Z1Z2 + h5 I and its Trotterization."""

    TERMS = ("ZI", "IZ", "YY", "ZZ", "II")

    @staticmethod
    def hamiltonian_matrix(h: SpinHamiltonian) -> np.ndarray:
        return sum(coeff * pauli_matrix(term) for coeff, term in zip(h.h, HamiltonianModel.TERMS))

    @staticmethod
    def exact_ground(h: SpinHamiltonian) -> EigenSolution:
        energies, vectors = np.linalg.eigh(HamiltonianModel.hamiltonian_matrix(h))
        ground = vectors[:, 0]
        # fix the global phase so the largest amplitude is real and positive
        pivot = ground[np.argmax(np.abs(ground))]
        return EigenSolution(energies, ground * (abs(pivot) / pivot))

    @staticmethod
    def hartree_fock_energy(h: SpinHamiltonian) -> float:
        """<00|H|00>."""
        return float(HamiltonianModel.hamiltonian_matrix(h)[0, 0].real)

    @staticmethod
    def step_times(t: float, steps: int, t_split: Optional[Tuple[float, float]] = None) -> np.ndarray:
        """Per-step evolution times: constant t, or alternating (t1, t2) with an unpaired tail at t."""
        times = np.full(steps, float(t))
        if t_split is not None:
            paired = steps - steps % 2
            times[0:paired:2] = t_split[0]
            times[1:paired:2] = t_split[1]
        return times

    @staticmethod
    def trotter_step(h: SpinHamiltonian, tau: float) -> np.ndarray:
        """exp(-i h1 tau Z1) exp(-i h2 tau Z2) exp(-i h3 tau Y1Y2)."""
        h1, h2, h3 = h.h[:3]
        return (
            pauli_exponential("ZI", h1 * tau)
            @ pauli_exponential("IZ", h2 * tau)
            @ pauli_exponential("YY", h3 * tau)
        )

    @staticmethod
    def trotter_unitary(
        h: SpinHamiltonian, cfg: TrotterConfig, t_split: Optional[Tuple[float, float]] = None
    ) -> np.ndarray:
        """(A B C)^{ks} exp(-i h4 k t Z1Z2) exp(-i h5 k t) with steps of t/s."""
        steps = cfg.k * cfg.s
        U = np.eye(4, dtype=complex)
        for time in HamiltonianModel.step_times(cfg.t, steps, t_split) / cfg.s:
            U = HamiltonianModel.trotter_step(h, time) @ U
        diagonal = pauli_exponential("ZZ", h.h[3] * cfg.k * cfg.t) * np.exp(-1j * h.h[4] * cfg.k * cfg.t)
        return U @ diagonal

    @staticmethod
    def exact_unitary(h: SpinHamiltonian, time: float) -> np.ndarray:
        energies, vectors = np.linalg.eigh(HamiltonianModel.hamiltonian_matrix(h))
        return (vectors * np.exp(-1j * energies * time)) @ vectors.conj().T

    @staticmethod
    def trotter_eigenphase(
        h: SpinHamiltonian, cfg: TrotterConfig, t_split: Optional[Tuple[float, float]] = None
    ) -> Tuple[float, np.ndarray]:
        """Eigenphase in [0, 2pi) and eigenvector of the single-repetition Trotter operator.

        The eigenpair with the largest ground-state overlap is selected. With ``t_split`` the
        two-repetition operator is diagonalized and its phase halved on the branch nearest the
        unsplit phase.
        """
        ground = HamiltonianModel.exact_ground(h).ground_vector
        reps = 1 if t_split is None else 2
        U = HamiltonianModel.trotter_unitary(h, TrotterConfig(cfg.t, cfg.s, reps), t_split)
        eigvals, eigvecs = np.linalg.eig(U)
        overlaps = np.abs(eigvecs.conj().T @ ground) ** 2
        order = np.argsort(overlaps)[::-1]
        if overlaps[order[0]] - overlaps[order[1]] < OVERLAP_TIE_TOLERANCE:
            raise ValueError("Trotter eigenvectors overlap the ground state equally; phase is ambiguous")
        vec = eigvecs[:, order[0]]
        vec = vec / np.linalg.norm(vec)
        pivot = vec[np.argmax(np.abs(vec))]
        vec = vec * (abs(pivot) / pivot)
        phase = float(np.angle(eigvals[order[0]])) % TWO_PI
        if t_split is not None:
            reference, _ = HamiltonianModel.trotter_eigenphase(h, cfg)
            branches = np.array([phase / 2, phase / 2 + math.pi])
            distance = np.abs(np.angle(np.exp(1j * (branches - reference))))
            phase = float(branches[np.argmin(distance)]) % TWO_PI
        return phase, vec

    @staticmethod
    def energy_from_phase(phi: float, t: float, branch_center: float) -> float:
        """Representative of -(phi + 2 pi n)/t nearest to branch_center."""
        n = round((-branch_center * t - phi) / TWO_PI)
        return -(phi + TWO_PI * n) / t

    @staticmethod
    def leakage_bias_bound(c0_sq: float) -> float:
        """(1 - |c0|^2)/|c0|^2 bound on the phase bias from initial-state contamination."""
        if not (0.0 < c0_sq <= 1.0):
            raise ValueError(f"Overlap |c0|^2 must lie in (0, 1], got {c0_sq}")
        return (1.0 - c0_sq) / c0_sq

    @staticmethod
    def preparation_angles(system_state: np.ndarray) -> Tuple[float, float]:
        """(theta, chi) with Rz_1(chi) exp(-i theta Y1X2 / 2)|00> equal to the state up to phase.

        The state must live in the even-parity span {|00>, |11>}.
        """
        v = np.asarray(system_state, dtype=complex)
        if np.abs(v[1]) ** 2 + np.abs(v[2]) ** 2 > 1e-20:
            raise ValueError("Exact-state preparation needs a state in span{|00>, |11>}")
        theta = 2.0 * math.atan2(abs(v[3]), abs(v[0]))
        chi = float(np.angle(v[3]) - np.angle(v[0])) if abs(v[3]) > 0 else 0.0
        return theta, chi
