"""Dense statevector execution of Pauli-exponential circuits with trajectory noise.

Noise is unravelled per shot: stochastic two-qubit Paulis after native gates, a sign-following
rotation bias on entangling rotations, and a coherent Z rotation on qubits idle in a layer.
"""
import logging
import math
from functools import lru_cache
from typing import Iterable, Optional, Tuple

import numpy as np

from bqpe.hamiltonian import HamiltonianModel
from bqpe.models import (
    Clifford1Q,
    GateOp,
    Measure,
    NoiseBudget,
    NoiseModel,
    PauliExp,
    Prep,
    QpeCircuit,
    SpinHamiltonian,
    StateVector,
    TrotterConfig,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
CLIFFORD_MATRICES = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _INV_SQRT2,
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "SDG": np.array([[1, 0], [0, -1j]], dtype=complex),
}
# the 15 non-identity two-qubit Paulis
TWO_QUBIT_PAULIS = tuple(a + b for a in "IXYZ" for b in "IXYZ")[1:]


def rotation_bias(theta: float, delta_bar: float) -> float:
    """theta + delta_bar * sign(theta); a zero angle stays unbiased."""
    return theta + delta_bar * float(np.sign(theta))


@lru_cache(maxsize=4096)
def _pauli_action(n_qubits: int, paulis: str, qubits: Tuple[int, ...]) -> Tuple[np.ndarray, np.ndarray]:
    """Permutation and phases with (P psi) = (phase * psi)[perm]."""
    xmask = zmask = 0
    n_y = 0
    for char, q in zip(paulis, qubits):
        bit = 1 << (n_qubits - 1 - q)
        if char in "XY":
            xmask |= bit
        if char in "ZY":
            zmask |= bit
        n_y += char == "Y"
    index = np.arange(2**n_qubits)
    parity = np.zeros(index.shape, dtype=np.int64)
    masked = index & zmask
    while np.any(masked):
        parity ^= masked & 1
        masked = masked >> 1
    phase = (1j**n_y) * (1.0 - 2.0 * parity)
    perm = index ^ xmask
    perm.setflags(write=False)
    phase.setflags(write=False)
    return perm, phase


class StateVectorSimulator:
    """In-place gate application on StateVector objects."""

    @staticmethod
    def apply_pauli(state: StateVector, paulis: str, qubits: Tuple[int, ...]) -> StateVector:
        perm, phase = _pauli_action(state.n_qubits, paulis, tuple(qubits))
        state.amplitudes = (phase * state.amplitudes)[perm]
        return state

    @staticmethod
    def apply_pauli_exp(state: StateVector, paulis: str, qubits: Tuple[int, ...], theta: float) -> StateVector:
        """exp(-i theta P / 2)."""
        perm, phase = _pauli_action(state.n_qubits, paulis, tuple(qubits))
        rotated = (phase * state.amplitudes)[perm]
        state.amplitudes = math.cos(theta / 2) * state.amplitudes - 1j * math.sin(theta / 2) * rotated
        return state

    @staticmethod
    def apply_single(state: StateVector, matrix: np.ndarray, qubit: int) -> StateVector:
        tensor = state.amplitudes.reshape([2] * state.n_qubits)
        tensor = np.moveaxis(np.tensordot(matrix, tensor, axes=([1], [qubit])), 0, qubit)
        state.amplitudes = tensor.reshape(-1)
        return state

    @staticmethod
    def apply_gate(state: StateVector, op: GateOp) -> StateVector:
        """Noiseless action of a unitary or preparation op."""
        if isinstance(op, PauliExp):
            return StateVectorSimulator.apply_pauli_exp(state, op.paulis, op.qubits, op.theta)
        if isinstance(op, Clifford1Q):
            return StateVectorSimulator.apply_single(state, CLIFFORD_MATRICES[op.name], op.qubit)
        if isinstance(op, Prep):
            # fresh qubits start in |0>
            if op.basis == "X":
                StateVectorSimulator.apply_single(state, CLIFFORD_MATRICES["H"], op.qubit)
            return state
        raise TypeError(f"Cannot apply {type(op).__name__} as a gate")

    @staticmethod
    def zero_probability(state: StateVector, qubit: int, basis: str = "Z") -> float:
        """Probability of reading +1 (bit 0) when measuring ``qubit`` in ``basis``."""
        rotated = state.copy() if basis == "X" else state
        if basis == "X":
            StateVectorSimulator.apply_single(rotated, CLIFFORD_MATRICES["H"], qubit)
        tensor = np.abs(rotated.amplitudes.reshape([2] * state.n_qubits)) ** 2
        total = tensor.sum()
        return float(np.take(tensor, 0, axis=qubit).sum() / total)

    @staticmethod
    def expectation(state: StateVector, paulis: str, qubits: Tuple[int, ...]) -> complex:
        perm, phase = _pauli_action(state.n_qubits, paulis, tuple(qubits))
        return complex(np.vdot(state.amplitudes, (phase * state.amplitudes)[perm]))


class NoisyExecutor:
    """Runs gate ops on one trajectory and tracks layers for idle errors.

    A layer closes when an op touches a qubit already used in it; every qubit the closed layer left
    idle then receives exp(i gamma Z). With ``rng=None`` only coherent noise is applied.
    """

    def __init__(self, state: StateVector, noise: NoiseModel, rng: Optional[np.random.Generator] = None):
        if rng is None and noise.p2 > 0 and noise.mode == "circuit_level":
            raise ValueError("Stochastic circuit-level noise needs a random generator")
        self.state = state
        self.noise = noise
        self.rng = rng
        self.gates_executed = 0
        self._busy: set = set()

    def _flush(self) -> None:
        if self.noise.memory_gamma != 0.0 and self._busy:
            for q in range(self.state.n_qubits):
                if q not in self._busy:
                    StateVectorSimulator.apply_pauli_exp(self.state, "Z", (q,), -2.0 * self.noise.memory_gamma)
        self._busy = set()

    def _occupy(self, qubits: Iterable[int]) -> None:
        qubits = set(qubits)
        if qubits & self._busy:
            self._flush()
        self._busy |= qubits

    def barrier(self) -> None:
        """Close the current layer and occupy a full-width layer (no idle qubits)."""
        self._flush()

    def finish(self) -> None:
        self._flush()

    def _depolarize(self, pair: Tuple[int, int]) -> None:
        if self.rng is None or self.noise.p2 == 0.0 or self.noise.mode != "circuit_level":
            return
        if self.rng.random() >= self.noise.p2:
            return
        label = TWO_QUBIT_PAULIS[int(self.rng.integers(len(TWO_QUBIT_PAULIS)))]
        support = [(c, q) for c, q in zip(label, pair) if c != "I"]
        StateVectorSimulator.apply_pauli(
            self.state, "".join(c for c, _ in support), tuple(q for _, q in support)
        )

    def apply(self, op: GateOp) -> None:
        if isinstance(op, NoiseBudget):
            self.barrier()
            self.apply_budget(op.n2q)
            return
        self._occupy(op.qubits)
        if isinstance(op, PauliExp) and op.n2q > 0:
            theta = rotation_bias(op.theta, self.noise.delta_bar)
            StateVectorSimulator.apply_pauli_exp(self.state, op.paulis, op.qubits, theta)
            pairs = list(zip(op.qubits[:-1], op.qubits[1:]))
            for g in range(op.n2q):
                self._depolarize(pairs[g % len(pairs)])
            self.gates_executed += op.n2q
        else:
            StateVectorSimulator.apply_gate(self.state, op)

    def apply_budget(self, n2q: int) -> None:
        """``n2q`` depolarizing opportunities on uniformly random qubit pairs."""
        self.gates_executed += n2q
        if self.rng is None or self.noise.p2 == 0.0 or self.noise.mode != "circuit_level":
            return
        n = self.state.n_qubits
        for _ in range(n2q):
            pair = tuple(int(x) for x in self.rng.choice(n, size=2, replace=False))
            self._depolarize(pair)


class CircuitBuilder:
    """Unencoded Hadamard-test QPE circuit: qubit 0 is the ancilla, qubits 1 and 2 the system."""

    @staticmethod
    def two_qubit_count(k: int, s: int = 1, init_kind: str = "hartree_fock") -> int:
        """5 k s + 4 + delta_init."""
        return 5 * k * s + 4 + (1 if init_kind == "exact_eigenstate" else 0)

    @staticmethod
    def exact_init_ops(system_state: np.ndarray, qubits: Tuple[int, int] = (1, 2)) -> list:
        theta, chi = HamiltonianModel.preparation_angles(system_state)
        return [
            PauliExp("YX", qubits, theta, n2q=1),
            PauliExp("Z", (qubits[0],), chi),
        ]

    @staticmethod
    def ctrl_u_ops(h: SpinHamiltonian, tau: float) -> list:
        """Controlled Trotter step exp(-i h1 tau Z1) exp(-i h2 tau Z2) exp(-i h3 tau Y1Y2), in time order."""
        h1, h2, h3 = h.h[:3]
        return [
            PauliExp("YY", (1, 2), h3 * tau, n2q=1),
            PauliExp("ZYY", (0, 1, 2), -h3 * tau, n2q=2),
            PauliExp("Z", (2,), h2 * tau),
            PauliExp("ZZ", (0, 2), -h2 * tau, n2q=1),
            PauliExp("Z", (1,), h1 * tau),
            PauliExp("ZZ", (0, 1), -h1 * tau, n2q=1),
        ]

    @staticmethod
    def ctrl_v_ops(h: SpinHamiltonian, k: int, t: float, beta: float) -> list:
        """Controlled exp(-i h4 k t Z1Z2) exp(-i h5 k t) with the R_Z(beta) phase folded in."""
        h4, h5 = h.h[3], h.h[4]
        return [
            PauliExp("ZZ", (1, 2), h4 * k * t, n2q=1),
            PauliExp("ZZZ", (0, 1, 2), -h4 * k * t, n2q=3),
            PauliExp("Z", (0,), beta - h5 * k * t),
        ]

    @staticmethod
    def build_qpe_circuit(
        h: SpinHamiltonian,
        k: int,
        beta: float,
        t: float,
        s: int = 1,
        init_kind: str = "hartree_fock",
        t_split: Optional[Tuple[float, float]] = None,
        system_state: Optional[np.ndarray] = None,
    ) -> QpeCircuit:
        if k < 1:
            raise ValueError(f"Depth k must be >= 1, got {k}")
        if init_kind not in ("hartree_fock", "exact_eigenstate"):
            raise ValueError(f"Unknown init_kind {init_kind!r}")
        gates = [Prep(0, "X")]
        if init_kind == "exact_eigenstate":
            if system_state is None:
                _, system_state = HamiltonianModel.trotter_eigenphase(h, TrotterConfig(t, s), t_split)
            gates += CircuitBuilder.exact_init_ops(system_state)
        for tau in HamiltonianModel.step_times(t, k * s, t_split) / s:
            gates += CircuitBuilder.ctrl_u_ops(h, tau)
        gates += CircuitBuilder.ctrl_v_ops(h, k, t, beta)
        gates.append(Measure(0, "X"))
        return QpeCircuit(
            gates=tuple(gates),
            two_qubit_count=CircuitBuilder.two_qubit_count(k, s, init_kind),
            k=k,
            beta=beta,
            t=t,
            s=s,
            init_kind=init_kind,
        )


class ShotSampler:
    """Single-shot and batched outcome sampling for unencoded circuits."""

    @staticmethod
    def _final_state(
        circ: QpeCircuit, noise: NoiseModel, rng: Optional[np.random.Generator]
    ) -> Tuple[StateVector, int]:
        executor = NoisyExecutor(StateVector(circ.n_qubits), noise, rng)
        measured = None
        for op in circ.gates:
            if isinstance(op, Measure):
                measured = op
                continue
            executor.apply(op)
        executor.finish()
        if measured is None:
            raise ValueError("Circuit has no measurement")
        return executor.state, measured.qubit

    @staticmethod
    def exact_outcome_prob(circ: QpeCircuit, noise: Optional[NoiseModel] = None) -> float:
        """Deterministic probability of m=0; only coherent noise terms apply."""
        noise = NoiseModel(0.0, noise.memory_gamma, noise.delta_bar) if noise else NoiseModel()
        state, qubit = ShotSampler._final_state(circ, noise, None)
        return StateVectorSimulator.zero_probability(state, qubit, "X")

    @staticmethod
    def global_damping(p2: float, n2q: int) -> float:
        """q = 1 - (1 - p2)^N."""
        return 1.0 - (1.0 - p2) ** n2q

    @staticmethod
    def outcome_prob(circ: QpeCircuit, noise: NoiseModel) -> float:
        """Probability of m=0 for modes whose shots all share one trajectory."""
        if not noise.is_coherent_only:
            raise ValueError("Stochastic circuit-level noise has no single-trajectory outcome probability")
        p_ideal = ShotSampler.exact_outcome_prob(circ, noise)
        if noise.mode == "global_analytic":
            q = ShotSampler.global_damping(noise.p2, circ.two_qubit_count)
            return (1.0 - q) * p_ideal + 0.5 * q
        return p_ideal

    @staticmethod
    def run_shot(circ: QpeCircuit, noise: NoiseModel, rng: np.random.Generator) -> int:
        if noise.is_coherent_only:
            p0 = ShotSampler.outcome_prob(circ, noise)
        else:
            state, qubit = ShotSampler._final_state(circ, noise, rng)
            p0 = StateVectorSimulator.zero_probability(state, qubit, "X")
        return 0 if rng.random() < p0 else 1

    @staticmethod
    def sample_zero_count(circ: QpeCircuit, noise: NoiseModel, n_shots: int, rng: np.random.Generator) -> int:
        """Number of m=0 outcomes in ``n_shots`` independent shots."""
        if noise.is_coherent_only:
            return int(rng.binomial(n_shots, ShotSampler.outcome_prob(circ, noise)))
        return sum(1 - ShotSampler.run_shot(circ, noise, rng) for _ in range(n_shots))
