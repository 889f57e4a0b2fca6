"""[[6,4,2]] iceberg-code QPE: encoding, logical compilation, syndrome blocks and post-selection.

Physical qubits 0-3 carry logical qubits 1-4, qubit 4 is a_X and qubit 5 is a_Z, so that
X_i-bar = X_i X_4 and Z_i-bar = Z_i Z_5. Logical qubit 1 is the QPE ancilla, logical qubits 2 and 3
hold the system in the S-dagger rotated frame (Y1Y2 becomes X2X3) and logical qubit 4 stays in |+>.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from bqpe.consts import (
    CTRL_V_ENCODED_BUDGET,
    DEFAULT_SYNDROME_FREQUENCY,
    EXACT_STATE_ALPHA_HALFTURNS,
    FINAL_BUDGET,
    PREP_BUDGET,
    SYNDROME_BUDGET,
)
from bqpe.hamiltonian import HamiltonianModel, pauli_exponential
from bqpe.models import (
    Clifford1Q,
    EncodedCircuit,
    FinalMeasure,
    NoiseBudget,
    NoiseModel,
    PauliExp,
    ShotRecord,
    SpinHamiltonian,
    StatePrep,
    StateVector,
    SyndromeCheck,
    TrotterConfig,
)
from bqpe.simulator import CLIFFORD_MATRICES, NoisyExecutor, StateVectorSimulator

logger = logging.getLogger(__name__)

N_PHYSICAL = 6
DATA_QUBITS = (0, 1, 2, 3)
A_X, A_Z = 4, 5
ALL_QUBITS = tuple(range(N_PHYSICAL))
S_X = ("XXXXXX", ALL_QUBITS)
S_Z = ("ZZZZZZ", ALL_QUBITS)
PLUS = np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)
S_DAGGER = np.diag([1.0, -1j])


class IcebergCode:
    """Encoded QPE on the [[6,4,2]] code with ideal fault-tolerant subcircuits plus noise budgets."""

    # -- states ---------------------------------------------------------------

    @staticmethod
    def logical_operator(label: str) -> Tuple[str, Tuple[int, ...]]:
        """Physical Pauli string for a 4-character logical Pauli label (before stabilizer reduction)."""
        if len(label) != 4:
            raise ValueError(f"Logical Pauli label needs 4 characters, got {label!r}")
        ops = {q: "I" for q in ALL_QUBITS}
        n_x = n_z = 0
        for q, char in enumerate(label):
            if char == "I":
                continue
            ops[q] = char
            n_x += char in "XY"
            n_z += char in "ZY"
        ops[A_X] = "X" if n_x % 2 else "I"
        ops[A_Z] = "Z" if n_z % 2 else "I"
        qubits = tuple(q for q in ALL_QUBITS if ops[q] != "I")
        return "".join(ops[q] for q in qubits), qubits

    @staticmethod
    def system_frame(system_state: np.ndarray) -> np.ndarray:
        """(S-dagger x S-dagger) applied to a two-qubit system state."""
        return np.kron(S_DAGGER, S_DAGGER) @ np.asarray(system_state, dtype=complex)

    @staticmethod
    def logical_state(system_frame_state: np.ndarray) -> np.ndarray:
        """|+> (x) system (x) |+> on logical qubits 1..4."""
        return np.kron(np.kron(PLUS, np.asarray(system_frame_state, dtype=complex)), PLUS)

    @staticmethod
    def alpha_rotated_state(alpha_halfturns: float = EXACT_STATE_ALPHA_HALFTURNS) -> np.ndarray:
        """exp(-i alpha pi Y2 X3 / 2)|+00+> on logical qubits 1..4."""
        system = pauli_exponential("YX", alpha_halfturns * math.pi / 2) @ np.array([1, 0, 0, 0], dtype=complex)
        return IcebergCode.logical_state(system)

    @staticmethod
    def encode(logical: np.ndarray) -> StateVector:
        """Codeword of a 4-qubit logical state via the projector (1 + S_X)(1 + S_Z)/4."""
        logical = np.asarray(logical, dtype=complex)
        if logical.shape != (16,):
            raise ValueError(f"Logical state needs 16 amplitudes, got {logical.shape}")
        seed = np.zeros(2**N_PHYSICAL, dtype=complex)
        for x in range(16):
            parity = bin(x).count("1") % 2
            seed[(x << 2) | (parity << 1)] = logical[x]
        state = StateVector(N_PHYSICAL, seed)
        for label, qubits in (S_Z, S_X):
            flipped = StateVectorSimulator.apply_pauli(state.copy(), label, qubits)
            state.amplitudes = 0.5 * (state.amplitudes + flipped.amplitudes)
        norm = state.norm()
        if norm < 1e-12:
            raise ValueError("Stabilizer projection of the seed state vanished")
        state.amplitudes /= norm
        return state

    @staticmethod
    def encode_logical_state(
        init_kind: str = "hartree_fock",
        system_state: Optional[np.ndarray] = None,
        alpha_halfturns: float = EXACT_STATE_ALPHA_HALFTURNS,
    ) -> StateVector:
        """Physical codeword of |+00+> or of the exact-eigenstate preparation.

        For the exact eigenstate, ``system_state`` (computational frame) takes precedence over the
        single-angle rotation ``alpha_halfturns``.
        """
        if init_kind == "hartree_fock":
            logical = IcebergCode.logical_state(np.array([1, 0, 0, 0], dtype=complex))
        elif init_kind == "exact_eigenstate":
            if system_state is not None:
                logical = IcebergCode.logical_state(IcebergCode.system_frame(system_state))
            else:
                logical = IcebergCode.alpha_rotated_state(alpha_halfturns)
        else:
            raise ValueError(f"Unknown init_kind {init_kind!r}")
        return IcebergCode.encode(logical)

    # -- compilation ----------------------------------------------------------

    @staticmethod
    def compile_logical_ctrl_u(h: SpinHamiltonian, t_step: float) -> List[PauliExp]:
        """Six two-qubit rotations implementing one controlled Trotter step, in time order."""
        h1, h2, h3 = h.h[:3]
        return [
            PauliExp("XX", (1, 2), h3 * t_step, n2q=1),
            PauliExp("YY", (0, A_Z), h3 * t_step, n2q=1),
            PauliExp("ZZ", (2, A_Z), h2 * t_step, n2q=1),
            PauliExp("ZZ", (0, 2), -h2 * t_step, n2q=1),
            PauliExp("ZZ", (1, A_Z), h1 * t_step, n2q=1),
            PauliExp("ZZ", (0, 1), -h1 * t_step, n2q=1),
        ]

    @staticmethod
    def compile_logical_ctrl_v(h: SpinHamiltonian, k: int, t: float, beta: float) -> List[PauliExp]:
        h4, h5 = h.h[3], h.h[4]
        return [
            PauliExp("ZZ", (1, 2), h4 * k * t, n2q=1),
            PauliExp("ZZ", (3, A_X), -h4 * k * t, n2q=1),
            PauliExp("ZZ", (0, A_Z), beta - h5 * k * t, n2q=1),
        ]

    @staticmethod
    def two_qubit_count(
        k: int, f: int = DEFAULT_SYNDROME_FREQUENCY, s: int = 1, init_kind: str = "hartree_fock"
    ) -> int:
        """6 k s + 12 floor(k s / f) + 20 + 5 delta_init."""
        return (
            6 * k * s
            + SYNDROME_BUDGET * ((k * s) // f)
            + PREP_BUDGET[init_kind]
            + CTRL_V_ENCODED_BUDGET
            + FINAL_BUDGET
        )

    @staticmethod
    def build_encoded_qpe(
        h: SpinHamiltonian,
        k: int,
        beta: float,
        t: float,
        s: int = 1,
        f: int = DEFAULT_SYNDROME_FREQUENCY,
        init_kind: str = "hartree_fock",
        t_split: Optional[Tuple[float, float]] = None,
        sx_insertion: bool = True,
        system_state: Optional[np.ndarray] = None,
    ) -> EncodedCircuit:
        if k < 1 or f < 1:
            raise ValueError(f"Need k >= 1 and f >= 1, got k={k}, f={f}")
        if init_kind == "exact_eigenstate" and system_state is None:
            _, system_state = HamiltonianModel.trotter_eigenphase(h, TrotterConfig(t, s), t_split)
        steps = k * s
        times = HamiltonianModel.step_times(t, steps, t_split) / s

        gates: list = [
            StatePrep(IcebergCode.encode_logical_state(init_kind, system_state).amplitudes),
            NoiseBudget(PREP_BUDGET[init_kind], "prep"),
            SyndromeCheck("prep"),
        ]
        syndrome_points = [2]
        sx_points = []
        first_half, second_half = math.ceil(f / 2), f // 2
        step = 0
        for block in range(steps // f):
            for _ in range(first_half):
                gates += IcebergCode.compile_logical_ctrl_u(h, times[step])
                step += 1
            if sx_insertion:
                sx_points.append(len(gates))
                gates += [Clifford1Q("X", q) for q in ALL_QUBITS]
            for _ in range(second_half):
                gates += IcebergCode.compile_logical_ctrl_u(h, times[step])
                step += 1
            gates += [NoiseBudget(SYNDROME_BUDGET, "syndrome"), SyndromeCheck("syndrome", block)]
            syndrome_points.append(len(gates) - 1)
        while step < steps:
            gates += IcebergCode.compile_logical_ctrl_u(h, times[step])
            step += 1
        gates += IcebergCode.compile_logical_ctrl_v(h, k, t, beta)
        gates += [NoiseBudget(FINAL_BUDGET, "final_meas"), FinalMeasure()]
        total = IcebergCode.two_qubit_count(k, f, s, init_kind)
        return EncodedCircuit(
            gates=tuple(gates),
            syndrome_points=tuple(syndrome_points),
            exit_points=tuple(syndrome_points) + (len(gates) - 1,),
            sx_points=tuple(sx_points),
            two_qubit_count=total,
            f=f,
            k=k,
            beta=beta,
            init_kind=init_kind,
        )

    # -- measurement ----------------------------------------------------------

    @staticmethod
    def _project(state: StateVector, stabilizer: Tuple[str, Tuple[int, ...]], rng: np.random.Generator) -> int:
        """Born-sample a stabilizer eigenvalue and collapse the state onto it."""
        flipped = StateVectorSimulator.apply_pauli(state.copy(), *stabilizer).amplitudes
        plus = 0.5 * (state.amplitudes + flipped)
        p_plus = float(np.vdot(plus, plus).real) / float(np.vdot(state.amplitudes, state.amplitudes).real)
        outcome = 1 if rng.random() < p_plus else -1
        projected = plus if outcome == 1 else 0.5 * (state.amplitudes - flipped)
        state.amplitudes = projected / np.linalg.norm(projected)
        return outcome

    @staticmethod
    def project_stabilizers(state: StateVector, rng: np.random.Generator) -> Tuple[int, int]:
        sx = IcebergCode._project(state, S_X, rng)
        sz = IcebergCode._project(state, S_Z, rng)
        return sx, sz

    @staticmethod
    def syndrome_measure(
        state: StateVector,
        noise: NoiseModel,
        rng: np.random.Generator,
        executor: Optional[NoisyExecutor] = None,
    ) -> Tuple[int, int, StateVector]:
        """Noise budget of one syndrome circuit followed by ideal S_X, S_Z readout.

        Pass the shot's ``executor`` to count the budget against its executed gates.
        """
        (executor or NoisyExecutor(state, noise, rng)).apply_budget(SYNDROME_BUDGET)
        sx, sz = IcebergCode.project_stabilizers(state, rng)
        return sx, sz, state

    @staticmethod
    def final_readout(state: StateVector, rng: np.random.Generator) -> Tuple[bool, Optional[int]]:
        """S_Z check, then destructive X readout of all six qubits decoded as X_1-bar."""
        if IcebergCode._project(state, S_Z, rng) == -1:
            return False, None
        rotated = state.copy()
        for q in ALL_QUBITS:
            StateVectorSimulator.apply_single(rotated, CLIFFORD_MATRICES["H"], q)
        probs = np.abs(rotated.amplitudes) ** 2
        index = int(rng.choice(probs.size, p=probs / probs.sum()))
        bits = [(index >> (N_PHYSICAL - 1 - q)) & 1 for q in ALL_QUBITS]
        if sum(bits) % 2:
            return False, None
        return True, bits[0] ^ bits[A_X]

    @staticmethod
    def final_measurement(
        state: StateVector,
        noise: NoiseModel,
        rng: np.random.Generator,
        executor: Optional[NoisyExecutor] = None,
    ) -> Tuple[bool, Optional[int]]:
        (executor or NoisyExecutor(state, noise, rng)).apply_budget(FINAL_BUDGET)
        return IcebergCode.final_readout(state, rng)

    # -- execution ------------------------------------------------------------

    @staticmethod
    def run_encoded_shot(
        circ: EncodedCircuit,
        noise: NoiseModel,
        rng: np.random.Generator,
        injections: Optional[Dict[int, Tuple[str, Tuple[int, ...]]]] = None,
    ) -> ShotRecord:
        """Execute one shot with conditional exit.

        ``injections`` maps a gate index to a Pauli applied right after that gate.
        """
        executor: Optional[NoisyExecutor] = None
        for index, op in enumerate(circ.gates):
            if isinstance(op, StatePrep):
                executor = NoisyExecutor(StateVector(circ.n_qubits, op.amplitudes), noise, rng)
            elif isinstance(op, NoiseBudget) and op.stage != "prep":
                # applied by the measurement it precedes
                executor.barrier()
            elif isinstance(op, SyndromeCheck):
                executor.barrier()
                if op.stage == "prep":
                    sx, sz = IcebergCode.project_stabilizers(executor.state, rng)
                else:
                    sx, sz, _ = IcebergCode.syndrome_measure(executor.state, noise, rng, executor)
                if sx == -1 or sz == -1:
                    stage = "prep" if op.stage == "prep" else "syndrome"
                    logger.debug(f"Shot discarded at {stage} check {op.block} after {executor.gates_executed} 2Q gates")
                    return ShotRecord(None, True, stage, executor.gates_executed, op.block)
            elif isinstance(op, FinalMeasure):
                executor.barrier()
                accepted, m = IcebergCode.final_measurement(executor.state, noise, rng, executor)
                if not accepted:
                    return ShotRecord(None, True, "final_meas", executor.gates_executed)
                return ShotRecord(m, False, "none", executor.gates_executed)
            else:
                executor.apply(op)
            if injections and index in injections:
                StateVectorSimulator.apply_pauli(executor.state, *injections[index])
        raise ValueError("Encoded circuit ended without a final measurement")

    @staticmethod
    def sample_shots(
        circ: EncodedCircuit, noise: NoiseModel, n_shots: int, rng: np.random.Generator
    ) -> List[ShotRecord]:
        return [IcebergCode.run_encoded_shot(circ, noise, rng) for _ in range(n_shots)]

    @staticmethod
    def noiseless_outcome_prob(circ: EncodedCircuit) -> float:
        """Probability of logical m=0 with ideal gates and no noise budgets."""
        state: Optional[StateVector] = None
        for op in circ.gates:
            if isinstance(op, StatePrep):
                state = StateVector(circ.n_qubits, op.amplitudes)
            elif isinstance(op, (NoiseBudget, SyndromeCheck)):
                continue
            elif isinstance(op, FinalMeasure):
                x_bar = StateVectorSimulator.expectation(state, "XX", (0, A_X)).real
                return 0.5 * (1.0 + x_bar)
            else:
                StateVectorSimulator.apply_gate(state, op)
        raise ValueError("Encoded circuit ended without a final measurement")

    # -- statistics -----------------------------------------------------------

    @staticmethod
    def discard_rate_model(
        k: int, f: int, p2: float, delta_init: int = 0, s: int = 1
    ) -> float:
        """d = 1 - (1 - p2)^N with N the encoded two-qubit gate count."""
        init_kind = "exact_eigenstate" if delta_init else "hartree_fock"
        return 1.0 - (1.0 - p2) ** IcebergCode.two_qubit_count(k, f, s, init_kind)

    @staticmethod
    def conditional_exit_ratio(records: Sequence[ShotRecord], circ: EncodedCircuit) -> float:
        """Mean executed two-qubit gates over the scheduled count, across kept and discarded shots."""
        if not records:
            raise ValueError("No shot records to average")
        return float(np.mean([r.gates_executed_2q for r in records])) / circ.two_qubit_count

    @staticmethod
    def discard_fraction(records: Sequence[ShotRecord]) -> float:
        if not records:
            raise ValueError("No shot records to average")
        return sum(r.discarded for r in records) / len(records)
