import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from scipy.special import ive

from bqpe.consts import (
    DEFAULT_ATTEMPT_CAP,
    DEFAULT_J_MAX,
    DEFAULT_K_MAX,
    DEFAULT_MAX_UPDATES,
    DEFAULT_P2,
    DEFAULT_S,
    DEFAULT_SYNDROME_FREQUENCY,
    DEFAULT_SYNTHETIC_PHASES,
    DEFAULT_T,
    CALIBRATION_KS,
    CALIBRATION_SHOTS,
    INIT_KIND_OPTS,
    MAX_QUBITS,
    MODE_OPTS,
    NOISE_MODE_OPTS,
    REPRESENTATION_OPTS,
    SELECTION_OPTS,
)

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Raised when a run configuration fails validation."""


class FitConvergenceError(RuntimeError):
    """Raised when a calibration fit cannot be carried out or does not converge."""


def wrap_angle(angle: float) -> float:
    """Reduce an angle to [0, 2pi)."""
    wrapped = math.fmod(angle, TWO_PI)
    if wrapped < 0:
        wrapped += TWO_PI
    # -tiny + 2pi rounds to 2pi
    return 0.0 if wrapped >= TWO_PI else wrapped


def check_bit(m: int) -> None:
    if m not in (0, 1):
        raise ValueError(f"Measurement bit must be 0 or 1, got {m}")


def check_q(q: float) -> None:
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"Error parameter q must lie in [0, 1], got {q}")


# -- circular posterior -------------------------------------------------------


@dataclass(frozen=True)
class Likelihood:
    """Noise-aware QPE likelihood p(m | phi, k, beta)."""

    k: int
    beta: float
    q: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"Depth k must be >= 1, got {self.k}")
        check_q(self.q)
        if not math.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta}")
        object.__setattr__(self, "beta", wrap_angle(self.beta))

    def prob(self, m: int, phi):
        """Evaluate (1 + (1-q) cos(k phi + beta - m pi)) / 2, vectorized over phi."""
        check_bit(m)
        return 0.5 * (1.0 + (1.0 - self.q) * np.cos(self.k * np.asarray(phi) + self.beta - m * math.pi))


@dataclass(frozen=True, eq=False)
class FourierPosterior:
    """Density 1/(2pi) + sum_j c_j cos(j phi) + s_j sin(j phi), j = 1..J."""

    cos_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sin_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        c = np.asarray(self.cos_coeffs, dtype=float).reshape(-1)
        s = np.asarray(self.sin_coeffs, dtype=float).reshape(-1)
        if c.shape != s.shape:
            raise ValueError(
                f"Cosine and sine coefficient arrays must match, got {c.shape} and {s.shape}"
            )
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(s))):
            raise ValueError("Fourier coefficients must be finite")
        c.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "cos_coeffs", c)
        object.__setattr__(self, "sin_coeffs", s)

    @classmethod
    def uniform(cls) -> "FourierPosterior":
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def from_moments(cls, moments: np.ndarray) -> "FourierPosterior":
        """Build from circular moments M_1..M_J (M_j = pi (c_j + i s_j))."""
        moments = np.asarray(moments, dtype=complex)
        return cls(moments.real / math.pi, moments.imag / math.pi)

    @property
    def J(self) -> int:
        return int(self.cos_coeffs.shape[0])

    def moments(self) -> np.ndarray:
        """Circular moments M_0..M_J as a complex array."""
        out = np.empty(self.J + 1, dtype=complex)
        out[0] = 1.0
        out[1:] = math.pi * (self.cos_coeffs + 1j * self.sin_coeffs)
        return out

    def pdf(self, phi, clamp: bool = False):
        phi = np.asarray(phi, dtype=float)
        j = np.arange(1, self.J + 1)
        angles = np.multiply.outer(phi, j)
        density = 1.0 / TWO_PI + np.cos(angles) @ self.cos_coeffs + np.sin(angles) @ self.sin_coeffs
        return np.maximum(density, 0.0) if clamp else density

    def to_dict(self) -> dict:
        return {
            "type": "fourier",
            "J": self.J,
            "c": self.cos_coeffs.tolist(),
            "s": self.sin_coeffs.tolist(),
        }


@dataclass(frozen=True)
class VonMisesPosterior:
    """Von Mises density exp(kappa cos(phi - mu)) / (2 pi I0(kappa))."""

    mu: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be finite and non-negative, got {self.kappa}")
        object.__setattr__(self, "mu", wrap_angle(self.mu))

    def pdf(self, phi, clamp: bool = False):
        phi = np.asarray(phi, dtype=float)
        # exp(kappa (cos - 1)) / (2 pi ive(0, kappa)) avoids overflow at large kappa
        return np.exp(self.kappa * (np.cos(phi - self.mu) - 1.0)) / (TWO_PI * ive(0, self.kappa))

    def to_dict(self) -> dict:
        return {"type": "vonmises", "mu": self.mu, "kappa": self.kappa}


Representation = Union[FourierPosterior, VonMisesPosterior]


@dataclass(frozen=True, eq=False)
class PhasePosterior:
    """Adaptive posterior: Fourier until the coefficient budget j_max is reached.

    ``j_max=None`` disables conversion (pure Fourier).
    """

    representation: Representation
    j_max: Optional[int] = DEFAULT_J_MAX

    def __post_init__(self):
        if self.j_max is not None and self.j_max < 1:
            raise ValueError(f"j_max must be a positive integer, got {self.j_max}")
        if (
            isinstance(self.representation, FourierPosterior)
            and self.j_max is not None
            and self.representation.J > self.j_max
        ):
            raise ValueError(
                f"Fourier posterior with J={self.representation.J} exceeds j_max={self.j_max}"
            )

    @classmethod
    def uniform(cls, representation: str = "adaptive", j_max: Optional[int] = DEFAULT_J_MAX):
        if representation not in REPRESENTATION_OPTS:
            raise ValueError(f"Unknown representation {representation!r}")
        if representation == "vonmises_only":
            return cls(VonMisesPosterior(0.0, 0.0), j_max)
        return cls(FourierPosterior.uniform(), None if representation == "fourier_only" else j_max)

    @property
    def is_fourier(self) -> bool:
        return isinstance(self.representation, FourierPosterior)

    @property
    def kind(self) -> str:
        return "fourier" if self.is_fourier else "vonmises"

    def pdf(self, phi, clamp: bool = False):
        return self.representation.pdf(phi, clamp=clamp)

    def to_dict(self) -> dict:
        out = self.representation.to_dict()
        out["j_max"] = self.j_max
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PhasePosterior":
        j_max = data.get("j_max", DEFAULT_J_MAX)
        if data["type"] == "fourier":
            if len(data["c"]) != data["J"]:
                raise ValueError(f"Fourier payload declares J={data['J']} but has {len(data['c'])} coefficients")
            return cls(FourierPosterior(np.array(data["c"]), np.array(data["s"])), j_max)
        if data["type"] == "vonmises":
            return cls(VonMisesPosterior(data["mu"], data["kappa"]), j_max)
        raise ValueError(f"Unknown posterior type {data['type']!r}")


@dataclass(frozen=True)
class CircularMoment:
    """Circular moment M_j = E[exp(i j phi)]."""

    j: int
    value: complex

    def __post_init__(self):
        if abs(self.value) > 1.0 + 1e-12:
            raise ValueError(f"|M_{self.j}| = {abs(self.value)} exceeds 1")


# -- experiment design --------------------------------------------------------


@dataclass(frozen=True)
class ExperimentParams:
    """Circuit knobs (k, beta) chosen for one round."""

    k: int
    beta: float
    k_max: Optional[int] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"Depth k must be >= 1, got {self.k}")
        if self.k_max is not None and self.k > self.k_max:
            raise ValueError(f"Depth k={self.k} exceeds k_max={self.k_max}")
        object.__setattr__(self, "beta", wrap_angle(self.beta))


@dataclass(frozen=True)
class UtilityCoefficients:
    """Coefficients of the post-measurement first moment and of f+-(beta).

    E[e^{i phi} | m] p(m) = (a_bar + b_bar cos g + c_bar sin g) + i (d_bar + e_bar cos g + f_bar sin g)
    with g = beta - m pi, and f+-(beta) = a +- b cos(beta) +- c sin(beta) + d cos(2 beta) + e sin(2 beta).
    """

    a_bar: float
    b_bar: float
    c_bar: float
    d_bar: float
    e_bar: float
    f_bar: float
    a: float
    b: float
    c: float
    d: float
    e: float

    @classmethod
    def from_bar(cls, a_bar, b_bar, c_bar, d_bar, e_bar, f_bar) -> "UtilityCoefficients":
        return cls(
            a_bar=a_bar,
            b_bar=b_bar,
            c_bar=c_bar,
            d_bar=d_bar,
            e_bar=e_bar,
            f_bar=f_bar,
            a=a_bar**2 + d_bar**2 + 0.5 * (b_bar**2 + c_bar**2 + e_bar**2 + f_bar**2),
            b=2.0 * (a_bar * b_bar + d_bar * e_bar),
            c=2.0 * (a_bar * c_bar + d_bar * f_bar),
            d=0.5 * (b_bar**2 + e_bar**2 - c_bar**2 - f_bar**2),
            e=b_bar * c_bar + e_bar * f_bar,
        )

    def f_pm(self, beta):
        """Return (f+(beta), f-(beta)); vectorized over beta."""
        beta = np.asarray(beta, dtype=float)
        even = self.a + self.d * np.cos(2 * beta) + self.e * np.sin(2 * beta)
        odd = self.b * np.cos(beta) + self.c * np.sin(beta)
        return even + odd, even - odd

    def numerator(self, m: int, beta: float) -> complex:
        g = beta - m * math.pi
        return complex(
            self.a_bar + self.b_bar * math.cos(g) + self.c_bar * math.sin(g),
            self.d_bar + self.e_bar * math.cos(g) + self.f_bar * math.sin(g),
        )


# -- hamiltonian --------------------------------------------------------------


@dataclass(frozen=True)
class SpinHamiltonian:
    """h1 Z1 + h2 Z2 + h3 Y1Y2 + h4 Z1Z2 + h5 I (hartree)."""

    h: Tuple[float, float, float, float, float]
    name: str = "H2"
    r_hh_angstrom: Optional[float] = None

    def __post_init__(self):
        h = tuple(float(x) for x in self.h)
        if len(h) != 5:
            raise ValueError(f"Expected 5 Hamiltonian coefficients, got {len(h)}")
        if not all(math.isfinite(x) for x in h):
            raise ValueError(f"Hamiltonian coefficients must be finite, got {h}")
        object.__setattr__(self, "h", h)


@dataclass(frozen=True)
class TrotterConfig:
    """Lie-Trotter settings: evolution time t, steps s, repetitions k."""

    t: float
    s: int = DEFAULT_S
    k: int = 1

    def __post_init__(self):
        if self.s < 1:
            raise ValueError(f"Trotter steps s must be >= 1, got {self.s}")
        if self.k < 1:
            raise ValueError(f"Repetitions k must be >= 1, got {self.k}")
        if not (math.isfinite(self.t) and abs(self.t) > 0):
            raise ValueError(f"Evolution time t must be finite and nonzero, got {self.t}")


@dataclass(frozen=True, eq=False)
class EigenSolution:
    energies: np.ndarray
    ground_vector: np.ndarray

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])


# -- circuits -----------------------------------------------------------------

PAULI_CHARS = frozenset("XYZ")


def _check_qubits(qubits: Tuple[int, ...]) -> None:
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"Qubits must be distinct, got {qubits}")
    if any(q < 0 or q >= MAX_QUBITS for q in qubits):
        raise ValueError(f"Qubit index out of range in {qubits}")


@dataclass(eq=False)
class StateVector:
    """Dense n-qubit state; qubit 0 is the most significant bit of the index."""

    n_qubits: int
    amplitudes: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (1 <= self.n_qubits <= MAX_QUBITS):
            raise ValueError(f"n_qubits must lie in [1, {MAX_QUBITS}], got {self.n_qubits}")
        if self.amplitudes is None:
            self.amplitudes = np.zeros(2**self.n_qubits, dtype=complex)
            self.amplitudes[0] = 1.0
        else:
            self.amplitudes = np.array(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise ValueError(
                f"Expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, got {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


@dataclass(frozen=True)
class PauliExp:
    """exp(-i theta P / 2) for the Pauli string ``paulis`` on ``qubits``.

    ``n2q`` is the number of native two-qubit gates the rotation compiles to.
    """

    paulis: str
    qubits: Tuple[int, ...]
    theta: float
    n2q: int = 0

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        if not self.paulis or len(self.paulis) != len(self.qubits):
            raise ValueError(
                f"Pauli string {self.paulis!r} must be nonempty and match qubits {self.qubits}"
            )
        if set(self.paulis) - PAULI_CHARS:
            raise ValueError(f"Invalid Pauli string {self.paulis!r}")
        if not math.isfinite(self.theta):
            raise ValueError(f"Rotation angle must be finite, got {self.theta}")
        if self.n2q < 0:
            raise ValueError(f"n2q must be non-negative, got {self.n2q}")
        if self.n2q > 0 and len(self.qubits) < 2:
            raise ValueError(f"A single-qubit rotation cannot cost {self.n2q} two-qubit gates")
        _check_qubits(self.qubits)


@dataclass(frozen=True)
class Clifford1Q:
    name: Literal["X", "Y", "Z", "H", "S", "SDG"]
    qubit: int

    def __post_init__(self):
        if self.name not in ("X", "Y", "Z", "H", "S", "SDG"):
            raise ValueError(f"Unknown single-qubit Clifford {self.name!r}")
        _check_qubits((self.qubit,))

    @property
    def qubits(self) -> Tuple[int, ...]:
        return (self.qubit,)


@dataclass(frozen=True)
class Prep:
    """Prepare a fresh |0> qubit in the +1 eigenstate of ``basis``."""

    qubit: int
    basis: Literal["Z", "X"] = "Z"

    def __post_init__(self):
        if self.basis not in ("Z", "X"):
            raise ValueError(f"Unsupported preparation basis {self.basis!r}")
        _check_qubits((self.qubit,))

    @property
    def qubits(self) -> Tuple[int, ...]:
        return (self.qubit,)


@dataclass(frozen=True)
class Measure:
    qubit: int
    basis: Literal["Z", "X"] = "X"
    target: str = "m"

    def __post_init__(self):
        if self.basis not in ("Z", "X"):
            raise ValueError(f"Unsupported measurement basis {self.basis!r}")
        _check_qubits((self.qubit,))

    @property
    def qubits(self) -> Tuple[int, ...]:
        return (self.qubit,)


@dataclass(frozen=True, eq=False)
class StatePrep:
    """Ideal load of an encoded state; ``n2q`` gates of noise budget follow separately."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        n = int(round(math.log2(amps.size)))
        if 2**n != amps.size:
            raise ValueError(f"State length {amps.size} is not a power of two")
        if abs(np.vdot(amps, amps).real - 1.0) > 1e-10:
            raise ValueError("Prepared state must be normalized")
        object.__setattr__(self, "amplitudes", amps)


@dataclass(frozen=True)
class NoiseBudget:
    """Stand-in for an unreferenced subcircuit: ``n2q`` depolarizing opportunities."""

    n2q: int
    stage: Literal["prep", "syndrome", "final_meas"]

    def __post_init__(self):
        if self.n2q < 0:
            raise ValueError(f"Noise budget must be non-negative, got {self.n2q}")


@dataclass(frozen=True)
class SyndromeCheck:
    """Projective S_X / S_Z readout with conditional exit."""

    stage: Literal["prep", "syndrome"]
    block: Optional[int] = None


@dataclass(frozen=True)
class FinalMeasure:
    """S_Z check followed by destructive X readout of every data qubit."""


GateOp = Union[
    PauliExp, Clifford1Q, Prep, Measure, StatePrep, NoiseBudget, SyndromeCheck, FinalMeasure
]


@dataclass(frozen=True)
class NoiseModel:
    """Two-qubit depolarizing rate, idle Z memory error and rotation bias."""

    p2: float = 0.0
    memory_gamma: float = 0.0
    delta_bar: float = 0.0
    mode: Literal["circuit_level", "global_analytic"] = "circuit_level"

    def __post_init__(self):
        if not (0.0 <= self.p2 <= 1.0):
            raise ValueError(f"p2 must lie in [0, 1], got {self.p2}")
        for name in ("memory_gamma", "delta_bar"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite, got {getattr(self, name)}")
        if self.mode not in NOISE_MODE_OPTS:
            raise ValueError(f"Unknown noise mode {self.mode!r}")

    @property
    def is_coherent_only(self) -> bool:
        """True when every shot follows the same deterministic trajectory."""
        return self.p2 == 0.0 or self.mode == "global_analytic"


@dataclass(frozen=True, eq=False)
class QpeCircuit:
    gates: Tuple[GateOp, ...]
    two_qubit_count: int
    k: int
    beta: float
    t: float
    s: int
    init_kind: str
    n_qubits: int = 3

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits > MAX_QUBITS:
            raise ValueError(f"At most {MAX_QUBITS} qubits are supported, got {self.n_qubits}")
        counted = sum(getattr(g, "n2q", 0) for g in self.gates)
        if counted != self.two_qubit_count:
            raise ValueError(
                f"Gate list holds {counted} two-qubit gates but circuit declares {self.two_qubit_count}"
            )


@dataclass(frozen=True, eq=False)
class EncodedCircuit:
    gates: Tuple[GateOp, ...]
    syndrome_points: Tuple[int, ...]
    exit_points: Tuple[int, ...]
    sx_points: Tuple[int, ...]
    two_qubit_count: int
    f: int
    k: int
    beta: float
    init_kind: str
    n_qubits: int = 6

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        counted = sum(getattr(g, "n2q", 0) for g in self.gates)
        if counted != self.two_qubit_count:
            raise ValueError(
                f"Gate list holds {counted} two-qubit gates but circuit declares {self.two_qubit_count}"
            )

    def gates_through(self, index: int) -> int:
        """Two-qubit gates executed up to and including gate ``index``."""
        return sum(getattr(g, "n2q", 0) for g in self.gates[: index + 1])


@dataclass(frozen=True)
class ShotRecord:
    outcome: Optional[int]
    discarded: bool
    discard_stage: Literal["none", "prep", "syndrome", "final_meas"]
    gates_executed_2q: int
    block: Optional[int] = None

    def __post_init__(self):
        if self.discarded and self.outcome is not None:
            raise ValueError("A discarded shot cannot carry an outcome")
        if not self.discarded and (self.outcome not in (0, 1) or self.discard_stage != "none"):
            raise ValueError("An accepted shot needs an outcome bit and discard_stage 'none'")
        if self.gates_executed_2q < 0:
            raise ValueError(f"gates_executed_2q must be non-negative, got {self.gates_executed_2q}")

    def to_dict(self, k: Optional[int] = None, beta: Optional[float] = None) -> dict:
        return {
            "m": self.outcome,
            "discarded": self.discarded,
            "stage": self.discard_stage if self.block is None else f"{self.discard_stage}:{self.block}",
            "g2q": self.gates_executed_2q,
            "k": k,
            "beta": beta,
        }


# -- calibration --------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationPoint:
    k: int
    beta: float
    n0: int
    n_shots: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"Depth k must be >= 1, got {self.k}")
        if not (0 <= self.n0 <= self.n_shots):
            raise ValueError(f"Need 0 <= n0 <= n_shots, got n0={self.n0}, n_shots={self.n_shots}")


@dataclass(frozen=True)
class FitResult:
    k: int
    q: float
    omega: float
    stderr_q: float
    stderr_omega: float
    clamped: bool = False
    iterations: int = 0

    def __post_init__(self):
        check_q(self.q)
        if self.stderr_q < 0 or self.stderr_omega < 0:
            raise ValueError("Standard errors must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


# -- runs ---------------------------------------------------------------------


@dataclass
class RunConfig:
    """Everything a CLI or UI run needs; defaults follow the published setup."""

    mode: str = "unencoded"
    hamiltonian: Optional[str] = None
    t: float = DEFAULT_T
    s: int = DEFAULT_S
    f: int = DEFAULT_SYNDROME_FREQUENCY
    j_max: int = DEFAULT_J_MAX
    k_max: int = DEFAULT_K_MAX
    p2: float = DEFAULT_P2
    delta_bar: float = 0.0
    memory_gamma: float = 0.0
    noise_mode: str = "circuit_level"
    t_split: Optional[Tuple[float, float]] = None
    selection: str = "optimal"
    representation: str = "adaptive"
    max_updates: Optional[int] = None
    holevo_std_threshold: Optional[float] = None
    seed: int = 0
    init_kind: Optional[str] = None
    q: float = 0.0
    encoded_q: float = 0.0
    sx_insertion: bool = True
    attempt_cap: int = DEFAULT_ATTEMPT_CAP
    calibration_ks: Tuple[int, ...] = CALIBRATION_KS
    calibration_shots: int = CALIBRATION_SHOTS
    t_split_sweep: Tuple[Tuple[float, float], ...] = ()
    n_phases: int = DEFAULT_SYNTHETIC_PHASES

    def __post_init__(self):
        """Validate every field; raises ConfigError naming the field."""
        if self.mode not in MODE_OPTS:
            raise ConfigError(f"mode must be one of {MODE_OPTS}, got {self.mode!r}")
        if self.selection not in SELECTION_OPTS:
            raise ConfigError(f"selection must be one of {SELECTION_OPTS}, got {self.selection!r}")
        if self.representation not in REPRESENTATION_OPTS:
            raise ConfigError(
                f"representation must be one of {REPRESENTATION_OPTS}, got {self.representation!r}"
            )
        if self.init_kind is not None and self.init_kind not in INIT_KIND_OPTS:
            raise ConfigError(f"init_kind must be one of {INIT_KIND_OPTS}, got {self.init_kind!r}")
        if self.noise_mode not in NOISE_MODE_OPTS:
            raise ConfigError(f"noise_mode must be one of {NOISE_MODE_OPTS}, got {self.noise_mode!r}")
        if not (math.isfinite(self.t) and self.t != 0):
            raise ConfigError(f"t must be finite and nonzero, got {self.t}")
        for name in ("s", "f", "j_max", "k_max", "attempt_cap", "calibration_shots", "n_phases"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("p2", "q", "encoded_q"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        for name in ("delta_bar", "memory_gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite, got {getattr(self, name)}")
        if self.max_updates is not None and self.max_updates < 0:
            raise ConfigError(f"max_updates must be non-negative, got {self.max_updates}")
        if self.holevo_std_threshold is not None and self.holevo_std_threshold <= 0:
            raise ConfigError(
                f"holevo_std_threshold must be positive, got {self.holevo_std_threshold}"
            )
        if self.t_split is not None:
            self.t_split = tuple(float(x) for x in self.t_split)
            if len(self.t_split) != 2:
                raise ConfigError(f"t_split must be a pair, got {self.t_split}")
        self.calibration_ks = tuple(int(k) for k in self.calibration_ks)
        if not self.calibration_ks or min(self.calibration_ks) < 1:
            raise ConfigError(f"calibration_ks must be positive integers, got {self.calibration_ks}")
        self.t_split_sweep = tuple(tuple(float(x) for x in pair) for pair in self.t_split_sweep)
        if any(len(pair) != 2 for pair in self.t_split_sweep):
            raise ConfigError(f"t_split_sweep entries must be pairs, got {self.t_split_sweep}")

    @property
    def resolved_init_kind(self) -> str:
        """Calibration defaults to the exact eigenstate, runs to Hartree-Fock."""
        if self.init_kind is not None:
            return self.init_kind
        return "exact_eigenstate" if self.mode == "calibrate" else "hartree_fock"

    @property
    def resolved_max_updates(self) -> int:
        if self.max_updates is not None:
            return self.max_updates
        return DEFAULT_MAX_UPDATES[self.mode]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"Cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"Config {path} must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RoundRecord:
    """One Bayesian update."""

    r: int
    k: int
    beta: float
    m: int
    q_used: float
    representation: str
    J: Optional[int]
    m1_real: float
    m1_imag: float
    var_c: float
    var_h: float
    energy: Optional[float] = None
    energy_stderr: Optional[float] = None
    n_attempts: int = 1
    gates_2q_executed: int = 0
    gates_2q_scheduled: int = 0
    converted: bool = False
    cosine_distance: Optional[float] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("var_h", "energy", "energy_stderr"):
            value = out[key]
            if value is not None and not math.isfinite(value):
                out[key] = None
        return out


@dataclass
class RunLog:
    """Ordered round records of a run plus run-level totals."""

    config: Dict
    records: List[RoundRecord] = field(default_factory=list)
    stop_reason: str = "max_updates"
    rescaled_R: Optional[float] = None
    posterior: Optional[Dict] = None

    def append(self, record: RoundRecord) -> None:
        if self.records and record.r != self.records[-1].r + 1:
            raise ValueError(
                f"Round index must increase by one, got {record.r} after {self.records[-1].r}"
            )
        self.records.append(record)

    @property
    def R(self) -> int:
        return len(self.records)

    @property
    def conversion_round(self) -> Optional[int]:
        for record in self.records:
            if record.converted:
                return record.r
        return None

    @property
    def total_attempts(self) -> int:
        return sum(record.n_attempts for record in self.records)

    @property
    def total_gates_executed(self) -> int:
        return sum(record.gates_2q_executed for record in self.records)

    @property
    def accumulated_exit_ratio(self) -> Optional[float]:
        scheduled = sum(record.gates_2q_scheduled for record in self.records)
        if scheduled == 0:
            return None
        return self.total_gates_executed / scheduled

    def get_summary(self) -> dict:
        """Get a summary of the run for inspection and the summary JSON."""
        last = self.records[-1] if self.records else None
        return {
            "mode": self.config.get("mode"),
            "seed": self.config.get("seed"),
            "R": self.R,
            "R_bar": self.rescaled_R,
            "discards": self.total_attempts - self.R,
            "total_attempts": self.total_attempts,
            "total_2q_gates": self.total_gates_executed,
            "accumulated_exit_ratio": self.accumulated_exit_ratio,
            "conversion_round": self.conversion_round,
            "stop_reason": self.stop_reason,
            "final_energy": last.energy if last else None,
            "final_energy_stderr": (
                last.energy_stderr
                if last and last.energy_stderr is not None and math.isfinite(last.energy_stderr)
                else None
            ),
            "final_var_h": last.var_h if last and math.isfinite(last.var_h) else None,
            "posterior": self.posterior,
        }
