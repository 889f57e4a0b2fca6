import math

# Hamiltonian (hartree), qubit 1 is the leftmost tensor factor
H2_COEFFICIENTS = (-0.3980, -0.3980, -0.1809, 0.0112, -0.3322)
H2_TERMS = ("Z1", "Z2", "Y1Y2", "Z1Z2", "I")
H2_DATASET = "h2_sto3g.json"
EXACT_STATE_ALPHA_HALFTURNS = -0.07113

# Evolution defaults
DEFAULT_T = 0.1 * math.pi
DEFAULT_S = 1
DEFAULT_T_SPLIT = (-0.05 * math.pi, 0.25 * math.pi)

# Posterior / design
DEFAULT_J_MAX = 2000
DEFAULT_K_MAX = 120
VON_MISES_K_WINDOW = 5
HEURISTIC_K_FACTOR = 1.25
KAPPA_RTOL = 1e-10
GRID_POINTS = 4096
HOLEVO_UNBOUNDED = math.inf

# Noise
DEFAULT_P2 = 1.6e-3
MAX_QUBITS = 12

# Iceberg code
DEFAULT_SYNDROME_FREQUENCY = 8
PREP_BUDGET = {"hartree_fock": 9, "exact_eigenstate": 14}
SYNDROME_BUDGET = 12
FINAL_BUDGET = 8
CTRL_V_ENCODED_BUDGET = 3

# Calibration
CALIBRATION_KS = (20, 40, 60, 80, 100)
CALIBRATION_SHOTS = 500
FIT_GRID = 64
FIT_OMEGA_RANGE = (-0.05, 0.05)

# Runs
DEFAULT_ATTEMPT_CAP = 200
DEFAULT_MAX_UPDATES = {"synthetic": 150, "unencoded": 125, "encoded": 44, "calibrate": 0}
DEFAULT_SYNTHETIC_PHASES = 100
SNAPSHOT_ROUNDS = 5

MODE_OPTS = ["synthetic", "unencoded", "encoded", "calibrate"]
SELECTION_OPTS = ["optimal", "heuristic"]
REPRESENTATION_OPTS = ["adaptive", "fourier_only", "vonmises_only"]
INIT_KIND_OPTS = ["hartree_fock", "exact_eigenstate"]
NOISE_MODE_OPTS = ["circuit_level", "global_analytic"]
FIGURE_OPTS = ["fig2", "fig3", "fig4", "fig5", "figA1", "figA2"]

# synthetic comparison arms: (representation, selection)
SYNTHETIC_ARMS = {
    "vonmises_heuristic": ("vonmises_only", "heuristic"),
    "fourier_heuristic": ("fourier_only", "heuristic"),
    "adaptive_optimal": ("adaptive", "optimal"),
}
