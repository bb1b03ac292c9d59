"""Gate route to source unitaries on the five-state space
{|0>, |1_r>, |1_q>, |1_r 1_q>, |2_q>}.

The first four states form H_mid (a q-ancilla qubit times an r-emitter
qubit); |2_q> is the leakage level reached only through the bosonic sqrt(2)
matrix element of the r<->q drive.  The AC-Stark phase gate S_T exploits the
doubled light shift of the |1_r 1_q> <-> |2_q> pair to imprint
anti-symmetric phases without population transfer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

DIM = 5
IDX_0, IDX_R, IDX_Q, IDX_RQ, IDX_QQ = range(DIM)

# sigma_x / sigma_y on the r-emitter qubit, acting within the q blocks
_SX = np.zeros((DIM, DIM), dtype=complex)
_SX[IDX_0, IDX_R] = _SX[IDX_R, IDX_0] = 1.0
_SX[IDX_Q, IDX_RQ] = _SX[IDX_RQ, IDX_Q] = 1.0

_SY = np.zeros((DIM, DIM), dtype=complex)
_SY[IDX_0, IDX_R] = -1.0j
_SY[IDX_R, IDX_0] = 1.0j
_SY[IDX_Q, IDX_RQ] = -1.0j
_SY[IDX_RQ, IDX_Q] = 1.0j

# a_q sigma_r^dag + h.c.: r<->q exchange with bosonic sqrt(2) on the
# |1_r 1_q> <-> |2_q> pair
_GXQ = np.zeros((DIM, DIM), dtype=complex)
_GXQ[IDX_R, IDX_Q] = _GXQ[IDX_Q, IDX_R] = 1.0
_GXQ[IDX_RQ, IDX_QQ] = _GXQ[IDX_QQ, IDX_RQ] = np.sqrt(2.0)

# a_q^dag sigma_r - a_q sigma_r^dag (anti-Hermitian, real)
_GYQ = np.zeros((DIM, DIM), dtype=complex)
_GYQ[IDX_Q, IDX_R] = 1.0
_GYQ[IDX_R, IDX_Q] = -1.0
_GYQ[IDX_QQ, IDX_RQ] = np.sqrt(2.0)
_GYQ[IDX_RQ, IDX_QQ] = -np.sqrt(2.0)

N_R = np.diag([0.0, 1.0, 0.0, 1.0, 0.0]).astype(complex)
N_Q = np.diag([0.0, 0.0, 1.0, 1.0, 2.0]).astype(complex)


@dataclass(frozen=True)
class GateOp:
    name: str
    theta: float
    matrix: np.ndarray

    def __post_init__(self):
        dev = np.abs(self.matrix.conj().T @ self.matrix - np.eye(DIM)).max()
        if dev > 1e-12:
            raise ValueError(f"gate {self.name} not unitary (dev {dev:.2e})")


def rotation(axis: str, theta: float) -> GateOp:
    """Elementary rotations: X/Y/Z act on the r-emitter qubit; Xq/Yq exchange
    r and q quanta (with leakage-level sqrt(2)).

    Z is the free light-shift phase exp(i theta (1 - 2 n_r) / 2); on the qubit
    blocks it equals the composite X(-pi/2) Y(theta) X(pi/2), but it also
    phases |2_q> with the r = 0 states.  That extension is what makes the
    exchange composites close without leakage.
    """
    if axis == "X":
        mat = expm(-1j * theta / 2.0 * _SX)
    elif axis == "Y":
        mat = expm(-1j * theta / 2.0 * _SY)
    elif axis == "Z":
        n_r = np.real(np.diag(N_R))
        mat = np.diag(np.exp(1j * theta / 2.0 * (1.0 - 2.0 * n_r)))
    elif axis == "Xq":
        mat = expm(-1j * theta / 2.0 * _GXQ)
    elif axis == "Yq":
        mat = expm(theta / 2.0 * _GYQ)
    else:
        raise ValueError(f"unknown axis {axis}")
    return GateOp(axis, theta, mat)


def stark_phase_gate(theta: float) -> GateOp:
    """Ideal AC-Stark phase gate S_T(theta)."""
    mat = np.diag(np.exp(1j * theta * np.array([0.0, -1.0, 1.0, -2.0, 2.0])))
    return GateOp("S_T", theta, mat)


@dataclass(frozen=True)
class StarkPulseSpec:
    omega: float      # Rabi amplitude of the detuned r<->q drive
    delta: float      # detuning, >> omega
    theta: float      # target phase

    @property
    def duration(self) -> float:
        return 4.0 * self.delta * self.theta / self.omega ** 2

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.delta / self.omega < 5:
            import warnings
            warnings.warn("Stark gate outside the dispersive regime (delta/omega < 5)")


def stark_hamiltonian(spec: StarkPulseSpec) -> np.ndarray:
    """Detuned r<->q drive in the drive frame: the Rydberg level sits at
    -delta so the dressed pair acquires the +-omega^2/4delta light shifts."""
    return 0.5 * spec.omega * _GXQ - spec.delta * N_R


def simulate_stark(spec: StarkPulseSpec, t: float | None = None) -> np.ndarray:
    """Propagator of the finite-detuning Stark pulse at time t (default: the
    nominal duration 4*delta*theta/omega^2)."""
    if t is None:
        t = spec.duration
    return expm(-1j * stark_hamiltonian(spec) * t)


def stark_residual_error(spec: StarkPulseSpec, n_samples: int = 400) -> float:
    """Pulse-averaged residual population transfer out of |1_r>.

    For the dispersive two-level pair this averages to
    omega^2 / 2(omega^2 + delta^2) ~ omega^2 / (2 delta^2).
    """
    H = stark_hamiltonian(spec)
    evals, evecs = np.linalg.eigh(H)
    ts = (np.arange(n_samples) + 0.5) / n_samples * spec.duration
    phases = np.exp(-1j * np.outer(ts, evals))  # (n_samples, DIM)
    # U(t)[q, r] = sum_k evecs[q,k] e^{-i E_k t} conj(evecs[r,k])
    amps = (phases * (evecs[IDX_Q] * evecs[IDX_R].conj())[None, :]).sum(axis=1)
    return float(np.mean(np.abs(amps) ** 2))


def compose(ops: list[GateOp], name: str = "composite") -> GateOp:
    """Product of a gate list, leftmost applied last (operator order)."""
    mat = np.eye(DIM, dtype=complex)
    for op in ops:
        mat = mat @ op.matrix
    theta = float("nan")
    return GateOp(name, theta, mat)


# Operator order (leftmost applied last).  The exchange pulses are
# quarter-rotations of the single-quantum pair, i.e. Xq/Yq at pi/2 in the
# half-angle convention of rotation().
SWAP_SEQUENCE = (
    ("Yq", -np.pi / 2), ("Z", np.pi / 2), ("S_T", np.pi / 2),
    ("Xq", np.pi / 2), ("S_T", -np.pi / 2), ("Z", -np.pi / 2),
)

CNOT_SEQUENCE = (
    ("X", 5 * np.pi / 16), ("Z", np.pi / 2), ("S_T", np.pi / 2),
    ("X", 3 * np.pi / 16),
)


def _build_sequence(seq) -> list[GateOp]:
    ops = []
    for name, theta in seq:
        if name == "S_T":
            ops.append(stark_phase_gate(theta))
        else:
            ops.append(rotation(name, theta))
    return ops


def compose_swap() -> GateOp:
    return compose(_build_sequence(SWAP_SEQUENCE), "SWAP")


def compose_cnot() -> GateOp:
    return compose(_build_sequence(CNOT_SEQUENCE), "CNOT")


def leakage(op: GateOp) -> float:
    """Max population transfer between H_mid and the |2_q> level."""
    col = np.abs(op.matrix[IDX_QQ, :IDX_QQ]).max()
    row = np.abs(op.matrix[:IDX_QQ, IDX_QQ]).max()
    return float(max(col, row))


# Compiled cluster-state round ----------------------------------------------
#
# One interior round must implement the isometry
#     V^0 = [[1, 0], [1, 0]]/sqrt(2),  V^1 = [[0, 1], [0, -1]]/sqrt(2)
# on (photon j, bond beta) from the ancilla alpha, which factors as
# H_q . CNOT(q -> r) on the (q, r) register.  CNOT(q -> r) = H_r CZ H_r with
# CZ assembled from the three available diagonal phases (Z on r, Z on q via
# SWAP conjugation, S_T); H_q is the SWAP-conjugated H_r; a final diagonal
# layer absorbs the conjugation phase twists and the -i per quantum of the
# closing l-transfer pulse.

L_L_PI = "L_l_pi"  # l <-> r transfer pulse, outside the five-state space


def _seq(entries) -> list[GateOp]:
    return _build_sequence(entries)


def _swap_entries(inverse: bool = False):
    seq = SWAP_SEQUENCE
    if inverse:
        seq = tuple((name, -theta) for name, theta in reversed(seq))
    return seq


def _z_on_q(theta: float):
    """Z rotation of the q ancilla: SWAP . Z(theta) . SWAP^-1 as a gate list."""
    return (_swap_entries() + (("Z", theta),) + _swap_entries(inverse=True))


_HADAMARD_R = (("X", np.pi), ("Y", np.pi / 2))  # = -i H on the r qubit


def compile_cluster_round() -> list[GateOp]:
    """Gate sequence for one interior cluster round, in operator order
    (leftmost applied last), bracketed by the l-transfer pulses.

    The opening pulse moves any emitter population l -> r (trivial at round
    start), the interior acts on the (q, r) register, and the closing pulse
    moves r -> l for emission.  `round_isometry` verifies the realized map.
    """
    cz = (("Z", np.pi / 2),) + _z_on_q(-np.pi / 2) + (("S_T", -np.pi / 2),)
    cnot_qr = _HADAMARD_R + cz + _HADAMARD_R
    h_q = _swap_entries() + _HADAMARD_R + _swap_entries(inverse=True)
    correction = ((("Z", -np.pi),) + _z_on_q(-np.pi / 2)
                  + (("S_T", np.pi / 2),))
    interior = _seq(correction + h_q + cnot_qr)
    bracket = GateOp(L_L_PI, np.pi, np.eye(DIM, dtype=complex))
    return [bracket] + interior + [bracket]


# (photon j, bond beta) -> five-state index, and the ancilla input columns
_ROUND_ROWS = ((0, IDX_0), (0, IDX_Q), (1, IDX_R), (1, IDX_RQ))
_ROUND_COLS = (IDX_0, IDX_Q)


def round_isometry(gates: list[GateOp]) -> np.ndarray:
    """Realized (d*D, D) = (4, 2) round map of a compiled sequence,
    including the -i per quantum of the closing l-transfer pulse.

    Rows are (photon index major, bond index minor); any global phase is
    part of the returned matrix.
    """
    mat = np.eye(DIM, dtype=complex)
    for op in gates:
        if op.name == L_L_PI:
            continue
        mat = mat @ op.matrix
    V = np.empty((4, 2), dtype=complex)
    for row, (j, state) in enumerate(_ROUND_ROWS):
        for col, alpha in enumerate(_ROUND_COLS):
            V[row, col] = (-1j) ** j * mat[state, alpha]
    return V


def raman_swap_unitary(d: int) -> np.ndarray:
    """Final-round map: the two-photon Raman pi-pulse transfers the ancilla
    value to the emitted quantum and resets the ancilla, |j_q> -> |j_l> |0_q>.

    Returned as the (d*D, D) isometry with D = d, rows (photon major,
    bond minor): V[(j, 0), alpha] = delta_{j alpha}.
    """
    if d < 2:
        raise ValueError("d >= 2 required")
    V = np.zeros((d * d, d), dtype=complex)
    for j in range(d):
        V[j * d + 0, j] = 1.0
    return V


def export_sequence(ops, path) -> None:
    """Ordered text lines 'name theta' (operator order, leftmost first)."""
    with open(path, "w") as fh:
        for op in ops:
            fh.write(f"{op.name} {op.theta:.17g}\n")
