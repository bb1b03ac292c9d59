"""Gate-route tests: elementary rotations, Stark phase gate, SWAP/CNOT
composites, and the compiled cluster round."""

import numpy as np
import pytest

from seqphoton import gates, mps
from seqphoton.gates import (DIM, IDX_0, IDX_Q, IDX_R, IDX_RQ, IDX_QQ,
                             StarkPulseSpec)


def test_x_two_pi_is_minus_identity_on_qubit_sector():
    U = gates.rotation("X", 2 * np.pi).matrix
    assert np.allclose(U[:4, :4], -np.eye(4), atol=1e-12)


def test_z_matches_xy_composite_on_qubit_blocks():
    theta = 0.7343
    Z = gates.rotation("Z", theta).matrix
    comp = (gates.rotation("X", -np.pi / 2).matrix
            @ gates.rotation("Y", theta).matrix
            @ gates.rotation("X", np.pi / 2).matrix)
    assert np.allclose(Z[:4, :4], comp[:4, :4], atol=1e-12)
    # diagonal phase rotation on the |1_r> rows
    assert abs(Z[IDX_R, IDX_R] - np.exp(-1j * theta / 2)) < 1e-12


def test_xq_pi_is_exchange_pulse():
    U = gates.rotation("Xq", np.pi).matrix
    assert abs(U[IDX_Q, IDX_R] + 1j) < 1e-12
    assert abs(U[IDX_R, IDX_Q] + 1j) < 1e-12


def test_rotations_unitary():
    rng = np.random.default_rng(7)
    for axis in ("X", "Y", "Z", "Xq", "Yq"):
        theta = float(rng.uniform(-np.pi, np.pi))
        gates.rotation(axis, theta)  # GateOp validates unitarity


def test_stark_phase_gate_values():
    assert np.allclose(gates.stark_phase_gate(0.0).matrix, np.eye(DIM))
    S = gates.stark_phase_gate(np.pi / 2).matrix
    assert np.allclose(np.diag(S), [1, -1j, 1j, -1, -1], atol=1e-12)


def test_stark_residual_error_magnitude():
    spec = StarkPulseSpec(omega=0.05, delta=1.0, theta=np.pi / 2)
    err = gates.stark_residual_error(spec)
    expected = spec.omega ** 2 / (2 * spec.delta ** 2)
    assert expected / 2 < err < expected * 2


def test_stark_residual_scaling_slope():
    ratios = np.array([10.0, 20.0, 40.0, 80.0])
    errs = [gates.stark_residual_error(StarkPulseSpec(1.0, r, np.pi / 2))
            for r in ratios]
    slope = np.polyfit(np.log(ratios), np.log(errs), 1)[0]
    assert abs(slope + 2.0) < 0.1


def test_stark_spec_warns_outside_dispersive_regime():
    with pytest.warns(UserWarning):
        StarkPulseSpec(omega=1.0, delta=3.0, theta=0.1)


def test_swap_action_and_leakage():
    S = gates.compose_swap()
    assert gates.leakage(S) <= 1e-12
    M = S.matrix
    assert abs(abs(M[IDX_Q, IDX_R]) - 1.0) < 1e-12
    assert abs(abs(M[IDX_R, IDX_Q]) - 1.0) < 1e-12
    for i in (IDX_0, IDX_RQ, IDX_QQ):
        assert abs(abs(M[i, i]) - 1.0) < 1e-12


def _makhlin_invariants(U4):
    Q = np.array([[1, 0, 0, 1j], [0, 1j, 1, 0],
                  [0, 1j, -1, 0], [1, 0, 0, -1j]]) / np.sqrt(2)
    m = (Q.conj().T @ U4 @ Q)
    m = m.T @ m
    det = np.linalg.det(U4)
    return np.trace(m) ** 2 / (16 * det), \
        (np.trace(m) ** 2 - np.trace(m @ m)) / (4 * det)


def test_cnot_block_unitary_and_locally_equivalent_to_cnot():
    C = gates.compose_cnot()
    assert gates.leakage(C) <= 1e-12
    U4 = C.matrix[:4, :4]
    assert np.abs(U4.conj().T @ U4 - np.eye(4)).max() < 1e-12
    g1, g2 = _makhlin_invariants(U4)
    assert abs(g1) < 1e-10
    assert abs(g2 - 1.0) < 1e-10


def test_compiled_round_matches_cluster_isometry():
    seq = gates.compile_cluster_round()
    V = gates.round_isometry(seq)
    target = mps.CLUSTER_INTERIOR.reshape(4, 2)
    phase = V[0, 0] / target[0, 0]
    assert abs(abs(phase) - 1.0) < 1e-12
    assert np.abs(V - phase * target).max() < 1e-9


def test_raman_swap_map():
    V = gates.raman_swap_unitary(2)
    # |0> -> photon 0, |1_q> -> photon 1 (|1_l>), ancilla reset
    assert V[0, 0] == 1.0 and V[2, 1] == 1.0
    assert np.abs(V).sum() == 2.0


def test_three_compiled_rounds_reproduce_cluster3():
    V = gates.round_isometry(gates.compile_cluster_round())
    rounds = [V, V, gates.raman_swap_unitary(2)]
    psi, norm = mps.ideal_sequential_simulate(
        rounds, np.array([1.0, 1.0]) / np.sqrt(2.0), np.array([1.0, 0.0]))
    assert abs(norm - 1.0) < 1e-10
    target = mps.dense_state(mps.build_cluster(3))
    assert mps.state_fidelity(psi, target) >= 1.0 - 1e-8


def test_export_sequence(tmp_path):
    seq = gates.compile_cluster_round()
    path = tmp_path / "round.txt"
    gates.export_sequence(seq, path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == len(seq)
    assert lines[0].split()[0] == gates.L_L_PI
