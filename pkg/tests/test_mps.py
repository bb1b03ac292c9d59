"""MPS core tests: isometry checks, amplitudes, example families, and the
ideal sequential protocol oracle."""

import numpy as np
import pytest

from seqphoton import mps


def test_cluster_isometry_deviation():
    assert mps.isometry_check(mps.build_cluster(5)) <= 1e-15


def test_identity_over_sqrt2_is_isometry():
    V = np.stack([np.eye(2), np.eye(2)]) / np.sqrt(2.0)
    m = mps.MatrixProductState(1, 2, 2, (V.astype(complex),),
                               np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    assert mps.isometry_check(m) <= 1e-15


def test_random_tensors_flagged():
    rng = np.random.default_rng(3)
    V = rng.normal(size=(2, 3, 3)) + 1j * rng.normal(size=(2, 3, 3))
    m = mps.MatrixProductState(1, 2, 3, (V,), np.eye(3)[0].astype(complex),
                               np.eye(3)[0].astype(complex))
    assert mps.isometry_check(m) > 0.1


def test_ghz_amplitudes():
    g = mps.build_ghz(3, 2)
    assert abs(mps.amplitude(g, "000") - 1 / np.sqrt(2)) < 1e-12
    assert abs(mps.amplitude(g, "010")) < 1e-15
    g43 = mps.build_ghz(4, 3)
    assert abs(mps.amplitude(g43, "2222") - 1 / np.sqrt(3)) < 1e-12
    assert mps.isometry_check(g43) <= 1e-12


def test_cluster2_amplitude_pattern():
    c = mps.build_cluster(2)
    amps = np.array([mps.amplitude(c, f"{a}{b}")
                     for a in (0, 1) for b in (0, 1)])
    assert np.allclose(amps, np.array([1, 1, 1, -1]) / 2.0, atol=1e-12)


def _cz_circuit_cluster(n: int) -> np.ndarray:
    """Oracle: |+>^n with CZ on neighboring pairs, qubit 1 slowest."""
    psi = np.ones(2 ** n, dtype=complex) / 2 ** (n / 2)
    for k in range(n - 1):
        for idx in range(2 ** n):
            bits = (idx >> (n - 1 - k)) & 1, (idx >> (n - 2 - k)) & 1
            if bits == (1, 1):
                psi[idx] = -psi[idx]
    return psi


def test_cluster3_matches_cz_circuit():
    dense = mps.dense_state(mps.build_cluster(3))
    assert mps.state_fidelity(dense, _cz_circuit_cluster(3)) >= 1 - 1e-12


def test_amplitude_digit_range():
    c = mps.build_cluster(2)
    with pytest.raises(ValueError):
        mps.amplitude(c, "02")


def test_sequential_cluster_protocol():
    c = mps.build_cluster(3)
    psi, norm = mps.ideal_sequential_simulate(c.tensors, c.phi_I, c.phi_F)
    assert abs(norm - 1.0) < 1e-10
    assert mps.state_fidelity(psi, mps.dense_state(c)) >= 1 - 1e-10


def test_sequential_ghz_protocol():
    g = mps.build_ghz(4, 3)
    psi, norm = mps.ideal_sequential_simulate(g.tensors, g.phi_I, g.phi_F, d=3)
    assert abs(norm - 1.0) < 1e-12
    target = mps.dense_state(g)
    assert np.abs(psi - target).max() < 1e-12


def test_sequential_identity_round_gives_vacuum_photon():
    V = np.zeros((2, 2, 2), dtype=complex)
    V[0] = np.eye(2)  # no emission: photon stays |0>
    phi = np.array([1.0, 0.0], dtype=complex)
    psi, norm = mps.ideal_sequential_simulate([V], phi, phi)
    assert abs(norm - 1.0) < 1e-12
    assert abs(psi[0] - 1.0) < 1e-12 and abs(psi[1]) < 1e-15


def test_sequential_rejects_non_isometry():
    V = np.zeros((2, 2, 2), dtype=complex)
    V[0] = 0.5 * np.eye(2)
    phi = np.array([1.0, 0.0], dtype=complex)
    with pytest.raises(ValueError):
        mps.ideal_sequential_simulate([V], phi, phi)


def _ghz1_branch():
    """(|0000> - |1111>)/sqrt(2) as interior+final tensors."""
    g = mps.build_ghz(4, 2)
    phi_I = np.array([1.0, -1.0], dtype=complex) / np.sqrt(2.0)
    return list(g.tensors), (phi_I, g.phi_F)


def _ghz2_branch():
    """(|0011> + |1100>)/sqrt(2): last two sites emit the flipped bond."""
    interior = mps.ghz_interior_tensor(2)
    flipped = interior[::-1].copy()  # V^j selects bond 1-j
    final = np.zeros((2, 2, 2), dtype=complex)
    final[0, 0, 1] = 1.0
    final[1, 0, 0] = 1.0
    phi_I = np.full(2, 1 / np.sqrt(2.0), dtype=complex)
    phi_F = np.array([1.0, 0.0], dtype=complex)
    return [interior, interior, flipped, final], (phi_I, phi_F)


def test_superposed_ghz_branches():
    maps1, b1 = _ghz1_branch()
    maps2, b2 = _ghz2_branch()
    alphas = np.array([1.0, 1.0]) / np.sqrt(2.0)
    joint = mps.superposed_simulate([maps1, maps2], alphas, [b1, b2], d=2)
    target = np.zeros(32, dtype=complex)
    target[0b0000] = 0.5
    target[0b1111] = -0.5
    target[16 + 0b0011] = 0.5
    target[16 + 0b1100] = 0.5
    assert mps.state_fidelity(joint, target) >= 1 - 1e-12
    # Born rule on the m-ancilla
    probs = np.abs(joint.reshape(2, 16)) ** 2
    assert np.allclose(probs.sum(axis=1), [0.5, 0.5], atol=1e-12)


def test_amplitude_linearity():
    rng = np.random.default_rng(11)
    c = mps.build_cluster(3)
    base = mps.amplitude(c, "101")
    eps = 1e-6
    pert = rng.normal(size=(2, 2, 2))
    tensors = list(c.tensors)
    tensors[1] = tensors[1] + eps * pert
    m2 = mps.MatrixProductState(3, 2, 2, tuple(tensors), c.phi_I, c.phi_F)
    lin = (mps.amplitude(m2, "101") - base) / eps
    tensors[1] = c.tensors[1] + 2 * eps * pert
    m3 = mps.MatrixProductState(3, 2, 2, tuple(tensors), c.phi_I, c.phi_F)
    lin2 = (mps.amplitude(m3, "101") - base) / (2 * eps)
    assert abs(lin - lin2) < 1e-9


def test_isometry_target_validation():
    V = mps.CLUSTER_INTERIOR.reshape(4, 2)
    t = mps.IsometryTarget(V, (0, 2, 1, 3))
    assert t.d == 2 and t.D == 2
    with pytest.raises(ValueError):
        mps.IsometryTarget(V * 0.5, (0, 2, 1, 3))
    with pytest.raises(ValueError):
        mps.IsometryTarget(V, (0, 0, 1, 3))


def test_save_load_roundtrip(tmp_path):
    g = mps.build_ghz(3, 3)
    path = tmp_path / "ghz.txt"
    mps.save_mps(g, path)
    g2 = mps.load_mps(path)
    assert g2.n == g.n and g2.d == g.d and g2.D == g.D
    for a, b in zip(g.tensors, g2.tensors):
        assert np.array_equal(a, b)
    assert np.array_equal(g.phi_I, g2.phi_I)
