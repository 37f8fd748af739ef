from __future__ import annotations

import json
import math

import numpy as np
import pytest

from dicert.linalg import kron, partial_trace
from dicert.quantum import (I2, SX, DensityMatrix, KrausChannel, PureState, apply_channel, choi_fidelity,
                            choi_state, cnot, cu_phi, depolarizing, diamond_bound, dumps, gate_label_angle,
                            matrix_from_json, matrix_to_json, overlap, phi_plus, random_density, random_unitary,
                            reorder, uhlmann_fidelity, white_noise_state, xi_state)

KET0 = np.array([1.0, 0.0])
KET1 = np.array([0.0, 1.0])


def _proj(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def test_fidelity_examples():
    rho = random_density(3, np.random.default_rng(0))
    assert uhlmann_fidelity(rho, rho) == pytest.approx(1.0, abs=1e-9)
    assert uhlmann_fidelity(_proj(KET0), _proj(KET1)) == pytest.approx(0.0, abs=1e-9)
    assert uhlmann_fidelity(_proj(KET0), I2 / 2) == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_fidelity_symmetric_and_dimension_checked():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = random_density(4, rng), random_density(4, rng, rank=2)
        assert uhlmann_fidelity(a, b) == pytest.approx(uhlmann_fidelity(b, a), abs=1e-9)
    with pytest.raises(ValueError, match="dimension"):
        uhlmann_fidelity(np.eye(2) / 2, np.eye(4) / 4)


def test_overlap_examples():
    pure = _proj(phi_plus().amplitudes)
    assert overlap(pure, pure) == pytest.approx(1.0)
    assert overlap(I2 / 2, partial_trace(pure, [2, 2], [0])) == pytest.approx(0.5)
    assert overlap(np.eye(4) / 4, pure) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        overlap(I2 / 2, pure)


def test_lemma_fidelity_overlap():
    """F >= sqrt(Tr rho sigma), with equality when either state is pure."""
    rng = np.random.default_rng(2)
    for _ in range(50):
        a, b = random_density(4, rng), random_density(4, rng)
        assert uhlmann_fidelity(a, b) >= math.sqrt(overlap(a, b)) - 1e-12
        p = random_density(4, rng, rank=1)
        assert uhlmann_fidelity(a, p) == pytest.approx(math.sqrt(overlap(a, p)), abs=1e-9)
        assert uhlmann_fidelity(p, a) == pytest.approx(math.sqrt(overlap(p, a)), abs=1e-9)


def test_lemma_product_fidelity():
    """F(rho, pure (x) sigma) factorises through the conditional external state."""
    rng = np.random.default_rng(3)
    for d_sys, d_ext in [(2, 2), (2, 3), (4, 2)]:
        for _ in range(10):
            rho = random_density(d_sys * d_ext, rng)
            target = random_density(d_sys, rng, rank=1)
            sigma = random_density(d_ext, rng)
            cond = partial_trace(rho @ kron(target, np.eye(d_ext)), [d_sys, d_ext], [1])
            cond = cond / np.trace(cond)
            cond = 0.5 * (cond + cond.conj().T)
            lhs = uhlmann_fidelity(rho, kron(target, sigma))
            rhs = uhlmann_fidelity(partial_trace(rho, [d_sys, d_ext], [0]), target) * uhlmann_fidelity(cond, sigma)
            assert lhs == pytest.approx(rhs, abs=1e-8)


def test_processing_inequality_under_partial_trace():
    rng = np.random.default_rng(4)
    for dims in ([2, 2], [2, 4], [4, 4], [2, 2, 2]):
        d = int(np.prod(dims))
        for _ in range(10):
            a, b = random_density(d, rng), random_density(d, rng, rank=2)
            keep = [0]
            assert uhlmann_fidelity(partial_trace(a, dims, keep), partial_trace(b, dims, keep)) \
                >= uhlmann_fidelity(a, b) - 1e-9


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([0.5, 0.6]))
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[0.5, 0.5], [0.0, 0.5]]))
    with pytest.raises(ValueError):
        PureState(np.array([1.0, 1.0]))


def test_kraus_trace_preservation_checked():
    with pytest.raises(ValueError):
        KrausChannel((0.5 * np.eye(2),), 2, 2)


def test_apply_channel_examples():
    rho = DensityMatrix(random_density(4, np.random.default_rng(5)), (2, 2))
    same = apply_channel(KrausChannel.identity(2), rho, [1])
    assert np.allclose(same.matrix, rho.matrix)
    out = apply_channel(depolarizing(2, 1.0), DensityMatrix(_proj(KET0)), [0])
    assert np.allclose(out.matrix, I2 / 2)
    with pytest.raises(ValueError):
        apply_channel(cnot(), rho, [0])


def test_apply_channel_matches_direct_kron_on_middle_factors():
    rng = np.random.default_rng(6)
    rho = DensityMatrix(random_density(16, rng), (2, 2, 2, 2))
    u = random_unitary(4, rng)
    out = apply_channel(KrausChannel.unitary(u), rho, [1, 2])
    full = np.kron(np.kron(I2, u), I2)
    assert np.allclose(out.matrix, full @ rho.matrix @ full.conj().T)
    swapped = apply_channel(KrausChannel.unitary(u), rho, [2, 1])
    perm = reorder(rho.matrix, (2, 2, 2, 2), [0, 2, 1, 3])
    expect = reorder(full @ perm @ full.conj().T, (2, 2, 2, 2), [0, 2, 1, 3])
    assert np.allclose(swapped.matrix, expect)


def test_apply_channel_dimension_change():
    trace_out = KrausChannel(tuple(np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])[:, :] if i == 0 else
                                   np.array([[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]) for i in range(2)), 4, 2)
    rho = DensityMatrix(random_density(8, np.random.default_rng(7)), (2, 2, 2))
    out = apply_channel(trace_out, rho, [0, 1])
    assert out.dims == (2, 2)
    assert np.allclose(out.matrix, partial_trace(rho.matrix, [2, 2, 2], [0, 2]))


def test_cu_phi_literal_formula():
    for phi in (0.0, 0.4, math.pi / 2, math.pi):
        rot = math.cos(phi) * I2 - 1j * math.sin(phi) * SX
        expect = np.block([[I2, np.zeros((2, 2))], [np.zeros((2, 2)), rot]])
        assert np.array_equal(cu_phi(phi).kraus[0], expect)
        prod = cu_phi(phi).kraus[0] @ cu_phi(-phi).kraus[0]
        assert np.allclose(prod, np.eye(4))
    assert np.allclose(cu_phi(0.0).kraus[0], np.eye(4))


def test_gate_label_pi_is_cnot_up_to_control_phase():
    u = cu_phi(gate_label_angle(math.pi)).kraus[0]
    phase = np.kron(np.diag([1.0, -1j]), I2)
    assert np.allclose(u, phase @ cnot().kraus[0])


def test_xi_state_from_channel_application():
    pair = phi_plus().amplitudes
    # factors ordered (A1, A2, B1, B2) so that the gate acts on the first two
    start = reorder(_proj(np.kron(pair, pair)), (2, 2, 2, 2), [1, 2, 0, 3])
    out = apply_channel(cu_phi(math.pi), DensityMatrix(start, (2, 2, 2, 2)), [0, 1])
    back = reorder(out.matrix, (2, 2, 2, 2), [2, 0, 1, 3])
    assert uhlmann_fidelity(back, xi_state(math.pi).amplitudes) == pytest.approx(1.0, abs=1e-9)


def test_choi_state_examples():
    ident = choi_state(KrausChannel.identity(2))
    assert np.allclose(ident.matrix, _proj(phi_plus().amplitudes))
    dep = choi_state(depolarizing(2, 1.0))
    assert np.allclose(dep.matrix, np.eye(4) / 4)
    assert np.trace(choi_state(cu_phi(0.7)).matrix).real == pytest.approx(1.0)


def test_choi_fidelity_examples_and_redilation_invariance():
    assert choi_fidelity(KrausChannel.identity(2), KrausChannel.identity(2)) == pytest.approx(1.0, abs=1e-9)
    assert choi_fidelity(depolarizing(2, 1.0), KrausChannel.identity(2)) == pytest.approx(0.5, abs=1e-9)
    assert choi_fidelity(cu_phi(0.3), cu_phi(0.3)) == pytest.approx(1.0, abs=1e-9)
    rng = np.random.default_rng(8)
    ch = depolarizing(2, 0.3)
    u = random_unitary(len(ch.kraus), rng)
    mixed = tuple(sum(u[i, j] * ch.kraus[j] for j in range(len(ch.kraus))) for i in range(len(ch.kraus)))
    red = KrausChannel(mixed, 2, 2)
    ref = KrausChannel.unitary(random_unitary(2, rng))
    assert choi_fidelity(red, ref) == pytest.approx(choi_fidelity(ch, ref), abs=1e-10)
    with pytest.raises(ValueError):
        choi_fidelity(cnot(), KrausChannel.identity(2))


def test_diamond_bound_examples():
    assert diamond_bound(1.0, 2) == 0.0
    assert diamond_bound(0.0, 2) == 4.0
    assert diamond_bound(0.99, 2) == pytest.approx(4 * math.sqrt(1 - 0.99 ** 2), abs=1e-12)
    assert diamond_bound(0.99, 2) == pytest.approx(0.56428, abs=2e-5)
    with pytest.raises(ValueError):
        diamond_bound(1.2, 2)


def test_white_noise_state_examples():
    assert np.allclose(white_noise_state(0.0).matrix, _proj(phi_plus().amplitudes))
    assert np.allclose(white_noise_state(1.0).matrix, np.eye(4) / 4)
    f = uhlmann_fidelity(white_noise_state(0.5), phi_plus().amplitudes)
    assert f == pytest.approx(math.sqrt(0.625), abs=1e-12)
    with pytest.raises(ValueError):
        white_noise_state(-0.1)


def test_depolarizing_action():
    rho = random_density(3, np.random.default_rng(9))
    out = depolarizing(3, 0.4)(rho)
    assert np.allclose(out, 0.6 * rho + 0.4 * np.eye(3) / 3)


def test_json_round_trip():
    rho = DensityMatrix(random_density(4, np.random.default_rng(10)), (2, 2))
    data = json.loads(dumps(rho))
    assert set(data) >= {"dim", "re", "im"}
    back = DensityMatrix.from_json(data)
    assert np.array_equal(back.matrix, rho.matrix) and back.dims == rho.dims
    ch = KrausChannel.from_json(json.loads(dumps(cu_phi(0.2))))
    assert np.array_equal(ch.kraus[0], cu_phi(0.2).kraus[0])
    m = np.array([[1 + 2j, 3], [4, 5j]])
    assert np.array_equal(matrix_from_json(matrix_to_json(m)), m)
