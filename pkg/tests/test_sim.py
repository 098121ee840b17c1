"""Backends, kernels and the three gradient engines."""

import numpy as np
import pytest

from combprep import fastkernels
from combprep.ansatz import build_comb_ansatz, su4_unitary
from combprep.crossinterp import build_target
from combprep.errors import CapacityError, ConfigError
from combprep.grids import GridSpec, gaussian_spec
from combprep.mps import MPS
from combprep.sim import (DenseBackend, GradientReport, MpsBackend, _pair_cross,
                          adjoint_gradient, apply_1q, apply_2q, apply_pauli_inplace,
                          apply_rzz_inplace, finite_diff_gradient, gradient,
                          gradient_scan, infidelity, parameter_shift_gradient, run,
                          state_overlap, uniform_state)


def random_circuit(grid, layers, seed, scale=np.pi):
    circ = build_comb_ansatz(grid, layers)
    rng = np.random.default_rng(seed)
    return circ.with_theta(rng.uniform(-scale, scale, circ.m))


def dense_gate_oracle(state, u4, qa, qb, n):
    """Kron-expanded full matrix application (exponential, n small)."""
    order = []
    mats = {qa: None, qb: None}
    full = np.eye(1)
    u4 = u4.reshape(2, 2, 2, 2)
    # build the full operator by summing basis blocks
    op = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    factors = []
                    for q in range(n):
                        if q == qa:
                            e = np.zeros((2, 2))
                            e[i, k] = 1.0
                            factors.append(e)
                        elif q == qb:
                            e = np.zeros((2, 2))
                            e[j, l] = 1.0
                            factors.append(e)
                        else:
                            factors.append(np.eye(2))
                    term = factors[0]
                    for fmat in factors[1:]:
                        term = np.kron(term, fmat)
                    op += u4[i, j, k, l] * term
    return op @ state


@pytest.mark.parametrize("pair", [(0, 1), (2, 3), (0, 3), (1, 4)])
def test_apply_2q_against_kron_oracle(pair):
    n = 5
    rng = np.random.default_rng(hash(pair) % 2**32)
    psi = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    u4 = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    got = apply_2q(psi, u4, *pair, n=n)
    want = dense_gate_oracle(psi, u4, *pair, n=n)
    assert np.max(np.abs(got - want)) < 1e-12


def test_apply_2q_reversed_pair_matches_swapped_matrix():
    n = 4
    rng = np.random.default_rng(0)
    psi = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    u4 = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    a = apply_2q(psi, u4, 2, 0, n=n)
    b = dense_gate_oracle(psi, u4.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4),
                          0, 2, n=n)
    assert np.max(np.abs(a - b)) < 1e-12


def test_rzz_and_pauli_inplace_fast_paths():
    n = 4
    rng = np.random.default_rng(1)
    psi = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    theta = 0.7
    rzz = np.diag(np.exp(np.array([-0.5j, 0.5j, 0.5j, -0.5j]) * theta))
    want = apply_2q(psi, rzz, 1, 3, n=n)
    got = apply_rzz_inplace(psi.copy(), theta, 1, 3, n=n)
    assert np.max(np.abs(got - want)) < 1e-12
    paulis = {"x": np.array([[0, 1], [1, 0]]), "y": np.array([[0, -1j], [1j, 0]]),
              "z": np.diag([1.0, -1.0])}
    for kind, mat in paulis.items():
        got = apply_pauli_inplace(psi.copy(), kind, 2, n=n)
        want = apply_1q(psi, mat.astype(complex), 2, n=n)
        assert np.max(np.abs(got - want)) < 1e-12


@pytest.mark.skipif(not fastkernels.HAVE_NUMBA, reason="numba unavailable")
def test_fast_kernels_match_numpy_paths():
    n = 9
    rng = np.random.default_rng(2)
    for dtype, atol in ((np.complex64, 1e-5), (np.complex128, 1e-12)):
        psi = (rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)).astype(dtype)
        b = (rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)).astype(dtype)
        u4 = (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))).astype(dtype)
        for pair in [(0, 1), (4, 5), (7, 8), (0, 6), (2, 7)]:
            ref = apply_2q(psi, u4, *pair, n=n)
            fast = fastkernels.apply_2q_inplace(psi.copy(), u4, *pair, n=n)
            assert np.max(np.abs(ref - fast)) < atol
            kr = _pair_cross(psi, b, *pair, n=n)
            kf = fastkernels.pair_cross(psi, b, *pair, n=n)
            assert np.max(np.abs(kr - kf)) < atol * 2**n


def test_run_theta_zero_uniform_and_norm():
    circ = build_comb_ansatz(GridSpec(2, 3), 1)
    psi = run(circ)
    assert np.allclose(psi, uniform_state(6), atol=1e-14)
    circ = random_circuit(GridSpec(2, 3), 2, seed=3)
    psi = run(circ)
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-10)


def test_single_gate_on_plus_states_matches_two_qubit_oracle():
    grid = GridSpec(1, 2)
    circ = build_comb_ansatz(grid, 1)
    theta = np.zeros(15)
    theta[0] = np.pi / 4  # CNOT class
    circ = circ.with_theta(theta)
    psi = run(circ)
    plus = np.full(4, 0.5)
    want = su4_unitary(theta) @ plus
    assert np.max(np.abs(psi - want)) < 1e-12


def test_dense_vs_mps_backend_agreement():
    circ = random_circuit(GridSpec(2, 6), 1, seed=4)
    dense = run(circ, DenseBackend())
    mps = run(circ, MpsBackend(chi_max=64, tol=1e-14))
    fid = abs(np.vdot(dense, mps.to_dense())) ** 2
    assert fid >= 1.0 - 1e-10
    assert mps.truncation_weight < 1e-12


def test_capacity_guard():
    with pytest.raises(CapacityError):
        run(build_comb_ansatz(GridSpec(7, 4), 1), DenseBackend())  # n = 28


def test_infidelity_examples():
    grid = GridSpec(2, 2)
    circ = build_comb_ansatz(grid, 1)
    uniform = uniform_state(grid.n).real
    assert infidelity(circ, uniform) == pytest.approx(0.0, abs=1e-14)
    # orthogonal target: alternating signs sum to zero against the uniform state
    orth = np.ones(2**grid.n)
    orth[1::2] = -1.0
    orth /= np.linalg.norm(orth)
    assert infidelity(circ, orth) == pytest.approx(1.0, abs=1e-14)
    # MPS target route
    assert infidelity(circ, MPS.uniform(grid.n)) == pytest.approx(0.0, abs=1e-12)


def test_gradient_zero_at_stationary_point():
    circ = build_comb_ansatz(GridSpec(2, 2), 1)
    rep = gradient(circ, uniform_state(4).real, method="adjoint")
    assert np.max(np.abs(rep.grad)) == 0.0


@pytest.mark.parametrize("seed", [0, 1])
def test_gradient_engines_agree(seed):
    grid = GridSpec(2, 3)
    circ = random_circuit(grid, 2, seed=seed)
    target = build_target(gaussian_spec(2), grid, chi_max=8, tol=1e-12).mps.to_dense()
    ga = adjoint_gradient(circ, target)
    gp = parameter_shift_gradient(circ, target)
    gf = finite_diff_gradient(circ, target, h=1e-6)
    assert np.max(np.abs(ga.grad - gp.grad)) < 1e-10
    assert np.max(np.abs(ga.grad - gf.grad)) < 1e-6
    assert gp.n_evals == 2 * circ.m


def test_gradient_report_avg_abs():
    rep = GradientReport(grad=np.array([0.3, -0.1, 0.2]), method="x", n_evals=0)
    assert rep.avg_abs == pytest.approx(0.2)


def test_adjoint_rejects_mps_backend():
    circ = build_comb_ansatz(GridSpec(1, 4), 1)
    with pytest.raises(ConfigError):
        gradient(circ, MPS.uniform(4), method="adjoint", backend=MpsBackend())


def test_parameter_shift_on_mps_backend():
    grid = GridSpec(1, 3)
    circ = random_circuit(grid, 1, seed=5, scale=0.4)
    target = build_target(gaussian_spec(1), grid, chi_max=8, tol=1e-12).mps
    gm = gradient(circ, target, method="parameter_shift", backend=MpsBackend())
    gd = gradient(circ, target.to_dense(), method="adjoint")
    assert np.max(np.abs(gm.grad - gd.grad)) < 1e-8


def test_complex64_gradient_close_to_complex128():
    grid = GridSpec(2, 3)
    circ = random_circuit(grid, 1, seed=6)
    target = build_target(gaussian_spec(2), grid, chi_max=8, tol=1e-12).mps.to_dense()
    g64 = adjoint_gradient(circ, target, dtype=np.complex64)
    g128 = adjoint_gradient(circ, target)
    assert np.max(np.abs(g64.grad - g128.grad)) < 1e-4
    assert g64.avg_abs == pytest.approx(g128.avg_abs, rel=1e-3)


def test_gradient_scan_random_mode_deterministic():
    grid = GridSpec(1, 4)
    spec = gaussian_spec(1)
    target = build_target(spec, grid, chi_max=8, tol=1e-12).mps
    rows1 = gradient_scan(grid, 1, spec, "random_init", 4, seed=9, target=target)
    rows2 = gradient_scan(grid, 1, spec, "random_init", 4, seed=9, target=target)
    assert [(r.overlap, r.avg_grad) for r in rows1] == [(r.overlap, r.avg_grad) for r in rows2]
    assert all(r.mode == "random_init" and r.n == 4 for r in rows1)


def test_gradient_scan_warm_mode_requires_traces():
    with pytest.raises(ConfigError):
        gradient_scan(GridSpec(1, 4), 1, gaussian_spec(1), "warm_start", 1, seed=0)


def test_state_overlap_mixed_types():
    mps = MPS.uniform(4)
    dense = uniform_state(4)
    assert state_overlap(mps, dense) == pytest.approx(1.0)
    assert state_overlap(dense, mps) == pytest.approx(1.0)
