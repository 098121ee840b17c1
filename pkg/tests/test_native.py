"""Compilation to ZZ rotations plus locals: angle folding, fusion, pruning,
gate census and the OpenQASM surface."""

import numpy as np
import pytest

from combprep.ansatz import build_comb_ansatz, su4_unitary
from combprep.grids import GridSpec
from combprep.native import (NativeCircuit, NativeOp, compile_native, count_two_qubit,
                             count_single_qubit, export_qasm, fold_rzz_angle, op_matrix,
                             parse_qasm, prune)
from combprep.sim import run, run_native_dense


def native_unitary(native: NativeCircuit) -> np.ndarray:
    """Dense unitary of a native op list (small n), column by column."""
    from combprep.sim import run_native_dense

    dim = 2**native.n
    cols = []
    for k in range(dim):
        e = np.zeros(dim, dtype=complex)
        e[k] = 1.0
        cols.append(run_native_dense(native, state=e))
    return np.array(cols).T


def phase_aligned_distance(u, v):
    tr = np.trace(v.conj().T @ u)
    phase = tr / abs(tr) if abs(tr) > 0 else 1.0
    return np.linalg.norm(u - phase * v, ord=2)


def makhlin_invariants(u):
    """Local-equivalence class invariants of a two-qubit unitary."""
    magic = np.array([[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]]) / np.sqrt(2)
    m = magic.conj().T @ u @ magic
    mm = m.T @ m
    det = np.linalg.det(u)
    g1 = np.trace(mm) ** 2 / (16 * det)
    g2 = (np.trace(mm) ** 2 - np.trace(mm @ mm)) / (4 * det)
    return np.array([g1.real, g1.imag, g2.real])


def test_fold_preserves_unitary_and_range():
    rng = np.random.default_rng(0)
    for theta in np.concatenate([rng.uniform(-8, 8, 20), [0.0, np.pi / 2, np.pi, -np.pi / 2]]):
        theta_c, pre, post, slope = fold_rzz_angle(theta)
        assert 0.0 <= theta_c <= np.pi / 2 + 1e-12
        raw = op_matrix(NativeOp("rzz", (0, 1), angle=float(theta)))
        canon = op_matrix(NativeOp("rzz", (0, 1), angle=float(theta_c)))
        full = np.kron(post[0], post[1]) @ canon @ np.kron(pre[0], pre[1])
        assert phase_aligned_distance(raw, full) < 1e-12
        assert slope in (-1.0, 0.0, 1.0)


def test_identity_gate_compiles_to_three_zero_rzz():
    circ = build_comb_ansatz(GridSpec(1, 2), 1)  # theta = 0
    native = compile_native(circ)
    rzz = native.rzz_ops()
    assert len(rzz) == 3
    assert all(op.angle == 0.0 for op in rzz)
    pruned = prune(native)
    assert count_two_qubit(pruned) == 0
    assert pruned.pruned_count == 3


def test_cnot_equivalent_leaves_one_rzz():
    circ = build_comb_ansatz(GridSpec(1, 2), 1)
    theta = np.zeros(15)
    theta[0] = np.pi / 4  # canonical coordinates (pi/4, 0, 0)
    native = prune(compile_native(circ.with_theta(theta)))
    assert count_two_qubit(native) == 1
    # KAK-class oracle: Makhlin invariants match CNOT
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    assert np.allclose(makhlin_invariants(su4_unitary(theta)), makhlin_invariants(cnot),
                       atol=1e-10)


def test_swap_equivalent_needs_three_rzz():
    circ = build_comb_ansatz(GridSpec(1, 2), 1)
    theta = np.zeros(15)
    theta[0:3] = np.pi / 4  # canonical coordinates (pi/4, pi/4, pi/4)
    native = prune(compile_native(circ.with_theta(theta)))
    assert count_two_qubit(native) == 3
    swap = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
    assert np.allclose(makhlin_invariants(su4_unitary(theta)), makhlin_invariants(swap),
                       atol=1e-10)


@pytest.mark.parametrize("seed", range(4))
def test_compiled_state_matches_source(seed):
    grid = GridSpec(2, 3)
    circ = build_comb_ansatz(grid, 2)
    rng = np.random.default_rng(seed)
    circ = circ.with_theta(rng.uniform(-np.pi, np.pi, circ.m))
    native = compile_native(circ)
    fid = abs(np.vdot(run(circ), run_native_dense(native))) ** 2
    assert fid >= 1.0 - 1e-10
    # canonical range respected everywhere
    assert all(0.0 <= op.angle <= np.pi / 2 + 1e-12 for op in native.rzz_ops())
    # parameter count is invariant under compilation
    assert native.source_m == circ.m
    assert len(native.provenance()) == 3 * len(circ.gates)


def test_compiled_unitary_operator_norm():
    circ = build_comb_ansatz(GridSpec(1, 2), 1)
    rng = np.random.default_rng(9)
    circ = circ.with_theta(rng.uniform(-np.pi, np.pi, 15))
    native = compile_native(circ)
    u_native = native_unitary(native)
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    u_src = su4_unitary(circ.theta) @ np.kron(h, h)
    assert phase_aligned_distance(u_src, u_native) < 1e-10


def test_prune_threshold_semantics():
    native = NativeCircuit(n=2, ops=[NativeOp("rzz", (0, 1), angle=1e-5),
                                     NativeOp("rzz", (0, 1), angle=0.3)])
    out = prune(native, theta_min=1e-4)
    assert count_two_qubit(out) == 1
    assert out.pruned_count == 1
    assert out.rzz_ops()[0].angle == 0.3


def test_prune_fidelity_bound():
    grid = GridSpec(1, 3)
    circ = build_comb_ansatz(grid, 1)
    rng = np.random.default_rng(2)
    theta = rng.uniform(-0.5, 0.5, circ.m)
    theta[0] = 4e-5  # one barely-rotating coordinate -> prunable rzz
    circ = circ.with_theta(theta)
    native = compile_native(circ)
    pruned = prune(native, theta_min=1e-4)
    removed = [op.angle for op in native.rzz_ops() if op.angle <= 1e-4]
    assert pruned.pruned_count == len(removed)
    fid = abs(np.vdot(run_native_dense(native), run_native_dense(pruned))) ** 2
    assert fid >= 1.0 - 4.0 * sum(removed) ** 2 - 1e-12


def test_gate_census_and_qasm():
    empty = NativeCircuit(n=3, ops=[])
    assert count_two_qubit(empty) == 0
    text = export_qasm(empty)
    assert text.splitlines()[-1] == "qreg q[3];"

    circ = build_comb_ansatz(GridSpec(2, 6), 1)
    native = compile_native(circ)
    assert count_two_qubit(native) == 33  # 11 gates x 3
    assert count_single_qubit(native) >= 12

    rng = np.random.default_rng(1)
    circ = circ.with_theta(rng.uniform(-np.pi, np.pi, circ.m))
    native = compile_native(circ)
    back = parse_qasm(export_qasm(native))
    assert len(back.ops) == len(native.ops)
    for a, b in zip(native.ops, back.ops):
        assert (a.kind, a.qubits) == (b.kind, b.qubits)
        assert a.angle == b.angle  # repr round-trip is bit-exact


def test_qasm_measure_block():
    native = compile_native(build_comb_ansatz(GridSpec(1, 2), 1))
    text = export_qasm(native, include_measure=True)
    assert "creg c[2];" in text and text.rstrip().endswith("measure q -> c;")
    assert "measure" not in export_qasm(native)


def test_native_json_roundtrip():
    circ = build_comb_ansatz(GridSpec(1, 3), 1)
    rng = np.random.default_rng(4)
    native = compile_native(circ.with_theta(rng.uniform(-1, 1, circ.m)))
    back = NativeCircuit.from_json_dict(native.to_json_dict())
    assert [(o.kind, o.qubits, o.angle) for o in back.ops] == \
        [(o.kind, o.qubits, o.angle) for o in native.ops]
