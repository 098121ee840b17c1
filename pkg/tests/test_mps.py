"""MPS machinery against dense brute-force oracles."""

import json

import numpy as np
import pytest
from scipy import stats

from combprep.errors import StateError
from combprep.grids import GridSpec, gaussian_spec, normalized_state
from combprep.mps import MPS, fidelity, mps_amplitude, mps_overlap, mps_sample, mps_truncate


def random_mps(n, chi, seed, complex_valued=False):
    return MPS.random(n, chi, seed=seed, complex_valued=complex_valued)


def all_bits(n):
    return ((np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8)


def test_uniform_amplitude():
    state = MPS.uniform(4)
    assert mps_amplitude(state, [0, 1, 1, 0]) == pytest.approx(0.25)


def test_basis_state_amplitudes():
    state = MPS.basis_state([0, 0, 0])
    assert mps_amplitude(state, [0, 0, 0]) == pytest.approx(1.0)
    assert mps_amplitude(state, [1, 0, 0]) == pytest.approx(0.0)


def test_amplitudes_match_dense_contraction():
    state = random_mps(6, 2, seed=1)
    dense = state.to_dense()
    amps = state.amplitudes(all_bits(6))
    assert np.max(np.abs(amps - dense)) < 1e-12


def test_overlap_examples():
    psi = random_mps(5, 3, seed=2)
    assert mps_overlap(psi, psi) == pytest.approx(1.0, abs=1e-10)
    a = MPS.basis_state([0, 1, 0])
    b = MPS.basis_state([0, 1, 1])
    assert mps_overlap(a, b) == pytest.approx(0.0)


def test_overlap_matches_dense_inner_product():
    a = random_mps(8, 3, seed=3)
    b = random_mps(8, 3, seed=4)
    assert mps_overlap(a, b) == pytest.approx(a.to_dense() @ b.to_dense(), abs=1e-12)


def test_overlap_complex_conjugation():
    a = random_mps(5, 2, seed=5, complex_valued=True)
    b = random_mps(5, 2, seed=6, complex_valued=True)
    assert mps_overlap(a, b) == pytest.approx(np.vdot(a.to_dense(), b.to_dense()), abs=1e-12)


def test_canonicalize_isometries_and_idempotence():
    state = random_mps(7, 4, seed=7)
    for center in (0, 3, 6):
        canon = state.canonicalized(center)
        assert max(canon.isometry_residuals()) < 1e-10
        again = canon.canonicalized(center)
        assert fidelity(canon, again) == pytest.approx(1.0, abs=1e-12)
        # norm equals the Frobenius norm of the center tensor
        assert np.linalg.norm(canon.tensors[center]) == pytest.approx(state.norm(), rel=1e-10)


def test_truncate_trivial_cases():
    prod = MPS.uniform(5)
    out = mps_truncate(prod, chi_max=4)
    assert fidelity(prod, out) == pytest.approx(1.0, abs=1e-10)
    # product state stored redundantly at chi=4 compresses back to chi=1
    v = np.full(2, 1 / np.sqrt(2))
    first = np.zeros((1, 2, 4))
    first[0, :, 0] = v
    mid = np.zeros((4, 2, 4))
    mid[0, :, 0] = v
    last = np.zeros((4, 2, 1))
    last[0, :, 0] = v
    fat = MPS([first, mid, mid.copy(), last])
    out = mps_truncate(fat, chi_max=4)
    assert out.max_bond == 1
    assert fidelity(out, MPS.uniform(4)) == pytest.approx(1.0, abs=1e-10)


def test_truncate_matches_dense_oracle():
    state = random_mps(8, 8, seed=8)
    out = mps_truncate(state, chi_max=4)
    assert out.max_bond <= 4
    # oracle: the same greedy left-to-right rank-4 compression on the dense vector
    oracle = MPS.from_dense(state.to_dense(), chi_max=4)
    f_ours = fidelity(state, out)
    f_oracle = fidelity(state, oracle)
    assert f_ours == pytest.approx(f_oracle, abs=1e-8)
    assert out.norm() == pytest.approx(state.norm(), rel=1e-10)


def test_truncate_discarded_weight_budget():
    state = random_mps(6, 8, seed=9)
    out = state.truncated(chi_max=8, tol=1e-4)
    assert 1.0 - fidelity(state, out) < 6 * 1e-4  # n-1 bonds each discarding <= tol


def test_sample_uniform_frequencies():
    state = MPS.uniform(2)
    bits = mps_sample(state, 100000, seed=0)
    idx = bits[:, 0] * 2 + bits[:, 1]
    freq = np.bincount(idx, minlength=4) / len(idx)
    assert np.all(np.abs(freq - 0.25) < 0.01)


def test_sample_basis_state_deterministic():
    state = MPS.basis_state([0, 1, 1, 0])
    bits = mps_sample(state, 50, seed=1)
    assert np.all(bits == np.array([0, 1, 1, 0]))


def test_sample_chisquare_against_dense_probabilities():
    state = random_mps(6, 2, seed=10)
    probs = np.abs(state.to_dense()) ** 2
    bits = mps_sample(state, 20000, seed=2)
    idx = bits @ (1 << np.arange(5, -1, -1))
    counts = np.bincount(idx, minlength=64)
    res = stats.chisquare(counts, probs * len(idx))
    assert res.pvalue > 0.001


def test_sample_reproducible_bytes():
    state = random_mps(5, 3, seed=11)
    a = mps_sample(state, 500, seed=3)
    b = mps_sample(state, 500, seed=3)
    assert a.tobytes() == b.tobytes()


def test_sample_rejects_unnormalized():
    state = random_mps(4, 2, seed=12)
    state.tensors[0] = state.tensors[0] * 1.5
    with pytest.raises(StateError):
        mps_sample(state, 10, seed=0)


def test_from_dense_roundtrip():
    grid = GridSpec(2, 3)
    vec = normalized_state(gaussian_spec(2), grid)
    state = MPS.from_dense(vec)
    assert np.max(np.abs(state.to_dense() - vec)) < 1e-12


def test_json_roundtrip_real_and_complex_bit_exact():
    for complex_valued in (False, True):
        state = random_mps(5, 3, seed=13, complex_valued=complex_valued)
        text = state.to_json()
        back = MPS.from_json(text)
        for t1, t2 in zip(state.tensors, back.tensors):
            assert np.array_equal(t1, t2)
        # round-trip through a second serialization is byte-identical
        assert back.to_json() == text


def test_bond_shape_validation():
    with pytest.raises(ValueError):
        MPS([np.zeros((1, 2, 3)), np.zeros((2, 2, 1))])
    with pytest.raises(ValueError):
        MPS([np.zeros((2, 2, 1))])
