"""Shot-based measurement pipeline: decoded samples, means, covariances with
their variance-based error bars, and the maximum pointwise error metric."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError
from .grids import GridSpec, TargetSpec, bits_to_coords, grid_coords_from_indices, values_on_grid
from .mps import MPS, mps_sample
from .native import NativeCircuit
from .noise import NoiseModel, _channel_rates, _trajectory_uniforms
from .sim import MpsBackend, apply_1q, apply_pauli_inplace, apply_rzz_inplace, run
from .native import op_matrix


@dataclass
class ShotTable:
    """Measured bitstrings plus their decoded coordinate rows."""

    bits: np.ndarray  # (n_shots, n) uint8
    grid: GridSpec

    def __post_init__(self):
        self.bits = np.atleast_2d(np.asarray(self.bits, dtype=np.uint8))
        if self.bits.shape[1] != self.grid.n:
            raise ValueError("bitstring length does not match the grid")

    @property
    def n_shots(self) -> int:
        return self.bits.shape[0]

    @property
    def values(self) -> np.ndarray:
        return bits_to_coords(self.bits, self.grid)


def moments(shots: ShotTable) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Plain-average means, covariances and the variance of each covariance.

    cov uses the 1/n estimator; Var[cov_ij] = (cov_ij^2 + cov_ii cov_jj) /
    (n_shots - 1).  Error bars downstream are 2 sqrt(Var).
    """
    if shots.n_shots < 2:
        raise ValueError("moments need at least 2 shots")
    x = shots.values
    means = x.mean(axis=0)
    cov = (x.T @ x) / shots.n_shots - np.outer(means, means)
    cov = 0.5 * (cov + cov.T)
    var = (cov**2 + np.outer(np.diag(cov), np.diag(cov))) / (shots.n_shots - 1)
    return means, cov, var


def exact_grid_moments(spec: TargetSpec, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Moments of the |f|^2-weighted discrete grid distribution (dense oracle)."""
    vals = values_on_grid(spec, grid)
    p = vals**2
    p /= p.sum()
    coords = grid_coords_from_indices(np.arange(2**grid.n), grid)
    means = p @ coords
    cov = (coords.T * p) @ coords - np.outer(means, means)
    return means, 0.5 * (cov + cov.T)


def eps_max(f_normalized: np.ndarray, norm_f: float, circuit_state: np.ndarray) -> float:
    """max_x |F(x) - G(x)| with G the rescaled, phase-fixed circuit state.

    The global phase is fixed by maximizing Re<F|phi>; F = norm_f * f_normalized
    recovers the raw target values.
    """
    f_normalized = np.asarray(f_normalized)
    if f_normalized.size != np.asarray(circuit_state).size:
        raise CapacityError("eps_max requires matching dense states")
    o = np.vdot(f_normalized, circuit_state)
    phase = np.conj(o) / abs(o) if abs(o) > 0 else 1.0
    g = norm_f * phase * np.asarray(circuit_state)
    return float(np.max(np.abs(norm_f * f_normalized - g)))


def sample_noiseless(state, n_shots: int, seed: int, grid: GridSpec,
                     chi_max: int = 128, tol: float = 1e-12) -> ShotTable:
    """Draw shots from a state (dense vector or MPS) via sequential sampling."""
    if not isinstance(state, MPS):
        state = MPS.from_dense(np.asarray(state), chi_max=chi_max, tol=tol)
    return ShotTable(mps_sample(state.normalized(), n_shots, seed), grid)


def sample_noisy(native: NativeCircuit, model: NoiseModel, n_shots: int, seed: int,
                 grid: GridSpec) -> ShotTable:
    """One measured bitstring per noise trajectory (dense evolution)."""
    n = native.n
    if n > 20:
        raise CapacityError("dense trajectory sampling limited to n <= 20")
    uniforms = _trajectory_uniforms(len(native.rzz_ops()), n_shots, seed)
    rates = _channel_rates(native, model, None)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5405)))
    pick = rng.random(n_shots)
    bits = np.empty((n_shots, n), dtype=np.uint8)
    chunk = max(1, 2 ** max(22 - n, 4))
    for lo in range(0, n_shots, chunk):
        hi = min(lo + chunk, n_shots)
        state = np.zeros((hi - lo, 2**n), dtype=np.complex128)
        state[:, 0] = 1.0
        rzz_i = 0
        for op in native.ops:
            if op.kind == "rzz":
                apply_rzz_inplace(state, op.angle, *op.qubits, n=n)
                for side, q in enumerate(op.qubits):
                    r = rates[rzz_i, side]
                    u = uniforms[lo:hi, rzz_i, side]
                    for k, pauli in enumerate(("x", "y", "z")):
                        sel = (u >= k * r) & (u < (k + 1) * r)
                        if sel.any():
                            sub = state[sel]
                            apply_pauli_inplace(sub, pauli, q, n)
                            state[sel] = sub
                rzz_i += 1
            else:
                state = apply_1q(state, op_matrix(op), op.qubits[0], n)
        probs = np.abs(state) ** 2
        probs /= probs.sum(axis=1, keepdims=True)
        cum = np.cumsum(probs, axis=1)
        idx = np.array([np.searchsorted(cum[i], pick[lo + i]) for i in range(hi - lo)])
        idx = np.minimum(idx, 2**n - 1)
        shifts = np.arange(n - 1, -1, -1)
        bits[lo:hi] = ((idx[:, None] >> shifts) & 1).astype(np.uint8)
    return ShotTable(bits, grid)


@dataclass
class CovarianceReport:
    means: np.ndarray
    cov: np.ndarray
    cov_var: np.ndarray
    exact_means: np.ndarray
    exact_cov: np.ndarray
    n_shots: int
    within_2sigma: np.ndarray  # boolean per covariance entry

    def agreement_fraction(self) -> float:
        return float(np.mean(self.within_2sigma))

    def to_json_dict(self) -> dict:
        err = 2.0 * np.sqrt(self.cov_var)
        mean_err = np.sqrt(np.diag(self.cov) / self.n_shots)
        return {
            "n_shots": self.n_shots,
            "means": self.means.tolist(),
            "means_error": mean_err.tolist(),
            "covariance": self.cov.tolist(),
            "covariance_error": np.sqrt(self.cov_var).tolist(),
            "covariance_error_2sigma": err.tolist(),
            "exact_means": self.exact_means.tolist(),
            "exact_covariance": self.exact_cov.tolist(),
            "within_2sigma": self.within_2sigma.tolist(),
        }


def covariance_experiment(state, spec: TargetSpec, grid: GridSpec, n_shots: int,
                          seed: int, native: NativeCircuit | None = None,
                          model: NoiseModel | None = None) -> CovarianceReport:
    """Sample a trained circuit and compare moments against the dense grid oracle.

    Noiseless sampling runs on the state itself; passing a native circuit plus
    a noise model switches to trajectory sampling.
    """
    if native is not None and model is not None:
        shots = sample_noisy(native, model, n_shots, seed, grid)
    else:
        shots = sample_noiseless(state, n_shots, seed, grid)
    means, cov, var = moments(shots)
    exact_means, exact_cov = exact_grid_moments(spec, grid)
    within = np.abs(cov - exact_cov) <= 2.0 * np.sqrt(var)
    return CovarianceReport(means=means, cov=cov, cov_var=var,
                            exact_means=exact_means, exact_cov=exact_cov,
                            n_shots=n_shots, within_2sigma=within)
