"""Calibrated depolarizing noise for native two-qubit rotations.

Every RZZ(theta) is followed by independent single-qubit depolarizing
channels on both touched qubits with angle-dependent rate

    r(theta) = (1 - sqrt(1 - 5/4 eps(theta))) / 3,   eps(theta) = a + b theta.

Single-qubit gates are noiseless.  Two evaluation routes: an exact density
matrix (n <= 10, evolved in vectorized form so the pure-state kernels can be
reused on 2n qubits) and a Pauli-trajectory Monte Carlo estimator whose
per-trajectory randomness comes from counter-based (seed, index) streams so
that common random numbers survive parameter perturbations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ansatz import Circuit, shift_rule
from .errors import CapacityError
from .mps import MPS, _MpsEvolver, mps_overlap
from .native import NativeCircuit, compile_native, op_matrix
from .sim import (apply_1q, apply_pauli_inplace, apply_rzz_inplace, zero_state,
                  GradientReport)

EXACT_QUBIT_LIMIT = 10
DENSE_TRAJECTORY_LIMIT = 16


@dataclass(frozen=True)
class NoiseModel:
    """Linear error-rate model from device calibration data."""

    a: float = 2.1e-4
    b: float = 1.43e-3

    def epsilon(self, theta: float) -> float:
        return self.a + self.b * theta

    def depol_rate(self, theta: float) -> float:
        if theta < 0:
            raise ValueError("canonical angles are non-negative")
        disc = 1.0 - 1.25 * self.epsilon(theta)
        if disc < 0:
            raise ValueError(f"error rate model leaves the CP domain at theta={theta}")
        return (1.0 - np.sqrt(disc)) / 3.0

    def depol_rate_derivative(self, theta: float) -> float:
        disc = 1.0 - 1.25 * self.epsilon(theta)
        return (5.0 / 24.0) * self.b / np.sqrt(disc)

    def to_json_dict(self) -> dict:
        return {"a": self.a, "b": self.b}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "NoiseModel":
        return cls(a=float(doc["a"]), b=float(doc["b"]))


def depol_rate(model: NoiseModel, theta: float) -> float:
    return model.depol_rate(theta)


def _rzz_rates(native: NativeCircuit, model: NoiseModel) -> list[float]:
    return [model.depol_rate(op.angle) for op in native.rzz_ops()]


# ---------------------------------------------------------------------------
# exact density-matrix route (vectorized rho on 2n qubits)


def _depol_vec(vec: np.ndarray, q: int, n: int, r: float) -> np.ndarray:
    """(1-3r) rho + r sum_P P rho P on qubit q of the vectorized rho."""
    if r == 0.0:
        return vec
    n2 = 2 * n
    vx = vec.copy()
    apply_pauli_inplace(vx, "x", q, n2)
    apply_pauli_inplace(vx, "x", n + q, n2)
    vy = vec.copy()
    apply_pauli_inplace(vy, "y", q, n2)
    apply_pauli_inplace(vy, "y", n + q, n2)
    vz = vec.copy()
    apply_pauli_inplace(vz, "z", q, n2)
    apply_pauli_inplace(vz, "z", n + q, n2)
    # vec(Y rho Y) = -(Y_row Y_col) vec(rho) because Y^T = -Y
    return (1.0 - 3.0 * r) * vec + r * (vx - vy + vz)


def _depol_deriv_vec(vec: np.ndarray, q: int, n: int) -> np.ndarray:
    """d/dr of the depolarizing channel: -3 rho + sum_P P rho P."""
    out = _depol_vec(vec, q, n, 1.0)  # affine in r: K(1) = K(0) + dK/dr
    return out - vec


def density_vector(native: NativeCircuit, model: NoiseModel | None,
                   rates: list[float] | None = None,
                   deriv_channel: tuple[int, int] | None = None,
                   check_cptp: bool = False) -> np.ndarray:
    """Evolve vec(rho) through the native circuit with per-RZZ channels.

    rates overrides the model-derived per-gate rates (frozen-rate gradient
    evaluations); deriv_channel=(rzz_index, side) replaces that single channel
    by its derivative map, which turns the output into d rho / d r.
    """
    n = native.n
    if n > EXACT_QUBIT_LIMIT:
        raise CapacityError(
            f"exact Kraus route holds a 4^{n} density matrix; use the trajectory backend")
    if rates is None:
        rates = _rzz_rates(native, model)
    n2 = 2 * n
    vec = zero_state(n2)
    rzz_i = 0
    for op in native.ops:
        if op.kind == "rzz":
            qa, qb = op.qubits
            apply_rzz_inplace(vec, op.angle, qa, qb, n2)
            apply_rzz_inplace(vec, -op.angle, n + qa, n + qb, n2)
            for side, q in ((0, qa), (1, qb)):
                if deriv_channel == (rzz_i, side):
                    vec = _depol_deriv_vec(vec, q, n)
                else:
                    vec = _depol_vec(vec, q, n, rates[rzz_i])
                if check_cptp and deriv_channel is None:
                    rho = vec.reshape(2**n, 2**n)
                    assert abs(np.trace(rho) - 1.0) < 1e-9
                    assert np.linalg.eigvalsh(rho).min() > -1e-12
            rzz_i += 1
        else:
            u = op_matrix(op)
            q = op.qubits[0]
            vec = apply_1q(vec, u, q, n2)
            vec = apply_1q(vec, u.conj(), n + q, n2)
    return vec


def noisy_infidelity_exact(native: NativeCircuit, target, model: NoiseModel,
                           rates: list[float] | None = None,
                           deriv_channel: tuple[int, int] | None = None,
                           check_cptp: bool = False) -> float:
    """1 - <f| rho |f> through the exact channel evolution."""
    f = target.to_dense() if isinstance(target, MPS) else np.asarray(target)
    vec = density_vector(native, model, rates=rates, deriv_channel=deriv_channel,
                         check_cptp=check_cptp)
    rho = vec.reshape(f.size, f.size)
    fid = np.real(np.vdot(f, rho @ f))
    if deriv_channel is not None:
        return float(-fid)  # derivative of (1 - fidelity)
    return float(np.clip(1.0 - fid, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Pauli-trajectory Monte Carlo route


def _trajectory_uniforms(n_rzz: int, n_traj: int, seed: int) -> np.ndarray:
    """Counter-based draws: trajectory t uses stream (seed, t), two per RZZ."""
    out = np.empty((n_traj, n_rzz, 2))
    for t in range(n_traj):
        rng = np.random.default_rng(np.random.SeedSequence((seed, t)))
        out[t] = rng.random((n_rzz, 2))
    return out


def _channel_rates(native: NativeCircuit, model: NoiseModel,
                   rates: np.ndarray | None) -> np.ndarray:
    """Per-(RZZ, qubit) insertion rates, shape (n_rzz, 2)."""
    if rates is None:
        per_gate = np.array(_rzz_rates(native, model))
        return np.stack([per_gate, per_gate], axis=1)
    rates = np.asarray(rates, dtype=float)
    if rates.ndim == 1:
        rates = np.stack([rates, rates], axis=1)
    return rates


def _trajectories_dense(native: NativeCircuit, uniforms: np.ndarray,
                        f: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """Batched per-trajectory |<f|psi_t>|^2 on the dense backend."""
    n = native.n
    n_traj = uniforms.shape[0]
    chunk = max(1, min(n_traj, 2 ** max(24 - n, 6)))
    fids = np.empty(n_traj)
    for lo in range(0, n_traj, chunk):
        hi = min(lo + chunk, n_traj)
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
        amps = state @ f.conj()
        fids[lo:hi] = np.abs(amps) ** 2
    return fids


def _trajectories_mps(native: NativeCircuit, uniforms: np.ndarray,
                      target: MPS, rates: np.ndarray, chi_max: int, tol: float) -> np.ndarray:
    n = native.n
    n_traj = uniforms.shape[0]
    paulis = {"x": op_matrix_pauli("x"), "y": op_matrix_pauli("y"), "z": op_matrix_pauli("z")}
    fids = np.empty(n_traj)
    for t in range(n_traj):
        ev = _MpsEvolver(MPS.basis_state([0] * n), chi_max, tol)
        rzz_i = 0
        for op in native.ops:
            if op.kind == "rzz":
                ev.apply_2q(op_matrix(op), *op.qubits)
                for side, q in enumerate(op.qubits):
                    r = rates[rzz_i, side]
                    u = uniforms[t, rzz_i, side]
                    if u < 3.0 * r:
                        ev.apply_1q(paulis[("x", "y", "z")[int(u // r)]], q)
                rzz_i += 1
            else:
                ev.apply_1q(op_matrix(op), op.qubits[0])
        fids[t] = abs(mps_overlap(target, ev.to_mps())) ** 2
    return fids


def op_matrix_pauli(kind: str) -> np.ndarray:
    mats = {
        "x": np.array([[0, 1], [1, 0]], dtype=complex),
        "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "z": np.array([[1, 0], [0, -1]], dtype=complex),
    }
    return mats[kind]


def noisy_infidelity_mc(native: NativeCircuit, target, model: NoiseModel,
                        n_traj: int, seed: int, backend: str = "auto",
                        chi_max: int = 128, tol: float = 1e-12,
                        rates=None) -> tuple[float, float]:
    """Unbiased trajectory estimate of the noisy infidelity and its std error.

    rates freezes the per-channel insertion rates (used by frozen-rate
    gradient evaluations); by default they follow the model at the circuit's
    current angles.
    """
    if n_traj < 2:
        raise ValueError("need at least 2 trajectories")
    uniforms = _trajectory_uniforms(len(native.rzz_ops()), n_traj, seed)
    ch_rates = _channel_rates(native, model, rates)
    if backend == "auto":
        backend = "dense" if native.n <= DENSE_TRAJECTORY_LIMIT else "mps"
    if backend == "dense":
        f = target.to_dense() if isinstance(target, MPS) else np.asarray(target)
        fids = _trajectories_dense(native, uniforms, f, ch_rates)
    else:
        tgt = target if isinstance(target, MPS) else MPS.from_dense(np.asarray(target))
        fids = _trajectories_mps(native, uniforms, tgt, ch_rates, chi_max, tol)
    infs = 1.0 - fids
    return float(np.mean(infs)), float(np.std(infs, ddof=1) / np.sqrt(n_traj))


# ---------------------------------------------------------------------------
# gradients through the noisy cost


def noisy_gradient(circuit: Circuit, target, model: NoiseModel, mode: str = "auto",
                   n_traj: int = 128, seed: int = 0, h: float = 1e-4,
                   traj_backend: str = "auto") -> GradientReport:
    """Gradient of the noisy infidelity w.r.t. the source gate angles.

    Exact mode (n <= 10): two-point parameter shift for the unitary
    dependence at frozen channel rates, plus the analytic chain-rule term for
    the angle-dependent rates.  MC mode: plain central finite differences of
    the trajectory estimator with common random numbers.
    """
    n = circuit.n
    if mode == "auto":
        mode = "exact" if n <= EXACT_QUBIT_LIMIT else "mc"
    theta = circuit.theta
    grad = np.zeros(circuit.m)
    if mode == "exact":
        f = target.to_dense() if isinstance(target, MPS) else np.asarray(target)
        base = compile_native(circuit)
        base_rates = _rzz_rates(base, model)
        n_evals = 0
        for i in range(circuit.m):
            shift, factor = shift_rule(i)
            up, dn = theta.copy(), theta.copy()
            up[i] += shift
            dn[i] -= shift
            iu = noisy_infidelity_exact(compile_native(circuit.with_theta(up)), f,
                                        model, rates=base_rates)
            idn = noisy_infidelity_exact(compile_native(circuit.with_theta(dn)), f,
                                         model, rates=base_rates)
            grad[i] = factor * (iu - idn)
            n_evals += 2
        # chain rule through r(theta): one derivative-channel evaluation per
        # (gate, qubit); each RZZ angle is a function of a single Cartan angle.
        for rzz_i, op in enumerate(base.rzz_ops()):
            if op.dangle_dsource == 0.0:
                continue
            didr = 0.0
            for side in (0, 1):
                didr += noisy_infidelity_exact(base, f, model, rates=base_rates,
                                               deriv_channel=(rzz_i, side))
                n_evals += 1
            gidx, coeff = op.source
            param = circuit.gates[gidx].offset + coeff
            drdtheta = model.depol_rate_derivative(op.angle)
            grad[param] += didr * drdtheta * op.dangle_dsource
        return GradientReport(grad=grad, method="noisy_exact", n_evals=n_evals)
    base_rates = None
    tag = f"noisy_mc(h={h:g})"
    if mode == "mc_frozen":
        # Freeze insertion rates at the base angles: the trajectory Pauli
        # patterns are then identical across the +/- evaluations, so the
        # differences carry only the smooth unitary dependence.
        base_rates = _channel_rates(compile_native(circuit), model, None)
        tag = f"noisy_mc_frozen(h={h:g})"
    elif mode != "mc":
        raise ValueError(f"unknown noisy-gradient mode {mode!r}")
    n_evals = 0
    for i in range(circuit.m):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        iu, _ = noisy_infidelity_mc(compile_native(circuit.with_theta(up)), target,
                                    model, n_traj, seed, backend=traj_backend,
                                    rates=base_rates)
        idn, _ = noisy_infidelity_mc(compile_native(circuit.with_theta(dn)), target,
                                     model, n_traj, seed, backend=traj_backend,
                                     rates=base_rates)
        grad[i] = (iu - idn) / (2.0 * h)
        n_evals += 2
    return GradientReport(grad=grad, method=tag, n_evals=n_evals)


def noise_pressure_gradient(circuit: Circuit, target, model: NoiseModel,
                            n_traj: int = 256, seed: int = 0, delta: float = 0.05,
                            traj_backend: str = "auto") -> np.ndarray:
    """Chain-rule term d I / d r_g * d r / d theta, estimated by trajectories.

    The noisy infidelity is affine in each channel rate, so bumping one
    channel's rate by a large delta and differencing (with common random
    numbers) gives an unbiased estimate of dI/dr without any step-size error.
    """
    native = compile_native(circuit)
    base_rates = _channel_rates(native, model, None)
    base, _ = noisy_infidelity_mc(native, target, model, n_traj, seed,
                                  backend=traj_backend, rates=base_rates)
    grad = np.zeros(circuit.m)
    for rzz_i, op in enumerate(native.rzz_ops()):
        if op.dangle_dsource == 0.0:
            continue
        didr = 0.0
        for side in (0, 1):
            bumped = base_rates.copy()
            bumped[rzz_i, side] = min(bumped[rzz_i, side] + delta, 1.0 / 3.0 - 1e-9)
            eff_delta = bumped[rzz_i, side] - base_rates[rzz_i, side]
            val, _ = noisy_infidelity_mc(native, target, model, n_traj, seed,
                                         backend=traj_backend, rates=bumped)
            didr += (val - base) / eff_delta
        gidx, coeff = op.source
        param = circuit.gates[gidx].offset + coeff
        grad[param] += didr * model.depol_rate_derivative(op.angle) * op.dangle_dsource
    return grad
