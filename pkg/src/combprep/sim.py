"""Noiseless circuit execution and gradients.

Two backends: a dense statevector (n <= 26) and an MPS evolver for larger
registers.  Three gradient engines: parameter-shift (exact, any backend),
adjoint (one forward plus one reverse dense pass), and central finite
differences as the oracle.

Dense states are flat contiguous arrays; gate application uses reshaped
views so adjacent-pair gates cost one batched GEMM.  For batched work
(noise trajectories) the same kernels take a (B, 2**n) array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fastkernels
from .ansatz import Circuit, shift_rule, su4_unitary, su4_unitary_and_derivs
from .errors import CapacityError, ConfigError
from .mps import MPS, _MpsEvolver, mps_overlap
from .native import NativeCircuit, op_matrix

DENSE_QUBIT_LIMIT = 26
_FAST_KERNEL_MIN_N = 18  # below this the numpy views win on call overhead


@dataclass(frozen=True)
class DenseBackend:
    dtype: type = np.complex128
    limit: int = DENSE_QUBIT_LIMIT

    kind = "dense"


@dataclass(frozen=True)
class MpsBackend:
    chi_max: int = 128
    tol: float = 1e-12

    kind = "mps"


# ---------------------------------------------------------------------------
# dense kernels (state shaped (B, 2**n); B = 1 for plain vectors)


def _as_batch(state: np.ndarray) -> tuple[np.ndarray, bool]:
    if state.ndim == 1:
        return state[None, :], True
    return state, False


_KRON_R_MAX = 8  # below this env width a kron'ed single GEMM beats batched matmul


def _apply_block(st: np.ndarray, u: np.ndarray, a: int, k: int, r: int) -> np.ndarray:
    """u (k x k) on the middle axis of the (a, k, r) view of a flat state."""
    if r == 1:
        return st.reshape(a, k) @ u.T
    if r <= _KRON_R_MAX:
        w = np.kron(u, np.eye(r, dtype=u.dtype))
        return st.reshape(a, k * r) @ w.T
    return np.matmul(u, st.reshape(a, k, r))


def apply_1q(state: np.ndarray, u2: np.ndarray, q: int, n: int) -> np.ndarray:
    st, squeeze = _as_batch(state)
    b = st.shape[0]
    u2 = u2.astype(st.dtype, copy=False)
    out = _apply_block(st, u2, b << q, 2, 1 << (n - q - 1)).reshape(b, -1)
    return out[0] if squeeze else out


def apply_2q(state: np.ndarray, u4: np.ndarray, qa: int, qb: int, n: int) -> np.ndarray:
    """General two-qubit gate; adjacent pairs take single-GEMM paths."""
    st, squeeze = _as_batch(state)
    b = st.shape[0]
    u4 = u4.astype(st.dtype, copy=False)
    if qa > qb:
        qa, qb = qb, qa
        u4 = u4.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4)
    if qb == qa + 1:
        out = _apply_block(st, u4, b << qa, 4, 1 << (n - qa - 2)).reshape(b, -1)
    else:
        a, mid, r = b << qa, 1 << (qb - qa - 1), 1 << (n - qb - 1)
        v = st.reshape(a, 2, mid, 2, r)
        out = np.einsum("IJij,aimjr->aImJr", u4.reshape(2, 2, 2, 2), v).reshape(b, -1)
    return out[0] if squeeze else out


def _apply_2q_owned(state: np.ndarray, u4: np.ndarray, qa: int, qb: int, n: int) -> np.ndarray:
    """Two-qubit gate on a state the caller owns (may mutate in place)."""
    if (fastkernels.HAVE_NUMBA and n >= _FAST_KERNEL_MIN_N and state.ndim == 1
            and state.flags.c_contiguous and np.iscomplexobj(state)):
        return fastkernels.apply_2q_inplace(state, u4, qa, qb, n)
    return apply_2q(state, u4, qa, qb, n)


def _pair_cross_owned(psi: np.ndarray, bconj: np.ndarray, qa: int, qb: int, n: int) -> np.ndarray:
    if fastkernels.HAVE_NUMBA and n >= _FAST_KERNEL_MIN_N and psi.flags.c_contiguous \
            and bconj.flags.c_contiguous:
        return fastkernels.pair_cross(psi, bconj, qa, qb, n)
    return _pair_cross(psi, bconj, qa, qb, n)


def apply_rzz_inplace(state: np.ndarray, theta: float, qa: int, qb: int, n: int) -> np.ndarray:
    """Diagonal fast path: one broadcast multiply, in place."""
    st, squeeze = _as_batch(state)
    b = st.shape[0]
    if qa > qb:
        qa, qb = qb, qa
    a, mid, r = b << qa, 1 << (qb - qa - 1), 1 << (n - qb - 1)
    ph = np.exp(np.array([[-0.5j, 0.5j], [0.5j, -0.5j]]) * theta)
    v = st.reshape(a, 2, mid, 2, r)
    v *= ph[None, :, None, :, None]
    return state


def apply_pauli_inplace(state: np.ndarray, kind: str, q: int, n: int) -> np.ndarray:
    """X / Y / Z on one qubit without a matmul, in place up to a temp slice."""
    st, _ = _as_batch(state)
    b = st.shape[0]
    a, r = b << q, 1 << (n - q - 1)
    v = st.reshape(a, 2, r)
    if kind == "z":
        v[:, 1, :] *= -1.0
        return state
    tmp = v[:, 0, :].copy()
    v[:, 0, :] = v[:, 1, :]
    v[:, 1, :] = tmp
    if kind == "y":
        v[:, 0, :] *= -1.0j
        v[:, 1, :] *= 1.0j
    return state


def uniform_state(n: int, dtype=np.complex128) -> np.ndarray:
    return np.full(2**n, 2.0 ** (-n / 2.0), dtype=dtype)


def zero_state(n: int, dtype=np.complex128) -> np.ndarray:
    out = np.zeros(2**n, dtype=dtype)
    out[0] = 1.0
    return out


def run_native_dense(native: NativeCircuit, state: np.ndarray | None = None,
                     dtype=np.complex128) -> np.ndarray:
    """Apply a native op list to |0...0> (or a supplied state)."""
    n = native.n
    psi = zero_state(n, dtype) if state is None else state
    for op in native.ops:
        if op.kind == "rzz":
            psi = np.ascontiguousarray(psi)
            apply_rzz_inplace(psi, op.angle, *op.qubits, n=n)
        else:
            psi = apply_1q(psi, op_matrix(op).astype(dtype), op.qubits[0], n)
    return psi


def run(circuit: Circuit | NativeCircuit, backend=DenseBackend()):
    """Execute a circuit: Hadamard column (implicit for ansatz circuits), then gates."""
    n = circuit.n
    if backend.kind == "dense":
        if n > backend.limit:
            raise CapacityError(f"dense backend limited to n <= {backend.limit}, got {n}")
        if isinstance(circuit, NativeCircuit):
            return run_native_dense(circuit, dtype=backend.dtype)
        psi = uniform_state(n, backend.dtype)
        for gate in circuit.gates:
            u = su4_unitary(gate.params(circuit.theta)).astype(backend.dtype)
            psi = _apply_2q_owned(psi, u, *gate.qubits, n=n)
        return psi
    if isinstance(circuit, NativeCircuit):
        ev = _MpsEvolver(MPS.basis_state([0] * n), backend.chi_max, backend.tol)
        for op in circuit.ops:
            if op.kind == "rzz":
                ev.apply_2q(op_matrix(op), *op.qubits)
            else:
                ev.apply_1q(op_matrix(op), op.qubits[0])
    else:
        ev = _MpsEvolver(MPS.uniform(n), backend.chi_max, backend.tol)
        for gate in circuit.gates:
            ev.apply_2q(su4_unitary(gate.params(circuit.theta)), *gate.qubits)
    return ev.to_mps()


def state_overlap(target, state) -> complex:
    """<target|state> for any mix of dense vectors and MPS."""
    t_mps, s_mps = isinstance(target, MPS), isinstance(state, MPS)
    if t_mps and s_mps:
        return complex(mps_overlap(target, state))
    if t_mps:
        target = target.to_dense()
    if s_mps:
        state = state.to_dense()
    return complex(np.vdot(target, state))


def infidelity(circuit, target, backend=DenseBackend()) -> float:
    """1 - |<target|phi(theta)>|^2 with a normalized target."""
    state = run(circuit, backend)
    ov = state_overlap(target, state)
    return float(np.clip(1.0 - abs(ov) ** 2, 0.0, 1.0))


@dataclass
class GradientReport:
    grad: np.ndarray
    method: str
    n_evals: int
    overlap: float | None = None  # |<f|phi>|^2 at the evaluation point

    @property
    def avg_abs(self) -> float:
        return float(np.mean(np.abs(self.grad))) if self.grad.size else 0.0


def _dense_target(target, n: int, dtype) -> np.ndarray:
    if isinstance(target, MPS):
        target = target.to_dense()
    target = np.asarray(target)
    if target.size != 2**n:
        raise ValueError("target length does not match the register size")
    return target.astype(dtype, copy=False)


def overlap_gradient(circuit: Circuit, bra: np.ndarray,
                     dtype=np.complex128) -> tuple[complex, np.ndarray]:
    """<bra|phi(theta)> and the vector <bra|d phi / d theta_i>, one reverse pass."""
    n = circuit.n
    if n > DENSE_QUBIT_LIMIT:
        raise CapacityError("adjoint gradient requires the dense backend")
    bra = np.asarray(bra).astype(dtype, copy=False)
    gates = circuit.gates
    us = [su4_unitary(g.params(circuit.theta)).astype(dtype) for g in gates]
    psi = uniform_state(n, dtype)
    for u, g in zip(us, gates):
        psi = _apply_2q_owned(psi, u, *g.qubits, n=n)
    o = np.vdot(bra, psi)
    dvec = np.zeros(circuit.m, dtype=complex)
    bconj = np.conjugate(bra)  # carry conj(b): the backward pass never conjugates big arrays
    for k in range(len(gates) - 1, -1, -1):
        qa, qb = gates[k].qubits
        udag = us[k].conj().T
        psi = _apply_2q_owned(psi, udag, qa, qb, n)
        kmat = _pair_cross_owned(psi, bconj, qa, qb, n)
        _, dus = su4_unitary_and_derivs(gates[k].params(circuit.theta))
        base = gates[k].offset
        for i, du in enumerate(dus):
            # <b|dU|psi> = trace(dU @ K) with the environment contracted in kmat
            dvec[base + i] = np.einsum("ts,st->", du.astype(dtype), kmat)
        bconj = _apply_2q_owned(bconj, udag.conj(), qa, qb, n)
    return complex(o), dvec


def adjoint_gradient(circuit: Circuit, target, dtype=np.complex128) -> GradientReport:
    """Exact infidelity gradient in one forward and one reverse dense pass."""
    f = _dense_target(target, circuit.n, dtype)
    o, dvec = overlap_gradient(circuit, f, dtype)
    grad = -2.0 * np.real(np.conj(o) * dvec)
    return GradientReport(grad=grad, method="adjoint", n_evals=1,
                          overlap=float(abs(o) ** 2))


def _pair_cross(psi: np.ndarray, bconj: np.ndarray, qa: int, qb: int, n: int) -> np.ndarray:
    """K[s, t] = sum_env psi[(s, env)] * bconj[(t, env)] over the qubit pair."""
    if qb == qa + 1:
        a, r = 1 << qa, 1 << (n - qa - 2)
        if r == 1:
            pv = psi.reshape(a, 4)
            bv = bconj.reshape(a, 4)
            return pv.T @ bv
        pv = psi.reshape(a, 4, r)
        bv = bconj.reshape(a, 4, r)
        # batched (4, r) @ (r, 4), then the batch sum: one pass over each state
        return np.matmul(pv, bv.transpose(0, 2, 1)).sum(axis=0)
    a, mid, r = 1 << qa, 1 << (qb - qa - 1), 1 << (n - qb - 1)
    pv = psi.reshape(a, 2, mid, 2, r)
    bv = bconj.reshape(a, 2, mid, 2, r)
    k = np.einsum("aimjr,aImJr->ijIJ", pv, bv)
    return k.reshape(4, 4)


def parameter_shift_gradient(circuit: Circuit, target, backend=DenseBackend()) -> GradientReport:
    """Exact two-point shift rule, 2M circuit runs."""
    theta = circuit.theta
    grad = np.zeros(circuit.m)
    for i in range(circuit.m):
        shift, factor = shift_rule(i)
        up = theta.copy()
        up[i] += shift
        dn = theta.copy()
        dn[i] -= shift
        grad[i] = factor * (infidelity(circuit.with_theta(up), target, backend)
                            - infidelity(circuit.with_theta(dn), target, backend))
    return GradientReport(grad=grad, method="parameter_shift", n_evals=2 * circuit.m)


def finite_diff_gradient(circuit: Circuit, target, backend=DenseBackend(),
                         h: float = 1e-6) -> GradientReport:
    theta = circuit.theta
    grad = np.zeros(circuit.m)
    for i in range(circuit.m):
        up = theta.copy()
        up[i] += h
        dn = theta.copy()
        dn[i] -= h
        grad[i] = (infidelity(circuit.with_theta(up), target, backend)
                   - infidelity(circuit.with_theta(dn), target, backend)) / (2.0 * h)
    return GradientReport(grad=grad, method=f"finite_diff(h={h:g})", n_evals=2 * circuit.m)


def gradient(circuit: Circuit, target, method: str = "parameter_shift",
             backend=DenseBackend(), h: float = 1e-6) -> GradientReport:
    """Gradient of the infidelity with the chosen engine."""
    if method == "adjoint":
        if backend.kind != "dense":
            raise ConfigError("adjoint differentiation is only supported on the dense backend")
        return adjoint_gradient(circuit, target, dtype=backend.dtype)
    if method == "parameter_shift":
        return parameter_shift_gradient(circuit, target, backend)
    if method == "finite_diff":
        return finite_diff_gradient(circuit, target, backend, h=h)
    raise ConfigError(f"unknown gradient method {method!r}")


@dataclass
class ScanRow:
    mode: str
    n: int
    repeat: int
    overlap: float
    avg_grad: float


def gradient_scan(grid, n_layers: int, spec, mode: str, n_repeats: int, seed: int,
                  target=None, backend=DenseBackend(), engine: str = "adjoint",
                  traces=None) -> list[ScanRow]:
    """Initial overlap and average gradient magnitude statistics.

    random_init: draws each angle uniformly from [-pi, pi] per repeat and
    differentiates against the lam=1 target.  warm_start: collates the
    per-step records of previously computed interpolation traces.
    """
    from .ansatz import build_comb_ansatz

    rows: list[ScanRow] = []
    if mode == "random_init":
        if target is None:
            from .crossinterp import build_target

            target = build_target(spec.with_lambda(1.0), grid, seed=seed).mps
        if backend.kind == "dense" and isinstance(target, MPS):
            target = target.to_dense().astype(backend.dtype)
        circ = build_comb_ansatz(grid, n_layers)
        for rep in range(n_repeats):
            rng = np.random.default_rng(np.random.SeedSequence((seed, grid.n, rep)))
            theta = rng.uniform(-np.pi, np.pi, size=circ.m)
            c = circ.with_theta(theta)
            rep_report = gradient(c, target, method=engine, backend=backend)
            ov = rep_report.overlap
            if ov is None:
                ov = float(abs(state_overlap(target, run(c, backend))) ** 2)
            rows.append(ScanRow("random_init", grid.n, rep, ov, rep_report.avg_abs))
        return rows
    if mode == "warm_start":
        if not traces:
            raise ConfigError("warm_start mode needs at least one interpolation trace")
        for t_idx, trace in enumerate(traces):
            for step in trace.steps:
                if step.initial_avg_grad is None:
                    continue
                rows.append(ScanRow("warm_start", grid.n, len(rows),
                                    step.initial_overlap, step.initial_avg_grad))
        return rows
    raise ConfigError(f"unknown scan mode {mode!r}")
