"""Interpolated state-preparation training: a lambda schedule over smoothly
connected targets, warm-started Adam at every step, and an optional
noise-aware fine-tune of the compiled circuit at the final step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .ansatz import Circuit, build_comb_ansatz
from .crossinterp import build_target
from .errors import ConvergenceError
from .grids import GridSpec, TargetSpec, target_derivative_norm
from .mps import MPS
from .native import NativeCircuit, compile_native, count_two_qubit, prune
from .noise import (NoiseModel, noise_pressure_gradient, noisy_gradient,
                    noisy_infidelity_exact, noisy_infidelity_mc, EXACT_QUBIT_LIMIT)
from .sim import DenseBackend, gradient, infidelity


@dataclass
class Adam:
    """Full-batch Adam with bias correction; lr = 0 leaves parameters fixed."""

    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class Schedule:
    """Interpolation-parameter ladder and per-step optimization budget."""

    lambdas: np.ndarray
    n_epochs: int = 1000
    n_epochs_final: int = 10000
    lr: float = 1e-2

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        if self.lambdas.size < 1 or np.any(np.diff(self.lambdas) <= 0):
            raise ValueError("lambda values must be strictly increasing")
        if abs(self.lambdas[-1] - 1.0) > 1e-12:
            raise ValueError("the schedule must end at lambda = 1")

    @classmethod
    def uniform(cls, delta: float = 0.05, **kw) -> "Schedule":
        k = int(round(1.0 / delta))
        return cls(lambdas=np.linspace(0.0, 1.0, k + 1), **kw)

    @classmethod
    def adaptive(cls, spec: TargetSpec, grid: GridSpec, epsilon: float = 0.05,
                 h: float = 1e-4, max_steps: int = 200, **kw) -> "Schedule":
        lams = [0.0]
        while lams[-1] < 1.0 and len(lams) <= max_steps:
            step = delta_lambda_bound(spec, grid, lams[-1], epsilon, h)
            lams.append(min(1.0, lams[-1] + step))
        lams[-1] = 1.0
        return cls(lambdas=np.array(lams), **kw)

    def epochs_for(self, lam: float) -> int:
        return self.n_epochs_final if abs(lam - 1.0) < 1e-12 else self.n_epochs


def delta_lambda_bound(spec: TargetSpec, grid: GridSpec, lam: float, epsilon: float,
                       h: float = 1e-4) -> float:
    """Admissible schedule step: epsilon / || d|f>/d lambda ||."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    nrm = target_derivative_norm(spec, grid, lam, h)
    if nrm == 0.0:
        return np.inf
    return epsilon / nrm


@dataclass
class IqspStep:
    k: int
    lam: float
    initial_overlap: float
    initial_avg_grad: float | None
    initial_infidelity: float
    final_infidelity: float
    epochs: int
    wall_time: float
    target_chi: int = 0


@dataclass
class IqspTrace:
    steps: list[IqspStep] = field(default_factory=list)
    theta: np.ndarray | None = None
    checkpoints: list[np.ndarray] = field(default_factory=list)
    epoch_history: list[list[float]] = field(default_factory=list)

    @property
    def final_infidelity(self) -> float:
        return self.steps[-1].final_infidelity

    def to_json_dict(self) -> dict:
        return {
            "steps": [vars(s) for s in self.steps],
            "theta": None if self.theta is None else self.theta.tolist(),
        }


def optimize_step(circuit: Circuit, target, adam: Adam, n_epochs: int,
                  engine: str = "adjoint", backend=DenseBackend(),
                  jitter: float = 0.0, jitter_seed: int = 0) -> tuple[np.ndarray, list[float], dict]:
    """n_epochs full-gradient Adam steps; returns the best-seen parameters.

    jitter adds a seeded Gaussian perturbation to the starting angles.  The
    all-zero point is a symmetric stationary manifold of this ansatz where
    plain gradient flow stalls, so the interpolation driver breaks the
    symmetry once, at the first optimized step; the state it prepares is only
    affected at second order in the jitter.
    """
    theta = circuit.theta.copy()
    if jitter > 0.0:
        rng = np.random.default_rng(np.random.SeedSequence((jitter_seed, 0x1177)))
        theta = theta + jitter * rng.standard_normal(theta.size)
    history: list[float] = []
    best_theta = theta.copy()
    best_inf = np.inf
    first: dict = {}
    for epoch in range(n_epochs):
        c = circuit.with_theta(theta)
        rep = gradient(c, target, method=engine, backend=backend)
        if not np.all(np.isfinite(rep.grad)):
            bad = int(np.nonzero(~np.isfinite(rep.grad))[0][0])
            raise ConvergenceError(f"non-finite gradient in parameter {bad} at epoch {epoch}")
        inf = 1.0 - rep.overlap if rep.overlap is not None \
            else infidelity(c, target, backend)
        if epoch == 0:
            first = {"overlap": rep.overlap, "avg_grad": rep.avg_abs, "infidelity": inf}
        history.append(inf)
        if inf < best_inf:
            best_inf = inf
            best_theta = theta.copy()
        theta = adam.step(theta, rep.grad)
    final_inf = infidelity(circuit.with_theta(theta), target, backend)
    history.append(final_inf)
    if final_inf < best_inf:
        best_theta = theta.copy()
    return best_theta, history, first


def _step_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence((seed, k)).generate_state(1)[0])


def run_iqsp(spec: TargetSpec, grid: GridSpec, n_layers: int, schedule: Schedule,
             chi_max: int = 16, tci_tol: float = 1e-10, backend=DenseBackend(),
             engine: str = "adjoint", seed: int = 0, jitter: float = 1e-2,
             keep_checkpoints: bool = True) -> IqspTrace:
    """Sweep the lambda ladder, warm-starting each step from the previous optimum.

    The k = 0 target is the constant function, exactly prepared by the
    zero-angle ansatz, so no optimization happens there.
    """
    circuit = build_comb_ansatz(grid, n_layers)
    theta = circuit.theta.copy()
    trace = IqspTrace()
    dense = backend.kind == "dense"
    for k, lam in enumerate(schedule.lambdas):
        t0 = time.time()
        if k == 0:
            trace.steps.append(IqspStep(k=0, lam=float(lam), initial_overlap=1.0,
                                        initial_avg_grad=None, initial_infidelity=0.0,
                                        final_infidelity=0.0, epochs=0, wall_time=0.0,
                                        target_chi=1))
            if keep_checkpoints:
                trace.checkpoints.append(theta.copy())
            trace.epoch_history.append([])
            continue
        built = build_target(spec.with_lambda(float(lam)), grid, chi_max=chi_max,
                             tol=tci_tol, seed=_step_seed(seed, k))
        target = built.mps.to_dense().astype(backend.dtype) if dense else built.mps
        epochs = schedule.epochs_for(float(lam))
        adam = Adam(lr=schedule.lr)
        step_jitter = jitter if not np.any(theta) else 0.0
        theta, history, first = optimize_step(circuit.with_theta(theta), target, adam,
                                              epochs, engine=engine, backend=backend,
                                              jitter=step_jitter,
                                              jitter_seed=_step_seed(seed, 10000 + k))
        final_inf = infidelity(circuit.with_theta(theta), target, backend)
        trace.steps.append(IqspStep(
            k=k, lam=float(lam),
            initial_overlap=first.get("overlap") if first.get("overlap") is not None else 1.0 - first["infidelity"],
            initial_avg_grad=first.get("avg_grad"),
            initial_infidelity=first["infidelity"],
            final_infidelity=final_inf,
            epochs=epochs, wall_time=time.time() - t0,
            target_chi=built.mps.max_bond))
        trace.epoch_history.append(history)
        if keep_checkpoints:
            trace.checkpoints.append(theta.copy())
    trace.theta = theta
    return trace


@dataclass
class FinetuneReport:
    noiseless_before: float
    noiseless_after: float        # tuned circuit, before pruning
    noiseless_after_prune: float  # pruned native circuit
    noisy_before: float
    noisy_after: float
    noisy_before_err: float
    noisy_after_err: float
    two_qubit_before: int
    two_qubit_after: int
    pruned: int
    epochs: int


def noise_aware_finetune(circuit: Circuit, target, model: NoiseModel,
                         n_epochs: int = 20, lr: float = 1e-2, seed: int = 0,
                         n_traj_train: int = 16, n_traj_eval: int = 10000,
                         pressure_traj: int = 512, pressure_refresh: int = 5,
                         theta_min: float = 1e-4) -> tuple[np.ndarray, NativeCircuit, FinetuneReport]:
    """Re-optimize against the noisy infidelity on the compiled circuit, then prune.

    n <= 10 uses the exact-Kraus cost and its analytic gradient; larger
    registers use trajectory estimates: frozen-rate finite differences for
    the unitary part plus the angle-dependent-rate pressure term, both with
    common random numbers.
    """
    n = circuit.n
    exact = n <= EXACT_QUBIT_LIMIT

    def noisy_eval(nat: NativeCircuit, eval_seed: int, n_traj: int) -> tuple[float, float]:
        if exact:
            return noisy_infidelity_exact(nat, target, model), 0.0
        return noisy_infidelity_mc(nat, target, model, n_traj, eval_seed)

    nu_native = compile_native(circuit)
    noiseless_before = infidelity(circuit, target)
    noisy_before, err_before = noisy_eval(nu_native, seed + 1, n_traj_eval)

    theta = circuit.theta.copy()
    adam = Adam(lr=lr)
    best_theta = theta.copy()
    best_cost = np.inf
    pressure = None
    for epoch in range(n_epochs):
        c = circuit.with_theta(theta)
        if exact:
            rep = noisy_gradient(c, target, model, mode="exact")
            grad = rep.grad
            cost = noisy_infidelity_exact(compile_native(c), target, model)
        else:
            rep = noisy_gradient(c, target, model, mode="mc_frozen",
                                 n_traj=n_traj_train, seed=seed)
            if pressure is None or epoch % pressure_refresh == 0:
                pressure = noise_pressure_gradient(c, target, model,
                                                   n_traj=pressure_traj, seed=seed)
            grad = rep.grad + pressure
            cost, _ = noisy_infidelity_mc(compile_native(c), target, model,
                                          n_traj_train * 8, seed)
        if cost < best_cost:
            best_cost = cost
            best_theta = theta.copy()
        theta = adam.step(theta, grad)
    final_c = circuit.with_theta(theta)
    final_cost = noisy_eval(compile_native(final_c), seed, n_traj_train * 8)[0] if not exact \
        else noisy_infidelity_exact(compile_native(final_c), target, model)
    if final_cost < best_cost:
        best_theta = theta.copy()

    tuned = circuit.with_theta(best_theta)
    tuned_native = prune(compile_native(tuned), theta_min)
    noisy_after, err_after = noisy_eval(tuned_native, seed + 1, n_traj_eval)
    report = FinetuneReport(
        noiseless_before=noiseless_before,
        noiseless_after=infidelity(tuned, target),
        noiseless_after_prune=infidelity(tuned_native, target),
        noisy_before=noisy_before, noisy_after=noisy_after,
        noisy_before_err=err_before, noisy_after_err=err_after,
        two_qubit_before=count_two_qubit(nu_native),
        two_qubit_after=count_two_qubit(tuned_native),
        pruned=tuned_native.pruned_count, epochs=n_epochs)
    return best_theta, tuned_native, report
