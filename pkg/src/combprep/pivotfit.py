"""Circuit cross interpolation: train a circuit against target values at an
adaptively grown set of computational-basis pivots, without any tensor
network in the loop.

The cost is the sum of squared residuals between the circuit amplitudes and
the normalized target values at the pivots.  New pivots are proposed by
local bit modifications (all single-bit flips plus adjacent-pair double
flips) and the one that maximizes the enlarged cost is kept, so optimization
keeps attacking the largest observed errors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ansatz import Circuit, build_comb_ansatz
from .crossinterp import peak_pivot
from .errors import CapacityError
from .grids import GridSpec, TargetSpec, bits_to_index, normalized_state
from .sim import overlap_gradient, run
from .training import Adam

logger = logging.getLogger(__name__)

CCI_DENSE_LIMIT = 20


@dataclass
class PivotSet:
    """Ordered unique pivots with cached normalized target amplitudes."""

    pivots: list[tuple[int, ...]]
    values: list[float]
    capacity: int

    def __post_init__(self):
        if len(set(self.pivots)) != len(self.pivots):
            raise ValueError("pivots must be unique")
        if len(self.values) != len(self.pivots):
            raise ValueError("one cached value per pivot required")

    def __len__(self) -> int:
        return len(self.pivots)

    def __contains__(self, p) -> bool:
        return tuple(p) in set(self.pivots)

    def with_pivot(self, p, value: float) -> "PivotSet":
        return PivotSet(self.pivots + [tuple(p)], self.values + [float(value)],
                        self.capacity)

    def without_index(self, idx: int) -> "PivotSet":
        pv = list(self.pivots)
        vv = list(self.values)
        pv.pop(idx)
        vv.pop(idx)
        return PivotSet(pv, vv, self.capacity)

    def indices(self) -> np.ndarray:
        return bits_to_index(np.array(self.pivots, dtype=np.int64))


def propose_pivots(p) -> list[tuple[int, ...]]:
    """All single-bit flips of p plus all adjacent-pair double flips."""
    p = tuple(int(b) for b in p)
    n = len(p)
    out = []
    for i in range(n):
        q = list(p)
        q[i] ^= 1
        out.append(tuple(q))
    for i in range(n - 1):
        q = list(p)
        q[i] ^= 1
        q[i + 1] ^= 1
        out.append(tuple(q))
    return out


def _signed_amplitudes(state: np.ndarray, pivots: PivotSet) -> tuple[np.ndarray, float]:
    """Pivot amplitudes with the global sign fixed on the first pivot."""
    amps = state[pivots.indices()]
    s = 1.0
    if len(amps) and np.real(amps[0]) < 0:
        s = -1.0
    return s * amps, s


def cci_cost(pivots: PivotSet, state: np.ndarray) -> float:
    """Sum of squared residuals |f(p_i) - <p_i|phi>|^2 over the pivot set."""
    if len(pivots) == 0:
        return 0.0
    amps, _ = _signed_amplitudes(state, pivots)
    return float(np.sum(np.abs(np.array(pivots.values) - amps) ** 2))


def _cost_with_candidate(pivots: PivotSet, state: np.ndarray, base_cost: float,
                         cand: tuple, value: float) -> float:
    amp = state[int(bits_to_index(np.array(cand, dtype=np.int64)))]
    _, s = _signed_amplitudes(state, pivots)
    return base_cost + float(abs(value - s * amp) ** 2)


def grow_pivots(pivots: PivotSet, state: np.ndarray, target_values: np.ndarray) -> PivotSet:
    """Add the candidate pivot that maximizes the enlarged cost.

    Candidates come from propose_pivots over the current set; ties break by
    lexicographic bitstring order.  If no candidate raises the cost the
    lexicographically smallest one is added (logged).
    """
    if len(pivots) >= pivots.capacity:
        raise ValueError("pivot set already at capacity")
    existing = set(pivots.pivots)
    cands = sorted({q for p in pivots.pivots for q in propose_pivots(p)} - existing)
    if not cands:
        logger.warning("no new pivot candidates available")
        return pivots
    base = cci_cost(pivots, state)
    best, best_cost = None, -np.inf
    for q in cands:  # lexicographic order makes the argmax tie-break stable
        val = float(target_values[int(bits_to_index(np.array(q, dtype=np.int64)))])
        cost = _cost_with_candidate(pivots, state, base, q, val)
        if cost > best_cost + 1e-18:
            best, best_cost = q, cost
    if best_cost <= base + 1e-18:
        logger.info("no candidate increases the cost; adding the smallest one")
        best = cands[0]
    val = float(target_values[int(bits_to_index(np.array(best, dtype=np.int64)))])
    return pivots.with_pivot(best, val)


def _cost_gradient(circuit: Circuit, pivots: PivotSet, n: int) -> tuple[float, np.ndarray, np.ndarray]:
    """Cost, gradient and the dense circuit state via one adjoint pass."""
    state = run(circuit)
    amps, s = _signed_amplitudes(state, pivots)
    resid = amps - np.array(pivots.values)  # s*a_i - t_i
    bra = np.zeros(2**n, dtype=complex)
    bra[pivots.indices()] = s * resid  # <bra| = sum_i conj(w_i) <p_i|
    _, dvec = overlap_gradient(circuit, bra)
    grad = 2.0 * np.real(dvec)
    return float(np.sum(np.abs(resid) ** 2)), grad, state


@dataclass
class CciIteration:
    iteration: int
    n_pivots: int
    cost: float
    infidelity: float


@dataclass
class CciResult:
    theta: np.ndarray
    trace: list[CciIteration] = field(default_factory=list)
    converged: bool = False


def run_cci(spec: TargetSpec, grid: GridSpec, n_layers: int = 2, n_pivots_max: int = 16,
            n_epochs: int = 200, max_iters: int = 30, tol: float = 1e-10,
            lr: float = 1e-2, seed: int = 0, jitter: float = 1e-2) -> CciResult:
    """Alternate cost minimization and pivot growth until convergence.

    Starts from the grid point nearest the target peak.  Once the pivot set
    reaches capacity, each iteration replaces the smallest-residual pivot
    (then grows once), keeping pressure on the largest errors.
    """
    if grid.n > CCI_DENSE_LIMIT:
        raise CapacityError(f"CCI normalization uses dense enumeration (n <= {CCI_DENSE_LIMIT})")
    f_norm = normalized_state(spec, grid)
    circuit = build_comb_ansatz(grid, n_layers)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xCC1)))
    theta = circuit.theta + jitter * rng.standard_normal(circuit.m)

    p0 = tuple(int(b) for b in peak_pivot(spec, grid))
    pivots = PivotSet([p0], [float(f_norm[int(bits_to_index(np.array(p0)))])],
                      capacity=n_pivots_max)

    result = CciResult(theta=theta)
    below_tol_streak = 0
    for it in range(max_iters):
        adam = Adam(lr=lr)
        best_theta, best_cost = theta.copy(), np.inf
        for _ in range(n_epochs):
            cost, grad, state = _cost_gradient(circuit.with_theta(theta), pivots, grid.n)
            if cost < best_cost:
                best_cost, best_theta = cost, theta.copy()
            theta = adam.step(theta, grad)
        cost, _, state = _cost_gradient(circuit.with_theta(best_theta), pivots, grid.n)
        theta = best_theta
        infid = 1.0 - abs(np.vdot(f_norm, state)) ** 2
        result.trace.append(CciIteration(it, len(pivots), cost, float(infid)))
        # converged once newly proposed pivots stop revealing error (the cost
        # stays below tol across a growth), or the full set is fitted
        below_tol_streak = below_tol_streak + 1 if cost < tol else 0
        if below_tol_streak >= 2 or (cost < tol and len(pivots) == pivots.capacity):
            result.converged = True
            break
        if len(pivots) < pivots.capacity:
            pivots = grow_pivots(pivots, state, f_norm)
        else:
            amps, _ = _signed_amplitudes(state, pivots)
            resid = np.abs(np.array(pivots.values) - amps)
            pivots = grow_pivots(pivots.without_index(int(np.argmin(resid))), state, f_norm)
    result.theta = theta
    return result
