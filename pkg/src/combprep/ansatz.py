"""Comb-like parameterized circuit: a Hadamard column followed by layers of
generic two-qubit gates in Cartan form.

Each two-qubit gate carries 15 angles:
    U = (A1 x A2) . exp(i (c1 XX + c2 YY + c3 ZZ)) . (B1 x B2)
with A/B given as z-y-z Euler triples (half-angle convention).  Parameter
layout per gate: [c1, c2, c3, A1(z,y,z), A2, B1, B2].  All-zero parameters
give the identity, so the freshly built circuit prepares the uniform state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .grids import GridSpec

PARAMS_PER_GATE = 15

_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)
_XX = np.kron(_X, _X)
_YY = np.kron(_Y, _Y)
_ZZ = np.kron(_Z, _Z)


def rot_z(t: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * t), 0.0], [0.0, np.exp(0.5j * t)]])


def rot_y(t: float) -> np.ndarray:
    c, s = np.cos(t / 2.0), np.sin(t / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rot_x(t: float) -> np.ndarray:
    c, s = np.cos(t / 2.0), np.sin(t / 2.0)
    return np.array([[c, -1.0j * s], [-1.0j * s, c]])


def euler_zyz(a: float, b: float, g: float) -> np.ndarray:
    return rot_z(a) @ rot_y(b) @ rot_z(g)


def cartan_core(c1: float, c2: float, c3: float) -> np.ndarray:
    """exp(i (c1 XX + c2 YY + c3 ZZ)) in closed form (the terms commute)."""
    u = np.zeros((4, 4), dtype=complex)
    # {|00>, |11>} block: c3 I + (c1 - c2) X
    pm, pp = c1 - c2, c1 + c2
    e3 = np.exp(1.0j * c3)
    u[0, 0] = u[3, 3] = e3 * np.cos(pm)
    u[0, 3] = u[3, 0] = e3 * 1.0j * np.sin(pm)
    # {|01>, |10>} block: -c3 I + (c1 + c2) X
    e3c = np.exp(-1.0j * c3)
    u[1, 1] = u[2, 2] = e3c * np.cos(pp)
    u[1, 2] = u[2, 1] = e3c * 1.0j * np.sin(pp)
    return u


def su4_unitary(params) -> np.ndarray:
    """4x4 unitary of one gate from its 15 angles."""
    p = np.asarray(params, dtype=float)
    if p.shape != (PARAMS_PER_GATE,):
        raise ValueError(f"expected {PARAMS_PER_GATE} parameters")
    a1, a2 = euler_zyz(*p[3:6]), euler_zyz(*p[6:9])
    b1, b2 = euler_zyz(*p[9:12]), euler_zyz(*p[12:15])
    return np.kron(a1, a2) @ cartan_core(*p[0:3]) @ np.kron(b1, b2)


def _euler_factors_and_derivs(a: float, b: float, g: float):
    fs = [rot_z(a), rot_y(b), rot_z(g)]
    gens = [_Z, _Y, _Z]
    mat = fs[0] @ fs[1] @ fs[2]
    derivs = []
    for j in range(3):
        parts = [(-0.5j * gens[j]) @ fs[j] if k == j else fs[k] for k in range(3)]
        derivs.append(parts[0] @ parts[1] @ parts[2])
    return mat, derivs


def su4_unitary_and_derivs(params):
    """Gate unitary plus dU/dtheta_i for all 15 parameters."""
    p = np.asarray(params, dtype=float)
    a1, da1 = _euler_factors_and_derivs(*p[3:6])
    a2, da2 = _euler_factors_and_derivs(*p[6:9])
    b1, db1 = _euler_factors_and_derivs(*p[9:12])
    b2, db2 = _euler_factors_and_derivs(*p[12:15])
    core = cartan_core(*p[0:3])
    left = np.kron(a1, a2)
    right = np.kron(b1, b2)
    u = left @ core @ right
    derivs = []
    for pp in (_XX, _YY, _ZZ):
        derivs.append(left @ (1.0j * pp @ core) @ right)
    for j in range(3):
        derivs.append(np.kron(da1[j], a2) @ core @ right)
    for j in range(3):
        derivs.append(np.kron(a1, da2[j]) @ core @ right)
    for j in range(3):
        derivs.append(left @ core @ np.kron(db1[j], b2))
    for j in range(3):
        derivs.append(left @ core @ np.kron(b1, db2[j]))
    return u, derivs


def shift_rule(param_index_in_gate: int) -> tuple[float, float]:
    """(shift, prefactor) of the exact parameter-shift rule for one angle."""
    if param_index_in_gate % PARAMS_PER_GATE < 3:
        return np.pi / 4.0, 1.0  # Cartan coefficient: exp(i c PP)
    return np.pi / 2.0, 0.5  # Euler angle: exp(-i t P / 2)


@dataclass(frozen=True)
class Su4Gate:
    """One two-qubit gate: qubit pair plus its slice in the parameter vector."""

    qubits: tuple[int, int]
    offset: int  # start index of its 15 angles in theta

    def params(self, theta: np.ndarray) -> np.ndarray:
        return theta[self.offset:self.offset + PARAMS_PER_GATE]


@dataclass
class Circuit:
    """Layered comb ansatz: implicit Hadamard column, then the gate list."""

    grid: GridSpec
    n_layers: int
    gates: list[Su4Gate]
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.m,):
            raise ValueError(f"theta must have length {self.m}")
        for g in self.gates:
            if not (0 <= g.qubits[0] < self.n and 0 <= g.qubits[1] < self.n):
                raise ValueError(f"gate qubits {g.qubits} out of range")

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def m(self) -> int:
        return PARAMS_PER_GATE * len(self.gates)

    def with_theta(self, theta) -> "Circuit":
        return Circuit(self.grid, self.n_layers, self.gates, np.asarray(theta, dtype=float))

    def gate_unitaries(self) -> list[np.ndarray]:
        return [su4_unitary(g.params(self.theta)) for g in self.gates]

    def to_json_dict(self) -> dict:
        return {
            "grid": self.grid.to_json_dict(),
            "layers": self.n_layers,
            "theta": self.theta.tolist(),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Circuit":
        circ = build_comb_ansatz(GridSpec.from_json_dict(doc["grid"]), doc["layers"])
        return circ.with_theta(np.asarray(doc["theta"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_json_dict(json.loads(text))


def comb_gate_pairs(grid: GridSpec) -> list[tuple[int, int]]:
    """Qubit pairs of one layer: inter-dimension staircase, then brickwork."""
    pairs = []
    for i in range(grid.d - 1):  # interface qubit = first qubit of each block
        pairs.append((i * grid.n_x, (i + 1) * grid.n_x))
    for blk in range(grid.d):
        off = blk * grid.n_x
        for q in range(0, grid.n_x - 1, 2):
            pairs.append((off + q, off + q + 1))
        for q in range(1, grid.n_x - 1, 2):
            pairs.append((off + q, off + q + 1))
    return pairs


def build_comb_ansatz(grid: GridSpec, n_layers: int) -> Circuit:
    """L layers of the staircase + brickwork pattern, all angles zero."""
    if n_layers < 1:
        raise ValueError("need at least one layer")
    layer = comb_gate_pairs(grid)
    gates = []
    for _ in range(n_layers):
        for pair in layer:
            gates.append(Su4Gate(qubits=pair, offset=PARAMS_PER_GATE * len(gates)))
    theta = np.zeros(PARAMS_PER_GATE * len(gates))
    return Circuit(grid=grid, n_layers=n_layers, gates=gates, theta=theta)
