"""Compilation of the Cartan-form ansatz into native gates: two-qubit ZZ
rotations plus single-qubit rotations (Hadamards of the initial column are
kept literal).

Each source gate becomes exactly three RZZ gates; the XX and YY terms are
conjugated to ZZ by fixed single-qubit frames which, together with the Euler
locals and the Pauli frames from angle folding, are fused into at most one
z-y-z rotation triple between any two two-qubit gates.  RZZ angles are
reported in the canonical range [0, pi/2].
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace

import numpy as np

from .ansatz import PARAMS_PER_GATE, Circuit, _H, _X, _Z, euler_zyz, rot_x

RZZ_CANON_MAX = np.pi / 2.0


@dataclass(frozen=True)
class NativeOp:
    kind: str            # 'h' | 'rx' | 'ry' | 'rz' | 'rzz'
    qubits: tuple[int, ...]
    angle: float | None = None
    source: tuple[int, int] | None = None  # (gate index, cartan coeff index)
    dangle_dsource: float = 0.0            # d(canonical angle)/d(source coefficient)


@dataclass
class NativeCircuit:
    n: int
    ops: list[NativeOp]
    source_gates: int = 0
    pruned_count: int = 0

    @property
    def source_m(self) -> int:
        return PARAMS_PER_GATE * self.source_gates

    def rzz_ops(self) -> list[NativeOp]:
        return [op for op in self.ops if op.kind == "rzz"]

    def provenance(self) -> dict[tuple[int, int], int]:
        """Map (source gate, coeff) -> position in the current op list."""
        return {op.source: i for i, op in enumerate(self.ops)
                if op.kind == "rzz" and op.source is not None}

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "source_gates": self.source_gates,
            "pruned_count": self.pruned_count,
            "ops": [
                {"kind": op.kind, "qubits": list(op.qubits),
                 **({"angle": op.angle} if op.angle is not None else {}),
                 **({"source": list(op.source)} if op.source is not None else {})}
                for op in self.ops
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, doc: dict) -> "NativeCircuit":
        ops = [NativeOp(kind=o["kind"], qubits=tuple(o["qubits"]), angle=o.get("angle"),
                        source=tuple(o["source"]) if "source" in o else None)
               for o in doc["ops"]]
        return cls(n=doc["n"], ops=ops, source_gates=doc.get("source_gates", 0),
                   pruned_count=doc.get("pruned_count", 0))


def fold_rzz_angle(theta_raw: float):
    """Fold an RZZ angle into [0, pi/2].

    Returns (theta_c, pre, post, slope): 2x2 Pauli frames per qubit such that
    RZZ(theta_raw) = (post x post') RZZ(theta_c) (pre x pre') up to a global
    phase, and slope = d theta_c / d theta_raw (0 at the theta_c = 0 kink).
    """
    eye = np.eye(2, dtype=complex)
    m = float(np.mod(theta_raw, np.pi))
    k_odd = int(np.round((theta_raw - m) / np.pi)) % 2
    pre = [eye, eye]
    post = [eye, eye]
    if k_odd:
        post = [_Z @ post[0], _Z @ post[1]]
    if m > RZZ_CANON_MAX:
        theta_c = np.pi - m
        slope = -1.0
        pre = [_X @ pre[0], pre[1]]
        post = [post[0] @ _X, post[1]]
        post = [_Z @ post[0], _Z @ post[1]]
    else:
        theta_c = m
        slope = 1.0
    if theta_c < 1e-15:
        theta_c = 0.0
        slope = 0.0
    return theta_c, pre, post, slope


_FRAME_XX = (_H, _H)
_FRAME_YY = (rot_x(np.pi / 2.0), rot_x(np.pi / 2.0))


def compile_native(circuit: Circuit) -> NativeCircuit:
    """Lower every source gate to 3 RZZ gates plus fused local rotations."""
    n = circuit.n
    ops: list[NativeOp] = [NativeOp("h", (q,)) for q in range(n)]
    pending = [np.eye(2, dtype=complex) for _ in range(n)]

    def push_local(q: int, u2: np.ndarray):
        pending[q] = u2 @ pending[q]

    def flush(q: int):
        ops.extend(_zyz_ops(q, pending[q]))
        pending[q] = np.eye(2, dtype=complex)

    for gidx, gate in enumerate(circuit.gates):
        qa, qb = gate.qubits
        p = gate.params(circuit.theta)
        push_local(qa, euler_zyz(*p[9:12]))
        push_local(qb, euler_zyz(*p[12:15]))
        # core factors applied in order ZZ, YY, XX (they commute)
        for coeff_idx, frame in ((2, None), (1, _FRAME_YY), (0, _FRAME_XX)):
            c = p[coeff_idx]
            theta_c, pre, post, slope = fold_rzz_angle(-2.0 * c)
            if frame is not None:
                push_local(qa, frame[0].conj().T)
                push_local(qb, frame[1].conj().T)
            push_local(qa, pre[0])
            push_local(qb, pre[1])
            flush(qa)
            flush(qb)
            ops.append(NativeOp("rzz", (qa, qb), angle=float(theta_c),
                                source=(gidx, coeff_idx),
                                dangle_dsource=-2.0 * slope))
            push_local(qa, post[0])
            push_local(qb, post[1])
            if frame is not None:
                push_local(qa, frame[0])
                push_local(qb, frame[1])
        push_local(qa, euler_zyz(*p[3:6]))
        push_local(qb, euler_zyz(*p[6:9]))
    for q in range(n):
        flush(q)
    return NativeCircuit(n=n, ops=ops, source_gates=len(circuit.gates))


def _zyz_ops(q: int, u2: np.ndarray, tol: float = 1e-12) -> list[NativeOp]:
    """Decompose a 2x2 unitary into rz-ry-rz rotations, dropping trivial ones."""
    det = np.linalg.det(u2)
    u = u2 / np.sqrt(det)
    beta = 2.0 * np.arctan2(abs(u[1, 0]), abs(u[0, 0]))
    if abs(np.sin(beta / 2.0)) < tol:
        alpha = -2.0 * np.angle(u[0, 0])
        gamma = 0.0
        beta = 0.0
    elif abs(np.cos(beta / 2.0)) < tol:
        alpha = 2.0 * np.angle(u[1, 0])
        gamma = 0.0
        beta = np.pi
    else:
        alpha = np.angle(u[1, 0]) - np.angle(u[0, 0])
        gamma = -np.angle(u[1, 0]) - np.angle(u[0, 0])
    out = []
    if abs(gamma) > tol:
        out.append(NativeOp("rz", (q,), angle=float(gamma)))
    if abs(beta) > tol:
        out.append(NativeOp("ry", (q,), angle=float(beta)))
    if abs(alpha) > tol:
        out.append(NativeOp("rz", (q,), angle=float(alpha)))
    return out


def prune(native: NativeCircuit, theta_min: float = 1e-4) -> NativeCircuit:
    """Drop RZZ gates with canonical angle <= theta_min."""
    kept = [op for op in native.ops if op.kind != "rzz" or op.angle > theta_min]
    removed = len(native.ops) - len(kept)
    return NativeCircuit(n=native.n, ops=kept, source_gates=native.source_gates,
                         pruned_count=native.pruned_count + removed)


def count_two_qubit(native: NativeCircuit) -> int:
    return len(native.rzz_ops())


def count_single_qubit(native: NativeCircuit) -> int:
    return sum(1 for op in native.ops if op.kind != "rzz")


def op_matrix(op: NativeOp) -> np.ndarray:
    if op.kind == "h":
        return _H.copy()
    if op.kind == "rz":
        return np.array([[np.exp(-0.5j * op.angle), 0], [0, np.exp(0.5j * op.angle)]])
    if op.kind == "ry":
        c, s = np.cos(op.angle / 2.0), np.sin(op.angle / 2.0)
        return np.array([[c, -s], [s, c]], dtype=complex)
    if op.kind == "rx":
        c, s = np.cos(op.angle / 2.0), np.sin(op.angle / 2.0)
        return np.array([[c, -1j * s], [-1j * s, c]])
    if op.kind == "rzz":
        ph = np.exp(np.array([-0.5j, 0.5j, 0.5j, -0.5j]) * op.angle)
        return np.diag(ph)
    raise ValueError(f"unknown op kind {op.kind!r}")


def export_qasm(native: NativeCircuit, include_measure: bool = False) -> str:
    lines = ['OPENQASM 2.0;', 'include "qelib1.inc";', f"qreg q[{native.n}];"]
    if include_measure:
        lines.append(f"creg c[{native.n}];")
    for op in native.ops:
        if op.kind == "h":
            lines.append(f"h q[{op.qubits[0]}];")
        elif op.kind == "rzz":
            lines.append(f"rzz({op.angle!r}) q[{op.qubits[0]}],q[{op.qubits[1]}];")
        else:
            lines.append(f"{op.kind}({op.angle!r}) q[{op.qubits[0]}];")
    if include_measure:
        lines.append("measure q -> c;")
    return "\n".join(lines) + "\n"


_QASM_GATE = re.compile(r"^(h|rx|ry|rz|rzz)\s*(?:\(([^)]+)\))?\s+q\[(\d+)\](?:\s*,\s*q\[(\d+)\])?;$")


def parse_qasm(text: str) -> NativeCircuit:
    """Round-trip reader for the exported subset of OpenQASM 2.0."""
    n = None
    ops = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith(("OPENQASM", "include", "creg", "measure", "//")):
            continue
        m = re.match(r"^qreg\s+q\[(\d+)\];$", line)
        if m:
            n = int(m.group(1))
            continue
        m = _QASM_GATE.match(line)
        if not m:
            raise ValueError(f"cannot parse QASM line: {line!r}")
        kind, angle, qa, qb = m.groups()
        qubits = (int(qa),) if qb is None else (int(qa), int(qb))
        ops.append(NativeOp(kind=kind, qubits=qubits,
                            angle=None if angle is None else float(angle)))
    if n is None:
        raise ValueError("missing qreg declaration")
    return NativeCircuit(n=n, ops=ops)
