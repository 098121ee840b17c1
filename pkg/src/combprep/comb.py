"""Comb tensor networks: a backbone rail per variable with one physical
chain ("tooth") of n_x sites hanging from each rail.

Rail tensors carry only virtual indices (left-rail, tooth, right-rail); all
physical indices live on the teeth.  Combs are produced by re-gauging an MPS
whose qubits are laid out contiguously per dimension.
"""

from __future__ import annotations

import json

import numpy as np

from .grids import GridSpec
from .mps import MPS, _rank_for


class CombTN:
    """Comb network: rails[i] has shape (chi_l, k_i, chi_r); teeth[i] is a list
    of n_x tensors, the first with a dangling top bond of dimension k_i."""

    def __init__(self, rails, teeth):
        self.rails = [np.asarray(r) for r in rails]
        self.teeth = [[np.asarray(t) for t in chain] for chain in teeth]
        if len(self.rails) != len(self.teeth):
            raise ValueError("one tooth per rail required")
        for r, chain in zip(self.rails, self.teeth):
            if r.shape[1] != chain[0].shape[0]:
                raise ValueError("rail tooth bond must match the first tooth tensor")

    @property
    def d(self) -> int:
        return len(self.rails)

    @property
    def n_x(self) -> int:
        return len(self.teeth[0])

    @property
    def n(self) -> int:
        return self.d * self.n_x

    @property
    def backbone_bond_dims(self) -> list[int]:
        return [self.rails[0].shape[0]] + [r.shape[2] for r in self.rails]

    def tooth_vector(self, i: int, bits) -> np.ndarray:
        """Contract tooth i at the given n_x bits down to its top-bond vector."""
        chain = self.teeth[i]
        v = chain[-1][:, bits[-1], 0]
        for k in range(len(chain) - 2, -1, -1):
            v = chain[k][:, bits[k], :] @ v
        return v

    def amplitude(self, bits) -> complex | float:
        bits = np.asarray(bits, dtype=np.int64)
        if bits.size != self.n:
            raise ValueError(f"bitstrings must have length {self.n}")
        row = np.ones(1, dtype=self.rails[0].dtype)
        for i, rail in enumerate(self.rails):
            tooth = self.tooth_vector(i, bits[i * self.n_x:(i + 1) * self.n_x])
            row = row @ np.einsum("akb,k->ab", rail, tooth)
        val = row[0]
        return complex(val) if np.iscomplexobj(row) else float(val)

    def amplitudes(self, bits) -> np.ndarray:
        bits = np.atleast_2d(np.asarray(bits))
        return np.array([self.amplitude(b) for b in bits])

    def to_json_dict(self) -> dict:
        def pack(t):
            if np.iscomplexobj(t):
                return {"re": t.real.tolist(), "im": t.imag.tolist()}
            return t.tolist()

        return {
            "n": self.n,
            "d": self.d,
            "n_x": self.n_x,
            "scalar_type": "complex128" if any(np.iscomplexobj(r) for r in self.rails) else "float64",
            "rails": [pack(r) for r in self.rails],
            "teeth": [[pack(t) for t in chain] for chain in self.teeth],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CombTN":
        def unpack(entry):
            if isinstance(entry, dict):
                return np.asarray(entry["re"]) + 1j * np.asarray(entry["im"])
            return np.asarray(entry, dtype=np.float64)

        return cls([unpack(r) for r in doc["rails"]],
                   [[unpack(t) for t in chain] for chain in doc["teeth"]])

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "CombTN":
        return cls.from_json_dict(json.loads(text))


def mps_to_comb(state: MPS, grid: GridSpec, tol: float = 0.0) -> CombTN:
    """Re-gauge an MPS into comb topology by detaching each dimension block.

    Each block of n_x sites is contracted into a (chi_l, 2**n_x, chi_r)
    tensor, split by SVD into a physical tooth and a virtual rail, and the
    tooth is refactored into an n_x-site chain.  Amplitudes are preserved up
    to the stated SVD tolerance.
    """
    if state.n % grid.n_x != 0 or state.n != grid.n:
        raise ValueError("MPS length must equal grid.d * grid.n_x")
    rails, teeth = [], []
    for i in range(grid.d):
        block = state.tensors[i * grid.n_x:(i + 1) * grid.n_x]
        theta = block[0]
        for t in block[1:]:
            theta = np.einsum("a...b,bsc->a...sc", theta, t)
        chi_l, chi_r = theta.shape[0], theta.shape[-1]
        phys = 2**grid.n_x
        # rows = physical block index, cols = (left, right) rail indices
        mat = theta.reshape(chi_l, phys, chi_r).transpose(1, 0, 2).reshape(phys, chi_l * chi_r)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        keep = _rank_for(s, None, tol)
        u, s, vh = u[:, :keep], s[:keep], vh[:keep]
        rails.append((s[:, None] * vh).reshape(keep, chi_l, chi_r).transpose(1, 0, 2))
        teeth.append(_tooth_chain(u.T.reshape((keep,) + (2,) * grid.n_x), tol))
    return CombTN(rails, teeth)


def _tooth_chain(block: np.ndarray, tol: float) -> list[np.ndarray]:
    """Factor a (k, 2, ..., 2) tensor into an MPS chain with leading bond k."""
    n_x = block.ndim - 1
    chain = []
    rest = block.reshape(block.shape[0], -1)
    bond = block.shape[0]
    for _ in range(n_x - 1):
        mat = rest.reshape(bond * 2, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        keep = _rank_for(s, None, tol)
        chain.append(u[:, :keep].reshape(bond, 2, keep))
        rest = (s[:keep, None] * vh[:keep])
        bond = keep
    chain.append(rest.reshape(bond, 2, 1))
    return chain
