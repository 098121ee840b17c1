"""Matrix product states over binary sites: contraction, canonical forms,
truncation, amplitude queries, overlaps and sequential sampling.

Site tensors have shape (chi_left, 2, chi_right) with chi_1 = chi_{n+1} = 1.
Public operations treat states as immutable and return new objects; the
in-place evolution used by the circuit backends lives in `_MpsEvolver`.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import StateError

_ISOMETRY_TOL = 1e-10


class MPS:
    """An open-boundary MPS on n two-level sites."""

    def __init__(self, tensors, gauge_center: int | None = None):
        self.tensors = [np.asarray(t) for t in tensors]
        self.gauge_center = gauge_center
        for i, t in enumerate(self.tensors):
            if t.ndim != 3 or t.shape[1] != 2:
                raise ValueError(f"site {i}: tensors must have shape (chi_l, 2, chi_r)")
            if i and t.shape[0] != self.tensors[i - 1].shape[2]:
                raise ValueError(f"bond mismatch between sites {i - 1} and {i}")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")

    @property
    def n(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [self.tensors[0].shape[0]] + [t.shape[2] for t in self.tensors]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims)

    @property
    def dtype(self):
        return np.result_type(*(t.dtype for t in self.tensors))

    def copy(self) -> "MPS":
        return MPS([t.copy() for t in self.tensors], self.gauge_center)

    # -- constructors -------------------------------------------------------

    @classmethod
    def product_state(cls, site_vectors) -> "MPS":
        return cls([np.asarray(v).reshape(1, 2, 1) for v in site_vectors])

    @classmethod
    def basis_state(cls, bits) -> "MPS":
        vecs = [np.array([1.0, 0.0]) if b == 0 else np.array([0.0, 1.0]) for b in bits]
        return cls.product_state(vecs)

    @classmethod
    def uniform(cls, n: int) -> "MPS":
        v = np.full(2, 1.0 / np.sqrt(2.0))
        return cls.product_state([v] * n)

    @classmethod
    def random(cls, n: int, chi: int, seed: int = 0, complex_valued: bool = False) -> "MPS":
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x4D50)))
        tensors = []
        for i in range(n):
            cl = min(chi, 2**i, 2 ** (n - i))
            cr = min(chi, 2 ** (i + 1), 2 ** (n - i - 1))
            t = rng.standard_normal((cl, 2, cr))
            if complex_valued:
                t = t + 1j * rng.standard_normal((cl, 2, cr))
            tensors.append(t)
        return cls(tensors).normalized()

    @classmethod
    def from_dense(cls, vec, chi_max: int | None = None, tol: float = 0.0) -> "MPS":
        """Successive-SVD factorization of a length-2**n vector."""
        vec = np.asarray(vec)
        n = int(round(np.log2(vec.size)))
        if 2**n != vec.size:
            raise ValueError("dense vector length must be a power of 2")
        tensors = []
        rest = vec.reshape(1, -1)
        for _ in range(n - 1):
            chi_l = rest.shape[0]
            mat = rest.reshape(chi_l * 2, -1)
            u, s, vh = np.linalg.svd(mat, full_matrices=False)
            keep = _rank_for(s, chi_max, tol)
            tensors.append(u[:, :keep].reshape(chi_l, 2, keep))
            rest = (s[:keep, None] * vh[:keep]).reshape(keep, -1)
        tensors.append(rest.reshape(rest.shape[0], 2, 1))
        return cls(tensors, gauge_center=n - 1)

    # -- queries -------------------------------------------------------------

    def to_dense(self) -> np.ndarray:
        """Contract to the full 2**n vector (index ordering MSB-first)."""
        out = self.tensors[0].reshape(2, -1)
        for t in self.tensors[1:]:
            out = out.reshape(-1, t.shape[0]) @ t.reshape(t.shape[0], -1)
        return out.reshape(-1)

    def amplitude(self, bits) -> complex | float:
        return self.amplitudes(np.asarray(bits)[None, :])[0]

    def amplitudes(self, bits) -> np.ndarray:
        """Batched <bits|psi> via left-to-right matrix products."""
        bits = np.atleast_2d(np.asarray(bits, dtype=np.int64))
        if bits.shape[1] != self.n:
            raise ValueError(f"bitstrings must have length {self.n}")
        v = self.tensors[0][0, bits[:, 0], :]
        for k in range(1, self.n):
            sel = self.tensors[k][:, bits[:, k], :]
            v = np.einsum("mi,imj->mj", v, sel)
        return v[:, 0]

    def norm(self) -> float:
        return float(np.sqrt(np.real(mps_overlap(self, self))))

    def normalized(self) -> "MPS":
        out = self.canonicalized(self.n - 1)
        nrm = np.linalg.norm(out.tensors[-1])
        if nrm == 0:
            raise StateError("cannot normalize the zero state")
        out.tensors[-1] = out.tensors[-1] / nrm
        return out

    def canonicalized(self, center: int) -> "MPS":
        """Mixed-canonical gauge: left-isometric before, right-isometric after center."""
        if not 0 <= center < self.n:
            raise ValueError("gauge center out of range")
        ts = [t.copy() for t in self.tensors]
        for k in range(center):  # sweep left isometries
            cl, _, cr = ts[k].shape
            q, r = np.linalg.qr(ts[k].reshape(cl * 2, cr))
            ts[k] = q.reshape(cl, 2, -1)
            ts[k + 1] = np.einsum("ij,jsb->isb", r, ts[k + 1])
        for k in range(self.n - 1, center, -1):  # sweep right isometries
            cl, _, cr = ts[k].shape
            q, r = np.linalg.qr(ts[k].reshape(cl, 2 * cr).T)
            ts[k] = q.T.reshape(-1, 2, cr)
            ts[k - 1] = np.einsum("asb,bj->asj", ts[k - 1], r.T)
        return MPS(ts, gauge_center=center)

    def isometry_residuals(self) -> list[float]:
        """Frobenius deviation of each tensor from its expected isometry."""
        if self.gauge_center is None:
            raise StateError("state has no gauge center")
        out = []
        for k, t in enumerate(self.tensors):
            if k < self.gauge_center:
                m = t.reshape(-1, t.shape[2])
                out.append(float(np.linalg.norm(m.conj().T @ m - np.eye(t.shape[2]))))
            elif k > self.gauge_center:
                m = t.reshape(t.shape[0], -1)
                out.append(float(np.linalg.norm(m @ m.conj().T - np.eye(t.shape[0]))))
            else:
                out.append(0.0)
        return out

    def truncated(self, chi_max: int, tol: float = 0.0) -> "MPS":
        """SVD compression; tol is the discarded squared weight per bond."""
        if chi_max < 1:
            raise ValueError("chi_max must be >= 1")
        in_norm = self.norm()
        out = self.canonicalized(0)
        ts = out.tensors
        for k in range(self.n - 1):
            cl, _, cr = ts[k].shape
            u, s, vh = np.linalg.svd(ts[k].reshape(cl * 2, cr), full_matrices=False)
            keep = _rank_for(s, chi_max, tol)
            ts[k] = u[:, :keep].reshape(cl, 2, keep)
            ts[k + 1] = np.einsum("ij,jsb->isb", s[:keep, None] * vh[:keep], ts[k + 1])
        res = MPS(ts, gauge_center=self.n - 1)
        nrm = np.linalg.norm(res.tensors[-1])
        if nrm > 0 and in_norm > 0:
            res.tensors[-1] = res.tensors[-1] * (in_norm / nrm)
        return res

    def sample(self, n_shots: int, seed: int) -> np.ndarray:
        """Sequential conditional sampling from |<bits|psi>|^2, (n_shots, n) bits."""
        if abs(self.norm() - 1.0) > 1e-6:
            raise StateError("sampling requires a normalized state")
        st = self.canonicalized(0)
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5A)))
        u = rng.random((n_shots, self.n))
        bits = np.empty((n_shots, self.n), dtype=np.uint8)
        v = np.ones((n_shots, 1), dtype=st.dtype)
        for k in range(self.n):
            t = st.tensors[k]
            w0 = v @ t[:, 0, :]
            w1 = v @ t[:, 1, :]
            p0 = np.einsum("mi,mi->m", w0.conj(), w0).real
            p1 = np.einsum("mi,mi->m", w1.conj(), w1).real
            prob0 = p0 / (p0 + p1)
            chosen = (u[:, k] >= prob0).astype(np.uint8)
            bits[:, k] = chosen
            w = np.where(chosen[:, None] == 0, w0, w1)
            p = np.where(chosen == 0, p0, p1)
            v = w / np.sqrt(p)[:, None]
        return bits

    # -- serialization -------------------------------------------------------

    def to_json_dict(self) -> dict:
        complex_valued = np.iscomplexobj(self.dtype.type(0))
        tensors = []
        for t in self.tensors:
            if complex_valued:
                tc = t.astype(np.complex128)
                tensors.append({"re": tc.real.tolist(), "im": tc.imag.tolist()})
            else:
                tensors.append(t.astype(np.float64).tolist())
        return {
            "n": self.n,
            "bond_dims": self.bond_dims,
            "scalar_type": "complex128" if complex_valued else "float64",
            "tensors": tensors,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MPS":
        tensors = []
        for entry in doc["tensors"]:
            if doc["scalar_type"] == "complex128":
                tensors.append(np.asarray(entry["re"]) + 1j * np.asarray(entry["im"]))
            else:
                tensors.append(np.asarray(entry, dtype=np.float64))
        return cls(tensors)

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "MPS":
        return cls.from_json_dict(json.loads(text))


def _rank_for(s: np.ndarray, chi_max: int | None, tol: float) -> int:
    """Number of singular values to keep: discarded squared weight <= tol.

    Values below a relative floor of 1e-14 are always discarded; they carry
    squared weight below 1e-28 and only pad the bond dimension.
    """
    total = float(np.sum(s**2))
    if total == 0.0:
        return 1
    keep = int(np.sum(s > 1e-14 * s[0]))
    if tol > 0:
        tail = np.cumsum((s**2)[::-1])[::-1] / total
        above = np.nonzero(tail > tol)[0]
        keep = min(keep, int(above[-1]) + 1 if len(above) else 1)
    if chi_max is not None:
        keep = min(keep, chi_max)
    return max(keep, 1)


def mps_amplitude(state: MPS, bits):
    """<bits|state> as a product of per-site matrices."""
    return state.amplitude(bits)


def mps_overlap(a: MPS, b: MPS):
    """<a|b> by left-to-right transfer contraction, O(n chi^3)."""
    if a.n != b.n:
        raise ValueError("states must have equal length")
    e = np.ones((1, 1), dtype=np.result_type(a.dtype, b.dtype))
    for ta, tb in zip(a.tensors, b.tensors):
        # e[c, d] = sum_{a b s} conj(ta)[a s c] e[a b] tb[b s d]
        tmp = np.einsum("ab,bsd->asd", e, tb)
        e = np.einsum("asc,asd->cd", ta.conj(), tmp)
    val = e[0, 0]
    return complex(val) if np.iscomplexobj(e) else float(val)


def mps_truncate(state: MPS, chi_max: int, tol: float = 0.0) -> MPS:
    return state.truncated(chi_max, tol)


def mps_sample(state: MPS, n_shots: int, seed: int) -> np.ndarray:
    return state.sample(n_shots, seed)


def fidelity(a: MPS, b: MPS) -> float:
    """|<a|b>|^2 / (<a|a><b|b>)."""
    num = abs(mps_overlap(a, b)) ** 2
    return float(num / (np.real(mps_overlap(a, a)) * np.real(mps_overlap(b, b))))


class _MpsEvolver:
    """In-place circuit evolution on an MPS with per-gate SVD truncation.

    Keeps a moving orthogonality center so every truncation happens in a
    mixed-canonical gauge.  Accumulates the total discarded squared weight.
    """

    def __init__(self, state: MPS, chi_max: int = 128, tol: float = 1e-12):
        st = state.canonicalized(0)
        self.tensors = st.tensors
        self.center = 0
        self.chi_max = chi_max
        self.tol = tol
        self.truncation_weight = 0.0

    @property
    def n(self) -> int:
        return len(self.tensors)

    def move_center(self, k: int):
        while self.center < k:
            c = self.center
            t = self.tensors[c]
            cl, _, cr = t.shape
            q, r = np.linalg.qr(t.reshape(cl * 2, cr))
            self.tensors[c] = q.reshape(cl, 2, -1)
            self.tensors[c + 1] = np.einsum("ij,jsb->isb", r, self.tensors[c + 1])
            self.center += 1
        while self.center > k:
            c = self.center
            t = self.tensors[c]
            cl, _, cr = t.shape
            q, r = np.linalg.qr(t.reshape(cl, 2 * cr).T)
            self.tensors[c] = q.T.reshape(-1, 2, cr)
            self.tensors[c - 1] = np.einsum("asb,bj->asj", self.tensors[c - 1], r.T)
            self.center -= 1

    def apply_1q(self, u2: np.ndarray, q: int):
        self.tensors[q] = np.einsum("st,atb->asb", u2, self.tensors[q])

    def _apply_2q_adjacent(self, u4: np.ndarray, q: int, absorb: str = "right"):
        self.move_center(q)
        a, b = self.tensors[q], self.tensors[q + 1]
        theta = np.einsum("aib,bjc->aijc", a, b)
        theta = np.einsum("IJij,aijc->aIJc", u4.reshape(2, 2, 2, 2), theta)
        cl, _, _, cr = theta.shape
        u, s, vh = np.linalg.svd(theta.reshape(cl * 2, 2 * cr), full_matrices=False)
        keep = _rank_for(s, self.chi_max, self.tol)
        w2 = float(np.sum(s**2))
        kept2 = float(np.sum(s[:keep] ** 2))
        if w2 > 0:
            self.truncation_weight += (w2 - kept2) / w2
            s = s[:keep] * np.sqrt(w2 / kept2)  # renormalize
        else:
            s = s[:keep]
        u = u[:, :keep]
        vh = vh[:keep]
        if absorb == "right":
            self.tensors[q] = u.reshape(cl, 2, keep)
            self.tensors[q + 1] = (s[:, None] * vh).reshape(keep, 2, cr)
            self.center = q + 1
        else:
            self.tensors[q] = (u * s[None, :]).reshape(cl, 2, keep)
            self.tensors[q + 1] = vh.reshape(keep, 2, cr)
            self.center = q

    def apply_2q(self, u4: np.ndarray, qa: int, qb: int):
        """Two-qubit gate; non-adjacent pairs are routed with swap chains."""
        swap = _SWAP
        flip = qa > qb
        a, b = (qb, qa) if flip else (qa, qb)
        if flip:
            u4 = u4.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4)
        for t in range(b - 1, a, -1):  # bring site b next to a
            self._apply_2q_adjacent(swap, t, absorb="left")
        self._apply_2q_adjacent(u4, a, absorb="right")
        for t in range(a + 1, b):  # restore ordering
            self._apply_2q_adjacent(swap, t, absorb="right")

    def to_mps(self) -> MPS:
        out = MPS([t.copy() for t in self.tensors], gauge_center=self.center)
        out.truncation_weight = self.truncation_weight
        return out


_SWAP = np.array(
    [[1, 0, 0, 0],
     [0, 0, 1, 0],
     [0, 1, 0, 0],
     [0, 0, 0, 1]], dtype=float).reshape(4, 4)
