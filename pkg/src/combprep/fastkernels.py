"""Single-pass JIT kernels for large dense registers.

numpy's gate application costs several memory passes (views, temporaries,
GEMM); at large n the simulation is purely bandwidth-bound, so these numba
kernels do the 4-amplitude group update in place in one pass.  Everything is
deterministic for any thread count: the apply kernel has no cross-thread
reduction and the pair-cross kernel reduces over a fixed chunk grid in index
order.  sim falls back to the numpy paths when numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is present in CI
    HAVE_NUMBA = False

    def njit(*a, **k):
        def deco(fn):
            return fn

        return deco

    prange = range

_CROSS_CHUNKS = 64


@njit(parallel=True, cache=True)
def _apply2q_inplace(state, u, sa, sb):
    """u (4x4) on the two qubits at bit positions sa > sb, in place."""
    n4 = state.size >> 2
    ba = 1 << sa
    bb = 1 << sb
    mask_b = bb - 1
    mask_a = ba - 1
    u00, u01, u02, u03 = u[0, 0], u[0, 1], u[0, 2], u[0, 3]
    u10, u11, u12, u13 = u[1, 0], u[1, 1], u[1, 2], u[1, 3]
    u20, u21, u22, u23 = u[2, 0], u[2, 1], u[2, 2], u[2, 3]
    u30, u31, u32, u33 = u[3, 0], u[3, 1], u[3, 2], u[3, 3]
    for k in prange(n4):
        x = ((k >> sb) << (sb + 1)) | (k & mask_b)
        i00 = ((x >> sa) << (sa + 1)) | (x & mask_a)
        i01 = i00 | bb
        i10 = i00 | ba
        i11 = i10 | bb
        a0 = state[i00]
        a1 = state[i01]
        a2 = state[i10]
        a3 = state[i11]
        state[i00] = u00 * a0 + u01 * a1 + u02 * a2 + u03 * a3
        state[i01] = u10 * a0 + u11 * a1 + u12 * a2 + u13 * a3
        state[i10] = u20 * a0 + u21 * a1 + u22 * a2 + u23 * a3
        state[i11] = u30 * a0 + u31 * a1 + u32 * a2 + u33 * a3


@njit(parallel=True, cache=True)
def _pair_cross_chunks(psi, bconj, sa, sb, part):
    """part[c, s, t] += sum_k psi[(s, env_k)] * bconj[(t, env_k)] per chunk."""
    n4 = psi.size >> 2
    chunks = part.shape[0]
    span = (n4 + chunks - 1) // chunks
    ba = 1 << sa
    bb = 1 << sb
    mask_b = bb - 1
    mask_a = ba - 1
    for c in prange(chunks):
        lo = c * span
        hi = min(lo + span, n4)
        for k in range(lo, hi):
            x = ((k >> sb) << (sb + 1)) | (k & mask_b)
            i00 = ((x >> sa) << (sa + 1)) | (x & mask_a)
            i01 = i00 | bb
            i10 = i00 | ba
            i11 = i10 | bb
            p0 = psi[i00]
            p1 = psi[i01]
            p2 = psi[i10]
            p3 = psi[i11]
            b0 = bconj[i00]
            b1 = bconj[i01]
            b2 = bconj[i10]
            b3 = bconj[i11]
            part[c, 0, 0] += p0 * b0
            part[c, 0, 1] += p0 * b1
            part[c, 0, 2] += p0 * b2
            part[c, 0, 3] += p0 * b3
            part[c, 1, 0] += p1 * b0
            part[c, 1, 1] += p1 * b1
            part[c, 1, 2] += p1 * b2
            part[c, 1, 3] += p1 * b3
            part[c, 2, 0] += p2 * b0
            part[c, 2, 1] += p2 * b1
            part[c, 2, 2] += p2 * b2
            part[c, 2, 3] += p2 * b3
            part[c, 3, 0] += p3 * b0
            part[c, 3, 1] += p3 * b1
            part[c, 3, 2] += p3 * b2
            part[c, 3, 3] += p3 * b3


def apply_2q_inplace(state: np.ndarray, u4: np.ndarray, qa: int, qb: int, n: int):
    """In-place two-qubit gate on a flat state via the JIT kernel."""
    if qa > qb:
        qa, qb = qb, qa
        u4 = u4.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4)
    sa, sb = n - 1 - qa, n - 1 - qb  # qa more significant -> higher bit
    _apply2q_inplace(state, np.ascontiguousarray(u4.astype(state.dtype)), sa, sb)
    return state


def pair_cross(psi: np.ndarray, bconj: np.ndarray, qa: int, qb: int, n: int) -> np.ndarray:
    """K[s, t] = sum_env psi[(s, env)] * bconj[(t, env)] via chunked reduction."""
    if qa > qb:
        raise ValueError("qubit pair must be ordered")
    sa, sb = n - 1 - qa, n - 1 - qb
    part = np.zeros((_CROSS_CHUNKS, 4, 4), dtype=np.result_type(psi.dtype, np.complex64))
    _pair_cross_chunks(psi, bconj, sa, sb, part)
    return part.sum(axis=0)
