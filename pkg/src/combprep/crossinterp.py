"""Tensor cross interpolation for black-box functions on bitstrings.

Two-site sweeps select cross pivots greedily (full-search partial LU on the
two-site fiber matrix, i.e. each new pivot maximizes the absolute residual on
the candidate set).  The MPS is assembled from function fibers and inverse
cross matrices; accuracy is monitored on a fixed held-out sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError
from .grids import GridSpec, TargetSpec, bits_to_coords, eval_target, index_to_bits
from .mps import MPS

HELDOUT_SIZE = 1024
PIVOT_RTOL = 1e-14


class _FnCache:
    """Memoizing wrapper for a vectorized bitstring function."""

    def __init__(self, fn):
        self.fn = fn
        self.cache: dict[bytes, float] = {}

    @property
    def n_evals(self) -> int:
        return len(self.cache)

    def __call__(self, bits: np.ndarray) -> np.ndarray:
        bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
        keys = [row.tobytes() for row in bits]
        missing = [k for k in dict.fromkeys(keys) if k not in self.cache]
        if missing:
            batch = np.frombuffer(b"".join(missing), dtype=np.uint8).reshape(len(missing), -1)
            vals = np.asarray(self.fn(batch), dtype=float).reshape(-1)
            bad = ~np.isfinite(vals)
            if bad.any():
                culprit = batch[int(np.nonzero(bad)[0][0])]
                raise EvaluationError(f"function returned a non-finite value at {culprit.tolist()}")
            for k, v in zip(missing, vals):
                self.cache[k] = float(v)
        return np.array([self.cache[k] for k in keys])


@dataclass
class CrossState:
    """Pivot bookkeeping: per-bond row/column multi-index sets and diagnostics."""

    n: int
    row_pivots: list[list[tuple]]  # row_pivots[b]: prefixes of length b
    col_pivots: list[list[tuple]]  # col_pivots[b]: suffixes of length n - b
    sweep: int = 0
    cross_conds: list[float] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)

    def ranks(self) -> list[int]:
        return [len(p) for p in self.row_pivots]


@dataclass
class CrossResult:
    mps: MPS
    converged: bool
    eps_r: float
    n_evals: int
    history: list[dict]
    state: CrossState


def _greedy_cross_lu(mat: np.ndarray, max_rank: int, rel_tol: float = PIVOT_RTOL):
    """Greedy full-pivot partial LU: pick the max-|residual| entry, Schur-update."""
    a = np.array(mat, dtype=float)
    rows: list[int] = []
    cols: list[int] = []
    first = None
    for _ in range(min(max_rank, a.shape[0], a.shape[1])):
        p, q = np.unravel_index(int(np.argmax(np.abs(a))), a.shape)
        v = a[p, q]
        if first is None:
            first = abs(v)
            if first == 0.0:
                break
        elif abs(v) <= rel_tol * first:
            break
        rows.append(int(p))
        cols.append(int(q))
        a -= np.outer(a[:, q], a[p, :]) / v
    return rows, cols


def tt_cross(f, n: int, chi_max: int, tol: float, max_sweeps: int = 24, seed: int = 0,
             initial_pivots=None) -> CrossResult:
    """Build an MPS approximation of f: {0,1}^n -> R from adaptive evaluations.

    f must accept an (m, n) uint8 bit matrix and return m values.  Returns a
    CrossResult whose `converged` flag reports whether the held-out relative
    error reached tol within max_sweeps.
    """
    if chi_max < 1:
        raise ValueError("chi_max must be >= 1")
    fn = _FnCache(f)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x7C1)))

    if n == 1:
        vals = fn(np.array([[0], [1]], dtype=np.uint8))
        mps = MPS([vals.reshape(1, 2, 1)])
        state = CrossState(n=1, row_pivots=[[()]], col_pivots=[[()]])
        return CrossResult(mps, True, 0.0, fn.n_evals, [], state)

    pivots = [tuple(int(b) for b in rng.integers(0, 2, size=n))]
    if initial_pivots:
        pivots += [tuple(int(b) for b in p) for p in initial_pivots]
    row_pivots: list[list[tuple]] = [[()]] + [[] for _ in range(n - 1)] + [[]]
    col_pivots: list[list[tuple]] = [[]] + [[] for _ in range(n - 1)] + [[()]]
    for b in range(1, n):
        row_pivots[b] = list(dict.fromkeys(p[:b] for p in pivots))
        col_pivots[b] = list(dict.fromkeys(p[b:] for p in pivots))
    row_pivots[n] = [tuple(p) for p in pivots[:1]]
    col_pivots[0] = [tuple(p) for p in pivots[:1]]

    heldout = rng.integers(0, 2, size=(HELDOUT_SIZE, n)).astype(np.uint8)
    f_held = fn(heldout)

    state = CrossState(n=n, row_pivots=row_pivots, col_pivots=col_pivots)

    def fiber_matrix(b: int):
        """Two-site fiber at bond b: rows I_{b-1} x {0,1}, cols {0,1} x J_{b+1}."""
        prefixes = [i + (s,) for i in row_pivots[b - 1] for s in (0, 1)]
        suffixes = [(t,) + j for t in (0, 1) for j in col_pivots[b + 1]]
        pre = np.array(prefixes, dtype=np.uint8).reshape(len(prefixes), b)
        suf = np.array(suffixes, dtype=np.uint8).reshape(len(suffixes), n - b)
        full = np.concatenate(
            [np.repeat(pre, len(suffixes), axis=0),
             np.tile(suf, (len(prefixes), 1))], axis=1)
        vals = fn(full).reshape(len(prefixes), len(suffixes))
        return vals, prefixes, suffixes

    def update_bond(b: int):
        mat, prefixes, suffixes = fiber_matrix(b)
        rows, cols = _greedy_cross_lu(mat, chi_max)
        if rows:
            row_pivots[b] = [prefixes[p] for p in rows]
            col_pivots[b] = [suffixes[q] for q in cols]

    def assemble() -> MPS:
        tensors = []
        conds = []
        for k in range(n):
            i_set = row_pivots[k]
            j_set = col_pivots[k + 1]
            pre = np.array([i + (s,) for i in i_set for s in (0, 1)], dtype=np.uint8)
            pre = pre.reshape(len(i_set) * 2, k + 1)
            suf = np.array(j_set, dtype=np.uint8).reshape(len(j_set), n - k - 1)
            full = np.concatenate(
                [np.repeat(pre, len(j_set), axis=0), np.tile(suf, (len(pre), 1))], axis=1)
            fiber = fn(full).reshape(len(i_set), 2, len(j_set))
            if k < n - 1:
                ci = np.array([i for i in row_pivots[k + 1]], dtype=np.uint8).reshape(-1, k + 1)
                cj = suf
                cross_pts = np.concatenate(
                    [np.repeat(ci, len(cj), axis=0), np.tile(cj, (len(ci), 1))], axis=1)
                cross = fn(cross_pts).reshape(len(ci), len(cj))
                conds.append(float(np.linalg.cond(cross)))
                core = np.linalg.solve(cross.T, fiber.reshape(-1, len(cj)).T).T
                tensors.append(core.reshape(len(i_set), 2, len(ci)))
            else:
                tensors.append(fiber.reshape(len(i_set), 2, 1))
        state.cross_conds = conds
        return MPS(tensors)

    def heldout_eps(mps: MPS) -> float:
        approx = np.real(mps.amplitudes(heldout))
        nz = f_held != 0
        if not nz.any():
            return float(np.max(np.abs(approx)))
        return float(np.mean(np.abs((f_held[nz] - approx[nz]) / f_held[nz])))

    mps = None
    eps = np.inf
    converged = False
    for sweep in range(1, max_sweeps + 1):
        before = ([list(p) for p in row_pivots], [list(p) for p in col_pivots])
        for b in range(1, n):
            update_bond(b)
        for b in range(n - 1, 0, -1):
            update_bond(b)
        mps = assemble()
        prev_eps = eps
        eps = heldout_eps(mps)
        state.sweep = sweep
        state.history.append({"sweep": sweep, "max_chi": mps.max_bond,
                              "eps_r": eps, "n_evals": fn.n_evals})
        if eps <= tol:
            converged = True
            break
        stable = before == (row_pivots, col_pivots)
        plateau = np.isfinite(prev_eps) and abs(prev_eps - eps) <= tol * max(eps, 1e-300)
        if stable or plateau:
            break
    if mps is None:
        mps = assemble()
        eps = heldout_eps(mps)

    return CrossResult(mps, converged, eps, fn.n_evals, state.history, state)


def tci_error(state: MPS, f, n_avg: int, seed: int) -> float:
    """Average relative deviation between f and the (rescaled) MPS amplitudes
    at n_avg uniformly random bitstrings."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE9)))
    pts = rng.integers(0, 2, size=(n_avg, state.n)).astype(np.uint8)
    fv = np.asarray(f(pts), dtype=float).reshape(-1)
    av = np.real(state.amplitudes(pts))
    nz = fv != 0
    skipped = int(n_avg - nz.sum())
    if skipped > 0.1 * n_avg:
        raise EvaluationError(f"{skipped}/{n_avg} sample points had f = 0; "
                              "relative error is ill-defined")
    ref = int(np.argmax(np.abs(fv)))
    if av[ref] == 0:
        raise EvaluationError("state vanishes at the largest-|f| sample point")
    scale = fv[ref] / av[ref]
    return float(np.mean(np.abs((fv[nz] - scale * av[nz]) / fv[nz])))


@dataclass
class BuildResult:
    mps: MPS            # normalized
    raw_norm: float     # norm of the unnormalized interpolant
    cross: CrossResult
    comb: object | None = None


def peak_pivot(spec: TargetSpec, grid: GridSpec) -> np.ndarray:
    """Bitstring of the grid point nearest mu, one block per dimension."""
    ppd = grid.points_per_dim
    idx = np.clip(np.rint(spec.mu * ppd).astype(int), 0, ppd - 1)
    return np.concatenate([index_to_bits(k, grid.n_x) for k in idx])


def build_target(spec: TargetSpec, grid: GridSpec, chi_max: int = 16, tol: float = 1e-10,
                 max_sweeps: int = 24, seed: int = 0, with_comb: bool = False) -> BuildResult:
    """TCI-compress a target function and normalize the resulting MPS."""

    def fn(bits):
        return eval_target(spec, bits_to_coords(bits, grid))

    result = tt_cross(fn, grid.n, chi_max=chi_max, tol=tol, max_sweeps=max_sweeps,
                      seed=seed, initial_pivots=[peak_pivot(spec, grid)])
    raw_norm = result.mps.norm()
    normalized = result.mps.normalized()
    comb = None
    if with_comb:
        from .comb import mps_to_comb

        comb = mps_to_comb(normalized, grid)
    return BuildResult(mps=normalized, raw_norm=raw_norm, cross=result, comb=comb)
