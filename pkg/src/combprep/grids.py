"""Target function families on binary grids.

Each of d variables lives on a dyadic grid of 2**n_x points in [0, 1),
identified with bitstrings most-significant-bit first.  Function values are
returned unnormalized; normalization happens in the state representation
layer (dense vector or MPS), which avoids 2**n enumeration at large n.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigError

DENSE_LIMIT = 26

FAMILIES = ("gaussian", "ricker", "student_t")
COVARIANCE_FAMILIES = ("tridiagonal", "inverse_square")


@dataclass(frozen=True)
class GridSpec:
    """Binary discretization: d variables, n_x qubits each, n = d*n_x total."""

    d: int
    n_x: int

    def __post_init__(self):
        if self.d < 1 or self.n_x < 1:
            raise ConfigError(f"grid needs d >= 1 and n_x >= 1, got d={self.d}, n_x={self.n_x}")

    @property
    def n(self) -> int:
        return self.d * self.n_x

    @property
    def points_per_dim(self) -> int:
        return 2**self.n_x

    def to_json_dict(self) -> dict:
        return {"d": self.d, "n_x": self.n_x}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "GridSpec":
        return cls(d=int(doc["d"]), n_x=int(doc["n_x"]))


def decode_bits(bits) -> float:
    """Binary expansion sum_a bits[a] * 2**-(a+1), MSB first: (1,0,1) -> 0.625."""
    bits = np.asarray(bits)
    if bits.ndim != 1 or not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must be a flat 0/1 sequence")
    weights = 2.0 ** -(np.arange(bits.size) + 1)
    return float(bits @ weights)


def encode_value(x: float, n_x: int) -> np.ndarray:
    """Inverse of decode_bits for exact grid points x = k / 2**n_x."""
    k = int(round(x * 2**n_x))
    if not 0 <= k < 2**n_x or abs(k - x * 2**n_x) > 1e-9:
        raise ValueError(f"{x} is not a grid point for n_x={n_x}")
    return index_to_bits(k, n_x)


def index_to_bits(k, n_bits: int) -> np.ndarray:
    """Integer index -> MSB-first bit array; vectorized over k."""
    k = np.asarray(k, dtype=np.int64)
    shifts = np.arange(n_bits - 1, -1, -1)
    return ((k[..., None] >> shifts) & 1).astype(np.uint8)


def bits_to_index(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    n_bits = bits.shape[-1]
    weights = 1 << np.arange(n_bits - 1, -1, -1)
    return bits @ weights


def bits_to_coords(bits, grid: GridSpec) -> np.ndarray:
    """Bitstrings of length n -> coordinate rows of length d."""
    bits = np.atleast_2d(np.asarray(bits, dtype=np.uint8))
    if bits.shape[-1] != grid.n:
        raise ValueError(f"expected bitstrings of length {grid.n}")
    blocks = bits.reshape(bits.shape[0], grid.d, grid.n_x)
    return bits_to_index(blocks) / grid.points_per_dim


def grid_coords_from_indices(idx, grid: GridSpec) -> np.ndarray:
    """Global grid indices -> coordinate rows, without materializing bits."""
    idx = np.asarray(idx, dtype=np.int64)
    mask = grid.points_per_dim - 1
    shifts = grid.n_x * np.arange(grid.d - 1, -1, -1)
    return ((idx[..., None] >> shifts) & mask) / grid.points_per_dim


@dataclass
class TargetSpec:
    """A function family with parameters and the interpolation parameter lambda.

    gaussian:   exp(-lam/2 (x-mu)^T Sigma^-1 (x-mu))
    student_t:  [1 + (x-mu)^T Sigma^-1 (x-mu)]^(-3 lam / 2)
    ricker:     (1-lam) exp(-lam u) + lam (1-u) exp(-u),  u = |x-mu|^2 / (2 sigma^2)

    lam=0 gives the constant function for every family; lam=1 gives the plain
    target.  The ricker blend avoids raising a sign-changing function to a
    fractional power.
    """

    family: str
    mu: np.ndarray
    lam: float = 1.0
    sigma_matrix: np.ndarray | None = None
    sigma_scalar: float | None = None
    covariance_family: str | None = None
    s0: float | None = None
    gamma: float | None = None
    _sigma_inv: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if not ((self.mu >= 0) & (self.mu < 1)).all():
            raise ConfigError("mu components must lie in [0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.family == "ricker":
            if self.sigma_scalar is None or self.sigma_scalar <= 0:
                raise ConfigError("ricker needs a positive sigma_scalar")
        else:
            if self.sigma_matrix is None:
                raise ConfigError(f"{self.family} needs sigma_matrix")
            sig = np.asarray(self.sigma_matrix, dtype=float)
            if sig.shape != (self.d, self.d):
                raise ConfigError(f"sigma_matrix must be {self.d}x{self.d}")
            if not np.allclose(sig, sig.T, atol=1e-12):
                raise ConfigError("sigma_matrix must be symmetric")
            try:
                np.linalg.cholesky(sig)
            except np.linalg.LinAlgError:
                raise ConfigError("sigma_matrix must be positive definite") from None
            self.sigma_matrix = sig
            self._sigma_inv = np.linalg.inv(sig)

    @property
    def d(self) -> int:
        return self.mu.size

    @property
    def sigma_inv(self) -> np.ndarray:
        if self._sigma_inv is None:
            raise ConfigError(f"{self.family} has no covariance matrix")
        return self._sigma_inv

    def with_lambda(self, lam: float) -> "TargetSpec":
        return TargetSpec(
            family=self.family,
            mu=self.mu.copy(),
            lam=lam,
            sigma_matrix=None if self.sigma_matrix is None else self.sigma_matrix.copy(),
            sigma_scalar=self.sigma_scalar,
            covariance_family=self.covariance_family,
            s0=self.s0,
            gamma=self.gamma,
        )

    def to_json_dict(self) -> dict:
        doc = {"family": self.family, "mu": self.mu.tolist(), "lambda": self.lam}
        if self.sigma_matrix is not None:
            doc["sigma_matrix"] = self.sigma_matrix.tolist()
        if self.sigma_scalar is not None:
            doc["sigma_scalar"] = self.sigma_scalar
        for key in ("covariance_family", "s0", "gamma"):
            if getattr(self, key) is not None:
                doc[key] = getattr(self, key)
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TargetSpec":
        doc = dict(doc)
        lam = doc.pop("lambda", 1.0)
        sigma_matrix = doc.pop("sigma_matrix", None)
        if sigma_matrix is not None:
            sigma_matrix = np.asarray(sigma_matrix, dtype=float)
        return cls(
            family=doc.pop("family"),
            mu=np.asarray(doc.pop("mu"), dtype=float),
            lam=float(lam),
            sigma_matrix=sigma_matrix,
            sigma_scalar=doc.pop("sigma_scalar", None),
            covariance_family=doc.pop("covariance_family", None),
            s0=doc.pop("s0", None),
            gamma=doc.pop("gamma", None),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json(cls, text: str) -> "TargetSpec":
        return cls.from_json_dict(json.loads(text))


def covariance_matrix(family: str, d: int, s0: float, gamma: float) -> np.ndarray:
    """Structured covariance: tridiagonal or inverse-square off-diagonal decay."""
    if family == "tridiagonal":
        sig = np.zeros((d, d))
        np.fill_diagonal(sig, s0)
        idx = np.arange(d - 1)
        sig[idx, idx + 1] = gamma * s0
        sig[idx + 1, idx] = gamma * s0
        return sig
    if family == "inverse_square":
        i, j = np.indices((d, d))
        with np.errstate(divide="ignore"):
            sig = gamma * s0 / np.maximum(np.abs(i - j), 1) ** 2
        np.fill_diagonal(sig, s0)
        return sig
    raise ConfigError(f"unknown covariance family {family!r}")


def gaussian_spec(d: int, s0: float = 0.05, gamma: float = 0.2,
                  covariance_family: str = "tridiagonal", lam: float = 1.0,
                  mu: np.ndarray | None = None) -> TargetSpec:
    """Multivariate Gaussian with structured covariance, mu_i = 0.5 by default."""
    if mu is None:
        mu = np.full(d, 0.5)
    return TargetSpec(
        family="gaussian", mu=mu, lam=lam,
        sigma_matrix=covariance_matrix(covariance_family, d, s0, gamma),
        covariance_family=covariance_family, s0=s0, gamma=gamma,
    )


def ricker_spec(d: int, sigma: float = 0.25, lam: float = 1.0,
                mu: np.ndarray | None = None) -> TargetSpec:
    if mu is None:
        mu = np.full(d, 0.5)
    return TargetSpec(family="ricker", mu=mu, lam=lam, sigma_scalar=sigma)


def student_t_spec(d: int, s0: float = 0.05, lam: float = 1.0,
                   mu: np.ndarray | None = None) -> TargetSpec:
    if mu is None:
        mu = np.full(d, 0.5)
    return TargetSpec(family="student_t", mu=mu, lam=lam,
                      sigma_matrix=s0 * np.eye(d), covariance_family=None,
                      s0=s0)


def eval_target(spec: TargetSpec, x) -> np.ndarray | float:
    """Unnormalized f(x, lambda) at coordinate rows x (shape (m, d) or (d,))."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != spec.d:
        raise ValueError(f"expected {spec.d} coordinates per point")
    delta = pts - spec.mu
    if spec.family == "gaussian":
        q = np.einsum("md,de,me->m", delta, spec.sigma_inv, delta)
        out = np.exp(-0.5 * spec.lam * q)
    elif spec.family == "student_t":
        q = np.einsum("md,de,me->m", delta, spec.sigma_inv, delta)
        out = (1.0 + q) ** (-1.5 * spec.lam)
    else:  # ricker
        u = np.einsum("md,md->m", delta, delta) / (2.0 * spec.sigma_scalar**2)
        out = (1.0 - spec.lam) * np.exp(-spec.lam * u) + spec.lam * (1.0 - u) * np.exp(-u)
    return float(out[0]) if single else out


def eval_target_bits(spec: TargetSpec, grid: GridSpec, bits) -> np.ndarray:
    """eval_target composed with the bitstring decoding, vectorized."""
    return np.atleast_1d(eval_target(spec, bits_to_coords(bits, grid)))


def values_on_grid(spec: TargetSpec, grid: GridSpec) -> np.ndarray:
    """Dense vector of f on all 2**n grid points (MSB-first global index)."""
    if grid.n > DENSE_LIMIT:
        raise CapacityError(f"dense enumeration needs n <= {DENSE_LIMIT}, got {grid.n}")
    if grid.d != spec.d:
        raise ConfigError("grid and spec dimensionalities differ")
    idx = np.arange(2**grid.n, dtype=np.int64)
    return np.asarray(eval_target(spec, grid_coords_from_indices(idx, grid)))


def normalized_state(spec: TargetSpec, grid: GridSpec) -> np.ndarray:
    """Dense amplitude-encoded state f / ||f||."""
    vals = values_on_grid(spec, grid)
    norm = np.linalg.norm(vals)
    if norm == 0:
        raise ValueError("target vanishes identically on the grid")
    return vals / norm


def target_derivative_norm(spec: TargetSpec, grid: GridSpec, lam: float, h: float,
                           chi_max: int = 32, tol: float = 1e-10, seed: int = 0) -> float:
    """Finite-difference || d|f(lam)>/d lam || over normalized states.

    Uses dense enumeration for n <= DENSE_LIMIT - 2, otherwise compares MPS
    representations through their overlap.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    a, b = spec.with_lambda(lam), spec.with_lambda(min(lam + h, 1.0) if lam + h > 1 else lam + h)
    if grid.n <= DENSE_LIMIT - 2:
        va = normalized_state(a, grid)
        vb = normalized_state(b, grid)
        return float(np.linalg.norm(vb - va) / h)
    from .crossinterp import build_target  # local import to avoid a module cycle

    ma = build_target(a, grid, chi_max=chi_max, tol=tol, seed=seed).mps
    mb = build_target(b, grid, chi_max=chi_max, tol=tol, seed=seed).mps
    from .mps import mps_overlap

    ov = float(np.real(mps_overlap(ma, mb)))
    return float(np.sqrt(max(2.0 - 2.0 * ov, 0.0)) / h)
