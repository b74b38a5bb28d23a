"""Discrete far-field scattering operators and the forward map.

The data model is ``Y = A (I - V Gamma)^{-1} V B`` with

* ``A[m, j] = exp(-i k xhat_m . r_j)``  (measurement directions x voxels)
* ``B[j, n] = exp(+i k dhat_n . r_j)``  (voxels x incident directions)
* ``Gamma[m, n] = (1 - delta_mn) G(r_m, r_n)``
* ``V = diag(k^2 h^3 eta(r_m))``

``V`` is always carried as its diagonal (a 1-D array). Because ``V`` is
sparse, every product ``(V Gamma)^m`` lives on the ``s`` support rows, so the
exact solve only ever needs the ``s x s`` block ``Gamma[S, S]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional
import warnings

import numpy as np
import scipy.linalg

from .errors import DivergenceError, InvalidArgumentError, SingularOperatorError, SingularityError
from .geometry import DirectionSet, VoxelGrid

FOUR_PI = 4.0 * np.pi
INF_ORDER = np.inf


def green(x, y, k, four_pi=True):
    """Outgoing free-space Helmholtz Green's function ``e^{ik|x-y|}/(4 pi |x-y|)``.

    With ``four_pi=False`` the ``1/(4 pi)`` normalization is dropped.
    """
    r = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    if r == 0.0:
        raise SingularityError("Green's function is singular at coincident points")
    g = np.exp(1j * k * r) / r
    return g / FOUR_PI if four_pi else g


class GreenMatrix:
    """Lazily evaluated ``Gamma`` with zero diagonal.

    Entries are computed on demand from the voxel centers so that large grids
    never need a dense ``N x N`` array. Optional diagonal scalings represent
    ``diag(left) @ Gamma @ diag(right)``, which is what column normalization of
    ``A`` and ``B`` turns ``Gamma`` into.
    """

    def __init__(self, centers, k, four_pi=True, left=None, right=None):
        self.centers = np.asarray(centers, dtype=float)
        self.k = float(k)
        self.four_pi = bool(four_pi)
        n = self.centers.shape[0]
        self.left = None if left is None else np.asarray(left, dtype=float).reshape(n)
        self.right = None if right is None else np.asarray(right, dtype=float).reshape(n)

    @property
    def shape(self):
        n = self.centers.shape[0]
        return (n, n)

    def scaled(self, left=None, right=None) -> "GreenMatrix":
        new_left = left if self.left is None else (self.left if left is None else self.left * left)
        new_right = right if self.right is None else (self.right if right is None else self.right * right)
        return GreenMatrix(self.centers, self.k, self.four_pi, new_left, new_right)

    def block(self, rows, cols) -> np.ndarray:
        rows = np.atleast_1d(np.asarray(rows, dtype=np.intp))
        cols = np.atleast_1d(np.asarray(cols, dtype=np.intp))
        diff = self.centers[rows][:, None, :] - self.centers[cols][None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        same = rows[:, None] == cols[None, :]
        dist[same] = 1.0
        out = np.exp(1j * self.k * dist) / dist
        out[same] = 0.0
        if self.four_pi:
            out /= FOUR_PI
        if self.left is not None:
            out *= self.left[rows][:, None]
        if self.right is not None:
            out *= self.right[cols][None, :]
        return out

    def rows(self, rows) -> np.ndarray:
        return self.block(rows, np.arange(self.shape[1]))

    def toarray(self) -> np.ndarray:
        n = self.shape[0]
        out = np.empty((n, n), dtype=complex)
        step = max(1, 4_000_000 // max(n, 1))
        cols = np.arange(n)
        for start in range(0, n, step):
            idx = np.arange(start, min(n, start + step))
            out[idx] = self.block(idx, cols)
        return out

    def __array__(self, dtype=None, copy=None):
        arr = self.toarray()
        return arr if dtype is None else arr.astype(dtype)


def gamma_block(gamma, rows, cols) -> np.ndarray:
    """``gamma[rows][:, cols]`` for either a dense array or a :class:`GreenMatrix`."""
    if isinstance(gamma, GreenMatrix):
        return gamma.block(rows, cols)
    return np.asarray(gamma)[np.ix_(np.atleast_1d(rows), np.atleast_1d(cols))]


def gamma_rows(gamma, rows) -> np.ndarray:
    if isinstance(gamma, GreenMatrix):
        return gamma.rows(rows)
    return np.asarray(gamma)[np.atleast_1d(rows)]


def gamma_scaled(gamma, left, right):
    if isinstance(gamma, GreenMatrix):
        return gamma.scaled(left, right)
    return left[:, None] * np.asarray(gamma) * right[None, :]


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Sparse scattering potential ``eta`` on a grid."""

    grid: VoxelGrid
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.intp).ravel()
        values = np.asarray(self.values, dtype=complex).ravel()
        if support.shape != values.shape:
            raise InvalidArgumentError("support and values must have equal length")
        if support.size:
            if np.any(np.diff(support) <= 0):
                raise InvalidArgumentError("support must be strictly increasing")
            if support[0] < 0 or support[-1] >= self.grid.n_voxels:
                raise InvalidArgumentError("support index outside the grid")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @property
    def sparsity(self) -> int:
        return int(self.support.size)

    @classmethod
    def from_dense(cls, grid, eta):
        eta = np.asarray(eta, dtype=complex).ravel()
        support = np.flatnonzero(eta)
        return cls(grid, support, eta[support])

    def dense(self) -> np.ndarray:
        eta = np.zeros(self.grid.n_voxels, dtype=complex)
        eta[self.support] = self.values
        return eta


@dataclass
class MeasurementMatrix:
    data: np.ndarray
    noise_level: float = 0.0
    seed: Optional[int] = None
    noise: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def shape(self):
        return self.data.shape


def far_field_matrix(grid: VoxelGrid, meas_dirs: DirectionSet) -> np.ndarray:
    """``A_mj = exp(-i k x_m . r_j)``."""
    xs = np.asarray(meas_dirs.directions, dtype=float)
    if xs.size == 0:
        raise InvalidArgumentError("measurement directions must be non-empty")
    return np.exp(-1j * grid.k * (xs @ grid.centers.T))


def incident_matrix(grid: VoxelGrid, src_dirs: DirectionSet) -> np.ndarray:
    """``B_jn = exp(i k d_n . r_j)``."""
    ds = np.asarray(src_dirs.directions, dtype=float)
    if ds.size == 0:
        raise InvalidArgumentError("source directions must be non-empty")
    return np.exp(1j * grid.k * (grid.centers @ ds.T))


def assemble_operators(grid: VoxelGrid, meas_dirs: DirectionSet, src_dirs: DirectionSet,
                       four_pi=True, dense_gamma=None):
    """Return ``(A, B, Gamma)`` for the given geometry.

    ``Gamma`` is dense for grids up to 4096 voxels and a :class:`GreenMatrix`
    otherwise, unless ``dense_gamma`` forces one or the other.
    """
    A = far_field_matrix(grid, meas_dirs)
    B = incident_matrix(grid, src_dirs)
    gamma = GreenMatrix(grid.centers, grid.k, four_pi=four_pi)
    if dense_gamma is None:
        dense_gamma = grid.n_voxels <= 4096
    if dense_gamma:
        gamma = gamma.toarray()
    return A, B, gamma


def assemble_V(pot: PotentialField) -> np.ndarray:
    """Diagonal of ``V``: ``k^2 h^3 eta`` on the support, zero elsewhere."""
    grid = pot.grid
    v = np.zeros(grid.n_voxels, dtype=complex)
    v[pot.support] = grid.k ** 2 * grid.h ** 3 * pot.values
    return v


def as_diagonal(V) -> np.ndarray:
    V = np.asarray(V)
    if V.ndim == 2:
        if V.shape[0] != V.shape[1]:
            raise InvalidArgumentError(f"V must be square, got {V.shape}")
        return np.diagonal(V).copy()
    return V.ravel()


def _check_shapes(A, v, gamma, B):
    n = v.shape[0]
    if A.shape[1] != n or B.shape[0] != n or tuple(gamma.shape) != (n, n):
        raise InvalidArgumentError(
            f"shape mismatch: A {A.shape}, V ({n},), Gamma {tuple(gamma.shape)}, B {B.shape}")


def support_of(v) -> np.ndarray:
    return np.flatnonzero(v)


def born_kernel(v_s, gamma_ss, order) -> np.ndarray:
    """``sum_{m=0}^{order-1} (V_S Gamma_SS)^m V_S`` on the support.

    ``order=inf`` gives the T-matrix block ``(I - V_S Gamma_SS)^{-1} V_S``.
    """
    s = v_s.size
    if order == INF_ORDER:
        return support_tmatrix(v_s, gamma_ss)
    order = int(order)
    if order < 1:
        raise InvalidArgumentError(f"Born order must be >= 1, got {order}")
    vg = v_s[:, None] * gamma_ss
    term = np.diag(v_s).astype(complex)
    total = term.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(order - 1):
            term = vg @ term
            total += term
    if s and not np.all(np.isfinite(total)):
        raise DivergenceError(f"Born series of order {order} overflowed")
    return total


def support_tmatrix(v_s, gamma_ss, support=None) -> np.ndarray:
    s = v_s.size
    if s == 0:
        return np.zeros((0, 0), dtype=complex)
    system = np.eye(s) - v_s[:, None] * gamma_ss
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            T = scipy.linalg.solve(system, np.diag(v_s).astype(complex))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
        cond = np.linalg.cond(system) if np.all(np.isfinite(system)) else np.inf
        raise SingularOperatorError(
            f"support system I - V_S Gamma_SS is singular (cond={cond:.3e}, support size {s})",
            support=support, condition=cond) from None
    return T


def forward_born(A, V, gamma, B, M) -> np.ndarray:
    """M-th Born approximation ``A (sum_{m<M} (V Gamma)^m) V B``."""
    v = as_diagonal(V)
    _check_shapes(A, v, gamma, B)
    if M == INF_ORDER:
        raise InvalidArgumentError("forward_born needs a finite order; use forward_full")
    S = support_of(v)
    if S.size == 0:
        return np.zeros((A.shape[0], B.shape[1]), dtype=complex)
    K = born_kernel(v[S], gamma_block(gamma, S, S), M)
    return A[:, S] @ K @ B[S, :]


def forward_full(A, V, gamma, B) -> np.ndarray:
    """Exact data ``A (I - V Gamma)^{-1} V B`` via the ``s x s`` support solve."""
    v = as_diagonal(V)
    _check_shapes(A, v, gamma, B)
    S = support_of(v)
    if S.size == 0:
        return np.zeros((A.shape[0], B.shape[1]), dtype=complex)
    T = support_tmatrix(v[S], gamma_block(gamma, S, S), support=S)
    return A[:, S] @ T @ B[S, :]


def t_matrix(V, gamma) -> np.ndarray:
    """Dense ``T = (I - V Gamma)^{-1} V``; nonzero only in the support block."""
    v = as_diagonal(V)
    n = v.shape[0]
    S = support_of(v)
    T = np.zeros((n, n), dtype=complex)
    if S.size:
        T[np.ix_(S, S)] = support_tmatrix(v[S], gamma_block(gamma, S, S), support=S)
    return T


def add_noise(Y, level, seed) -> MeasurementMatrix:
    """Add iid circular complex Gaussian noise.

    The per-entry standard deviation is ``level * ||Y||_F / sqrt(Y.size)`` so
    that ``||E||_F / ||Y||_F`` concentrates at ``level``.
    """
    data = Y.data if isinstance(Y, MeasurementMatrix) else np.asarray(Y)
    if level < 0:
        raise InvalidArgumentError(f"noise level must be non-negative, got {level}")
    if level == 0:
        return MeasurementMatrix(data.copy(), 0.0, seed, np.zeros_like(data))
    rng = np.random.default_rng(seed)
    sigma = level * np.linalg.norm(data) / np.sqrt(data.size)
    E = (rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)) * (sigma / np.sqrt(2.0))
    return MeasurementMatrix(data + E, float(level), seed, E)


def vg_norms(v, gamma):
    """``(max-norm, induced 1-norm)`` of ``V Gamma`` computed from its support rows."""
    v = as_diagonal(v)
    S = support_of(v)
    if S.size == 0:
        return 0.0, 0.0
    rows = np.abs(v[S])[:, None] * np.abs(gamma_rows(gamma, S))
    return float(rows.max()), float(rows.sum(axis=0).max())


# -- text serialization -----------------------------------------------------

def write_matrix(path, M, comments=None):
    """Write ``M`` as ``rows cols`` followed by one ``i j re im`` line per entry."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2:
        raise InvalidArgumentError("only 2-D matrices can be serialized")
    rows, cols = M.shape
    ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    with open(path, "w") as fh:
        for key, value in (comments or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write(f"{rows} {cols}\n")
        for i, j, z in zip(ii.ravel(), jj.ravel(), M.ravel()):
            fh.write(f"{i} {j} {z.real:.17g} {z.imag:.17g}\n")


def read_matrix(path):
    """Inverse of :func:`write_matrix`; returns ``(matrix, comments)``."""
    comments = {}
    header = None
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                comments[key.strip()] = value.strip()
                continue
            parts = line.split()
            if header is None:
                header = (int(parts[0]), int(parts[1]))
            else:
                entries.append(parts)
    if header is None:
        raise InvalidArgumentError(f"{path}: missing 'rows cols' header")
    M = np.zeros(header, dtype=complex)
    for i, j, re, im in entries:
        M[int(i), int(j)] = complex(float(re), float(im))
    return M, comments


def write_measurement(path, meas: MeasurementMatrix):
    write_matrix(path, meas.data, {"noise_level": meas.noise_level,
                                   "seed": "none" if meas.seed is None else meas.seed})


def read_measurement(path) -> MeasurementMatrix:
    data, comments = read_matrix(path)
    seed = comments.get("seed", "none")
    return MeasurementMatrix(data, float(comments.get("noise_level", 0.0)),
                             None if seed in ("none", "None", "") else int(seed))
