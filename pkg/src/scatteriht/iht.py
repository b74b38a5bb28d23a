"""Iterative hard thresholding in matrix (Hadamard) form.

All solvers expect column-normalized operators: the columns of ``A`` and the
columns of ``B^*`` (rows of ``B``) have unit norm. With that normalization the
update uses a unit step (scaled by ``IHTConfig.step`` when set),

    V_{n+1} = H_s( diag( V_n + At_n^* (Y - At_n V_n B) B^* ) ),

where ``At_n`` is ``A`` (linear), ``A sum_{m<M} (V_n Gamma)^m`` (Born order
``M``) or ``A (I - V_n Gamma)^{-1}`` (``M = inf``). Only the diagonal of the
bracket is ever formed.

:func:`reconstruct` wraps the normalization bookkeeping and reports the
potential in physical units.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DivergenceError, InvalidArgumentError, SingularOperatorError
from .forward import (
    INF_ORDER, as_diagonal, born_kernel, forward_full, gamma_block, gamma_rows,
    gamma_scaled, support_of,
)


@dataclass
class IHTConfig:
    """Settings for one reconstruction.

    ``s_threshold`` is the number of entries kept by the thresholding step; it
    need not equal the true sparsity. ``born_order`` is a positive integer or
    ``numpy.inf``. ``tol`` enables an early stop once ``|Delta Y_err| < tol``.
    ``step`` scales the gradient term; the default 1 is the plain iteration,
    smaller values (e.g. ``1 / phi_norm_sq(A, B)``) give a relaxed one.
    """

    s_threshold: int
    born_order: float = 1
    max_iter: int = 100
    tol: Optional[float] = None
    init: Optional[np.ndarray] = None
    record_proxy: bool = False
    step: float = 1.0

    def __post_init__(self):
        if int(self.s_threshold) != self.s_threshold or self.s_threshold < 1:
            raise InvalidArgumentError(f"s_threshold must be >= 1, got {self.s_threshold}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidArgumentError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.born_order != INF_ORDER and (int(self.born_order) != self.born_order
                                             or self.born_order < 1):
            raise InvalidArgumentError(f"born_order must be >= 1 or inf, got {self.born_order}")
        if not (np.isfinite(self.step) and self.step > 0):
            raise InvalidArgumentError(f"step must be a positive number, got {self.step}")
        self.s_threshold = int(self.s_threshold)
        self.max_iter = int(self.max_iter)
        if self.born_order != INF_ORDER:
            self.born_order = int(self.born_order)


@dataclass
class IterationRecord:
    iteration: int
    support: np.ndarray
    values: np.ndarray
    y_err: float
    l1_error: Optional[float] = None
    # pre-threshold proxy in normalized units, kept only on request
    proxy: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class ReconstructionTrace:
    n_voxels: int
    records: list = field(default_factory=list)
    converged: bool = False
    scales: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def iterations(self) -> int:
        return len(self.records)

    def vector(self, i=-1) -> np.ndarray:
        rec = self.records[i]
        v = np.zeros(self.n_voxels, dtype=complex)
        v[rec.support] = rec.values
        return v

    @property
    def final(self) -> np.ndarray:
        return self.vector(-1)

    @property
    def final_support(self) -> np.ndarray:
        return self.records[-1].support

    @property
    def y_errs(self) -> np.ndarray:
        return np.array([r.y_err for r in self.records])

    @property
    def l1_errors(self) -> np.ndarray:
        return np.array([np.nan if r.l1_error is None else r.l1_error for r in self.records])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "y_err", "l1_error", "support_size", "support_indices", "values"])
            for r in self.records:
                w.writerow([
                    r.iteration,
                    repr(float(r.y_err)),
                    "" if r.l1_error is None else repr(float(r.l1_error)),
                    len(r.support),
                    json.dumps([int(i) for i in r.support]),
                    " ".join(f"{z.real:.17g};{z.imag:.17g}" for z in r.values),
                ])


def read_trace_csv(path, n_voxels) -> ReconstructionTrace:
    trace = ReconstructionTrace(n_voxels)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            values = [complex(*map(float, p.split(";"))) for p in row["values"].split()]
            trace.records.append(IterationRecord(
                int(row["iter"]),
                np.array(json.loads(row["support_indices"]), dtype=np.intp),
                np.array(values, dtype=complex),
                float(row["y_err"]),
                float(row["l1_error"]) if row["l1_error"] else None,
            ))
    return trace


def diag_extract(X) -> np.ndarray:
    """Diagonal of a square matrix, i.e. the action of the diagonalizing operator."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise InvalidArgumentError(f"diag_extract needs a square matrix, got shape {X.shape}")
    return np.diagonal(X).copy()


def hard_threshold(v, s) -> np.ndarray:
    """Keep the ``s`` largest-magnitude entries of ``v`` and zero the rest.

    Ties in magnitude go to the lower index.
    """
    v = np.asarray(v)
    if s < 0:
        raise InvalidArgumentError(f"threshold level must be non-negative, got {s}")
    if s >= v.size:
        return v.copy()
    keep = np.argsort(-np.abs(v), kind="stable")[:s]
    out = np.zeros_like(v)
    out[keep] = v[keep]
    return out


def column_normalize(A, B):
    """Scale ``A`` to unit columns and ``B`` to unit rows.

    Returns ``(A_hat, B_hat, col_scales)`` with
    ``col_scales[j] = ||A_j|| * ||B_j,:||``; a potential recovered against the
    normalized operators maps back to physical units as ``v = v_hat / col_scales``.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    a = np.linalg.norm(A, axis=0)
    b = np.linalg.norm(B, axis=1)
    if np.any(a == 0):
        raise InvalidArgumentError(f"A has a zero column at index {int(np.flatnonzero(a == 0)[0])}")
    if np.any(b == 0):
        raise InvalidArgumentError(f"B has a zero row at index {int(np.flatnonzero(b == 0)[0])}")
    return A / a[None, :], B / b[:, None], a * b


def normalize_operators(A, B, gamma):
    """Normalize ``A`` and ``B`` and rescale ``Gamma`` so the forward map is unchanged.

    With ``a``, ``b`` the column norms of ``A`` and ``B^*``, the data satisfy
    ``Y = A_hat (I - V_hat Gamma_hat)^{-1} V_hat B_hat`` for
    ``V_hat = V a b`` and ``Gamma_hat = diag(1/b) Gamma diag(1/a)``.
    """
    A_hat, B_hat, scales = column_normalize(A, B)
    a = np.linalg.norm(np.asarray(A), axis=0)
    b = np.linalg.norm(np.asarray(B), axis=1)
    gamma_hat = None if gamma is None else gamma_scaled(gamma, 1.0 / b, 1.0 / a)
    return A_hat, B_hat, gamma_hat, scales


def phi_norm_sq(A, B, iters=200, rtol=1e-8, seed=0) -> float:
    """Squared spectral norm of ``Phi`` (columns ``A_j (x) B_j,:``) by power iteration.

    ``Phi^* Phi x = diag(A^* A diag(x) B B^*)``, so ``Phi`` is never formed.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    BB = B @ B.conj().T
    x = np.random.default_rng(seed).standard_normal(A.shape[1]).astype(complex)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = np.einsum("mj,mj->j", A.conj(), A @ (x[:, None] * BB))
        new = float(np.linalg.norm(y))
        if new == 0:
            return 0.0
        x = y / new
        if abs(new - lam) <= rtol * new:
            return new
        lam = new
    return lam


def linearized_operator(A, v, gamma, order):
    """``At = A sum_{m<order} (V Gamma)^m`` (or ``A (I - V Gamma)^{-1}`` for ``inf``)."""
    S = support_of(v)
    if order == 1 or S.size == 0:
        return A
    # A sum_{m<M} (V Gamma)^m = A + A_S [sum_{m<M-1} (V_S Gamma_SS)^m V_S] Gamma_S,:
    K = born_kernel(v[S], gamma_block(gamma, S, S), order if order == INF_ORDER else order - 1)
    return A + (A[:, S] @ K) @ gamma_rows(gamma, S)


def _relative_misfit(Y, pred):
    ny = np.linalg.norm(Y)
    if ny == 0:
        return 0.0
    return float(np.linalg.norm(Y - pred) / ny)


def y_err(Y, V_rec, A, B, gamma) -> float:
    """Relative Frobenius misfit between ``Y`` and the exact forward data of ``V_rec``.

    Returns 0 when ``Y`` is identically zero.
    """
    Y = np.asarray(Y)
    if not np.any(Y):
        return 0.0
    return _relative_misfit(Y, forward_full(A, V_rec, gamma, B))


def _run(A, B, gamma, Y, cfg: IHTConfig, order, truth=None, scales=None) -> ReconstructionTrace:
    A = np.asarray(A)
    B = np.asarray(B)
    Y = np.asarray(Y)
    n = A.shape[1]
    if B.shape[0] != n or Y.shape != (A.shape[0], B.shape[1]):
        raise InvalidArgumentError(f"shape mismatch: A {A.shape}, B {B.shape}, Y {Y.shape}")
    if gamma is not None and tuple(gamma.shape) != (n, n):
        raise InvalidArgumentError(f"Gamma has shape {tuple(gamma.shape)}, expected {(n, n)}")
    if order != 1 and gamma is None:
        raise InvalidArgumentError("nonlinear IHT needs Gamma")
    scales = np.ones(n) if scales is None else np.asarray(scales, dtype=float)
    truth = None if truth is None else as_diagonal(truth)

    v = np.zeros(n, dtype=complex)
    if cfg.init is not None:
        v = as_diagonal(cfg.init).astype(complex) * scales
    B_adj = B.conj().T
    Y_norm = np.linalg.norm(Y)
    trace = ReconstructionTrace(n, scales=scales)
    prev_err = None

    for it in range(1, cfg.max_iter + 1):
        try:
            At = linearized_operator(A, v, gamma, order)
        except SingularOperatorError as exc:
            exc.iteration = it
            raise
        except DivergenceError as exc:
            raise DivergenceError(f"iteration {it}: {exc}", iteration=it) from None
        S = support_of(v)
        with np.errstate(over="ignore", invalid="ignore"):
            pred = At[:, S] @ (v[S, None] * B[S, :]) if S.size else 0.0
            P = (Y - pred) @ B_adj
            w = v + cfg.step * np.einsum("mj,mj->j", At.conj(), P)
        if not np.all(np.isfinite(w)):
            raise DivergenceError(f"non-finite iterate at iteration {it}", iteration=it)
        v_new = hard_threshold(w, cfg.s_threshold)

        S_new = support_of(v_new)
        if Y_norm == 0:
            err = 0.0
        else:
            try:
                err = _relative_misfit(Y, forward_full(A, v_new, gamma, B)) if gamma is not None \
                    else _relative_misfit(Y, A[:, S_new] @ (v_new[S_new, None] * B[S_new, :]))
            except SingularOperatorError as exc:
                exc.iteration = it
                raise
        if not np.isfinite(err):
            raise DivergenceError(f"non-finite Y_err at iteration {it}", iteration=it)

        phys = v_new[S_new] / scales[S_new]
        l1 = None
        if truth is not None:
            diff = -truth.copy()
            diff[S_new] += phys
            l1 = float(np.abs(diff).sum())
        trace.records.append(IterationRecord(
            it, S_new, phys, err, l1, w.copy() if cfg.record_proxy else None))

        change = np.linalg.norm(v_new - v)
        scale = max(np.linalg.norm(v_new), np.finfo(float).tiny)
        v = v_new
        if cfg.tol is not None and prev_err is not None and abs(err - prev_err) < cfg.tol:
            trace.converged = True
            break
        prev_err = err
        trace.converged = change <= 1e-12 * scale
    return trace


def linear_iht(A, B, Y, cfg: IHTConfig, truth=None, scales=None) -> ReconstructionTrace:
    """Linear (first Born) IHT on normalized ``A``, ``B``.

    ``truth`` (physical units) enables the per-iteration l1 error; ``scales``
    converts normalized iterates back to physical units.
    """
    return _run(A, B, None, Y, cfg, 1, truth, scales)


def nonlinear_iht(A, B, gamma, Y, cfg: IHTConfig, truth=None, scales=None) -> ReconstructionTrace:
    """Nonlinear IHT with the Born series truncated at ``cfg.born_order`` terms."""
    if cfg.born_order == INF_ORDER:
        raise InvalidArgumentError("nonlinear_iht needs a finite born_order; use tmatrix_iht")
    return _run(A, B, gamma, Y, cfg, cfg.born_order, truth, scales)


def tmatrix_iht(A, B, gamma, Y, cfg: IHTConfig, truth=None, scales=None) -> ReconstructionTrace:
    """Fully nonlinear IHT, ``At_n = A (I - V_n Gamma)^{-1}``.

    The inverse is applied through the support-restricted solve, so each
    iteration costs one ``s x s`` factorization.
    """
    return _run(A, B, gamma, Y, cfg, INF_ORDER, truth, scales)


def iht(A, B, gamma, Y, cfg: IHTConfig, truth=None, scales=None) -> ReconstructionTrace:
    order = cfg.born_order
    if order == 1:
        return _run(A, B, gamma, Y, cfg, 1, truth, scales)
    if order == INF_ORDER:
        return tmatrix_iht(A, B, gamma, Y, cfg, truth, scales)
    return nonlinear_iht(A, B, gamma, Y, cfg, truth, scales)


def reconstruct(A, B, gamma, Y, cfg: IHTConfig, truth=None) -> ReconstructionTrace:
    """Normalize the operators, run IHT at ``cfg.born_order`` and report physical values.

    ``truth`` and ``cfg.init`` are diagonals of ``V`` in physical units.
    """
    A_hat, B_hat, gamma_hat, scales = normalize_operators(A, B, gamma)
    return iht(A_hat, B_hat, gamma_hat, Y, cfg, truth=truth, scales=scales)
