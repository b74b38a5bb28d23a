"""Mutual coherence of sensing matrices, analytic far-field estimates and the
product/perturbation bounds that feed the convergence guarantees."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateBoundError, InvalidArgumentError, PreconditionError, SingularityError,
    UndefinedCoherenceError,
)
from .forward import INF_ORDER, as_diagonal
from .iht import linearized_operator


@dataclass
class BoundEntry:
    name: str
    value: float
    clamped: bool = False


@dataclass
class CoherenceReport:
    mu_exact: float
    argmax_pair: tuple
    bound_chain: list = field(default_factory=list)

    def add_bound(self, name, value, clamped=False):
        self.bound_chain.append(BoundEntry(name, float(value), bool(clamped)))
        return self

    def to_dict(self):
        return {
            "mu_exact": self.mu_exact,
            "argmax_pair": [int(i) for i in self.argmax_pair],
            "bound_chain": [{"name": b.name, "value": b.value, "clamped": b.clamped}
                            for b in self.bound_chain],
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _clamp(value):
    return (1.0, True) if value > 1.0 else (float(value), False)


def _normalized_columns(M):
    M = np.asarray(M)
    if M.ndim != 2:
        raise InvalidArgumentError(f"expected a matrix, got shape {M.shape}")
    if M.shape[1] < 2:
        raise UndefinedCoherenceError("coherence needs at least two columns")
    norms = np.linalg.norm(M, axis=0)
    if np.any(norms == 0):
        raise InvalidArgumentError(f"zero column at index {int(np.flatnonzero(norms == 0)[0])}")
    return M / norms[None, :]


def _gram_max(G) -> CoherenceReport:
    """Largest off-diagonal modulus of a Gram matrix; ties go to the lowest pair."""
    n = G.shape[0]
    best, pair = -1.0, (0, 1)
    mag = np.abs(G)
    # upper triangle only, row by row so the first maximum is the lowest pair
    for j in range(n - 1):
        row = mag[j, j + 1:]
        l = int(np.argmax(row))
        if row[l] > best:
            best, pair = float(row[l]), (j, j + 1 + l)
    return CoherenceReport(min(best, 1.0), pair)


def mutual_coherence(M, block=2048) -> CoherenceReport:
    """Exact coherence ``max_{j != k} |<M_j, M_k>| / (||M_j|| ||M_k||)``."""
    U = _normalized_columns(M)
    n = U.shape[1]
    if n <= block:
        return _gram_max(U.conj().T @ U)
    best, pair = -1.0, (0, 1)
    for start in range(0, n, block):
        stop = min(start + block, n)
        G = np.abs(U[:, start:stop].conj().T @ U)
        for r in range(stop - start):
            j = start + r
            row = G[r, j + 1:]
            if row.size == 0:
                continue
            l = int(np.argmax(row))
            if row[l] > best:
                best, pair = float(row[l]), (j, j + 1 + l)
    return CoherenceReport(min(best, 1.0), pair)


def hadamard_gram(A, B) -> np.ndarray:
    """Gram matrix of ``Phi`` with columns ``A_j (x) B_j,:``, i.e. ``(A*A) o (B B*)^T``."""
    A = np.asarray(A)
    B = np.asarray(B)
    return (A.conj().T @ A) * (B @ B.conj().T).T


def coherence_factored(A, B, verify=False):
    """``mu(A) * mu(B*)``; with ``verify`` also returns the exact coherence of ``Phi``.

    ``B`` has the incident directions along its columns, so ``mu(B*)`` is the
    coherence of ``B.T`` up to conjugation.
    """
    mu_a = mutual_coherence(A).mu_exact
    mu_b = mutual_coherence(np.asarray(B).T).mu_exact
    prod = mu_a * mu_b
    if not verify:
        return prod
    G = hadamard_gram(A, B)
    d = np.sqrt(np.real(np.diagonal(G)))
    if np.any(d == 0):
        raise InvalidArgumentError("Phi has a zero column")
    exact = _gram_max(G / np.outer(d, d))
    exact.add_bound("mu(A)mu(B*)", *_clamp(prod))
    return prod, exact


def product_coherence_bound(mu_H, mu_A, n_or_s) -> float:
    """``(mu(H) + q mu(A)) / |1 - q mu(A)|`` clamped to 1, for the coherence of ``A H``."""
    q = n_or_s
    den = abs(1.0 - q * mu_A)
    if den == 0:
        raise DegenerateBoundError(f"q*mu(A) = 1 (q={q}, mu(A)={mu_A})")
    return _clamp((mu_H + q * mu_A) / den)[0]


def inner_perturbation_bound(delta, s) -> float:
    """Coherence bound for ``I + VG`` when ``VG`` has ``s`` nonzero rows with entries <= delta."""
    if not 0 <= delta < 1:
        raise PreconditionError(f"delta must lie in [0, 1), got {delta}")
    return (2 * delta + (s - 2) * delta ** 2) / (1 + (s - 1) * delta)


def perturbation_coherence_bound(delta, s, mu_A, report=None) -> float:
    """Clamped bound on ``mu(A (I + VG))`` composed through the sparse-column product bound.

    When ``report`` is given, both the inner bound and the composed value are
    appended to its bound chain.
    """
    inner = inner_perturbation_bound(delta, s)
    q = s + 1
    den = abs(1.0 - q * mu_A)
    if den == 0:
        raise DegenerateBoundError(f"(s+1) mu(A) = 1 (s={s}, mu(A)={mu_A})")
    value, clamped = _clamp((inner + q * mu_A) / den)
    if report is not None:
        report.add_bound("mu(I+VG)", *_clamp(inner))
        report.add_bound("mu(A(I+VG))", value, clamped)
    return value


def farfield_coherence_analytic(kh) -> float:
    """Continuum-limit coherence ``|sin(kh)/(kh)|`` of the far-field matrix."""
    if not kh > 0:
        raise InvalidArgumentError(f"kh must be positive, got {kh}")
    return abs(np.sin(kh) / kh)


def _sinc(x):
    return np.sinc(np.asarray(x) / np.pi)


def single_scatterer_pair(eta0, k, h, rho_j, rho_l, dist, four_pi=True):
    """Closed-form ``|<At_j, At_l>| / (||At_j|| ||At_l||)`` for one scatterer.

    ``At = A (I + V Gamma)`` with a single scatterer of strength ``eta0`` at
    ``r_*``; ``rho_j``, ``rho_l`` are the probe distances to ``r_*`` and
    ``dist = |r_j - r_l|``. Inner products are taken in the continuum
    direction limit (normalized by the number of directions).
    """
    rho_j = np.asarray(rho_j, dtype=float)
    rho_l = np.asarray(rho_l, dtype=float)
    if np.any(rho_j == 0) or np.any(rho_l == 0):
        raise SingularityError("probe voxel coincides with the scatterer")
    c = k * k * h ** 3 * eta0
    if four_pi:
        c = c / (4 * np.pi)

    def d1(rho):
        return 1.0 / np.sqrt(1.0 + c * np.sin(2 * k * rho) / (k * rho * rho) + (c / rho) ** 2)

    d2 = (c / k) * (np.sin(k * (rho_j + rho_l)) + k * c * np.exp(1j * k * (rho_j - rho_l))) \
        / (rho_j * rho_l)
    return d1(rho_j) * d1(rho_l) * np.abs(_sinc(k * np.asarray(dist)) + d2)


def single_scatterer_coherence(eta0, kh, k=2 * np.pi, h=None, rho_max=None, n_rho=4001,
                               four_pi=True, return_argmax=False):
    """Maximum of the single-scatterer closed form over the probe family.

    The family has both probes at the same distance ``rho >= h`` from the
    scatterer and ``h`` apart from each other; ``rho`` is scanned on a fine
    grid up to ``rho_max`` (default ``10 h``).
    """
    if h is None:
        h = kh / k
    if not np.isclose(k * h, kh):
        raise InvalidArgumentError(f"inconsistent kh={kh} for k={k}, h={h}")
    rho_max = 10 * h if rho_max is None else rho_max
    rho = np.linspace(h, rho_max, n_rho)
    vals = single_scatterer_pair(eta0, k, h, rho, rho, h, four_pi=four_pi)
    i = int(np.argmax(vals))
    if return_argmax:
        return float(vals[i]), float(rho[i])
    return float(vals[i])


def single_scatterer_curve(eta0, kh, rho, k=2 * np.pi, four_pi=True):
    """Closed form along the probe family as a function of distance ``rho`` to the scatterer."""
    h = kh / k
    return single_scatterer_pair(eta0, k, h, rho, rho, h, four_pi=four_pi)


def linearized_matrix(A, V, gamma, M):
    """``A sum_{m<M} (V Gamma)^m`` or ``A (I - V Gamma)^{-1}`` built from the support rows."""
    M = M if M == INF_ORDER else int(M)
    return np.array(linearized_operator(np.asarray(A), as_diagonal(V), gamma, M), copy=True)


def linearized_coherence_numeric(A, V, gamma, M=INF_ORDER) -> CoherenceReport:
    """Exact coherence of the linearized sensing matrix at potential ``V``."""
    return mutual_coherence(linearized_matrix(A, V, gamma, M))


def gram_residual_ratio(A, x) -> float:
    """``||(I - A*A) x||_inf / ||x||_1`` for column-normalized ``A``."""
    A = np.asarray(A)
    x = np.asarray(x)
    r = x - A.conj().T @ (A @ x)
    return float(np.max(np.abs(r)) / np.sum(np.abs(x)))
