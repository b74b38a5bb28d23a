"""Executable forms of the IHT convergence guarantees.

Every recursion has the shape ``b_n = rho_n * b_{n-1} + c_n`` with
``b_0 = ||v_0 - v||_1``; a guarantee holds when every ``rho_n < 1``.
Per-iterate quantities (``delta_n``, ``gamma_n``, noise) may be scalars
(worst-case constants) or sequences indexed by iteration ``n = 1, 2, ...``,
where entry ``n`` refers to the linearization point ``v_{n-1}``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .coherence import inner_perturbation_bound
from .errors import InvalidArgumentError, PreconditionError


@dataclass
class BoundInputs:
    mu_A: float
    mu_Bstar: float
    s: int
    delta: float = 0.0
    gamma: float = 0.0
    delta_n: object = None
    gamma_n: object = None
    v_inf: float = 0.0
    v0_err: float = 0.0
    noise_term: object = 0.0
    n_iter: int = 30

    def __post_init__(self):
        for name in ("mu_A", "mu_Bstar", "delta", "gamma", "v_inf", "v0_err"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be non-negative")
        if self.s < 1:
            raise InvalidArgumentError(f"s must be >= 1, got {self.s}")
        if self.n_iter < 1:
            raise InvalidArgumentError(f"n_iter must be >= 1, got {self.n_iter}")

    def per_iter(self, name, default=None) -> np.ndarray:
        value = getattr(self, name)
        if value is None:
            value = getattr(self, default) if default else 0.0
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            return np.full(self.n_iter, float(arr))
        if arr.size < self.n_iter:
            raise InvalidArgumentError(f"{name} has {arr.size} entries, need {self.n_iter}")
        if np.any(arr < 0):
            raise InvalidArgumentError(f"{name} must be non-negative")
        return arr[: self.n_iter].copy()


@dataclass
class BoundTrace:
    name: str
    bounds: np.ndarray
    rho: np.ndarray
    floor: float
    guarantee: bool
    constants: dict = field(default_factory=dict)

    @property
    def n_iter(self):
        return len(self.bounds)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "bound_l1", "rho_n", "floor"])
            for i, (b, r) in enumerate(zip(self.bounds, self.rho), start=1):
                w.writerow([i, repr(float(b)), repr(float(r)), repr(float(self.floor))])

    def to_json(self):
        return json.dumps({"name": self.name, "guarantee": self.guarantee,
                           "floor": self.floor, "constants": self.constants}, indent=2)


def _recurse(b0, rho, add):
    out = np.empty(len(rho))
    b = float(b0)
    with np.errstate(over="ignore", invalid="ignore"):
        for i, (r, c) in enumerate(zip(rho, add)):
            b = r * b + c
            out[i] = b
    return out


def _floor(rho_max, add_max):
    if add_max == 0:
        return 0.0
    if rho_max >= 1:
        return math.inf
    return add_max / (1.0 - rho_max)


def generic_bound(mu0, s, error_caps, v0_err=0.0) -> BoundTrace:
    """Coherence-based recursion ``b_n = mu0 (3s+1) b_{n-1} + (3s+1) cap_n``."""
    if mu0 < 0 or s < 1:
        raise InvalidArgumentError(f"need mu0 >= 0 and s >= 1, got {mu0}, {s}")
    caps = np.atleast_1d(np.asarray(error_caps, dtype=float))
    q = 3 * s + 1
    rho = np.full(caps.size, mu0 * q)
    add = q * caps
    return BoundTrace("generic", _recurse(v0_err, rho, add), rho,
                      _floor(mu0 * q, float(add.max(initial=0.0))), bool(mu0 * q < 1),
                      {"rho": mu0 * q})


def mu1_A(delta_n, s, mu_A) -> float:
    """Clamped coherence bound for ``A (I + V_n Gamma)``; equals ``mu(A)`` when ``delta_n = 0``."""
    if delta_n == 0:
        return float(mu_A)
    inner = inner_perturbation_bound(delta_n, s)
    den = abs(1.0 - (s + 1) * mu_A)
    if den == 0:
        return 1.0
    return min((inner + (s + 1) * mu_A) / den, 1.0)


def _check_gamma(inp):
    if inp.gamma >= 1:
        raise PreconditionError(f"gamma = {inp.gamma} must be < 1")


def second_born_rho(inp: BoundInputs) -> np.ndarray:
    s, mu_a, mu_b = inp.s, inp.mu_A, inp.mu_Bstar
    dn = inp.per_iter("delta_n", "delta")
    return np.array([(3 * s + 1) * (mu1_A(d, s, mu_a) * mu_b + s * inp.delta * mu_a * (1 + s * d * mu_b))
                     for d in dn])


def _model_error_factor(inp):
    s = inp.s
    return (3 * s + 1) * (1 + (s - 1) * inp.mu_A) * (1 + (s - 1) * inp.mu_Bstar) * inp.v_inf


def _model_term(numerator, rho_ref, gamma):
    if numerator == 0:
        return 0.0
    if rho_ref >= 1:
        return math.inf
    return numerator / ((1 - rho_ref) * (1 - gamma))


def second_born_bound(inp: BoundInputs) -> BoundTrace:
    """Second-Born nonlinear IHT recursion with contraction ``rho^(1)_n``."""
    _check_gamma(inp)
    s = inp.s
    rho = second_born_rho(inp)
    rho_ref = float(rho.max())
    gn = inp.per_iter("gamma_n", "gamma")
    noise = inp.per_iter("noise_term")
    fac = _model_error_factor(inp)
    add = np.array([_model_term(inp.delta * inp.gamma * (1 + g) * fac, rho_ref, inp.gamma) for g in gn]) \
        + (3 * s + 1) * noise
    return BoundTrace("second_born", _recurse(inp.v0_err, rho, add), rho,
                      _floor(rho_ref, float(add.max())), bool(np.all(rho < 1)),
                      {"rho_max": rho_ref})


def linear_bound(inp: BoundInputs) -> BoundTrace:
    """First-Born (linear) IHT recursion applied to multiply scattered data."""
    _check_gamma(inp)
    s = inp.s
    r = inp.mu_A * inp.mu_Bstar * (3 * s + 1)
    rho = np.full(inp.n_iter, r)
    gn = inp.per_iter("gamma_n", "gamma")
    noise = inp.per_iter("noise_term")
    fac = _model_error_factor(inp)
    add = np.array([_model_term(inp.delta * (1 + g) * fac, r, inp.gamma) for g in gn]) \
        + (3 * s + 1) * noise
    return BoundTrace("linear", _recurse(inp.v0_err, rho, add), rho,
                      _floor(r, float(add.max())), bool(r < 1), {"rho": r})


def full_nonlinear_rho(inp: BoundInputs) -> np.ndarray:
    s, mu_b = inp.s, inp.mu_Bstar
    gn = inp.per_iter("gamma_n", "gamma")
    with np.errstate(divide="ignore"):
        lin = (1.0 / (1.0 - gn)) ** 2
    return (3 * s + 1) * (mu_b + lin * (1 + (s - 1) * mu_b) * inp.delta / (1 - inp.gamma))


def full_nonlinear_bound(inp: BoundInputs) -> BoundTrace:
    """Fully nonlinear (T-matrix) IHT recursion; the only additive term is noise."""
    _check_gamma(inp)
    # relative slack so equal coherences computed in different order are accepted
    if inp.mu_Bstar > inp.mu_A * (1 + 1e-12):
        raise PreconditionError(f"needs mu(B*) <= mu(A), got {inp.mu_Bstar} > {inp.mu_A}")
    gn = inp.per_iter("gamma_n", "gamma")
    if np.any(gn >= 1):
        raise PreconditionError(f"gamma_n must be < 1, max is {gn.max()}")
    rho = full_nonlinear_rho(inp)
    add = (3 * inp.s + 1) * inp.per_iter("noise_term")
    rho_ref = float(rho.max())
    return BoundTrace("full_nonlinear", _recurse(inp.v0_err, rho, add), rho,
                      _floor(rho_ref, float(add.max())), bool(np.all(rho < 1)),
                      {"rho_max": rho_ref})


class RIPConstants(NamedTuple):
    alpha: float
    beta: float
    C: float
    converges: bool


def rip_constants(delta_2s, gamma, v_inf) -> RIPConstants:
    """Constants of the RIP-based convergence theorem and its convergence test."""
    if not 0 <= delta_2s < 1:
        raise PreconditionError(f"delta_2s must lie in [0, 1), got {delta_2s}")
    if not 0 <= gamma < 0.5:
        raise PreconditionError(f"gamma must lie in [0, 1/2), got {gamma}")
    alpha = 1 - ((1 - delta_2s) * ((1 - 2 * gamma) / (1 - gamma)) ** 2 - 1) ** 2
    beta = 1 + ((1 + delta_2s) / (1 - gamma) ** 2 - 1) ** 2
    C = beta * v_inf ** 2
    converges = (2.0 / 3.0) * (1 + 4 * v_inf ** 2) < alpha / beta
    return RIPConstants(float(alpha), float(beta), float(C), bool(converges))


def noise_term(A_lin, E, B) -> float:
    """``||Phi_v^* eps||_inf`` for the linearized operator: max modulus of ``diag(A_lin^* E B^*)``."""
    A_lin = np.asarray(A_lin)
    P = np.asarray(E) @ np.asarray(B).conj().T
    return float(np.max(np.abs(np.einsum("mj,mj->j", A_lin.conj(), P))))


def constants_report(inp: BoundInputs, traces) -> dict:
    d = asdict(inp)
    for key, val in list(d.items()):
        if isinstance(val, np.ndarray):
            d[key] = val.tolist()
    return {"inputs": d, "bounds": {t.name: {"guarantee": t.guarantee, "floor": t.floor,
                                             **t.constants} for t in traces}}
