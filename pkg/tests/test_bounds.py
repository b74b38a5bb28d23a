import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scatteriht.bounds import (
    BoundInputs, constants_report, full_nonlinear_bound, full_nonlinear_rho, generic_bound,
    linear_bound, mu1_A, noise_term, rip_constants, second_born_bound, second_born_rho,
)
from scatteriht.errors import InvalidArgumentError, PreconditionError

from conftest import random_complex

EXP1 = dict(mu_A=0.0525, mu_Bstar=0.0525, s=3, delta=0.0395, gamma=0.0460)
EXP2 = dict(mu_A=0.098, mu_Bstar=0.098, s=3, delta=0.0987, gamma=0.1299)


# -- generic ------------------------------------------------------------------

def test_generic_exact_in_one_step():
    t = generic_bound(0.0, 3, np.zeros(5), v0_err=4.0)
    assert np.all(t.bounds == 0) and t.floor == 0 and t.guarantee


def test_generic_threshold():
    assert generic_bound(0.099, 3, [0.0]).guarantee
    assert not generic_bound(0.1, 3, [0.0]).guarantee


def test_generic_floor():
    cap = 0.37
    t = generic_bound(0.05, 3, np.full(200, cap), v0_err=1.0)
    assert t.rho[0] == pytest.approx(0.5)
    assert t.floor == pytest.approx(20 * cap)
    assert t.bounds[-1] == pytest.approx(20 * cap, rel=1e-12)


def test_generic_validation():
    with pytest.raises(InvalidArgumentError):
        generic_bound(-0.1, 3, [0.0])
    with pytest.raises(InvalidArgumentError):
        generic_bound(0.1, 0, [0.0])


# -- second Born ----------------------------------------------------------------

def test_second_born_reduces_to_generic():
    inp = BoundInputs(0.2, 0.15, 2, v0_err=3.0, noise_term=0.01, n_iter=12)
    sb = second_born_bound(inp)
    g = generic_bound(0.2 * 0.15, 2, np.full(12, 0.01), v0_err=3.0)
    assert np.allclose(sb.rho, g.rho, rtol=1e-15)
    assert np.allclose(sb.bounds, g.bounds, rtol=1e-14)
    assert sb.floor == pytest.approx(g.floor)


def test_mu1_refinement():
    assert mu1_A(0.0, 3, 0.1) == 0.1
    assert mu1_A(0.01, 3, 0.505) == 1.0
    assert 0.1 < mu1_A(0.01, 3, 0.1) < 1.0


def test_second_born_reference_inputs():
    assert second_born_bound(BoundInputs(**EXP1, v_inf=1e-5)).guarantee
    assert not second_born_bound(BoundInputs(**EXP2, v_inf=1e-4)).guarantee


def test_second_born_gamma_precondition():
    with pytest.raises(PreconditionError):
        second_born_bound(BoundInputs(0.1, 0.1, 2, gamma=1.0))


# -- linear -----------------------------------------------------------------------

def test_linear_pure_contraction():
    t = linear_bound(BoundInputs(0.1, 0.2, 2, v0_err=1.0, n_iter=5))
    assert np.allclose(t.bounds, 0.14 ** np.arange(1, 6))
    assert t.floor == 0


def test_linear_far_field_regime():
    t = linear_bound(BoundInputs(0.505, 0.505, 3))
    assert t.rho[0] == pytest.approx(2.55, abs=5e-3)
    assert not t.guarantee


def test_linear_floor_exceeds_second_born_floor():
    inp = BoundInputs(**EXP1, v_inf=0.5)
    assert linear_bound(inp).floor > second_born_bound(inp).floor > 0


# -- full nonlinear -----------------------------------------------------------

def test_full_nonlinear_delta_zero():
    inp = BoundInputs(0.08, 0.05, 3, gamma=0.2)
    assert np.allclose(full_nonlinear_rho(inp), 10 * 0.05)


def test_full_nonlinear_reference_inputs():
    t = full_nonlinear_bound(BoundInputs(**{**EXP1, "gamma_n": 0.0}, noise_term=1e-3))
    assert t.guarantee
    assert t.floor == pytest.approx(10 * 1e-3 / (1 - t.rho.max()))
    assert full_nonlinear_bound(BoundInputs(**EXP1)).floor == 0.0


def test_full_nonlinear_blowup_and_preconditions():
    rho = [full_nonlinear_rho(BoundInputs(**{**EXP1, "gamma_n": g}))[0] for g in (0.5, 0.9, 0.99, 0.999)]
    assert all(b > a for a, b in zip(rho, rho[1:])) and rho[-1] > 1e4
    assert not full_nonlinear_bound(BoundInputs(**{**EXP1, "gamma_n": 0.9})).guarantee
    with pytest.raises(PreconditionError, match="mu"):
        full_nonlinear_bound(BoundInputs(0.1, 0.2, 2))
    with pytest.raises(PreconditionError, match="gamma_n"):
        full_nonlinear_bound(BoundInputs(0.1, 0.1, 2, gamma_n=1.0))
    with pytest.raises(PreconditionError, match="gamma"):
        full_nonlinear_bound(BoundInputs(0.1, 0.1, 2, gamma=1.2))


def test_per_iterate_sequences():
    dn = np.linspace(0.0, 0.05, 10)
    inp = BoundInputs(0.05, 0.05, 2, delta=0.05, gamma=0.1, delta_n=dn, gamma_n=dn, n_iter=10)
    rho = second_born_rho(inp)
    assert rho[0] == pytest.approx(7 * (0.05 * 0.05 + 2 * 0.05 * 0.05))
    assert np.all(np.diff(rho) >= 0)
    with pytest.raises(InvalidArgumentError):
        BoundInputs(0.05, 0.05, 2, delta_n=[0.1, 0.2], n_iter=10).per_iter("delta_n")


# -- monotonicity -------------------------------------------------------------

unit = st.floats(0.0, 0.3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(mu_a=unit, mu_b=unit, delta=st.floats(0.0, 0.3), s=st.integers(1, 6),
       which=st.sampled_from(["mu_A", "mu_Bstar", "delta", "s"]), step=st.floats(1e-4, 0.1))
def test_rho_monotone(mu_a, mu_b, delta, s, which, step):
    base = dict(mu_A=max(mu_a, mu_b), mu_Bstar=min(mu_a, mu_b), s=s, delta=delta, gamma=0.2)
    bumped = dict(base)
    bumped[which] = base[which] + (1 if which == "s" else step)
    if bumped["mu_Bstar"] > bumped["mu_A"]:
        bumped["mu_A"] = bumped["mu_Bstar"]
    a, b = BoundInputs(**base), BoundInputs(**bumped)
    assert second_born_rho(b)[0] >= second_born_rho(a)[0] * (1 - 1e-12)
    assert full_nonlinear_rho(b)[0] >= full_nonlinear_rho(a)[0] * (1 - 1e-12)
    assert linear_bound(b).rho[0] >= linear_bound(a).rho[0] * (1 - 1e-12)


# -- RIP constants ------------------------------------------------------------

def test_rip_zero_case():
    r = rip_constants(0.0, 0.0, 0.3)
    assert r.alpha == 1.0 and r.beta == 1.0
    assert r.C == pytest.approx(0.09)
    for v in (0.0, 0.2, 0.35, 0.3535):
        assert rip_constants(0.0, 0.0, v).converges == (v * v < 1 / 8)
    assert not rip_constants(0.0, 0.0, 0.36).converges


def test_rip_oracle_values():
    r = rip_constants(0.1, 0.1, 0.05)
    assert r.alpha == pytest.approx(0.9165432098765433, rel=1e-14)
    assert r.beta == pytest.approx(1.1281816796220088, rel=1e-14)
    assert r.C == pytest.approx(0.002820454199055022, rel=1e-14)
    assert r.converges


def test_rip_boundary():
    r = rip_constants(0.1, 0.5 - 1e-9, 0.01)
    assert r.alpha == pytest.approx(1 - (0.9 * 0 - 1) ** 2, abs=1e-6)
    assert not r.converges
    with pytest.raises(PreconditionError):
        rip_constants(0.1, 0.5, 0.01)
    with pytest.raises(PreconditionError):
        rip_constants(1.0, 0.1, 0.01)


# -- misc ---------------------------------------------------------------------

def test_noise_term(rng):
    A, E, B = random_complex(rng, 5, 4), random_complex(rng, 5, 3), random_complex(rng, 4, 3)
    full = A.conj().T @ E @ B.conj().T
    assert noise_term(A, E, B) == pytest.approx(np.abs(np.diag(full)).max())


def test_input_validation():
    with pytest.raises(InvalidArgumentError):
        BoundInputs(-0.1, 0.1, 2)
    with pytest.raises(InvalidArgumentError):
        BoundInputs(0.1, 0.1, 0)


def test_csv_and_report(tmp_path):
    inp = BoundInputs(**EXP1, v_inf=1e-5, v0_err=1e-4, n_iter=4)
    traces = [linear_bound(inp), second_born_bound(inp), full_nonlinear_bound(inp)]
    traces[1].to_csv(tmp_path / "b.csv")
    rows = list(csv.reader(open(tmp_path / "b.csv")))
    assert rows[0] == ["iter", "bound_l1", "rho_n", "floor"]
    assert len(rows) == 5 and float(rows[4][1]) == traces[1].bounds[-1]
    rep = json.loads(json.dumps(constants_report(inp, traces)))
    assert set(rep["bounds"]) == {"linear", "second_born", "full_nonlinear"}
    assert rep["bounds"]["second_born"]["guarantee"] is True
    assert json.loads(traces[0].to_json())["name"] == "linear"
    assert not math.isnan(traces[0].floor)
