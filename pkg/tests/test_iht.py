import numpy as np
import pytest

from scatteriht.bounds import BoundInputs, linear_bound
from scatteriht.coherence import mutual_coherence
from scatteriht.errors import DivergenceError, InvalidArgumentError
from scatteriht.forward import add_noise, assemble_operators, forward_born, forward_full
from scatteriht.geometry import build_grid, sphere_directions
from scatteriht.iht import (
    IHTConfig, column_normalize, diag_extract, hard_threshold, iht, linear_iht,
    linearized_operator, nonlinear_iht, normalize_operators, phi_norm_sq, read_trace_csv,
    reconstruct, tmatrix_iht, y_err,
)

from conftest import random_complex, random_physical_instance


def normalized_instance(rng, s=2, vg_target=0.3, **kw):
    grid, A, B, G, v = random_physical_instance(rng, s=s, vg_target=vg_target, **kw)
    A_hat, B_hat, G_hat, scales = normalize_operators(A, B, G)
    return A, B, G, v, A_hat, B_hat, G_hat, scales


# -- diag_extract -------------------------------------------------------------

def test_diag_extract_basic():
    assert np.array_equal(diag_extract(np.eye(4)), np.ones(4))
    X = np.ones((3, 3)) - np.eye(3)
    assert not np.any(diag_extract(X))
    with pytest.raises(InvalidArgumentError):
        diag_extract(np.ones((2, 3)))


def test_hadamard_identity(rng):
    A, B, x = random_complex(rng, 3, 3), random_complex(rng, 3, 3), random_complex(rng, 3)
    lhs = diag_extract(A @ np.diag(x) @ B)
    assert np.allclose(lhs, (A * B.T) @ x, rtol=0, atol=1e-13)


# -- hard_threshold -----------------------------------------------------------

def test_hard_threshold_examples():
    v = np.array([3, -1, 2j, 0])
    assert np.array_equal(hard_threshold(v, 2), np.array([3, 0, 2j, 0]))
    assert np.array_equal(hard_threshold(np.array([1.0, -1.0, 1.0]), 2), np.array([1.0, -1.0, 0.0]))
    sparse = np.array([0, 5, 0, -2.0])
    assert np.array_equal(hard_threshold(sparse, 3), sparse)
    assert np.array_equal(hard_threshold(sparse, 10), sparse)
    with pytest.raises(InvalidArgumentError):
        hard_threshold(sparse, -1)


def test_hard_threshold_idempotent(rng):
    for _ in range(50):
        v = random_complex(rng, 12)
        v[rng.integers(0, 12, 3)] = v[0]  # force magnitude ties
        s = int(rng.integers(0, 13))
        once = hard_threshold(v, s)
        assert np.array_equal(hard_threshold(once, s), once)
        assert np.count_nonzero(once) <= s


# -- normalization ------------------------------------------------------------

def test_column_normalize(rng):
    A, B = random_complex(rng, 5, 4), random_complex(rng, 4, 6)
    A_hat, B_hat, scales = column_normalize(A, B)
    assert np.allclose(np.linalg.norm(A_hat, axis=0), 1)
    assert np.allclose(np.linalg.norm(B_hat, axis=1), 1)
    assert np.allclose(np.diag(A_hat.conj().T @ A_hat).real.max(), 1.0)
    again = column_normalize(A_hat, B_hat)
    assert np.allclose(again[2], 1.0)
    v = random_complex(rng, 4)
    # Y is unchanged when v is rescaled into normalized units
    assert np.allclose(A @ np.diag(v) @ B, A_hat @ np.diag(v * scales) @ B_hat)


def test_plane_wave_scales_uniform():
    grid = build_grid(1.0, 3)
    A, B, _ = assemble_operators(grid, sphere_directions(7), sphere_directions(5))
    _, _, scales = column_normalize(A, B)
    assert np.allclose(scales, np.sqrt(7) * np.sqrt(5), rtol=1e-14)


def test_column_normalize_zero_column():
    A = np.ones((3, 3))
    A[:, 1] = 0
    with pytest.raises(InvalidArgumentError, match="index 1"):
        column_normalize(A, np.ones((3, 2)))
    B = np.ones((3, 2))
    B[2] = 0
    with pytest.raises(InvalidArgumentError, match="index 2"):
        column_normalize(np.ones((3, 3)), B)


def test_normalized_forward_unchanged(rng):
    A, B, G, v, A_hat, B_hat, G_hat, scales = normalized_instance(rng, s=3)
    assert np.allclose(forward_full(A_hat, v * scales, G_hat, B_hat), forward_full(A, v, G, B),
                       rtol=0, atol=1e-12)


# -- linear IHT ---------------------------------------------------------------

def vector_form_update(A, B, Y, v):
    N = A.shape[1]
    Phi = np.einsum("mj,jn->mnj", A, B).reshape(-1, N)
    y = Y.reshape(-1)
    return v + Phi.conj().T @ (y - Phi @ v)


def test_hadamard_form_matches_vector_form(rng):
    for _ in range(50):
        N = int(rng.integers(2, 9))
        A, B = random_complex(rng, int(rng.integers(1, 7)), N), random_complex(rng, N, int(rng.integers(1, 7)))
        A, B, _ = column_normalize(A, B)
        Y = random_complex(rng, A.shape[0], B.shape[1])
        v0 = random_complex(rng, N)
        tr = linear_iht(A, B, Y, IHTConfig(N, max_iter=1, init=v0, record_proxy=True))
        assert np.allclose(tr.records[0].proxy, vector_form_update(A, B, Y, v0), rtol=0, atol=1e-12)


def test_orthonormal_one_step_recovery(rng):
    N, s = 6, 2
    A = np.linalg.qr(random_complex(rng, 9, N))[0]
    B = np.linalg.qr(random_complex(rng, 8, N))[0].conj().T
    v = np.zeros(N, complex)
    v[[1, 4]] = [1.0 + 1j, -0.5]
    tr = linear_iht(A, B, A @ np.diag(v) @ B, IHTConfig(s, max_iter=1))
    assert np.allclose(tr.final, v, rtol=0, atol=1e-13)
    assert tr.y_errs[0] < 1e-13


def test_zero_data_stays_zero(rng):
    _, _, _, _, A_hat, B_hat, G_hat, _ = normalized_instance(rng)
    Y = np.zeros((A_hat.shape[0], B_hat.shape[1]), complex)
    for M in (1, 2, np.inf):
        tr = iht(A_hat, B_hat, G_hat, Y, IHTConfig(2, M, max_iter=5))
        assert all(not np.any(tr.vector(i)) for i in range(tr.iterations))
        assert np.all(tr.y_errs == 0)


def test_linear_iht_theory_decay():
    grid = build_grid(2.0, 4)
    dirs = sphere_directions(200)
    A, B, _ = assemble_operators(grid, dirs, dirs)
    A_hat, B_hat, scales = column_normalize(A, B)
    mu_a = mutual_coherence(A_hat).mu_exact
    mu_b = mutual_coherence(B_hat.T).mu_exact
    rng = np.random.default_rng(7)
    for s in (1, 2):
        inp = BoundInputs(mu_a, mu_b, s, v0_err=0.0, n_iter=20)
        assert linear_bound(inp).guarantee
        for _ in range(5):
            v = np.zeros(grid.n_voxels, complex)
            v[rng.choice(grid.n_voxels, s, replace=False)] = rng.uniform(0.5, 1.5, s)
            Y = A @ np.diag(v) @ B
            tr = linear_iht(A_hat, B_hat, Y, IHTConfig(s, max_iter=20), truth=v, scales=scales)
            bound = linear_bound(BoundInputs(mu_a, mu_b, s, v0_err=np.abs(v).sum(), n_iter=20))
            assert np.all(tr.l1_errors <= bound.bounds * (1 + 1e-9) + 1e-12)


def test_support_bound_and_determinism(rng):
    A, B, G, v, *_ = normalized_instance(rng, s=3)
    Y = forward_full(A, v, G, B)
    cfg = IHTConfig(2, np.inf, max_iter=15)
    t1 = reconstruct(A, B, G, Y, cfg, truth=v)
    t2 = reconstruct(A, B, G, Y, cfg, truth=v)
    assert all(len(r.support) <= 2 for r in t1.records)
    for r1, r2 in zip(t1.records, t2.records):
        assert np.array_equal(r1.support, r2.support)
        assert np.array_equal(r1.values, r2.values)
        assert r1.y_err == r2.y_err


def test_error_bounded_by_proxy_on_union(rng):
    for _ in range(10):
        A, B, G, v, A_hat, B_hat, G_hat, scales = normalized_instance(rng, s=2, n_meas=20, n_src=20)
        Y = forward_full(A, v, G, B)
        s = 2
        v_hat = v * scales
        for M in (1, 2, np.inf):
            tr = iht(A_hat, B_hat, G_hat, Y, IHTConfig(s, M, max_iter=8, record_proxy=True))
            for rec in tr.records:
                vn = np.zeros_like(v_hat)
                vn[rec.support] = rec.values  # no scales passed: already normalized
                U = np.union1d(rec.support, np.flatnonzero(v_hat))
                lhs = np.abs(vn - v_hat).sum()
                rhs = (3 * s + 1) * np.abs(rec.proxy[U] - v_hat[U]).max()
                assert lhs <= rhs * (1 + 1e-12)


# -- nonlinear IHT ------------------------------------------------------------

def test_order_one_equals_linear(rng):
    A, B, G, v, A_hat, B_hat, G_hat, scales = normalized_instance(rng, s=3)
    Y = forward_full(A, v, G, B)
    lin = linear_iht(A_hat, B_hat, Y, IHTConfig(3, max_iter=10))
    nl = iht(A_hat, B_hat, G_hat, Y, IHTConfig(3, 1, max_iter=10))
    for a, b in zip(lin.records, nl.records):
        assert np.array_equal(a.support, b.support)
        assert np.array_equal(a.values, b.values)


def test_single_support_tmatrix_equals_second_born(rng):
    A, B, G, v, A_hat, B_hat, G_hat, _ = normalized_instance(rng, s=1)
    Y = forward_full(A, v, G, B)
    t = tmatrix_iht(A_hat, B_hat, G_hat, Y, IHTConfig(1, np.inf, max_iter=10))
    b2 = nonlinear_iht(A_hat, B_hat, G_hat, Y, IHTConfig(1, 2, max_iter=10))
    for a, b in zip(t.records, b2.records):
        assert np.array_equal(a.support, b.support)
        assert np.allclose(a.values, b.values, rtol=1e-13, atol=0)


def test_first_iterate_is_linear(rng):
    A, B, G, v, A_hat, B_hat, G_hat, _ = normalized_instance(rng, s=3)
    Y = forward_full(A, v, G, B)
    lin = linear_iht(A_hat, B_hat, Y, IHTConfig(3, max_iter=1))
    full = tmatrix_iht(A_hat, B_hat, G_hat, Y, IHTConfig(3, np.inf, max_iter=1))
    assert np.array_equal(lin.final, full.final)


def test_true_potential_residual_is_born_remainder(rng):
    A, B, G, v, *_ = normalized_instance(rng, s=2, vg_target=0.4)
    Y = forward_full(A, v, G, B)
    S = np.flatnonzero(v)
    res = []
    for M in (1, 2, 3, 5, 10, np.inf):
        At = linearized_operator(A, v, G, M)
        pred = At[:, S] @ (v[S, None] * B[S])
        if M != np.inf:
            assert np.allclose(pred, forward_born(A, v, G, B, M), rtol=0, atol=1e-13)
        res.append(np.linalg.norm(Y - pred) / np.linalg.norm(Y))
    assert all(b < a for a, b in zip(res, res[1:]))
    assert res[-1] < 1e-13


def test_nonlinear_requires_gamma_and_finite_order(rng):
    _, _, _, _, A_hat, B_hat, G_hat, _ = normalized_instance(rng)
    Y = np.ones((A_hat.shape[0], B_hat.shape[1]), complex)
    with pytest.raises(InvalidArgumentError):
        iht(A_hat, B_hat, None, Y, IHTConfig(2, 2))
    with pytest.raises(InvalidArgumentError):
        nonlinear_iht(A_hat, B_hat, G_hat, Y, IHTConfig(2, np.inf))
    with pytest.raises(InvalidArgumentError):
        linear_iht(A_hat, B_hat, Y[:, :-1], IHTConfig(2))


def test_divergence_reported_with_iteration():
    # a strongly coupled pair makes the unit-step Born-series iteration blow up
    rng = np.random.default_rng(3)
    grid = build_grid(0.4, 4)
    dirs = sphere_directions(6)
    A, B, G = assemble_operators(grid, dirs, dirs, four_pi=False)
    A_hat, B_hat, G_hat, _ = normalize_operators(A, B, G)
    Y = random_complex(rng, 6, 6) * 1e3
    with pytest.raises(DivergenceError) as info:
        iht(A_hat, B_hat, G_hat, Y, IHTConfig(40, 9, max_iter=200))
    assert info.value.iteration >= 1


def test_config_validation():
    for bad in (dict(s_threshold=0), dict(s_threshold=2, max_iter=0), dict(s_threshold=2, born_order=0),
                dict(s_threshold=2, born_order=1.5), dict(s_threshold=2, step=0.0),
                dict(s_threshold=2, step=np.nan)):
        with pytest.raises(InvalidArgumentError):
            IHTConfig(**bad)


def test_relaxed_step(rng):
    A, B, G, v, A_hat, B_hat, G_hat, scales = normalized_instance(rng, s=2, n_meas=8, n_src=8)
    lam = phi_norm_sq(A_hat, B_hat)
    Phi = np.einsum("mj,jn->mnj", A_hat, B_hat).reshape(-1, A_hat.shape[1])
    assert lam == pytest.approx(np.linalg.norm(Phi, 2) ** 2, rel=1e-6)
    Y = forward_full(A, v, G, B)
    tr = iht(A_hat, B_hat, G_hat, Y, IHTConfig(2, np.inf, max_iter=1, step=0.5, record_proxy=True))
    unit = iht(A_hat, B_hat, G_hat, Y, IHTConfig(2, np.inf, max_iter=1, record_proxy=True))
    assert np.allclose(tr.records[0].proxy, 0.5 * unit.records[0].proxy)


# -- y_err and serialization --------------------------------------------------

def test_y_err_examples(rng):
    A, B, G, v, *_ = normalized_instance(rng, s=3)
    Y = forward_full(A, v, G, B)
    assert y_err(Y, v, A, B, G) < 1e-12
    assert y_err(Y, np.zeros_like(v), A, B, G) == 1.0
    assert y_err(np.zeros_like(Y), v, A, B, G) == 0.0


def test_y_err_noise_floor(rng):
    grid = build_grid(1.5, 4)
    dirs = sphere_directions(30)
    A, B, G = assemble_operators(grid, dirs, dirs)
    v = np.zeros(grid.n_voxels, complex)
    v[[5, 20, 33]] = 0.2
    Y = forward_full(A, v, G, B)
    errs = [y_err(add_noise(Y, 0.01, seed).data, v, A, B, G) for seed in range(20)]
    assert np.mean(errs) == pytest.approx(0.01, abs=5e-4)


def test_trace_csv_round_trip(tmp_path, rng):
    A, B, G, v, *_ = normalized_instance(rng, s=2)
    tr = reconstruct(A, B, G, forward_full(A, v, G, B), IHTConfig(3, 2, max_iter=4), truth=v)
    tr.to_csv(tmp_path / "t.csv")
    header = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert header == "iter,y_err,l1_error,support_size,support_indices,values"
    back = read_trace_csv(tmp_path / "t.csv", tr.n_voxels)
    assert back.iterations == tr.iterations
    assert np.array_equal(back.final, tr.final)
    assert np.array_equal(back.y_errs, tr.y_errs)
    assert np.array_equal(back.l1_errors, tr.l1_errors)
