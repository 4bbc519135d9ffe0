import numpy as np
import pytest

from psrt.operators import build_phi, forward_encode, normal_reduced
from psrt.solvers import (
    NumericalError,
    ReconConfig,
    solve_cg,
    soft_threshold_complex,
    recon_lsqr,
    recon_tikhonov,
    recon_xfl1_pocs,
    reconstruct,
)

from oracles import dense_encoding, dense_regulariser, random_instance


def cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def noisy_problem(rng, nx=8, ny=8, T=32, L=3, J=2, density=0.3, noise=0.05):
    U, V, S, M = random_instance(rng, nx, ny, T, L, J, density=density)
    y = forward_encode(U, V, S, M)
    y = (y + noise * cplx(rng, *y.shape)) * M[None, None]
    return U, V, S, M, y


def test_cg_identity_one_iteration(rng):
    b = cplx(rng, 6, 2)
    x, rep = solve_cg(lambda v: v, b, tol=1e-12)
    np.testing.assert_allclose(x, b)
    assert rep.iterations == 1


def test_cg_finite_termination():
    d = np.array([1.0, 2.0, 5.0, 10.0])
    b = np.array([1.0, -1.0, 2.0, 0.5], dtype=complex)
    x, rep = solve_cg(lambda v: d * v, b, tol=1e-12, max_iters=10)
    np.testing.assert_allclose(x, b / d, rtol=1e-10)
    assert rep.iterations <= 4


def test_cg_zero_rhs(rng):
    x, rep = solve_cg(lambda v: 2 * v, np.zeros((3, 2), dtype=complex))
    assert not np.any(x) and rep.iterations == 0


def test_cg_nonfinite_names_iteration():
    calls = []

    def bad(v):
        calls.append(1)
        return v * (np.nan if len(calls) == 2 else np.array([1.0, 2.0, 3.0]))

    with pytest.raises(NumericalError, match="iteration 2"):
        solve_cg(bad, np.array([1.0, 2.0, 3.0], dtype=complex), tol=1e-14)


def test_cg_reduced_system_matches_dense_solve(rng):
    U, V, S, M = random_instance(rng, 8, 8, 24, 3, 2, density=0.4)
    phi = build_phi(V, M)
    A = dense_encoding(V, S, M)
    H = A.conj().T @ A
    b = cplx(rng, 64, 3)
    x, rep = solve_cg(lambda u: normal_reduced(u, phi, S), b, tol=1e-12, max_iters=500)
    ref = np.linalg.solve(H, b.ravel()).reshape(64, 3)
    assert rel(x, ref) < 1e-6
    assert all(b2 <= b1 * (1 + 1e-9) for b1, b2 in zip(rep.residual_trace, rep.residual_trace[1:]))


def test_lsqr_exact_full_sampling(rng):
    U, V, S, M = random_instance(rng, 8, 8, 16, 3, 2)
    M[:] = True
    y = forward_encode(U, V, S, M)
    Uh, _ = recon_lsqr(y, V, S, M, ReconConfig("lsqr", L=3, tol=1e-12, max_iters=20))
    assert rel(Uh @ V, U @ V) <= 1e-6


def test_lsqr_zero_data(rng):
    U, V, S, M = random_instance(rng, 8, 8, 16, 3, 2)
    Uh, rep = recon_lsqr(np.zeros((2, 8, 8, 16), dtype=complex), V, S, M, ReconConfig("lsqr", L=3))
    assert not np.any(Uh)


def test_lsqr_matches_pseudo_inverse(rng):
    U, V, S, M, y = noisy_problem(rng)
    A = dense_encoding(V, S, M)
    ref = (np.linalg.pinv(A) @ y.ravel()).reshape(64, 3)
    Uh, rep = recon_lsqr(y, V, S, M, ReconConfig("lsqr", L=3, tol=1e-12, max_iters=500))
    assert np.linalg.cond(A) < 1e3
    assert rel(Uh, ref) < 1e-4


def test_tikhonov_lambda_zero_is_lsqr(rng):
    U, V, S, M, y = noisy_problem(rng)
    cfg = ReconConfig("tikhonov", lam=0.0, L=3, tol=1e-8, max_iters=200)
    a, _ = recon_tikhonov(y, V, S, M, cfg)
    b, _ = recon_lsqr(y, V, S, M, cfg)
    assert rel(a, b) < 1e-8


def test_tikhonov_large_lambda_flattens_time(rng):
    U, V, S, M, y = noisy_problem(rng)
    # basis whose span holds the constant profile
    raw = np.vstack([np.ones(V.shape[1]), V[1:]])
    q, _ = np.linalg.qr(raw.conj().T)
    V = q.conj().T
    y = (forward_encode(U, V, S, M) + 0.05 * cplx(rng, *y.shape)) * M[None, None]
    base, _ = recon_tikhonov(y, V, S, M, ReconConfig("tikhonov", lam=0.0, L=3, tol=1e-10, max_iters=300))
    big, _ = recon_tikhonov(y, V, S, M, ReconConfig("tikhonov", lam=1e8, L=3, tol=1e-12, max_iters=300))
    energy = lambda u: np.linalg.norm(np.diff(u @ V, axis=1)) / np.linalg.norm(u @ V)
    assert energy(big) < 1e-4 * energy(base)


def test_tikhonov_matches_dense_stacked_solve(rng):
    U, V, S, M, y = noisy_problem(rng)
    A = dense_encoding(V, S, M)
    R = dense_regulariser(V, 64)
    lam = 0.03
    H = A.conj().T @ A + lam * R.conj().T @ R
    ref = np.linalg.solve(H, A.conj().T @ y.ravel()).reshape(64, 3)
    Uh, _ = recon_tikhonov(y, V, S, M, ReconConfig("tikhonov", lam=lam, L=3, tol=1e-12, max_iters=500))
    assert rel(Uh, ref) < 1e-6


def test_tikhonov_tradeoff_monotone_in_lambda(rng):
    U, V, S, M, y = noisy_problem(rng, density=0.2, noise=0.2)
    A = dense_encoding(V, S, M)
    dc, reg = [], []
    for lam in (0.0, 0.01, 0.1, 1.0):
        Uh, _ = recon_tikhonov(y, V, S, M, ReconConfig("tikhonov", lam=lam, L=3, tol=1e-12, max_iters=500))
        dc.append(np.linalg.norm(A @ Uh.ravel() - y.ravel()))
        reg.append(np.linalg.norm(np.diff(Uh @ V, axis=1)))
    assert all(b >= a - 1e-9 * a for a, b in zip(dc, dc[1:]))
    assert all(b <= a + 1e-9 * a for a, b in zip(reg, reg[1:]))


def test_cg_residual_monotone_on_recon(rng):
    U, V, S, M, y = noisy_problem(rng, density=0.2)
    for lam in (0.0, 0.05):
        _, rep = recon_tikhonov(y, V, S, M, ReconConfig("tikhonov", lam=lam, L=3, tol=1e-10, max_iters=200))
        r = rep.residual_trace
        assert all(b <= a * (1 + 1e-9) for a, b in zip(r, r[1:]))


def test_xfl1_lambda_zero_approaches_lsqr(rng):
    U, V, S, M, y = noisy_problem(rng, T=16, density=0.6)
    cfg = ReconConfig("xfl1", lam=0.0, L=3, max_iters=200, tol=1e-14)
    Up, rep = recon_xfl1_pocs(y, V, S, M, cfg)
    Ul, rep_l = recon_lsqr(y, V, S, M, ReconConfig("lsqr", L=3, tol=1e-12, max_iters=200))
    A = dense_encoding(V, S, M)
    f = lambda u: 0.5 * np.linalg.norm(A @ u.ravel() - y.ravel()) ** 2
    assert abs(f(Up) - f(Ul)) / f(Ul) <= 1e-4
    assert rep.objective_trace[-1] == pytest.approx(f(Up), rel=1e-9)


def test_xfl1_zero_data(rng):
    U, V, S, M = random_instance(rng, 8, 8, 16, 3, 2)
    Uh, _ = recon_xfl1_pocs(np.zeros((2, 8, 8, 16), dtype=complex), V, S, M, ReconConfig("xfl1", lam=0.1, L=3))
    assert not np.any(Uh)


def test_soft_threshold_cases(rng):
    z = cplx(rng, 10)
    np.testing.assert_array_equal(soft_threshold_complex(z, 0.0), z)
    assert not np.any(soft_threshold_complex(z, np.abs(z).max()))
    out = soft_threshold_complex(np.array([3 + 4j]), 1.0)
    np.testing.assert_allclose(out, (3 + 4j) * 0.8)
    w = 0.5 * np.exp(1j * 1.1)
    out = soft_threshold_complex(np.array([w, 0.0]), 0.2)
    assert abs(out[0]) == pytest.approx(0.3) and np.angle(out[0]) == pytest.approx(1.1)
    assert out[1] == 0
    with pytest.raises(ValueError):
        soft_threshold_complex(z, -1.0)


def test_outputs_stay_in_subspace(rng):
    U, V, S, M, y = noisy_problem(rng)
    for algo, lam in (("lsqr", 0.0), ("tikhonov", 0.05), ("xfl1", 0.01)):
        Uh, _ = reconstruct(y, V, S, M, ReconConfig(algo, lam=lam, L=3, max_iters=20))
        X = Uh @ V
        assert np.linalg.norm(X @ V.conj().T @ V - X) <= 1e-12 * np.linalg.norm(X)


def test_config_validation():
    with pytest.raises(ValueError):
        ReconConfig("nope")
    with pytest.raises(ValueError):
        ReconConfig(lam=-1)
    with pytest.raises(ValueError):
        ReconConfig(max_iters=0)
    with pytest.raises(ValueError):
        ReconConfig(tol=0)


def test_report_csv(rng, tmp_path):
    U, V, S, M, y = noisy_problem(rng)
    _, rep = recon_tikhonov(y, V, S, M, ReconConfig("tikhonov", lam=0.01, L=3, max_iters=5, tol=1e-14))
    rep.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "iter,residual,objective,seconds"
    assert len(lines) == rep.iterations + 2
