"""Matvec drivers against the dense eigendecomposition oracle."""

import numpy as np
import pytest

from fermihart.errors import LengthMismatch, SolverDiverged, TooLargeForDense
from fermihart.lattice import background_potential, kinetic_multiplier, make_grid
from fermihart.matfun import (
    EffectiveHamiltonian,
    SolverConfig,
    _shifted_operators,
    build_contour,
    chebyshev_matvec,
    contour_matvec,
    dense_matrix_function,
    effective_interval,
    fermi_dirac_sqrt,
    poles_for_tolerance,
    scalar_expansion_error,
    solve_shifted,
)
from fermihart.solvers import batched_bicgstab


def make_C(sizes, lengths, seed=0, alpha=0.5, zeta=1.0):
    grid = make_grid(len(sizes), sizes, lengths)
    pot = background_potential(grid, zeta, alpha, seed)
    return EffectiveHamiltonian(c=1.0, v=pot.values, grid=grid, kinetic=kinetic_multiplier(grid))


def test_dense_matrix_function_basics():
    n = 24
    rng = np.random.default_rng(0)
    A = rng.standard_normal((n, n))
    H = 0.5 * (A + A.T)
    assert np.allclose(dense_matrix_function(np.zeros((3, 3)), 2.0, "fd"), 0.5 * np.eye(3))
    S = dense_matrix_function(H, 1.5, "sqrt_fd")
    F = dense_matrix_function(H, 1.5, "fd")
    np.testing.assert_allclose(S @ S, F, atol=1e-12)
    # entropy of X = I/2 (H = 0): trace is -n log 2
    E = dense_matrix_function(np.zeros((n, n)), 1.0, "entropy")
    assert np.trace(E) == pytest.approx(-n * np.log(2.0))
    with pytest.raises(TooLargeForDense):
        dense_matrix_function(np.zeros((8, 8)), 1.0, "fd", cutoff=4)


def test_contour_matvec_diagonal_case():
    grid = make_grid(1, [41], [10.0])
    rng = np.random.default_rng(1)
    v = rng.uniform(-2.0, 2.0, grid.n)
    H = EffectiveHamiltonian(c=0.0, v=v, grid=grid, kinetic=kinetic_multiplier(grid))
    beta = 3.0
    P = build_contour(*H.spectral_bounds(), beta, 32)
    z = rng.standard_normal(grid.n)
    y = contour_matvec(H, P, z, SolverConfig(tol=1e-10))
    np.testing.assert_allclose(y, fermi_dirac_sqrt(v, beta) * z, atol=1e-6)
    # linearity at z = 0
    y0 = contour_matvec(H, P, np.zeros(grid.n), SolverConfig())
    np.testing.assert_allclose(y0, 0.0, atol=1e-14)


def test_contour_matvec_reference_case():
    # 1D n=101, L=100, beta=10, H=C: quadrature-limited accuracy vs dense
    H = make_C([101], [100.0], seed=3)
    beta = 10.0
    lo, hi = effective_interval(H, beta)
    rng = np.random.default_rng(2)
    z = rng.standard_normal((4, H.grid.n))
    dense = dense_matrix_function(H.to_dense(), beta, "sqrt_fd")
    ref = z @ dense
    cfg = SolverConfig(tol=1e-12, max_iter=4000)
    err20 = _rel(contour_matvec(H, build_contour(lo, hi, beta, 20), z, cfg), ref)
    err36 = _rel(contour_matvec(H, build_contour(lo, hi, beta, 36), z, cfg), ref)
    assert err20 < 1e-2
    assert err36 < 1e-4
    assert err36 < err20
    # at beta = 1 twenty poles already reach 1e-4
    dense1 = dense_matrix_function(H.to_dense(), 1.0, "sqrt_fd")
    lo1, hi1 = effective_interval(H, 1.0)
    err1 = _rel(contour_matvec(H, build_contour(lo1, hi1, 1.0, 20), z, SolverConfig(tol=1e-10)), z @ dense1)
    assert err1 < 1e-4


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_contour_matvec_rejects_complex():
    H = make_C([9], [3.0])
    P = build_contour(-1.0, 5.0, 1.0, 8)
    with pytest.raises(ValueError):
        contour_matvec(H, P, np.zeros(9, dtype=complex), SolverConfig())


def test_solve_shifted_against_dense():
    H = make_C([27], [9.0], seed=5)
    rng = np.random.default_rng(4)
    Hd = H.to_dense()
    for s in (1.5 + 0.7j, -0.3 - 0.9j, 4.0 + 0.5j):
        b = rng.standard_normal(H.grid.n) + 1j * rng.standard_normal(H.grid.n)
        x = solve_shifted(H, s, b, SolverConfig(tol=1e-10, max_iter=500))
        x_dense = np.linalg.solve(s * np.eye(H.grid.n) - Hd, b)
        assert np.linalg.norm(x - x_dense) / np.linalg.norm(x_dense) < 1e-8


def test_solve_shifted_zero_rhs_and_mismatch():
    H = make_C([9], [3.0])
    x = solve_shifted(H, 2.0 + 1.0j, np.zeros(9))
    np.testing.assert_array_equal(x, 0.0)
    with pytest.raises(LengthMismatch):
        solve_shifted(H, 2.0 + 1.0j, np.zeros(5))


def test_constant_potential_preconditioner_is_exact():
    # v == vbar makes the preconditioned system the identity: 1 iteration
    grid = make_grid(1, [33], [7.0])
    H = EffectiveHamiltonian(c=1.0, v=np.full(grid.n, 0.7), grid=grid, kinetic=kinetic_multiplier(grid))
    shifts = np.array([2.0 + 1.3j])
    apply_A, apply_M = _shifted_operators(H, shifts, SolverConfig())
    rng = np.random.default_rng(6)
    b = rng.standard_normal(grid.n) + 0j
    X, info = batched_bicgstab(apply_A, apply_M, b[None, :], 1e-10, 50)
    assert info.iterations[0] == 1
    # M^{-1} A = I on random vectors
    y = apply_M(apply_A(b[None, :], np.array([0])), np.array([0]))
    np.testing.assert_allclose(y[0], b, atol=1e-10)


def test_solver_diverged_reports_residual():
    H = make_C([27], [9.0], seed=5)
    b = np.random.default_rng(0).standard_normal(H.grid.n)
    with pytest.raises(SolverDiverged) as err:
        solve_shifted(H, 0.05 + 0.001j, b.astype(complex), SolverConfig(tol=1e-12, max_iter=2))
    assert err.value.worst_residual is not None
    assert err.value.worst_residual > 0


def test_chebyshev_matvec():
    H = make_C([101], [100.0], seed=7)
    beta = 10.0
    rng = np.random.default_rng(8)
    z = rng.standard_normal(H.grid.n)
    bounds = H.spectral_bounds()
    y = chebyshev_matvec(H, beta, 2000, z, bounds)
    dense = dense_matrix_function(H.to_dense(), beta, "sqrt_fd")
    assert np.linalg.norm(y - dense @ z) / np.linalg.norm(dense @ z) < 1e-8
    # cross-method consistency to the max of the two methods' accuracies
    # (the contour is quadrature-limited here; its scalar error bounds it)
    lo, hi = effective_interval(H, beta)
    P = build_contour(lo, hi, beta, 40)
    yc = contour_matvec(H, P, z, SolverConfig(tol=1e-10, max_iter=3000))
    limit = max(1e-8, 3 * scalar_expansion_error(P))
    assert np.linalg.norm(y - yc) / np.linalg.norm(y) < limit
    # zero Hamiltonian: the exact function value is f^{1/2}(0) = 1/sqrt(2);
    # order 0 hits it exactly (the node sits at the symmetric midpoint) and
    # higher orders converge to it
    H0 = EffectiveHamiltonian(c=0.0, v=np.zeros(H.grid.n), grid=H.grid, kinetic=H.kinetic)
    y0 = chebyshev_matvec(H0, beta, 0, z, (-1.0, 1.0))
    np.testing.assert_allclose(y0, z / np.sqrt(2.0), atol=1e-12)
    y300 = chebyshev_matvec(H0, beta, 300, z, (-1.0, 1.0))
    np.testing.assert_allclose(y300, z / np.sqrt(2.0), atol=1e-12)


def test_oracle_equivalence_random_hamiltonians():
    # beta * (lam_hi - lam_lo) <= 100 regime: auto-selected pole count
    rng = np.random.default_rng(9)
    cfg = SolverConfig(tol=1e-5, max_iter=2000)
    for trial in range(5):
        sizes = [int(rng.choice([27, 45, 63]))]
        grid = make_grid(1, sizes, [float(rng.uniform(3, 12))])
        v = rng.uniform(-1.5, 1.5, grid.n)
        c = float(rng.uniform(0.3, 1.2))
        H = EffectiveHamiltonian(c=c, v=v, grid=grid, kinetic=kinetic_multiplier(grid))
        lo, hi = H.spectral_bounds()
        beta = float(min(rng.uniform(1.0, 12.0), 100.0 / (hi - lo)))
        n_poles = poles_for_tolerance(lo, hi, beta, cfg.tol)
        P = build_contour(lo, hi, beta, n_poles)
        z = rng.standard_normal(grid.n)
        y = contour_matvec(H, P, z, cfg)
        ref = dense_matrix_function(H.to_dense(), beta, "sqrt_fd") @ z
        assert np.linalg.norm(y - ref) / np.linalg.norm(ref) <= 10 * cfg.tol
