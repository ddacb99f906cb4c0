"""Chemical-potential bracket and grid search against dense oracles."""

import warnings

import numpy as np
import pytest

from fermihart.chempot import bisect_electron_count, dense_oracle, mu_bracket, mu_scan
from fermihart.errors import DegenerateFilling, SolverError
from fermihart.lattice import background_potential, kinetic_multiplier, make_grid, yukawa_multiplier
from fermihart.matfun import EffectiveHamiltonian, fermi_dirac
from fermihart.scf import dense_scf


def setup_problem(sizes=(17,), lengths=(6.0,), alpha=0.5, seed=3):
    grid = make_grid(len(sizes), list(sizes), list(lengths))
    pot = background_potential(grid, 1.0, alpha, seed)
    V = yukawa_multiplier(grid, alpha)
    C = EffectiveHamiltonian(c=1.0, v=pot.values, grid=grid, kinetic=kinetic_multiplier(grid))
    return grid, V, C


def test_bracket_forms():
    grid, V, C = setup_problem()
    lo, hi = mu_bracket(C, np.inf, c_h=1.3, nu=0.25)
    lam = np.linalg.eigvalsh(C.to_dense())
    assert lo == pytest.approx(lam[0] - 1.3)
    assert hi == pytest.approx(lam[-1] + 1.3)
    # nu = 1/2 gives symmetric log-corrections log(2)/beta
    lo2, hi2 = mu_bracket(C, 2.0, c_h=0.0, nu=0.5)
    assert lam[0] - lo2 == pytest.approx(np.log(2.0) / 2.0)
    assert hi2 - lam[-1] == pytest.approx(np.log(2.0) / 2.0)
    with pytest.raises(DegenerateFilling):
        mu_bracket(C, 2.0, 0.0, 1.0)


def test_noninteracting_root_inside_bracket():
    # V = 0: the mu solving Tr f_beta(C - mu I) = N lies inside the bracket
    grid, _, C = setup_problem(sizes=(33,))
    beta = 4.0
    lam = np.linalg.eigvalsh(C.to_dense())
    for nu in (0.2, 0.5, 0.8):
        N = nu * grid.n
        lo, hi = mu_bracket(C, beta, c_h=0.0, nu=nu)

        def count(mu):
            return np.sum(fermi_dirac(lam - mu, beta))

        a, b = lo - 5.0, hi + 5.0
        for _ in range(200):
            mid = 0.5 * (a + b)
            if count(mid) < N:
                a = mid
            else:
                b = mid
        mu_star = 0.5 * (a + b)
        assert lo <= mu_star <= hi


def test_mu_scan_dense_oracle():
    grid, V, C = setup_problem(sizes=(17,))
    beta = 4.0
    oracle = dense_oracle(C, V, beta)
    N = 0.5 * grid.n
    from fermihart.lattice import interaction_row_norm

    c_h = interaction_row_norm(grid, 0.5)
    bracket = mu_bracket(C, beta, c_h, N / grid.n)
    scan = mu_scan(oracle, N, bracket, K=48)
    assert len(scan.evaluations) == 49
    assert abs(scan.best_electrons - N) <= 0.5
    # dual values are unimodal for the noiseless dense oracle
    vals = np.array([e.dual_value for e in scan.evaluations])
    k = int(np.argmax(vals))
    assert np.all(np.diff(vals[: k + 1]) >= -1e-9)
    assert np.all(np.diff(vals[k:]) <= 1e-9)


def test_mu_scan_k1_and_failures():
    grid, V, C = setup_problem()
    oracle = dense_oracle(C, V, 3.0)
    scan = mu_scan(oracle, 8.0, (-1.0, 1.0), K=1)
    assert len(scan.evaluations) == 2

    calls = {"i": 0}

    def flaky(mu):
        calls["i"] += 1
        if calls["i"] == 2:
            raise SolverError("boom")
        return oracle(mu)

    flaky.n_basis = grid.n
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        scan2 = mu_scan(flaky, 8.0, (-1.0, 1.0), K=3)
    assert any("failed" in str(w.message) for w in caught)
    assert sum(1 for e in scan2.evaluations if not e.ok) == 1
    assert scan2.evaluations[scan2.best].ok


def test_electron_count_monotone_and_bisection():
    grid, V, C = setup_problem(sizes=(17,))
    beta = 4.0
    oracle = dense_oracle(C, V, beta)
    mus = np.linspace(-2.0, 2.0, 9)
    counts = [oracle(m)[1] for m in mus]
    assert np.all(np.diff(counts) >= -1e-9)
    from fermihart.lattice import interaction_row_norm

    c_h = interaction_row_norm(grid, 0.5)
    bracket = mu_bracket(C, beta, c_h, 0.5)
    mu_star = bisect_electron_count(oracle, 0.5 * grid.n, bracket, tol_electrons=1e-8)
    assert abs(oracle(mu_star)[1] - 0.5 * grid.n) <= 1e-6
