"""Chemical-potential determination for a target electron number.

The dual objective g(mu) = N mu + min_X {F_beta(X) - mu Tr[X]} is concave;
its maximizer satisfies Tr[X(mu)] = N.  An a-priori bracket plus a grid
search over K+1 equispaced points (each evaluated through a solver oracle)
locates it without assuming noiseless evaluations.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFilling, SolverError
from .matfun import DENSE_CUTOFF, EffectiveHamiltonian


@dataclass
class MuEvaluation:
    mu: float
    dual_value: float
    electrons: float
    ok: bool
    note: str = ""


@dataclass
class MuScan:
    """Grid-search record over the chemical-potential bracket."""

    n_target: float
    nu: float
    bracket: tuple
    K: int
    evaluations: list
    best: int

    @property
    def best_mu(self):
        return self.evaluations[self.best].mu

    @property
    def best_electrons(self):
        return self.evaluations[self.best].electrons


def _c_extremes(C_ham: EffectiveHamiltonian):
    """(lam_min, lam_max) of C: exact eigenvalues when dense is affordable."""
    if C_ham.grid.n <= DENSE_CUTOFF:
        lam = np.linalg.eigvalsh(C_ham.to_dense())
        return float(lam[0]), float(lam[-1])
    lo, hi = C_ham.spectral_bounds(slack=0.0)
    return lo, hi


def mu_bracket(C_ham: EffectiveHamiltonian, beta, c_h, nu):
    """A-priori interval containing the dual maximizer for filling nu = N/n.

    [lam_min(C) - c_h - log(1/nu)/beta, lam_max(C) + c_h + log(1/(1-nu))/beta];
    the log corrections vanish at beta = +inf.
    """
    if not 0.0 < nu < 1.0:
        raise DegenerateFilling(f"filling nu = {nu} must be strictly inside (0, 1)")
    lam_min, lam_max = _c_extremes(C_ham)
    if np.isinf(beta):
        lo_corr = hi_corr = 0.0
    else:
        lo_corr = np.log(1.0 / nu) / beta
        hi_corr = np.log(1.0 / (1.0 - nu)) / beta
    return (lam_min - c_h - lo_corr, lam_max + c_h + hi_corr)


def mu_scan(oracle, n_target, bracket, K) -> MuScan:
    """Maximize the dual objective over K+1 equispaced points in ``bracket``.

    ``oracle(mu)`` must return (optimal_value, electrons): the (estimated)
    minimum of F_beta(X) - mu Tr[X] and the electron count of the minimizer.
    The dual value is N mu + optimal_value.  Points whose oracle raises a
    SolverError are warned about and excluded from the argmax.
    """
    lo, hi = bracket
    mus = np.linspace(lo, hi, K + 1)
    evaluations = []
    for mu in mus:
        try:
            value, electrons = oracle(float(mu))
            evaluations.append(
                MuEvaluation(
                    mu=float(mu),
                    dual_value=float(n_target * mu + value),
                    electrons=float(electrons),
                    ok=True,
                )
            )
        except SolverError as exc:
            warnings.warn(f"mu scan point mu={mu:.6g} failed: {exc}")
            evaluations.append(
                MuEvaluation(mu=float(mu), dual_value=np.nan, electrons=np.nan, ok=False, note=str(exc))
            )
    ok = [i for i, e in enumerate(evaluations) if e.ok]
    if not ok:
        raise SolverError("every mu scan point failed")
    best = max(ok, key=lambda i: evaluations[i].dual_value)
    n_basis = getattr(oracle, "n_basis", None)
    nu = n_target / n_basis if n_basis else float("nan")
    return MuScan(
        n_target=float(n_target),
        nu=float(nu),
        bracket=(float(lo), float(hi)),
        K=int(K),
        evaluations=evaluations,
        best=int(best),
    )


def dense_oracle(C_ham, interaction, beta, theta=0.5, tol=1e-10, max_iter=10_000):
    """Oracle over the dense SCF: mu -> (F_beta - mu N at the solution, N)."""
    from .scf import dense_scf

    def oracle(mu):
        res = dense_scf(C_ham, interaction, beta, mu, theta=theta, tol=tol, max_iter=max_iter)
        return res.free_energy - mu * res.electrons, res.electrons

    oracle.n_basis = C_ham.grid.n
    return oracle


def bisect_electron_count(oracle, n_target, bracket, tol_electrons=1e-6, max_iter=200):
    """Bisection on the (monotone) electron count; dense-oracle convenience."""
    lo, hi = bracket
    _, e_lo = oracle(lo)
    _, e_hi = oracle(hi)
    if not e_lo <= n_target <= e_hi:
        raise ValueError(f"target {n_target} outside electron range [{e_lo}, {e_hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        _, e_mid = oracle(mid)
        if abs(e_mid - n_target) <= tol_electrons:
            return mid
        if e_mid < n_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
