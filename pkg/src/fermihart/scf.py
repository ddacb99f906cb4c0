"""Deterministic dense SCF ground truth and the gold-standard density estimator.

The SCF fixed point X = f_beta(C + diag*[V rho(X)] - mu I) is found by damped
simple mixing on the effective potential, with every matrix function taken
through a full eigendecomposition.  This is the validation oracle: it exists
to be correct at small n, not to scale.
"""

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .errors import NotConverged, TooLargeForDense
from .lattice import FourierMultiplier, apply_multiplier
from .matfun import DENSE_CUTOFF, EffectiveHamiltonian, fermi_dirac


@dataclass
class SCFResult:
    """Converged state of the dense self-consistent iteration."""

    X_star: np.ndarray
    rho_star: np.ndarray
    v_star: np.ndarray
    free_energy: float
    hartree_energy: float
    electrons: float
    iterations: int
    residual: float
    mu: float
    beta: float


def _density_at(C_dense, w, mu, beta):
    """rho(f_beta(C + diag(w) - mu I)) plus the spectrum, via eigh."""
    H = C_dense + np.diag(w - mu)
    lam, U = np.linalg.eigh(H)
    occ = fermi_dirac(lam, beta)
    rho = np.einsum("ik,k,ik->i", U, occ, U)
    return rho, lam, U, occ


def dense_scf(
    C_ham: EffectiveHamiltonian,
    interaction: FourierMultiplier,
    beta,
    mu,
    theta=0.5,
    tol=1e-10,
    max_iter=10_000,
) -> SCFResult:
    """Solve the finite-temperature Hartree fixed point by damped mixing.

    Iterates w <- (1 - theta) w + theta * (V rho) on the effective potential
    from w = 0, stopping when the density change (inf-norm) falls below
    ``tol``.  The reported ``residual`` is the self-consistency defect
    ``||rho(f_beta(C + diag*[V rho_star] - mu I)) - rho_star||_inf``.

    Raises
    ------
    NotConverged
        Mixing did not reach ``tol``; the best iterate rides on the exception.
    TooLargeForDense
    """
    n = C_ham.grid.n
    if n > DENSE_CUTOFF:
        raise TooLargeForDense(f"n = {n} exceeds dense cutoff {DENSE_CUTOFF}")
    C_dense = C_ham.to_dense()
    w = np.zeros(n)
    rho_prev = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        rho, lam, U, occ = _density_at(C_dense, w, mu, beta)
        w = (1.0 - theta) * w + theta * apply_multiplier(interaction, rho)
        if rho_prev is not None and np.max(np.abs(rho - rho_prev)) <= tol:
            rho_prev = rho
            break
        rho_prev = rho
    else:
        result = _assemble(C_dense, C_ham, interaction, rho_prev, mu, beta, iterations)
        raise NotConverged(
            f"dense SCF did not reach tol={tol} in {max_iter} iterations "
            f"(residual {result.residual:.3e})",
            result=result,
        )
    return _assemble(C_dense, C_ham, interaction, rho_prev, mu, beta, iterations)


def _assemble(C_dense, C_ham, interaction, rho, mu, beta, iterations):
    w_star = apply_multiplier(interaction, rho)
    rho_fp, lam, U, occ = _density_at(C_dense, w_star, mu, beta)
    residual = float(np.max(np.abs(rho_fp - rho)))
    X = (U * occ) @ U.T
    hartree = 0.5 * float(rho @ w_star)
    single = float(np.sum(C_dense * X))
    entropy = float(np.sum(_occ_entropy(occ)))
    free_energy = single + hartree + entropy / beta
    return SCFResult(
        X_star=X,
        rho_star=rho,
        v_star=w_star,
        free_energy=free_energy,
        hartree_energy=hartree,
        electrons=float(occ.sum()),
        iterations=iterations,
        residual=residual,
        mu=float(mu),
        beta=float(beta),
    )


def _occ_entropy(occ):
    """f log f + (1-f) log(1-f) with the 0 log 0 convention."""
    f = np.clip(occ, 0.0, 1.0)
    out = np.zeros_like(f)
    pos = f > 0
    out[pos] += f[pos] * np.log(f[pos])
    neg = f < 1
    out[neg] += (1.0 - f[neg]) * np.log(1.0 - f[neg])
    return out


def sqrt_density_matrix(X_star):
    """X_star^{1/2} via eigendecomposition, eigenvalues clipped into [0, 1]."""
    lam, U = np.linalg.eigh(X_star)
    return (U * np.sqrt(np.clip(lam, 0.0, None))) @ U.T


def gold_standard_density(X_star, seed, n_samples, t):
    """Density estimate from the exact optimizer with the run's own Gaussians.

    Averages (X_star^{1/2} z)^{.2} over iterations 1..t and the per-iteration
    batch, reusing the (seed, iteration, sample) substream discipline of the
    mirror-descent estimator.
    """
    curve = gold_standard_error_curve(X_star, seed, n_samples, [t], reference=None)
    return curve[0]


def gold_standard_error_curve(X_star, seed, n_samples, checkpoints, reference=None):
    """Gold-standard densities (or relative errors) at the given iteration counts.

    With ``reference`` set, returns relative L2 errors against it; otherwise
    returns the density estimates themselves.
    """
    n = X_star.shape[0]
    sqrtX = sqrt_density_matrix(X_star)
    checkpoints = sorted(set(int(t) for t in checkpoints))
    marks = set(checkpoints)
    acc = np.zeros(n)
    out = []
    count = 0
    for t in range(1, checkpoints[-1] + 1):
        z = rngmod.gradient_batch(seed, t, n, n_samples)
        y = z @ sqrtX
        acc += np.sum(y * y, axis=0)
        count += n_samples
        if t in marks:
            est = acc / count
            if reference is None:
                out.append(est.copy())
            else:
                out.append(float(np.linalg.norm(est - reference) / np.linalg.norm(reference)))
    return out
