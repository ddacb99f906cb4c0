"""Pole-count error sweep of the contour matvec against the dense oracle."""

import numpy as np

from . import rng as rngmod
from .errors import TooLargeForDense
from .matfun import (
    DENSE_CUTOFF,
    EffectiveHamiltonian,
    SolverConfig,
    build_contour,
    contour_matvec,
    dense_matrix_function,
)

# The sweep isolates quadrature error, so the shifted solves run much tighter
# than the production default.
_SWEEP_SOLVER = SolverConfig(tol=1e-12, max_iter=4000)


def normalize_hamiltonian(C_ham: EffectiveHamiltonian, target):
    """Affinely rescale H so its spectrum fills ``target`` = (lo, hi).

    a H + b I stays representable as (a c) K + diag(a v + b).  Requires a
    dense-diagonalizable grid to pin the true spectral extremes.
    """
    if C_ham.grid.n > DENSE_CUTOFF:
        raise TooLargeForDense("spectrum normalization needs a dense-diagonalizable grid")
    lam = np.linalg.eigvalsh(C_ham.to_dense())
    lo, hi = float(lam[0]), float(lam[-1])
    a = (target[1] - target[0]) / (hi - lo)
    b = target[0] - a * lo
    return EffectiveHamiltonian(
        c=a * C_ham.c, v=a * C_ham.v + b, grid=C_ham.grid, kinetic=C_ham.kinetic
    )


def contour_error_table(C_ham, betas, pole_counts, normalize, n_samples, seed):
    """Median/max relative matvec error per (beta, pole count).

    Errors are ||contour - dense|| / ||dense|| over ``n_samples`` Gaussian
    vectors; the Hamiltonian spectrum is normalized into ``normalize`` when
    given, mirroring the fixed eigenvalue range of the reference sweep.
    """
    H = normalize_hamiltonian(C_ham, normalize) if normalize is not None else C_ham
    lo, hi = H.spectral_bounds(slack=0.0) if normalize is None else normalize
    Hd = H.to_dense()
    z = rngmod.gradient_batch(seed, 1, H.grid.n, n_samples)
    rows = []
    for beta in betas:
        dense = dense_matrix_function(Hd, beta, "sqrt_fd")
        y_ref = z @ dense  # (n_samples, n); dense is symmetric
        ref_norms = np.linalg.norm(y_ref, axis=1)
        for n_poles in pole_counts:
            P = build_contour(lo, hi, beta, n_poles)
            y = contour_matvec(H, P, z, _SWEEP_SOLVER)
            rel = np.linalg.norm(y - y_ref, axis=1) / ref_norms
            rows.append(
                {
                    "beta": float(beta),
                    "n_poles": int(n_poles),
                    "median_rel_err": float(np.median(rel)),
                    "max_rel_err": float(rel.max()),
                }
            )
    return rows
