"""Batched preconditioned BiCGSTAB for families of shifted linear systems.

All right-hand sides are iterated as one block; each row carries its own
complex shift, so the scalar recurrence coefficients are per-row vectors.
Rows that converge are scattered out and the block shrinks.  The batching
exists because the per-iteration cost is dominated by FFTs, which amortize
far better over a block than over one vector at a time.
"""

from dataclasses import dataclass

import numpy as np

from .errors import Breakdown, SolverDiverged

_BREAKDOWN_RTOL = 1e-30


@dataclass
class SolveInfo:
    iterations: np.ndarray
    residuals: np.ndarray
    restarts: int


def batched_bicgstab(apply_A, apply_M, B, rtol, maxiter, x0=None):
    """Solve A_j x_j = b_j rowwise with right preconditioning.

    Parameters
    ----------
    apply_A, apply_M : callable(X, rows) -> ndarray
        Block operators; ``X`` has shape (k, n) and ``rows`` gives the
        original row indices so the operator can pick the matching shifts.
        ``apply_M`` is the (approximate) inverse preconditioner.
    B : ndarray (J, n), complex
        Right-hand sides, one per row.
    rtol : float
        Relative residual target ||b - A x|| <= rtol * ||b|| per row.
    maxiter : int
        Iteration budget per row.

    Returns
    -------
    X : ndarray (J, n)
    info : SolveInfo
        True final residuals, per-row iteration counts, restart total.

    Raises
    ------
    SolverDiverged
        Some row failed to reach rtol within maxiter (worst relative
        residual attached).
    Breakdown
        A scalar breakdown persisted after one restart of the row.
    """
    B = np.asarray(B, dtype=complex)
    J, n = B.shape
    X = np.zeros_like(B) if x0 is None else np.array(x0, dtype=complex)
    normb = np.linalg.norm(B, axis=1)
    target = rtol * np.where(normb > 0, normb, 1.0)
    iters = np.zeros(J, dtype=int)
    restarts_total = 0

    def dot(U, W):
        return np.einsum("ij,ij->i", U.conj(), W)

    it = 0
    fresh_residual = x0 is None
    R_all = B.copy() if x0 is None else B - apply_A(X, np.arange(J))
    res_all = np.linalg.norm(R_all, axis=1)
    while True:
        if not fresh_residual:
            R_all = B - apply_A(X, np.arange(J))
            res_all = np.linalg.norm(R_all, axis=1)
        rows = np.flatnonzero(res_all > target)
        if rows.size == 0 or it >= maxiter:
            break
        fresh_residual = False

        # live block state
        x = X[rows].copy()
        r = R_all[rows].copy()
        rhat = r.copy()
        p = np.zeros_like(r)
        v = np.zeros_like(r)
        rho_old = np.ones(rows.size, dtype=complex)
        alpha = np.ones(rows.size, dtype=complex)
        omega = np.ones(rows.size, dtype=complex)
        restarted = np.zeros(rows.size, dtype=bool)
        tgt = target[rows]

        while rows.size and it < maxiter:
            it += 1
            rho = dot(rhat, r)
            scale = np.linalg.norm(rhat, axis=1) * np.linalg.norm(r, axis=1)
            broke = (np.abs(rho) <= _BREAKDOWN_RTOL * np.maximum(scale, 1e-300)) | ~np.isfinite(rho)
            if broke.any():
                if (broke & restarted).any():
                    raise Breakdown(
                        f"BiCGSTAB breakdown persisted in {int((broke & restarted).sum())} row(s)"
                    )
                restarts_total += int(broke.sum())
                restarted |= broke
                rhat[broke] = r[broke]
                p[broke] = 0.0
                v[broke] = 0.0
                rho_old[broke] = 1.0
                alpha[broke] = 1.0
                omega[broke] = 1.0
                rho = np.where(broke, dot(rhat, r), rho)
            beta = (rho / rho_old) * (alpha / omega)
            p = r + beta[:, None] * (p - omega[:, None] * v)
            phat = apply_M(p, rows)
            v = apply_A(phat, rows)
            denom = dot(rhat, v)
            alpha = rho / np.where(denom == 0, 1.0, denom)
            s = r - alpha[:, None] * v
            snorm = np.linalg.norm(s, axis=1)
            half = snorm <= tgt
            if half.any():
                x[half] += alpha[half, None] * phat[half]
                r[half] = s[half]
            full = ~half
            if full.any():
                shat = apply_M(s, rows)
                t = apply_A(shat, rows)
                tt = dot(t, t).real
                ts = dot(t, s)
                omega_new = ts / np.where(tt == 0, 1.0, tt)
                x[full] += alpha[full, None] * phat[full] + omega_new[full, None] * shat[full]
                r[full] = s[full] - omega_new[full, None] * t[full]
                omega = np.where(full, omega_new, omega)
            rho_old = rho
            res = np.linalg.norm(r, axis=1)
            done = (res <= tgt) | half
            iters[rows] = it
            if done.any():
                X[rows[done]] = x[done]
                keep = ~done
                rows = rows[keep]
                x, r, rhat, p, v = x[keep], r[keep], rhat[keep], p[keep], v[keep]
                rho_old, alpha, omega = rho_old[keep], alpha[keep], omega[keep]
                restarted, tgt = restarted[keep], tgt[keep]
        if rows.size:
            X[rows] = x  # best effort before the verification pass

    res_true = res_all  # fresh: recomputed from X at the top of the last round
    bad = res_true > target * 1.05
    if bad.any():
        rel = res_true / np.where(normb > 0, normb, 1.0)
        raise SolverDiverged(
            f"{int(bad.sum())}/{J} shifted solve(s) above tolerance after {it} iterations",
            worst_residual=float(rel[bad].max()),
        )
    return X, SolveInfo(iterations=iters, residuals=res_true, restarts=restarts_total)
