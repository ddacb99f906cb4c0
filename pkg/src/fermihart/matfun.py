"""Matrix functions of the effective Hamiltonian.

The central primitive is the matvec by the square-root Fermi-Dirac function,
f_beta^{1/2}(H) z, computed from a pole expansion: quadrature of the Cauchy
integral of a holomorphic extension of f^{1/2} over a dumbbell-shaped contour
that encloses the spectral interval while threading between the branch points
at +/- i pi / beta.  The same node set, reweighted, yields (f log f)(H) z for
entropy estimates.  A Chebyshev three-term-recurrence alternative and a dense
eigendecomposition oracle back the iterative path for validation.

Contour geometry: with p = pi/beta and q = (1 - margin) p, the substitution
w = z^2 + q^2 sends the branch rays {iy : |y| >= p} to (-inf, q^2 - p^2] and
the symmetrized spectral interval [-M, M] to [q^2, M^2 + q^2].  A conformal
map built from Jacobi elliptic functions (modulus fixed by the gap ratio)
equidistributes trapezoid nodes on the midline of the corresponding annulus;
pulling the nodes back through both square-root sheets produces the dumbbell.
Each of the N_xi base nodes yields the quadruplet {+/-sqrt(xi), conjugates},
so the pole count is a multiple of 4 and only N_p/2 shifted solves are needed.
"""

import functools
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np
import scipy.fft

from . import lattice
from .errors import (
    InvalidInterval,
    LengthMismatch,
    OddPoleCount,
    OnBranchCut,
    TooLargeForDense,
)
from .lattice import FourierMultiplier, GridSpec, apply_multiplier
from .solvers import SolveInfo, batched_bicgstab

DENSE_CUTOFF = 4096

# ---------------------------------------------------------------------------
# Fermi-Dirac function and friends on the real axis (overflow-safe)


def fermi_dirac(x, beta):
    """f_beta(x) = 1 / (1 + exp(beta x))."""
    t = beta * np.asarray(x, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    e = np.exp(-t[pos])
    out[pos] = e / (1.0 + e)
    out[~pos] = 1.0 / (1.0 + np.exp(t[~pos]))
    return out


def fermi_dirac_sqrt(x, beta):
    """f_beta(x)^{1/2}."""
    t = beta * np.asarray(x, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = np.exp(-0.5 * t[pos]) / np.sqrt(1.0 + np.exp(-t[pos]))
    out[~pos] = 1.0 / np.sqrt(1.0 + np.exp(t[~pos]))
    return out


def fd_log_fd(x, beta):
    """f_beta(x) log f_beta(x), with the 0 log 0 := 0 limit at x -> +inf."""
    t = beta * np.asarray(x, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    e = np.exp(-t[pos])
    out[pos] = -e * (t[pos] + np.log1p(e)) / (1.0 + e)
    ep = np.exp(t[~pos])
    out[~pos] = -np.log1p(ep) / (1.0 + ep)
    return out


def fd_entropy(x, beta):
    """f log f + (1 - f) log(1 - f) at f = f_beta(x); uses 1 - f_b(x) = f_b(-x)."""
    return fd_log_fd(x, beta) + fd_log_fd(-np.asarray(x, dtype=float), beta)


_SCALAR = {
    "fd": fermi_dirac,
    "sqrt_fd": fermi_dirac_sqrt,
    "fd_log_fd": fd_log_fd,
    "entropy": fd_entropy,
}

# ---------------------------------------------------------------------------
# Holomorphic extensions off the branch cut {iy : |y| >= pi/beta}


def _check_off_cut(z, beta):
    z = np.asarray(z, dtype=complex)
    on_cut = (z.real == 0.0) & (np.abs(z.imag) >= np.pi / beta)
    if np.any(on_cut):
        raise OnBranchCut("evaluation point lies on the branch cut {iy: |y| >= pi/beta}")
    return z


def eval_h(z, beta=1.0):
    """Holomorphic extension of log f_beta.

    For Re(z) <= 0 this is the principal -log(1 + e^{beta z}); for Re(z) > 0
    the branch is continued as -beta z - log(1 + e^{-beta z}), which matches
    the left formula across the seam and is holomorphic off the cut.
    """
    z = _check_off_cut(z, beta)
    t = beta * z
    out = np.empty_like(t)
    left = t.real <= 0
    out[left] = -np.log(1.0 + np.exp(t[left]))
    tr = t[~left]
    out[~left] = -tr - np.log(1.0 + np.exp(-tr))
    return out if out.ndim else complex(out)


def eval_g(z, beta=1.0):
    """Holomorphic extension of f_beta^{1/2}; equals exp(eval_h / 2)."""
    z = _check_off_cut(z, beta)
    t = beta * z
    out = np.empty_like(t)
    left = t.real <= 0
    out[left] = (1.0 + np.exp(t[left])) ** -0.5
    tr = t[~left]
    out[~left] = np.exp(-0.5 * tr) * (1.0 + np.exp(-tr)) ** -0.5
    return out if out.ndim else complex(out)


def eval_gtilde(z, beta=1.0):
    """Holomorphic extension of f_beta log f_beta (for the entropy estimator)."""
    z = _check_off_cut(z, beta)
    t = beta * z
    out = np.empty_like(t)
    left = t.real <= 0
    e = np.exp(t[left])
    out[left] = -np.log(1.0 + e) / (1.0 + e)
    tr = t[~left]
    em = np.exp(-tr)
    out[~left] = em * (-tr - np.log(1.0 + em)) / (1.0 + em)
    return out if out.ndim else complex(out)


_EXTENSION = {"sqrt_fd": eval_g, "fd_log_fd": eval_gtilde}

# ---------------------------------------------------------------------------
# Effective Hamiltonian H = c K + diag(v)


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """The pair (c, v) representing H = c K + diag(v) on a periodic grid.

    This is the only representation of the mirror-descent state that is ever
    stored; the density matrix f_beta(H) is never materialized.
    """

    c: float
    v: np.ndarray
    grid: GridSpec
    kinetic: FourierMultiplier

    def apply(self, x):
        """H x for x of shape (n,) or (batch, n); exact for complex input."""
        return self.c * apply_multiplier(self.kinetic, x) + self.v * x

    def spectral_bounds(self, slack=0.1):
        """Rigorous [lam_lo, lam_hi] from K >= 0 and diagonal bounds."""
        kmax = self.c * self.kinetic.max_eigenvalue()
        lo = min(0.0, kmax) + float(self.v.min()) - slack
        hi = max(0.0, kmax) + float(self.v.max()) + slack
        return lo, hi

    def mean_potential(self):
        return float(self.v.mean())

    def negated(self):
        return EffectiveHamiltonian(c=-self.c, v=-self.v, grid=self.grid, kinetic=self.kinetic)

    def to_dense(self):
        if self.grid.n > DENSE_CUTOFF:
            raise TooLargeForDense(f"n = {self.grid.n} exceeds dense cutoff {DENSE_CUTOFF}")
        return self.c * _dense_kinetic(self.grid) + np.diag(self.v)


@functools.lru_cache(maxsize=8)
def _dense_kinetic_cached(sizes, lengths):
    grid = lattice.make_grid(len(sizes), list(sizes), list(lengths))
    K = lattice.dense_operator(lattice.kinetic_multiplier(grid))
    return 0.5 * (K + K.T)


def _dense_kinetic(grid):
    return _dense_kinetic_cached(grid.sizes, grid.lengths)


@dataclass(frozen=True)
class SolverConfig:
    """Iterative-solve controls for the shifted systems."""

    tol: float = 1e-5
    max_iter: int = 1000
    use_preconditioner: bool = True


# ---------------------------------------------------------------------------
# Pole expansion


@dataclass(frozen=True)
class PoleExpansion:
    """Contour quadrature nodes and combined weights for a matrix function.

    ``nodes[i + n_poles/2] = conj(nodes[i])`` with conjugate weights, so the
    expansion sum_i weights_i / (nodes_i - x) is exactly real for real x and
    only the first half requires linear solves.  The first half is itself
    closed under negation (the +/- sqrt sheets), which is what lets the
    entropy estimator reuse these solves for the reflected Hamiltonian.
    """

    nodes: np.ndarray
    weights: np.ndarray
    beta: float
    spectral_interval: tuple
    kind: str
    margin: float = 0.05

    @property
    def n_poles(self):
        return len(self.nodes)

    @property
    def solve_nodes(self):
        """Conjugate-pair representatives: one solve each."""
        return self.nodes[: self.n_poles // 2]

    @property
    def solve_weights(self):
        """Weights such that f(x) = Re sum_i solve_weights_i / (solve_nodes_i - x)."""
        return 2.0 * self.weights[: self.n_poles // 2]

    def negation_permutation(self):
        """Index map j with solve_nodes[j[i]] == -solve_nodes[i]."""
        half = self.n_poles // 2
        j = np.arange(half)
        j[0::2], j[1::2] = np.arange(1, half, 2), np.arange(0, half, 2)
        return j

    def evaluate(self, x):
        """Scalar quadrature sum at real x (vectorized)."""
        x = np.asarray(x, dtype=float)
        terms = self.solve_weights[:, None] / (self.solve_nodes[:, None] - x[None, :])
        return terms.sum(axis=0).real


def _contour_geometry(lam_lo, lam_hi, beta, margin):
    if not lam_lo < lam_hi:
        raise InvalidInterval(f"need lam_lo < lam_hi, got [{lam_lo}, {lam_hi}]")
    if beta <= 0:
        raise ValueError("beta must be positive")
    p = np.pi / beta
    q = (1.0 - margin) * p
    big = max(abs(lam_lo), abs(lam_hi))
    m = q * q
    M = big * big + q * q
    ratio = M / m
    return q, m, M, ratio


def build_contour(lam_lo, lam_hi, beta, n_poles, kind="sqrt_fd", margin=0.05) -> PoleExpansion:
    """Build the dumbbell pole expansion enclosing [lam_lo, lam_hi].

    ``n_poles`` must be a positive multiple of 4: nodes come in quadruplets
    {s, -s, conj(s), -conj(s)}.  ``kind`` selects the extension combined into
    the weights: "sqrt_fd" for f^{1/2}, "fd_log_fd" for f log f.

    Raises
    ------
    InvalidInterval, OddPoleCount
    """
    if kind not in _EXTENSION:
        raise ValueError(f"unknown kind {kind!r}")
    if n_poles < 4 or n_poles % 4 != 0:
        raise OddPoleCount(f"n_poles = {n_poles}; the quadruplet contour needs a multiple of 4")
    q, m, M, ratio = _contour_geometry(lam_lo, lam_hi, beta, margin)
    n_xi = n_poles // 4

    with mp.workdps(40):
        sqrt_ratio = mp.sqrt(ratio)
        k = 1 - 2 / (sqrt_ratio + 1)
        m_ell = k * k
        K = mp.ellipk(m_ell)
        Kp = mp.ellipk(1 - m_ell)
        sn = mp.ellipfun("sn")
        cn = mp.ellipfun("cn")
        dn = mp.ellipfun("dn")
        sqrt_mM = mp.sqrt(mp.mpf(m) * mp.mpf(M))
        kinv = 1 / k
        pref = mp.mpc(0, 1) * (2 * K / (mp.pi * n_xi))
        nodes = []
        geom = []
        for j in range(1, n_xi + 1):
            t = -K + (j - mp.mpf("0.5")) * 2 * K / n_xi + mp.mpc(0, 1) * Kp / 2
            u = sn(t, m=m_ell)
            dwdt = sqrt_mM * (2 / k) * cn(t, m=m_ell) * dn(t, m=m_ell) / (kinv - u) ** 2
            w = sqrt_mM * (kinv + u) / (kinv - u)
            a = mp.sqrt(w - q * q)
            for s in (a, -a):
                nodes.append(complex(s))
                geom.append(complex(pref * dwdt / (2 * s)))

    nodes = np.array(nodes)
    geom = np.array(geom)
    func = _EXTENSION[kind]
    weights_half = 0.5 * geom * func(nodes, beta)
    full_nodes = np.concatenate([nodes, nodes.conj()])
    full_weights = np.concatenate([weights_half, weights_half.conj()])
    on_cut = (np.abs(full_nodes.real) < 1e-14) & (np.abs(full_nodes.imag) >= np.pi / beta)
    if on_cut.any():
        raise InvalidInterval("contour node landed on the branch cut; interval too wide for beta")
    return PoleExpansion(
        nodes=full_nodes,
        weights=full_weights,
        beta=beta,
        spectral_interval=(float(lam_lo), float(lam_hi)),
        kind=kind,
        margin=margin,
    )


def contour_rate(lam_lo, lam_hi, beta, margin=0.05):
    """Quadrature error decay exponent per xi-node, pi K' / (2 K)."""
    _, _, _, ratio = _contour_geometry(lam_lo, lam_hi, beta, margin)
    with mp.workdps(40):
        k = 1 - 2 / (mp.sqrt(ratio) + 1)
        K = mp.ellipk(k * k)
        Kp = mp.ellipk(1 - k * k)
        return float(mp.pi * Kp / (2 * K))


def poles_for_tolerance(lam_lo, lam_hi, beta, target, margin=0.05, cap=200):
    """Smallest multiple-of-4 pole count predicted to reach ``target`` error.

    Uses the measured error model err ~ 3 exp(-rate * N_xi) for the dumbbell
    quadrature; clipped to [4, cap].
    """
    rate = contour_rate(lam_lo, lam_hi, beta, margin)
    n_xi = int(np.ceil(np.log(3.0 / target) / rate))
    n_xi = max(1, min(n_xi, cap // 4))
    return 4 * n_xi


def scalar_expansion_error(P: PoleExpansion, n_points=101):
    """Max quadrature error over the interval, relative to max |f| there."""
    lo, hi = P.spectral_interval
    x = np.linspace(lo, hi, n_points)
    exact = _SCALAR[P.kind](x, P.beta)
    scale = max(np.abs(exact).max(), 1e-300)
    return float(np.abs(P.evaluate(x) - exact).max() / scale)


def tail_cutoff(beta, tail_eps=1e-10):
    """Energy above which f_beta^{1/2} <= tail_eps (contour tail truncation)."""
    return 2.0 * np.log(1.0 / tail_eps) / beta


def effective_interval(H: EffectiveHamiltonian, beta, tail_eps=1e-10):
    """Spectral interval for the contour, truncated where f^{1/2} is negligible.

    Eigenvalues above the cutoff contribute at most tail_eps to the matvec,
    and the quadrature sum decays to zero outside the contour, so excluding
    them costs O(tail_eps) while keeping the pole count independent of the
    (possibly enormous) kinetic spectral radius.
    """
    lo, hi = H.spectral_bounds()
    hi_eff = min(hi, max(tail_cutoff(beta, tail_eps), lo + 1.0))
    return lo, hi_eff


# ---------------------------------------------------------------------------
# Matvec drivers


def _shifted_operators(H: EffectiveHamiltonian, shifts, cfg: SolverConfig):
    """Block closures for (s_j I - H) and the mean-field FFT preconditioner.

    The kinetic symbol is pre-scaled and the per-row preconditioner
    denominators are pre-broadcast so each application touches the block the
    minimal number of times (these run inside the BiCGSTAB hot loop).
    """
    vbar = H.mean_potential()
    sizes = H.grid.sizes
    axes = tuple(range(1, 1 + H.grid.dims))
    kin_sym = (H.c * H.kinetic.scale * H.kinetic.symbol)[None, ...]
    v = H.v

    def apply_A(X, rows):
        Xs = X.reshape((X.shape[0],) + sizes)
        KX = scipy.fft.ifftn(
            kin_sym * scipy.fft.fftn(Xs, axes=axes, workers=lattice._fft_workers),
            axes=axes,
            workers=lattice._fft_workers,
        ).reshape(X.shape)
        return (shifts[rows, None] - v) * X - KX

    if not cfg.use_preconditioner:
        def apply_M(X, rows):
            return X
    else:
        den_full = shifts.reshape((-1,) + (1,) * H.grid.dims) - kin_sym - vbar

        def apply_M(X, rows):
            Xs = X.reshape((X.shape[0],) + sizes)
            Y = scipy.fft.ifftn(
                scipy.fft.fftn(Xs, axes=axes, workers=lattice._fft_workers) / den_full[rows],
                axes=axes,
                workers=lattice._fft_workers,
            )
            return Y.reshape(X.shape)

    return apply_A, apply_M


def solve_shifted(H: EffectiveHamiltonian, s, b, cfg: SolverConfig = SolverConfig()):
    """Solve (s I - H) x = b with the FFT mean-field preconditioner.

    Returns the solution; raises SolverDiverged / Breakdown on failure.
    """
    b = np.asarray(b, dtype=complex)
    if b.shape != (H.grid.n,):
        raise LengthMismatch(f"b must have shape ({H.grid.n},)")
    shifts = np.array([s], dtype=complex)
    apply_A, apply_M = _shifted_operators(H, shifts, cfg)
    X, _ = batched_bicgstab(apply_A, apply_M, b[None, :], cfg.tol, cfg.max_iter)
    return X[0]


# Solve-block working-set target: blocks sized to stay cache-resident, which
# on large grids is worth ~30% over one monolithic batch.
SOLVE_BLOCK_BYTES = 4 << 20


def contour_matvec(H: EffectiveHamiltonian, P: PoleExpansion, z, cfg: SolverConfig = SolverConfig(), return_solves=False):
    """f(H) z via the pole expansion (f given by P.kind).

    ``z`` is real with shape (n,) or (batch, n).  Conjugate pairs share one
    solve; the result is the exact real part of the full expansion.  The
    batch is solved in cache-sized groups of samples.  With
    ``return_solves`` the per-node resolvent applications are returned as a
    (batch, n_solves, n) array for reuse (entropy reweighting).
    """
    z = np.asarray(z)
    if np.iscomplexobj(z):
        raise ValueError("contour_matvec expects a real right-hand side")
    single = z.ndim == 1
    Z = z[None, :] if single else z
    if Z.shape[-1] != H.grid.n:
        raise LengthMismatch(f"expected trailing length {H.grid.n}")
    nb = Z.shape[0]
    s_nodes = P.solve_nodes
    ns = len(s_nodes)
    n = H.grid.n
    cols_target = max(1, SOLVE_BLOCK_BYTES // (16 * n))
    group = max(1, min(nb, cols_target // ns))
    solves = np.empty((nb, ns, n), dtype=complex)
    iters = []
    residuals = []
    restarts = 0
    for start in range(0, nb, group):
        Zb = Z[start : start + group]
        shifts = np.tile(s_nodes, Zb.shape[0])
        B = np.repeat(Zb.astype(complex), ns, axis=0)
        apply_A, apply_M = _shifted_operators(H, shifts, cfg)
        X, info = batched_bicgstab(apply_A, apply_M, B, cfg.tol, cfg.max_iter)
        solves[start : start + group] = X.reshape(Zb.shape[0], ns, n)
        iters.append(info.iterations)
        residuals.append(info.residuals)
        restarts += info.restarts
    info = SolveInfo(
        iterations=np.concatenate(iters), residuals=np.concatenate(residuals), restarts=restarts
    )
    W = P.solve_weights
    y = np.einsum("s,bsn->bn", W, solves).real
    y = y[0] if single else y
    if return_solves:
        return y, solves, info
    return y


def reflected_entropy_weights(P_ent: PoleExpansion):
    """Coefficients c_i with  z^T[S_FD-matvec] = Re sum_i c_i x_i  over P's solves.

    The entropy integrand is (f log f)(H) + ((1-f) log(1-f))(H); the second
    term equals (f log f)(-H), whose expansion over the same (negation-closed)
    node set uses weight -w(-s) at node s, recycling the (s I - H)^{-1} solves.
    """
    W = P_ent.solve_weights
    perm = P_ent.negation_permutation()
    return W - W[perm]


def chebyshev_matvec(H: EffectiveHamiltonian, beta, order, z, bounds):
    """f_beta^{1/2}(H) z by Chebyshev expansion on ``bounds`` (three-term recurrence)."""
    lo, hi = bounds
    if not lo < hi:
        raise InvalidInterval(f"need lo < hi, got [{lo}, {hi}]")
    cheb = np.polynomial.chebyshev.Chebyshev.interpolate(
        lambda x: fermi_dirac_sqrt(x, beta), deg=order, domain=[lo, hi]
    )
    coef = cheb.coef
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    Z = z[None, :] if single else z
    mid = 0.5 * (lo + hi)
    halfw = 0.5 * (hi - lo)

    def apply_hat(X):
        return (H.apply(X) - mid * X) / halfw

    Tm2 = Z
    y = coef[0] * Tm2
    if order >= 1:
        Tm1 = apply_hat(Z)
        y = y + coef[1] * Tm1
        for k in range(2, order + 1):
            Tk = 2.0 * apply_hat(Tm1) - Tm2
            y = y + coef[k] * Tk
            Tm2, Tm1 = Tm1, Tk
    return y[0] if single else y


def dense_matrix_function(H_dense, beta, which, cutoff=DENSE_CUTOFF):
    """U f(L) U^T from a full symmetric eigendecomposition (validation oracle)."""
    H_dense = np.asarray(H_dense)
    n = H_dense.shape[0]
    if n > cutoff:
        raise TooLargeForDense(f"n = {n} exceeds dense cutoff {cutoff}")
    if which not in _SCALAR:
        raise ValueError(f"unknown matrix function {which!r}")
    lam, U = np.linalg.eigh(H_dense)
    return (U * _SCALAR[which](lam, beta)) @ U.T
