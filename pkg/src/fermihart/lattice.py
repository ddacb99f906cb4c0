"""Periodic-sinc discretization of the box.

Grids, translation-invariant operators applied through FFTs, the Yukawa/Coulomb
interaction kernel, and the random background potential.

Conventions
-----------
The unitary d-dimensional DFT diagonalizes every translation-invariant
operator on the grid.  A ``FourierMultiplier`` stores the operator's real
symbol over the dual index set, laid out in FFT frequency order: along each
axis the integer frequencies run ``0, 1, ..., l, -l, ..., -1`` with
``l = (n_i - 1) / 2`` (this is ``numpy.fft.fftfreq(n_i) * n_i`` for odd
``n_i``).  ``dual_indices`` materializes that layout explicitly.  Because the
forward/inverse transforms are applied as an ``ifft(symbol * fft(x))`` pair,
the unitary normalization factors cancel and the symbol values match the
analytic ones with no extra scaling.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import (
    EvenGridSize,
    LengthMismatch,
    NonPositiveLength,
    TooManyCharges,
    ZeroCharges,
)

# Imaginary residue above this (relative) level on a real-input apply means a
# broken symbol symmetry rather than FFT roundoff.
_IMAG_RESIDUE_RTOL = 1e-10

_fft_workers = 1


def set_fft_workers(workers: int) -> None:
    """Set the worker count passed to scipy.fft (thread budget)."""
    global _fft_workers
    _fft_workers = max(1, int(workers))


@dataclass(frozen=True)
class GridSpec:
    """Periodic box geometry and multi-index bookkeeping.

    Attributes
    ----------
    dims : int
        Spatial dimension d.
    sizes : tuple of int
        Odd grid sizes per dimension.
    lengths : tuple of float
        Box side lengths per dimension.
    n : int
        Total number of grid points / basis functions.
    volume : float
        Box volume (product of lengths).
    dv : float
        Discrete volume element, volume / n.
    """

    dims: int
    sizes: tuple
    lengths: tuple
    n: int = field(init=False)
    volume: float = field(init=False)
    dv: float = field(init=False)

    def __post_init__(self):
        n = 1
        for s in self.sizes:
            n *= int(s)
        vol = 1.0
        for L in self.lengths:
            vol *= float(L)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "volume", vol)
        object.__setattr__(self, "dv", vol / n)

    @property
    def ells(self):
        """Per-dimension dual-index bound l_i = (n_i - 1) / 2."""
        return tuple((s - 1) // 2 for s in self.sizes)

    def points(self):
        """Grid points x_j = j * dx, shape (n, dims), row-major multi-index order."""
        axes = [np.arange(s) * (L / s) for s, L in zip(self.sizes, self.lengths)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def make_grid(dims, sizes, lengths) -> GridSpec:
    """Build a GridSpec, validating oddness and positivity.

    Raises
    ------
    EvenGridSize
        If any grid size is even (the dual set {-l..l} needs odd sizes).
    NonPositiveLength
        If any box length is <= 0.
    """
    sizes = tuple(int(s) for s in sizes)
    lengths = tuple(float(L) for L in lengths)
    if dims < 1 or len(sizes) != dims or len(lengths) != dims:
        raise ValueError(f"need {dims} sizes and lengths, got {sizes}, {lengths}")
    for s in sizes:
        if s < 1 or s % 2 == 0:
            raise EvenGridSize(f"grid size {s} is not an odd positive integer")
    for L in lengths:
        if L <= 0:
            raise NonPositiveLength(f"box length {L} must be positive")
    return GridSpec(dims=dims, sizes=sizes, lengths=lengths)


def dual_indices(grid: GridSpec) -> np.ndarray:
    """Integer dual multi-indices in FFT layout, shape (n, dims)."""
    axes = [np.rint(np.fft.fftfreq(s) * s).astype(int) for s in grid.sizes]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _ksq(grid: GridSpec) -> np.ndarray:
    """sum_i (2 pi k_i / L_i)^2 over the dual set, FFT layout, shape = sizes."""
    out = np.zeros(grid.sizes)
    for axis, (s, L) in enumerate(zip(grid.sizes, grid.lengths)):
        freq = (2.0 * np.pi / L) * np.fft.fftfreq(s) * s
        shape = [1] * grid.dims
        shape[axis] = s
        out = out + (freq**2).reshape(shape)
    return out


@dataclass(frozen=True)
class FourierMultiplier:
    """A real, even symbol applied as scale * ifft(symbol * fft(x)).

    The symbol array has shape ``grid.sizes`` in FFT layout.  Evenness under
    k -> -k makes the real-space operator real and symmetric.
    """

    grid: GridSpec
    symbol: np.ndarray
    scale: float

    @property
    def symbol_flat(self) -> np.ndarray:
        return self.symbol.reshape(-1)

    def max_eigenvalue(self) -> float:
        return self.scale * float(self.symbol.max())

    def min_eigenvalue(self) -> float:
        return self.scale * float(self.symbol.min())


def kinetic_multiplier(grid: GridSpec) -> FourierMultiplier:
    """Kinetic operator -Laplacian/2: symbol sum_i (2 pi k_i / L_i)^2, scale 1/2."""
    return FourierMultiplier(grid=grid, symbol=_ksq(grid), scale=0.5)


def yukawa_multiplier(grid: GridSpec, alpha: float, zero_mode_removed: bool = False) -> FourierMultiplier:
    """Yukawa interaction kernel; alpha = 0 gives Coulomb with the k = 0 mode zeroed.

    Symbol alpha^2 / (alpha^2 + |2 pi k / L|^2) with prefactor 1/dV.  For
    alpha = 0 the symbol is 1 / |2 pi k / L|^2 and the zero mode is set to 0.
    ``zero_mode_removed`` optionally zeros the k = 0 mode for alpha > 0 as
    well (it only shifts the Hartree potential by a constant).
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    ksq = _ksq(grid)
    if alpha == 0.0:
        with np.errstate(divide="ignore"):
            sym = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
    else:
        sym = alpha**2 / (alpha**2 + ksq)
        if zero_mode_removed:
            sym = sym.copy()
            sym[(0,) * grid.dims] = 0.0
    return FourierMultiplier(grid=grid, symbol=sym, scale=1.0 / grid.dv)


def apply_multiplier(M: FourierMultiplier, x: np.ndarray, check_residue: bool = False) -> np.ndarray:
    """Apply the translation-invariant operator to x.

    ``x`` has shape (n,) or (batch, n).  Real input returns a real array (the
    imaginary FFT residue is discarded; with ``check_residue`` it is asserted
    below 1e-10 relative first).  Complex input is mapped exactly, since the
    real symbol acts as a complex-linear operator.
    """
    x = np.asarray(x)
    if x.shape[-1] != M.grid.n:
        raise LengthMismatch(f"expected trailing length {M.grid.n}, got {x.shape}")
    batch = x.shape[:-1]
    xs = x.reshape(batch + M.grid.sizes)
    axes = tuple(range(len(batch), len(batch) + M.grid.dims))
    yhat = M.symbol * scipy.fft.fftn(xs, axes=axes, workers=_fft_workers)
    y = scipy.fft.ifftn(yhat, axes=axes, workers=_fft_workers)
    y = y.reshape(x.shape)
    if np.isrealobj(x):
        if check_residue:
            resid = np.linalg.norm(y.imag)
            if resid > _IMAG_RESIDUE_RTOL * max(np.linalg.norm(y), 1e-300):
                raise AssertionError(f"imaginary residue {resid:.3e} exceeds tolerance")
        y = y.real
    return M.scale * y


@dataclass(frozen=True)
class ExternalPotential:
    """Pointwise external potential and the background charges generating it."""

    values: np.ndarray
    charge_density: np.ndarray


def background_potential(grid: GridSpec, zeta: float, alpha: float, seed) -> ExternalPotential:
    """Random background of floor(zeta * volume) unit charges at distinct points.

    The potential is u = -(V rho_ext) with V the Yukawa kernel.  Deterministic
    given ``seed`` (an int or ``numpy.random.SeedSequence``).

    Raises
    ------
    ZeroCharges
        If floor(zeta * volume) < 1.
    TooManyCharges
        If more charges are requested than there are grid points.
    """
    n_charges = int(np.floor(zeta * grid.volume))
    if n_charges < 1:
        raise ZeroCharges(f"floor(zeta * volume) = {n_charges}; nothing to place")
    if n_charges > grid.n:
        raise TooManyCharges(f"{n_charges} charges exceed {grid.n} grid points")
    rng = np.random.default_rng(seed)
    idx = rng.choice(grid.n, size=n_charges, replace=False)
    rho = np.zeros(grid.n)
    rho[idx] = 1.0
    u = -apply_multiplier(yukawa_multiplier(grid, alpha), rho)
    return ExternalPotential(values=u, charge_density=rho)


def interaction_row_norm(grid: GridSpec, alpha: float) -> float:
    """Induced infinity norm max_p sum_q |V_pq| of the interaction kernel.

    The kernel is circulant, so the absolute sum of the row through grid
    point 0 is the norm.
    """
    e0 = np.zeros(grid.n)
    e0[0] = 1.0
    row = apply_multiplier(yukawa_multiplier(grid, alpha), e0)
    return float(np.abs(row).sum())


def dense_operator(M: FourierMultiplier) -> np.ndarray:
    """Materialize the multiplier as a dense (n, n) matrix (small grids only)."""
    cols = apply_multiplier(M, np.eye(M.grid.n))
    return np.ascontiguousarray(cols.T)
