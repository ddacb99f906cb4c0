"""Stochastic mirror descent over fermionic density matrices.

The state is the effective Hamiltonian H_t = c_t K + diag(v_t); the density
matrix X_t = f_beta(H_t) is implicit and never formed.  Each iteration draws a
Gaussian batch, estimates the density as rho_hat = mean (f^{1/2}(H_t) z)^{.2},
forms the Hartree-potential estimate diag*[V rho_hat], and takes the convex
combination

    H_{t+1} = (1 - gamma_t/beta) H_t + (gamma_t/beta) (C + diag*[V rho_hat] - mu I),

which is closed over the (c, v) representation.  Observables are reported as
tail averages over the latter half of the iterations completed so far.
"""

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import NoSamplesYet, StepTooLarge
from .lattice import FourierMultiplier, apply_multiplier
from .matfun import (
    EffectiveHamiltonian,
    PoleExpansion,
    SolverConfig,
    build_contour,
    contour_matvec,
    effective_interval,
    reflected_entropy_weights,
)
from .metrics import MetricsRecord

_INTERVAL_PAD = 0.05  # fractional widening of the contour interval per rebuild


@dataclass(frozen=True)
class ScheduleConfig:
    """Step-size schedule gamma_t.

    kinds: "exp_decay" gamma0 * exp(-t / decay_tau); "constant" gamma0;
    "theoretical" the horizon-T step eta beta / (eta + beta) with
    eta = 1 / (c_{T,m,delta} c_h sqrt(T)).  All kinds clamp to <= beta, which
    the proximal interpretation of the update requires.
    """

    gamma0: float = 1.0
    decay_tau: float = 1000.0
    kind: str = "exp_decay"
    horizon: int = 5000
    delta: float = 0.1
    c_h: float = None
    n_basis: int = None


def step_size(sched: ScheduleConfig, t, beta):
    """gamma_t for iteration t >= 0, clamped into (0, beta]."""
    if sched.kind == "exp_decay":
        g = sched.gamma0 * np.exp(-t / sched.decay_tau)
    elif sched.kind == "constant":
        g = sched.gamma0
    elif sched.kind == "theoretical":
        if sched.c_h is None or sched.n_basis is None:
            raise ValueError("theoretical schedule needs c_h and n_basis")
        c_tmd = 2.0 * (1.0 + 4.0 * np.log(2.0 * sched.horizon * sched.n_basis / sched.delta))
        eta = 1.0 / (c_tmd * sched.c_h * np.sqrt(sched.horizon))
        g = eta * beta / (eta + beta)
    else:
        raise ValueError(f"unknown schedule kind {sched.kind!r}")
    return float(min(g, beta))


class TailAverager:
    """Mean over the trailing window {ceil(t/2), ..., t} of a stream.

    Push sample t, query in O(1); keeps the ~t/2 pending samples so the
    window start can advance exactly (memory n * t / 2 for vector streams).
    """

    def __init__(self):
        self._pending = deque()
        self._sum = None
        self._count = 0
        self._start = 1  # index of the oldest sample in the window

    def push(self, value):
        value = np.array(value, dtype=float, copy=True)
        self._pending.append(value)
        self._sum = value if self._sum is None else self._sum + value
        self._count += 1
        t = self._start + len(self._pending) - 1
        want = (t + 1) // 2  # ceil(t/2)
        while self._start < want:
            dropped = self._pending.popleft()
            self._sum = self._sum - dropped
            self._start += 1

    def mean(self):
        if not self._pending:
            raise NoSamplesYet("tail average queried before any sample")
        return self._sum / len(self._pending)

    def __len__(self):
        return len(self._pending)


@dataclass
class GradientSample:
    """One batch of the single-shot density/gradient estimator."""

    rho_hat: np.ndarray
    g_tilde_diag: np.ndarray
    batch_size: int
    sqrtX_z: np.ndarray          # (N_g, n) vectors f^{1/2}(H) z
    z: np.ndarray                # (N_g, n) the Gaussian batch
    solves: np.ndarray = None    # (N_g, n_solves, n) resolvent applications
    solver_iterations_max: int = 0
    wall_time: float = 0.0


@dataclass
class MDState:
    """Mirror-descent state: the (c, v) Hamiltonian plus tail accumulators."""

    H: EffectiveHamiltonian
    t: int
    beta: float
    mu: float
    C_ham: EffectiveHamiltonian
    interaction: FourierMultiplier
    density_tail: TailAverager = field(default_factory=TailAverager)
    single_particle_tail: TailAverager = field(default_factory=TailAverager)
    entropy_tail: TailAverager = field(default_factory=TailAverager)

    def tail_average_density(self):
        """Mean of rho_hat over the latter half of completed iterations."""
        return self.density_tail.mean()


def init_state(
    C_ham: EffectiveHamiltonian,
    interaction: FourierMultiplier,
    beta,
    mu,
    init="cbs",
) -> MDState:
    """Initial state: "half_identity" (H = 0, X = I/2) or "cbs" (H = C - mu I)."""
    if init == "half_identity":
        H0 = EffectiveHamiltonian(c=0.0, v=np.zeros(C_ham.grid.n), grid=C_ham.grid, kinetic=C_ham.kinetic)
    elif init == "cbs":
        H0 = EffectiveHamiltonian(c=1.0, v=C_ham.v - mu, grid=C_ham.grid, kinetic=C_ham.kinetic)
    else:
        raise ValueError(f"unknown init {init!r}")
    return MDState(H=H0, t=0, beta=float(beta), mu=float(mu), C_ham=C_ham, interaction=interaction)


def sample_gradient(
    state: MDState,
    P: PoleExpansion,
    cfg: SolverConfig,
    n_samples,
    seed,
    keep_solves=False,
) -> GradientSample:
    """Draw the iteration's Gaussian batch and estimate density and gradient.

    rho_hat is the batch mean of (f_beta^{1/2}(H_t) z)^{.2}; the Hartree
    gradient diagonal is V rho_hat.  Uses substream (seed, iteration, j) with
    iteration = state.t + 1 so runs are reproducible and the gold standard
    can replay the identical vectors.
    """
    n = state.H.grid.n
    z = rngmod.gradient_batch(seed, state.t + 1, n, n_samples)
    t0 = time.perf_counter()
    y, solves, info = contour_matvec(state.H, P, z, cfg, return_solves=True)
    wall = time.perf_counter() - t0
    rho_hat = np.mean(y * y, axis=0)
    g_tilde = apply_multiplier(state.interaction, rho_hat)
    return GradientSample(
        rho_hat=rho_hat,
        g_tilde_diag=g_tilde,
        batch_size=n_samples,
        sqrtX_z=y,
        z=z,
        solves=solves if keep_solves else None,
        solver_iterations_max=int(info.iterations.max()) if len(info.iterations) else 0,
        wall_time=wall,
    )


def md_update(state: MDState, sample: GradientSample, gamma_t) -> MDState:
    """One Hamiltonian-form mirror step; mutates and returns the state.

    c' = (1 - gamma/beta) c + gamma/beta, and
    v' = (1 - gamma/beta) v + gamma/beta (u + V rho_hat - mu).
    """
    if not 0.0 < gamma_t <= state.beta:
        raise StepTooLarge(f"gamma_t = {gamma_t} outside (0, beta = {state.beta}]")
    a = gamma_t / state.beta
    H = state.H
    c_new = (1.0 - a) * H.c + a
    v_new = (1.0 - a) * H.v + a * (state.C_ham.v + sample.g_tilde_diag - state.mu)
    state.H = EffectiveHamiltonian(c=c_new, v=v_new, grid=H.grid, kinetic=H.kinetic)
    state.t += 1
    return state


@dataclass
class ObjectiveEstimate:
    single_particle: float
    hartree: float
    entropy: float
    electrons: float


def estimate_objective(
    state: MDState,
    sample: GradientSample,
    P_entropy: PoleExpansion,
    cfg: SolverConfig,
) -> ObjectiveEstimate:
    """Per-iteration objective pieces, recycling the sample's contour solves.

    single_particle: batch mean of y^T C y with y = f^{1/2}(H) z (estimates
    Tr[C X]).  entropy: batch mean of z^T [f log f (H) + reflected term] z,
    reweighting the retained solves (no extra linear systems).  hartree and
    electrons are quadratic/linear in the current tail-averaged density.
    """
    y = sample.sqrtX_z
    Cy = state.C_ham.apply(y)
    single = float(np.mean(np.einsum("bn,bn->b", y, Cy)))
    if sample.solves is None:
        raise ValueError("estimate_objective needs a sample with retained solves")
    coeffs = reflected_entropy_weights(P_entropy)
    ent_vec = np.einsum("s,bsn->bn", coeffs, sample.solves).real
    entropy = float(np.mean(np.einsum("bn,bn->b", sample.z, ent_vec)))
    rho_bar = state.tail_average_density()
    hartree = 0.5 * float(rho_bar @ apply_multiplier(state.interaction, rho_bar))
    electrons = float(rho_bar.sum())
    return ObjectiveEstimate(single_particle=single, hartree=hartree, entropy=entropy, electrons=electrons)


def _expansion_pair(state, n_poles, tail_eps):
    lo, hi = effective_interval(state.H, state.beta, tail_eps)
    pad = _INTERVAL_PAD * (hi - lo)
    P = build_contour(lo - pad, hi + pad, state.beta, n_poles, kind="sqrt_fd")
    P_ent = build_contour(lo - pad, hi + pad, state.beta, n_poles, kind="fd_log_fd")
    return P, P_ent


def run(
    state: MDState,
    schedule: ScheduleConfig,
    cfg: SolverConfig,
    n_samples,
    t_max,
    seed,
    n_poles=20,
    entropy_every=1,
    reference_density=None,
    tail_eps=1e-10,
    density_callback=None,
    early_stop=None,
):
    """Drive the mirror-descent loop, yielding one MetricsRecord per iteration.

    The pole expansion is rebuilt whenever the Hamiltonian's spectral bounds
    leave the current contour interval.  ``reference_density`` (if given)
    populates rel_density_error against the tail-averaged density.  The
    emitted energies are tail-averaged like the paper's evaluation protocol.
    ``early_stop`` = (window, rel_tol) optionally ends the loop once the
    tail-averaged free-energy density has moved by less than rel_tol over the
    last ``window`` iterations (off by default: fixed-horizon runs).
    """
    vol = state.H.grid.volume
    n = state.H.grid.n
    P, P_ent = _expansion_pair(state, n_poles, tail_eps)
    last_entropy = None
    fe_history = []
    for _ in range(t_max):
        lo, hi = effective_interval(state.H, state.beta, tail_eps)
        plo, phi = P.spectral_interval
        if lo < plo or hi > phi:
            P, P_ent = _expansion_pair(state, n_poles, tail_eps)
        gamma = step_size(schedule, state.t, state.beta)
        want_entropy = (state.t % entropy_every) == 0
        sample = sample_gradient(state, P, cfg, n_samples, seed, keep_solves=True)
        state.density_tail.push(sample.rho_hat)
        est = estimate_objective(state, sample, P_ent, cfg)
        state.single_particle_tail.push(est.single_particle)
        if want_entropy:
            state.entropy_tail.push(est.entropy)
            last_entropy = state.entropy_tail.mean()
        sp_bar = state.single_particle_tail.mean()
        ent_bar = last_entropy if last_entropy is not None else est.entropy
        free_energy = sp_bar + est.hartree + ent_bar / state.beta
        rho_bar = state.tail_average_density()
        rel_err = None
        if reference_density is not None:
            rel_err = float(
                np.linalg.norm(rho_bar - reference_density) / np.linalg.norm(reference_density)
            )
        md_update(state, sample, gamma)
        if density_callback is not None:
            density_callback(state.t, rho_bar)
        yield MetricsRecord(
            t=state.t,
            free_energy_per_volume=float(free_energy / vol),
            free_energy_per_basis=float(free_energy / n),
            hartree_energy_per_volume=float(est.hartree / vol),
            electrons_per_volume=float(est.electrons / vol),
            rel_density_error=rel_err,
            step_gamma=float(gamma),
            wall_time_matvec_batch=float(sample.wall_time),
            solver_iterations_max=int(sample.solver_iterations_max),
        )
        if early_stop is not None:
            window, rel_tol = early_stop
            fe_history.append(free_energy / vol)
            if len(fe_history) >= 2 * window:
                moved = abs(fe_history[-1] - fe_history[-1 - window])
                if moved < rel_tol * max(abs(fe_history[-1]), 1e-300):
                    return
