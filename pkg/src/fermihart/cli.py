"""Command-line harness: experiment recipes over the library modules.

Subcommands
-----------
run            stochastic mirror-descent experiment -> metrics CSV (+ sidecar)
scf            dense deterministic ground truth -> reference density dump
contour-check  pole-count sweep of matvec error vs the dense oracle
mu-scan        chemical-potential grid search
bench-matvec   wall-clock scaling of a batch of contour matvecs

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 validation failure.  FERMIHART_THREADS (or --threads) caps the FFT/BLAS
thread budget; it must be applied before numpy is first imported, so the
heavy imports happen inside main().
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_VALIDATION = 3

_THREAD_ENV_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_thread_budget(argv):
    threads = os.environ.get("FERMIHART_THREADS")
    if threads is None and "--threads" in argv:
        i = argv.index("--threads")
        if i + 1 < len(argv):
            threads = argv[i + 1]
    if threads:
        for var in _THREAD_ENV_VARS:
            os.environ.setdefault(var, str(threads))
    return int(threads) if threads else 1


def _build_parser():
    parser = argparse.ArgumentParser(prog="fermihart", description=__doc__.split("\n")[0])
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", type=str, default=None, help="override the output directory")
    parser.add_argument("--threads", type=int, default=None, help="thread budget (also FERMIHART_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("run", "run the stochastic mirror-descent experiment"),
        ("scf", "compute the dense SCF ground truth and reference density"),
        ("contour-check", "sweep pole counts and tabulate matvec error vs the dense oracle"),
        ("mu-scan", "grid-search the chemical potential for a target electron number"),
        ("bench-matvec", "time batches of contour matvecs"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", type=str, help="path to the JSON config")
        if name == "contour-check":
            p.add_argument("--assert", dest="do_assert", action="store_true",
                           help="exit 3 unless errors decrease and meet the threshold")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    threads = _apply_thread_budget(argv)
    args = _build_parser().parse_args(argv)

    from . import lattice
    from .errors import ConfigError, FermihartError, SolverError
    from .config import load_config

    lattice.set_fft_workers(threads)
    try:
        cfg = load_config(args.config)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out

    try:
        if args.command == "run":
            return _cmd_run(cfg)
        if args.command == "scf":
            return _cmd_scf(cfg)
        if args.command == "contour-check":
            return _cmd_contour_check(cfg, do_assert=args.do_assert)
        if args.command == "mu-scan":
            return _cmd_mu_scan(cfg)
        if args.command == "bench-matvec":
            return _cmd_bench(cfg)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except FermihartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _assemble(cfg):
    """Grid, external potential, interaction, and single-particle Hamiltonian."""
    from . import lattice, rng
    from .matfun import EffectiveHamiltonian

    grid = lattice.make_grid(cfg.dims, cfg.sizes, cfg.lengths)
    pot = lattice.background_potential(grid, cfg.zeta, cfg.alpha, rng.potential_seed(cfg.seed))
    interaction = lattice.yukawa_multiplier(grid, cfg.alpha)
    kinetic = lattice.kinetic_multiplier(grid)
    C_ham = EffectiveHamiltonian(c=1.0, v=pot.values, grid=grid, kinetic=kinetic)
    return grid, pot, interaction, C_ham


def _schedule(cfg, interaction, grid):
    from .lattice import interaction_row_norm
    from .mirror import ScheduleConfig

    c_h = None
    if cfg.schedule_kind == "theoretical":
        c_h = interaction_row_norm(grid, cfg.alpha)
    return ScheduleConfig(
        gamma0=cfg.gamma0,
        decay_tau=cfg.decay_tau,
        kind=cfg.schedule_kind,
        horizon=cfg.t_max,
        delta=cfg.delta,
        c_h=c_h,
        n_basis=grid.n,
    )


def _cmd_run(cfg) -> int:
    from . import mirror
    from .errors import ConfigError
    from .matfun import SolverConfig
    from .metrics import dump_density, load_density, write_metrics

    grid, pot, interaction, C_ham = _assemble(cfg)
    out = Path(cfg.out_dir)
    reference = None
    if cfg.dense_validation:
        ref_path = out / "scf_density"
        try:
            reference, ref_grid = load_density(ref_path)
        except FileNotFoundError:
            raise ConfigError(
                f"dense_validation needs {ref_path}.f64/.json (run the scf subcommand first)"
            )
        if ref_grid.sizes != grid.sizes:
            raise ConfigError("reference density grid does not match the run grid")
    state = mirror.init_state(C_ham, interaction, cfg.beta, cfg.mu, init=cfg.init)
    sched = _schedule(cfg, interaction, grid)
    solver = SolverConfig(tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)

    dumps = []

    def dump_cb(t, rho_bar):
        if cfg.density_dump_every and t % cfg.density_dump_every == 0:
            path = out / f"density_t{t:06d}"
            dump_density(rho_bar, grid, path)
            dumps.append(str(path))

    records = list(
        mirror.run(
            state,
            sched,
            solver,
            cfg.n_samples,
            cfg.t_max,
            cfg.seed,
            n_poles=cfg.n_poles,
            entropy_every=cfg.entropy_every,
            reference_density=reference,
            tail_eps=cfg.tail_eps,
            density_callback=dump_cb,
        )
    )
    write_metrics(records, out / "metrics.csv", config=cfg.to_dict())
    if records:
        dump_density(state.tail_average_density(), grid, out / "density_final")
    print(f"run complete: {len(records)} iterations -> {out / 'metrics.csv'}")
    if records and records[-1].rel_density_error is not None:
        print(f"final tail-averaged relative density error: {records[-1].rel_density_error:.4e}")
    return EXIT_OK


def _cmd_scf(cfg) -> int:
    from .metrics import dump_density
    from .scf import dense_scf

    grid, pot, interaction, C_ham = _assemble(cfg)
    result = dense_scf(
        C_ham, interaction, cfg.beta, cfg.mu,
        theta=cfg.scf_theta, tol=cfg.scf_tol, max_iter=cfg.scf_max_iter,
    )
    out = Path(cfg.out_dir)
    dump_density(result.rho_star, grid, out / "scf_density")
    summary = {
        "free_energy": result.free_energy,
        "hartree_energy": result.hartree_energy,
        "electrons": result.electrons,
        "iterations": result.iterations,
        "residual": result.residual,
        "beta": cfg.beta,
        "mu": cfg.mu,
    }
    with open(out / "scf_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(
        f"scf converged in {result.iterations} iterations, residual {result.residual:.3e}; "
        f"F = {result.free_energy:.10g}, N = {result.electrons:.6f}"
    )
    return EXIT_OK


def _cmd_contour_check(cfg, do_assert=False) -> int:
    import csv

    from .contour_check import contour_error_table

    grid, pot, interaction, C_ham = _assemble(cfg)
    table = contour_error_table(
        C_ham,
        betas=cfg.contour_betas,
        pole_counts=cfg.contour_pole_counts,
        normalize=cfg.contour_normalize,
        n_samples=cfg.contour_samples,
        seed=cfg.seed,
    )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "contour_check.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "n_poles", "median_rel_err", "max_rel_err"])
        for row in table:
            writer.writerow([row["beta"], row["n_poles"], repr(row["median_rel_err"]), repr(row["max_rel_err"])])
    print(f"contour check -> {path}")
    for row in table:
        print(f"  beta={row['beta']:<6g} N_p={row['n_poles']:>3d}  median_rel_err={row['median_rel_err']:.3e}")
    if do_assert:
        ok = True
        for beta in cfg.contour_betas:
            errs = [r["median_rel_err"] for r in table if r["beta"] == beta]
            if any(b >= a for a, b in zip(errs, errs[1:])):
                print(f"validation failure: error not strictly decreasing at beta={beta}", file=sys.stderr)
                ok = False
        byb = {(r["beta"], r["n_poles"]): r["median_rel_err"] for r in table}
        if (1.0, 20) in byb and byb[(1.0, 20)] > 1e-4:
            print(f"validation failure: beta=1 N_p=20 error {byb[(1.0, 20)]:.3e} > 1e-4", file=sys.stderr)
            ok = False
        if not ok:
            return EXIT_VALIDATION
    return EXIT_OK


def _cmd_mu_scan(cfg) -> int:
    import csv

    from . import chempot
    from .lattice import interaction_row_norm
    from .matfun import DENSE_CUTOFF

    grid, pot, interaction, C_ham = _assemble(cfg)
    n_target = cfg.n_target if cfg.n_target is not None else 0.5 * grid.n
    c_h = interaction_row_norm(grid, cfg.alpha)
    nu = n_target / grid.n
    bracket = chempot.mu_bracket(C_ham, cfg.beta, c_h, nu)
    if grid.n <= DENSE_CUTOFF:
        oracle = chempot.dense_oracle(
            C_ham, interaction, cfg.beta, theta=cfg.scf_theta, tol=cfg.scf_tol, max_iter=cfg.scf_max_iter
        )
    else:
        oracle = _stochastic_oracle(cfg, C_ham, interaction)
    scan = chempot.mu_scan(oracle, n_target, bracket, cfg.mu_scan_K)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mu_scan.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mu", "dual_value", "electrons", "ok"])
        for e in scan.evaluations:
            writer.writerow([repr(e.mu), repr(e.dual_value), repr(e.electrons), int(e.ok)])
    print(
        f"mu scan over [{bracket[0]:.6g}, {bracket[1]:.6g}] (K={cfg.mu_scan_K}): "
        f"best mu = {scan.best_mu:.6g}, electrons = {scan.best_electrons:.4f} (target {n_target})"
    )
    return EXIT_OK


def _stochastic_oracle(cfg, C_ham, interaction):
    import numpy as np

    from . import mirror, rng
    from .matfun import SolverConfig

    grid = C_ham.grid
    solver = SolverConfig(tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)

    def oracle(mu):
        state = mirror.init_state(C_ham, interaction, cfg.beta, mu, init=cfg.init)
        sched = _schedule(cfg, interaction, grid)
        seed_k = int(np.random.SeedSequence((cfg.seed, rng.STREAM_MUSCAN, hash(round(mu * 1e9)) & 0x7FFFFFFF)).generate_state(1)[0])
        last = None
        for rec in mirror.run(
            state, sched, solver, cfg.n_samples, cfg.mu_scan_iterations, seed_k,
            n_poles=cfg.n_poles, tail_eps=cfg.tail_eps,
        ):
            last = rec
        value = last.free_energy_per_volume * grid.volume - mu * last.electrons_per_volume * grid.volume
        return value, last.electrons_per_volume * grid.volume

    oracle.n_basis = grid.n
    return oracle


def _cmd_bench(cfg) -> int:
    import csv

    import numpy as np

    from . import rng
    from .matfun import SolverConfig, build_contour, contour_matvec, effective_interval, poles_for_tolerance

    grid, pot, interaction, C_ham = _assemble(cfg)
    solver = SolverConfig(tol=cfg.solver_tol, max_iter=cfg.solver_max_iter)
    lo, hi = effective_interval(C_ham, cfg.beta, cfg.tail_eps)
    n_poles = cfg.n_poles
    if cfg.bench_auto_poles_target:
        n_poles = poles_for_tolerance(lo, hi, cfg.beta, cfg.bench_auto_poles_target)
    P = build_contour(lo, hi, cfg.beta, n_poles)
    times = []
    iters = 0
    for rep in range(cfg.bench_repeats + 1):
        z = rng.gradient_batch(cfg.seed, rep + 1, grid.n, cfg.n_samples)
        t0 = time.perf_counter()
        _, _, info = contour_matvec(C_ham, P, z, solver, return_solves=True)
        dt = time.perf_counter() - t0
        iters = max(iters, int(info.iterations.max()))
        if rep > 0:  # first batch warms caches/plan setup
            times.append(dt)
    t_vec = float(np.mean(times))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bench_matvec.csv"
    header = ["n", "lengths", "beta", "n_samples", "n_poles", "t_vec_seconds", "t_vec_per_n", "solver_iterations_max"]
    row = [grid.n, "x".join(str(L) for L in grid.lengths), cfg.beta, cfg.n_samples, n_poles,
           repr(t_vec), repr(t_vec / grid.n), iters]
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(header)
        writer.writerow(row)
    print(f"T_vec = {t_vec:.4f} s (n={grid.n}, beta={cfg.beta}, N_p={n_poles}, max iters {iters})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
