"""Run configuration: one JSON document, schema-checked, with paper defaults."""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

from .errors import ConfigError, EvenGridSize, OddPoleCount

_SCHEMA = {
    "type": "object",
    "properties": {
        "grid": {
            "type": "object",
            "properties": {
                "dims": {"type": "integer", "minimum": 1},
                "sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "lengths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
            "required": ["dims", "sizes", "lengths"],
            "additionalProperties": False,
        },
        "physics": {
            "type": "object",
            "properties": {
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "mu": {"type": "number"},
                "alpha": {"type": "number", "minimum": 0},
                "zeta": {"type": "number", "exclusiveMinimum": 0},
                "n_target": {"type": ["number", "null"]},
            },
            "additionalProperties": False,
        },
        "schedule": {
            "type": "object",
            "properties": {
                "gamma0": {"type": "number", "exclusiveMinimum": 0},
                "decay_tau": {"type": "number", "exclusiveMinimum": 0},
                "kind": {"enum": ["exp_decay", "constant", "theoretical"]},
                "clamp_step": {"type": "boolean"},
                "delta": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "estimator": {
            "type": "object",
            "properties": {
                "n_samples": {"type": "integer", "minimum": 1},
                "n_poles": {"type": "integer", "minimum": 4},
                "solver_tol": {"type": "number", "exclusiveMinimum": 0},
                "solver_max_iter": {"type": "integer", "minimum": 1},
                "tail_eps": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "run": {
            "type": "object",
            "properties": {
                "t_max": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer"},
                "init": {"enum": ["cbs", "half_identity"]},
                "dense_validation": {"type": "boolean"},
                "entropy_every": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "directory": {"type": "string"},
                "density_dump_every": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "scf": {
            "type": "object",
            "properties": {
                "theta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "mu_scan": {
            "type": "object",
            "properties": {
                "K": {"type": "integer", "minimum": 1},
                "per_point_iterations": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "contour_check": {
            "type": "object",
            "properties": {
                "pole_counts": {"type": "array", "items": {"type": "integer", "minimum": 4}},
                "betas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "normalize_interval": {"type": ["array", "null"], "items": {"type": "number"}},
                "n_samples": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "bench": {
            "type": "object",
            "properties": {
                "repeats": {"type": "integer", "minimum": 1},
                "stride": {"type": "integer", "minimum": 1},
                "auto_poles_target": {"type": ["number", "null"]},
            },
            "additionalProperties": False,
        },
    },
    "required": ["grid"],
    "additionalProperties": False,
}


@dataclass
class RunConfig:
    """Resolved experiment configuration (defaults follow the reference runs)."""

    dims: int = 1
    sizes: tuple = (101,)
    lengths: tuple = (100.0,)
    beta: float = 10.0
    mu: float = 0.0
    alpha: float = 0.5
    zeta: float = 1.0
    n_target: float = None
    gamma0: float = 1.0
    decay_tau: float = 1000.0
    schedule_kind: str = "exp_decay"
    clamp_step: bool = True
    delta: float = 0.1
    n_samples: int = 20
    n_poles: int = 20
    solver_tol: float = 1e-5
    solver_max_iter: int = 1000
    tail_eps: float = 1e-10
    t_max: int = 5000
    seed: int = 0
    init: str = "cbs"
    dense_validation: bool = False
    entropy_every: int = 1
    out_dir: str = "out"
    density_dump_every: int = 0
    scf_theta: float = 0.5
    scf_tol: float = 1e-10
    scf_max_iter: int = 10_000
    mu_scan_K: int = 64
    mu_scan_iterations: int = 500
    contour_pole_counts: tuple = tuple(range(4, 41, 4))
    contour_betas: tuple = (1.0, 10.0)
    contour_normalize: tuple = (-2.0, 6.0)
    contour_samples: int = 10
    bench_repeats: int = 5
    bench_stride: int = 20
    bench_auto_poles_target: float = None

    def to_dict(self):
        return asdict(self)


def load_config(path) -> RunConfig:
    """Parse, schema-check, and semantically validate a JSON config file."""
    with open(path) as fh:
        raw = json.load(fh)
    return resolve_config(raw)


def resolve_config(raw: dict) -> RunConfig:
    try:
        jsonschema.validate(raw, _SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation: {exc.message}") from exc
    g = raw["grid"]
    phys = raw.get("physics", {})
    sched = raw.get("schedule", {})
    est = raw.get("estimator", {})
    run = raw.get("run", {})
    out = raw.get("output", {})
    scf = raw.get("scf", {})
    mus = raw.get("mu_scan", {})
    cc = raw.get("contour_check", {})
    bench = raw.get("bench", {})
    cfg = RunConfig(
        dims=g["dims"],
        sizes=tuple(g["sizes"]),
        lengths=tuple(float(x) for x in g["lengths"]),
        beta=phys.get("beta", 10.0),
        mu=phys.get("mu", 0.0),
        alpha=phys.get("alpha", 0.5),
        zeta=phys.get("zeta", 1.0),
        n_target=phys.get("n_target"),
        gamma0=sched.get("gamma0", 1.0),
        decay_tau=sched.get("decay_tau", 1000.0),
        schedule_kind=sched.get("kind", "exp_decay"),
        clamp_step=sched.get("clamp_step", True),
        delta=sched.get("delta", 0.1),
        n_samples=est.get("n_samples", 20),
        n_poles=est.get("n_poles", 20),
        solver_tol=est.get("solver_tol", 1e-5),
        solver_max_iter=est.get("solver_max_iter", 1000),
        tail_eps=est.get("tail_eps", 1e-10),
        t_max=run.get("t_max", 5000),
        seed=run.get("seed", 0),
        init=run.get("init", "cbs"),
        dense_validation=run.get("dense_validation", False),
        entropy_every=run.get("entropy_every", 1),
        out_dir=out.get("directory", "out"),
        density_dump_every=out.get("density_dump_every", 0),
        scf_theta=scf.get("theta", 0.5),
        scf_tol=scf.get("tol", 1e-10),
        scf_max_iter=scf.get("max_iter", 10_000),
        mu_scan_K=mus.get("K", 64),
        mu_scan_iterations=mus.get("per_point_iterations", 500),
        contour_pole_counts=tuple(cc.get("pole_counts", range(4, 41, 4))),
        contour_betas=tuple(cc.get("betas", (1.0, 10.0))),
        contour_normalize=tuple(cc["normalize_interval"]) if cc.get("normalize_interval") else (-2.0, 6.0),
        contour_samples=cc.get("n_samples", 10),
        bench_repeats=bench.get("repeats", 5),
        bench_stride=bench.get("stride", 20),
        bench_auto_poles_target=bench.get("auto_poles_target"),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if len(cfg.sizes) != cfg.dims or len(cfg.lengths) != cfg.dims:
        raise ConfigError(f"grid needs {cfg.dims} sizes and lengths")
    for s in cfg.sizes:
        if s % 2 == 0:
            raise EvenGridSize(f"grid size {s} must be odd")
    if cfg.n_poles % 4 != 0:
        raise OddPoleCount(
            f"n_poles = {cfg.n_poles}: the contour generates conjugate +/- quadruplets, "
            "so the pole count must be a multiple of 4"
        )
    for npole in cfg.contour_pole_counts:
        if npole % 4 != 0:
            raise OddPoleCount(f"contour_check pole count {npole} must be a multiple of 4")
    if cfg.schedule_kind == "constant" and cfg.gamma0 > cfg.beta and not cfg.clamp_step:
        raise ConfigError(
            f"constant schedule with gamma0 = {cfg.gamma0} > beta = {cfg.beta} "
            "requires schedule.clamp_step = true"
        )
    if cfg.init not in ("cbs", "half_identity"):
        raise ConfigError(f"unknown init {cfg.init!r}")
