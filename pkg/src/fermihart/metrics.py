"""Metrics records, CSV persistence, and density dumps."""

import csv
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .lattice import GridSpec, make_grid

_WALL_FIELDS = {"wall_time_matvec_batch"}


@dataclass
class MetricsRecord:
    """Per-iteration observables emitted by the mirror-descent loop."""

    t: int
    free_energy_per_volume: float
    free_energy_per_basis: float
    hartree_energy_per_volume: float
    electrons_per_volume: float
    rel_density_error: float
    step_gamma: float
    wall_time_matvec_batch: float
    solver_iterations_max: int


def _columns(include_rel_error):
    cols = [f.name for f in fields(MetricsRecord)]
    if not include_rel_error:
        cols.remove("rel_density_error")
    return cols


def write_metrics(records, path, config=None, version=None):
    """Write records as CSV; the header is exactly the field names.

    The rel_density_error column is present only when some record carries it.
    A JSON sidecar (same stem, .json) records the resolved config and code
    version for provenance when ``config`` is given.
    """
    records = list(records)
    path = Path(path)
    include_rel = any(r.rel_density_error is not None for r in records)
    cols = _columns(include_rel)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in records:
            d = asdict(r)
            writer.writerow([_fmt(d[c]) for c in cols])
    if config is not None:
        sidecar = {"config": config, "version": version or _package_version()}
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _package_version():
    from . import __version__

    return __version__


def read_metrics(path):
    """Parse a metrics CSV back into MetricsRecord objects (round-trips write)."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                MetricsRecord(
                    t=int(row["t"]),
                    free_energy_per_volume=float(row["free_energy_per_volume"]),
                    free_energy_per_basis=float(row["free_energy_per_basis"]),
                    hartree_energy_per_volume=float(row["hartree_energy_per_volume"]),
                    electrons_per_volume=float(row["electrons_per_volume"]),
                    rel_density_error=(
                        float(row["rel_density_error"])
                        if row.get("rel_density_error") not in (None, "")
                        else None
                    ),
                    step_gamma=float(row["step_gamma"]),
                    wall_time_matvec_batch=float(row["wall_time_matvec_batch"]),
                    solver_iterations_max=int(row["solver_iterations_max"]),
                )
            )
    return out


def dump_density(rho, grid: GridSpec, path):
    """Write a density vector: flat float64 binary + JSON header (+ CSV in 1D).

    The binary is row-major over the grid multi-index.  Writes ``path.f64``,
    ``path.json``, and for 1D grids ``path.csv``.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (grid.n,):
        raise ValueError(f"density must have shape ({grid.n},)")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rho.tofile(path.with_suffix(".f64"))
    header = {
        "dims": grid.dims,
        "sizes": list(grid.sizes),
        "lengths": list(grid.lengths),
        "dtype": "float64",
        "order": "row-major",
    }
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    if grid.dims == 1:
        with open(path.with_suffix(".csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "x", "rho"])
            dx = grid.lengths[0] / grid.sizes[0]
            for j, val in enumerate(rho):
                writer.writerow([j, repr(j * dx), repr(float(val))])


def load_density(path):
    """Read back a dumped density; returns (rho, GridSpec)."""
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        header = json.load(fh)
    grid = make_grid(header["dims"], header["sizes"], header["lengths"])
    rho = np.fromfile(path.with_suffix(".f64"), dtype=np.float64)
    if rho.shape != (grid.n,):
        raise ValueError(f"payload length {rho.size} does not match header sizes {grid.sizes}")
    return rho, grid
