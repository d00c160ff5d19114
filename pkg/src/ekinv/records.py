"""Per-iteration metric traces and their CSV/JSON persistence.

Every trace shares one fixed CSV schema, :data:`COLUMNS`:

``step``
    iteration index (discrete schemes) or time-step index (flows, samplers)
``time``
    continuous time for flows and samplers; blank for discrete schemes
``rel_error``
    ``||u_true - mean||_2 / ||u_true||_2``; blank when no truth is known
``data_misfit``
    ``||gamma^{-1/2} (y - G(mean))||^2`` (whitened, squared)
``spread``
    trace of the ensemble sample covariance
``kl``
    KL divergence of the ensemble Gaussian fit to a known Gaussian target;
    blank otherwise

Floats are written with 17 significant digits so that identical runs give
byte-identical files.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ensemble import ensemble_spread
from .models import DarcySolveError

log = logging.getLogger(__name__)

__all__ = ["COLUMNS", "RunRecord", "relative_error", "format_float", "iterate"]

COLUMNS = ("step", "time", "rel_error", "data_misfit", "spread", "kl")


def format_float(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _parse(x):
    if x == "":
        return None
    try:
        return int(x)
    except ValueError:
        return float(x)


def relative_error(u_true, u):
    u_true = np.asarray(u_true, dtype=float)
    return float(np.linalg.norm(u_true - u) / np.linalg.norm(u_true))


@dataclass
class RunRecord:
    """Metric trace of one run plus its final reconstruction and provenance."""

    rows: list = field(default_factory=list)
    reconstruction: np.ndarray = None
    noise_level: float = None
    whitened_noise_level: float = None
    config: dict = field(default_factory=dict)
    status: str = "ok"
    message: str = ""
    wall_time: float = None
    extras: dict = field(default_factory=dict)
    final_ensemble: object = field(default=None, repr=False, compare=False)

    def append(self, **values):
        unknown = set(values) - set(COLUMNS)
        if unknown:
            raise KeyError(f"unknown record columns {sorted(unknown)}")
        self.rows.append({c: values.get(c) for c in COLUMNS})

    def column(self, name):
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=float)

    @property
    def n_steps(self):
        """Executed steps; the trace has ``n_steps + 1`` rows including the initial state."""
        return len(self.rows) - 1

    @property
    def diverged(self):
        return self.status == "diverged"

    def header(self):
        return {
            "status": self.status,
            "message": self.message,
            "noise_level": self.noise_level,
            "whitened_noise_level": self.whitened_noise_level,
            "n_steps": self.n_steps,
            "wall_time": self.wall_time,
            "config": self.config,
            "extras": self.extras,
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow([format_float(r[c]) for c in COLUMNS])

    def save(self, directory):
        """Write ``record.csv``, ``header.json`` and ``reconstruction.csv``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.write_csv(directory / "record.csv")
        (directory / "header.json").write_text(
            json.dumps(self.header(), indent=2, sort_keys=True, default=_json_default) + "\n"
        )
        if self.reconstruction is not None:
            rec = np.atleast_2d(np.asarray(self.reconstruction, dtype=float))
            np.savetxt(directory / "reconstruction.csv", rec, delimiter=",", fmt="%.17g")
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        with open(directory / "record.csv", newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames) != COLUMNS:
                raise ValueError(f"{directory / 'record.csv'} does not follow the record schema")
            rows = [{c: _parse(r[c]) for c in COLUMNS} for r in reader]
        header = json.loads((directory / "header.json").read_text())
        rec_path = directory / "reconstruction.csv"
        reconstruction = None
        if rec_path.exists():
            reconstruction = np.loadtxt(rec_path, delimiter=",", ndmin=2)
            if reconstruction.shape[0] == 1:
                reconstruction = reconstruction[0]
        return cls(
            rows=rows,
            reconstruction=reconstruction,
            noise_level=header.get("noise_level"),
            whitened_noise_level=header.get("whitened_noise_level"),
            config=header.get("config", {}),
            status=header.get("status", "ok"),
            message=header.get("message", ""),
            wall_time=header.get("wall_time"),
            extras=header.get("extras", {}),
        )


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


DIVERGENCE_BOUND = 1e12


def iterate(problem, ens, step, n_max, truth=None, stop=None, config=None):
    """Drive ``ens = step(ens, n)`` for ``n = 0 .. n_max-1`` and trace metrics.

    Metrics are evaluated at the ensemble mean of the original (unaugmented)
    problem. ``stop(misfit_norm)`` receives the unsquared whitened misfit
    after each step and ends the run early when it returns True. Numerical
    failures end the run with ``status="diverged"`` instead of raising.
    """
    record = RunRecord(
        noise_level=problem.noise_level,
        whitened_noise_level=problem.whitened_noise_level,
        config=dict(config or {}),
    )

    def trace(n, e):
        mean = e.mean
        misfit = problem.misfit(mean)
        record.append(
            step=n,
            rel_error=None if truth is None else relative_error(truth, mean),
            data_misfit=misfit,
            spread=ensemble_spread(e),
        )
        return misfit

    trace(0, ens)
    for n in range(n_max):
        try:
            new = step(ens, n)
            U = new.particles
            if not np.all(np.isfinite(U)) or np.max(np.linalg.norm(U, axis=1)) > DIVERGENCE_BOUND:
                raise FloatingPointError(f"ensemble left the divergence bound at step {n + 1}")
            ens = new
            misfit = trace(n + 1, ens)
        except (np.linalg.LinAlgError, FloatingPointError, DarcySolveError) as exc:
            record.status = "diverged"
            record.message = str(exc)
            log.warning("run stopped at step %d: %s", n + 1, exc)
            break
        if stop is not None and stop(np.sqrt(misfit)):
            record.extras["stopped_at"] = n + 1
            break
    record.reconstruction = ens.mean
    record.extras.setdefault("final_spread", ensemble_spread(ens))
    record.final_ensemble = ens
    return record
