"""Reproducible experiment runner: configuration, wiring, persistence and reports.

A run is a pure function of its :class:`ExperimentConfig`; the two seeds
(``seed_data`` for truth, operators and noise, ``seed_algo`` for the initial
ensemble and algorithm randomness) are mandatory.
"""

import csv
import dataclasses
import io
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eki import PERTURB_MODES, EkiConfig, run_eki, tikhonov_oracle
from .eks import EksConfig, SamplerDivergence, run_sampler
from .enkf import StateSpaceModel, run_twin
from .ensemble import ensemble_spread
from .models import (DarcyModel, DarcyProblem, InverseProblem, LinearModel, SinusoidModel,
                     default_observation_points, synthesize_data)
from .priors import (GaussianMeasure, build_kl_basis, high_mode_energy_fraction, particle_rng,
                     sample_coefficients, save_field)
from .records import RunRecord, format_float, relative_error
from .regularization import alpha_schedule, run_regularized, run_teki
from .sqrt_filter import MeanCovState, SqrtConfig, run_sqrt

log = logging.getLogger(__name__)

__all__ = [
    "MODELS",
    "ALGORITHMS",
    "OUTPUT_ROOT_ENV",
    "ConfigError",
    "ExperimentConfig",
    "validate_config",
    "load_config",
    "build_problem",
    "run_experiment",
    "ComparisonReport",
    "compare",
    "SweepReport",
    "sweep",
]

MODELS = ("linear", "sinusoid", "darcy")
ALGORITHMS = ("eki", "teki", "eki-reg", "eks", "leks", "sqrt", "enkf-twin")
OUTPUT_ROOT_ENV = "EKINV_OUTPUT_ROOT"

# stream tags under seed_data
_TRUTH, _OPERATOR_A, _OPERATOR_B = 101, 102, 103


class ConfigError(ValueError):
    """Invalid experiment configuration; ``errors`` lists every violated field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class ExperimentConfig:
    """All knobs of one experiment.

    Prior: ``N`` grid side, ``tau``, ``alpha``, ``M`` modes (default N) and the
    truth regularity ``truth_alpha``. ``amplitude`` scales every KL eigenvalue;
    ``None`` selects ``tau^(2 alpha - 2)``, which keeps the marginal variance of
    prior and truth fields comparable across alpha.

    Data: noise variance ``gamma`` (``Gamma = gamma I``), ``K`` observations
    (a perfect square for Darcy), Darcy ``source`` value, sinusoid ``eps``.

    Algorithm: ensemble size ``J``, step ``h``/iterations ``n_max`` (discrete
    schemes), ``dt``/``T`` (samplers), TEKI ``lam``, discrepancy ``vartheta``,
    gain-inflation schedule ``alpha_kind``/``alpha_c``/``alpha_a``/``alpha_r``,
    localization ``gamma_loc`` and metric scale ``D`` (``D = D * I``).
    """

    model: str
    algorithm: str
    seed_data: int
    seed_algo: int
    N: int = 16
    tau: float = 3.0
    alpha: float = 2.0
    M: int = None
    truth_alpha: float = 4.0
    amplitude: float = None
    gamma: float = 0.01
    K: int = 64
    source: float = 1.0
    eps: float = 0.1
    J: int = 50
    h: float = 1.0
    n_max: int = 24
    perturb_mode: str = "fresh-per-iteration"
    dt: float = 0.005
    T: float = 1.0
    lam: float = 1.0
    vartheta: float = None
    alpha_kind: str = "constant"
    alpha_c: float = 1.0
    alpha_a: float = 1.0
    alpha_r: float = 1.0
    gamma_loc: float = 1.0
    D: float = 1.0
    output_dir: str = None
    name: str = None

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, data):
        errors = validate_config(data)
        if errors:
            raise ConfigError(errors)
        return cls(**data)

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        return type(self).from_dict({**self.to_dict(), **changes})

    @property
    def modes(self):
        return self.N if self.M is None else self.M

    @property
    def label(self):
        return self.name or f"{self.algorithm}-{self.model}"


_INT_FIELDS = {"seed_data", "seed_algo", "N", "M", "K", "J", "n_max"}
_STR_FIELDS = {"model", "algorithm", "perturb_mode", "alpha_kind", "output_dir", "name"}


def validate_config(data):
    """Every problem with a raw config mapping, as a list of messages (empty if valid)."""
    errors = []
    if not isinstance(data, dict):
        return [f"configuration must be a JSON object, got {type(data).__name__}"]
    known = set(ExperimentConfig.field_names())
    for key in sorted(set(data) - known):
        errors.append(f"{key}: unknown field")
    for key in ("model", "algorithm", "seed_data", "seed_algo"):
        if data.get(key) is None:
            errors.append(f"{key}: required")

    bad = {e.split(":")[0] for e in errors}

    def get(key):
        if key in data and key not in bad:
            return data[key]
        f = ExperimentConfig.__dataclass_fields__[key]
        return None if f.default is dataclasses.MISSING else f.default

    for key in sorted(known & set(data)):
        v = data[key]
        if v is None:
            continue
        if key in _INT_FIELDS and (isinstance(v, bool) or not isinstance(v, int)):
            errors.append(f"{key}: must be an integer, got {v!r}")
        elif key in _STR_FIELDS and not isinstance(v, str):
            errors.append(f"{key}: must be a string, got {v!r}")
        elif key not in _INT_FIELDS | _STR_FIELDS and (
                isinstance(v, bool) or not isinstance(v, (int, float))):
            errors.append(f"{key}: must be a number, got {v!r}")
        else:
            continue
        bad.add(key)

    def check(key, ok, msg):
        if key not in bad and not ok(get(key)):
            errors.append(f"{key}: {msg}, got {get(key)!r}")

    model, algo = get("model"), get("algorithm")
    check("model", lambda v: v is None or v in MODELS, f"must be one of {MODELS}")
    check("algorithm", lambda v: v is None or v in ALGORITHMS, f"must be one of {ALGORITHMS}")
    check("N", lambda v: v >= 4, "must be >= 4")
    check("K", lambda v: v >= 1, "must be positive")
    N, K = get("N"), get("K")
    if model == "darcy" and not bad & {"N", "K"}:
        side = math.isqrt(K) if K > 0 else 0
        if N < 8:
            errors.append(f"N: Darcy needs N >= 8, got {N}")
        if side * side != K:
            errors.append(f"K: Darcy observations form a square lattice, {K} is not a perfect square")
        elif side > N:
            errors.append(f"K: {side} points per side do not fit on an N={N} grid")
    if "N" not in bad:
        check("M", lambda v: v is None or 1 <= v <= N * N, f"must lie in [1, N^2 = {N * N}]")
    for key in ("tau", "gamma", "h", "dt", "lam", "gamma_loc", "D", "alpha_c", "alpha_a", "alpha_r"):
        check(key, lambda v: v > 0, "must be positive")
    for key in ("alpha", "truth_alpha"):
        check(key, lambda v: v > 1, "must exceed 1")
    check("amplitude", lambda v: v is None or v > 0, "must be positive")
    check("J", lambda v: v >= 2, "must be >= 2")
    check("n_max", lambda v: v >= 0, "must be >= 0")
    check("T", lambda v: v >= 0, "must be >= 0")
    check("vartheta", lambda v: v is None or 0 < v < 1, "must lie in (0, 1)")
    check("perturb_mode", lambda v: v in PERTURB_MODES, f"must be one of {PERTURB_MODES}")
    check("alpha_kind", lambda v: v in ("constant", "geometric"), "must be 'constant' or 'geometric'")
    if algo in ("sqrt", "enkf-twin") and model is not None and model != "linear":
        errors.append(f"model: {algo} needs the linear model, got {model!r}")
    return errors


def load_config(path, overrides=None):
    """Read a JSON config file and apply ``overrides`` on top."""
    data = json.loads(Path(path).read_text())
    if overrides:
        data = {**data, **overrides}
    return data


# -- wiring --------------------------------------------------------------------

@dataclass
class Setup:
    problem: InverseProblem
    truth: np.ndarray
    basis: object
    measure: GaussianMeasure


def _amplitude(cfg, alpha):
    return cfg.tau ** (2 * alpha - 2) if cfg.amplitude is None else cfg.amplitude


def build_problem(cfg):
    """Prior basis, truth, forward model and synthetic data for a config."""
    basis = build_kl_basis(cfg.N, cfg.tau, cfg.alpha, cfg.modes, _amplitude(cfg, cfg.alpha))
    truth_basis = build_kl_basis(cfg.N, cfg.tau, cfg.truth_alpha, cfg.modes,
                                 _amplitude(cfg, cfg.truth_alpha))
    d = basis.M
    truth = np.sqrt(truth_basis.eigenvalues) * particle_rng(cfg.seed_data, _TRUTH).standard_normal(d)
    if cfg.model == "linear":
        A = particle_rng(cfg.seed_data, _OPERATOR_A).standard_normal((cfg.K, d))
        model = LinearModel(A)
    elif cfg.model == "sinusoid":
        A = particle_rng(cfg.seed_data, _OPERATOR_A).standard_normal((cfg.K, d))
        B = particle_rng(cfg.seed_data, _OPERATOR_B).standard_normal((cfg.K, d))
        model = SinusoidModel(A, B, cfg.eps)
    else:
        pts = default_observation_points(cfg.N, math.isqrt(cfg.K))
        model = DarcyModel(DarcyProblem(cfg.N, source=cfg.source, observation_points=pts), basis)
    gamma = cfg.gamma * np.eye(model.output_dim)
    y, eta = synthesize_data(model, truth, gamma, cfg.seed_data)
    problem = InverseProblem(model, y, gamma, prior_cov=np.diag(basis.eigenvalues), noise=eta)
    return Setup(problem, truth, basis, GaussianMeasure(basis))


def _resolve_output_dir(cfg):
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    if cfg.output_dir is None:
        return root / f"{cfg.label}-d{cfg.seed_data}-a{cfg.seed_algo}"
    out = Path(cfg.output_dir)
    return out if out.is_absolute() else root / out


def _run_algorithm(cfg, setup):
    problem, truth = setup.problem, setup.truth
    ens = sample_coefficients(setup.measure, cfg.J, cfg.seed_algo)
    eki_cfg = EkiConfig(cfg.h, cfg.n_max, cfg.perturb_mode, cfg.seed_algo)
    algo = cfg.algorithm
    if algo == "eki":
        return run_eki(problem, ens, eki_cfg, truth, cfg.vartheta)
    if algo == "teki":
        return run_teki(problem, ens, eki_cfg, cfg.lam, truth=truth, vartheta=cfg.vartheta)
    if algo == "eki-reg":
        def schedule(n):
            return alpha_schedule(cfg.alpha_kind, n, c=cfg.alpha_c, a=cfg.alpha_a, r=cfg.alpha_r)
        return run_regularized(problem, ens, eki_cfg, schedule, truth, cfg.vartheta)
    if algo in ("eks", "leks"):
        eks_cfg = EksConfig(dt=cfg.dt, T=cfg.T, J=cfg.J, gamma_loc=cfg.gamma_loc,
                            D=cfg.D * np.eye(ens.d), seed=cfg.seed_algo,
                            variant="eks" if algo == "eks" else "localized-eks", lam=cfg.lam)
        try:
            return run_sampler(problem, eks_cfg, ensemble=ens, truth=truth).record
        except (SamplerDivergence, np.linalg.LinAlgError) as exc:
            return RunRecord(status="diverged", message=str(exc), noise_level=problem.noise_level,
                             whitened_noise_level=problem.whitened_noise_level)
    if algo == "sqrt":
        return _run_sqrt(cfg, setup)
    return _run_twin(cfg, setup)


def _run_sqrt(cfg, setup):
    problem = setup.problem
    scfg = SqrtConfig(inflation_sigma=problem.prior_cov,
                      alpha_schedule=lambda n: 1.0 / (n + 1),
                      step_schedule=lambda n: cfg.h * (n + 1),
                      n_max=cfg.n_max)
    tr = run_sqrt(problem.model.A, problem.gamma, problem.y,
                  MeanCovState(np.zeros(problem.model.input_dim), problem.prior_cov), scfg)
    record = RunRecord(noise_level=problem.noise_level,
                       whitened_noise_level=problem.whitened_noise_level)
    for n, s in enumerate(tr.states):
        record.append(step=n, rel_error=relative_error(setup.truth, s.m),
                      data_misfit=problem.misfit(s.m), spread=float(np.trace(s.C)))
    record.reconstruction = tr.states[-1].m
    record.extras["loss_trace"] = tr
    return record


def _run_twin(cfg, setup):
    problem = setup.problem
    ssm = StateSpaceModel(psi=lambda U: 0.9 * U, sigma=0.1 * problem.prior_cov,
                          H=problem.model.A, gamma=problem.gamma,
                          m0=np.zeros(problem.model.input_dim), c0=problem.prior_cov)
    res = run_twin(ssm, cfg.J, cfg.n_max, cfg.seed_data, cfg.seed_algo)
    record = RunRecord(noise_level=problem.noise_level,
                       whitened_noise_level=problem.whitened_noise_level)
    L = np.linalg.cholesky(problem.gamma)
    for n in range(len(res.means)):
        misfit = None
        if n > 0:
            r = np.linalg.solve(L, res.observations[n - 1] - ssm.H @ res.means[n])
            misfit = float(r @ r)
        record.append(step=n, rel_error=relative_error(res.truth[n], res.means[n]),
                      data_misfit=misfit, spread=res.spreads[n])
    record.reconstruction = res.means[-1]
    return record


def _oracle_error(cfg, setup, record):
    """Distance of the final EKI mean to its mean-field Tikhonov limit (linear, fresh noise)."""
    if (cfg.model != "linear" or cfg.algorithm != "eki" or cfg.perturb_mode != "fresh-per-iteration"
            or record.n_steps < 1 or record.diverged):
        return None
    p = setup.problem
    target = tikhonov_oracle(p.model.A, p.prior_cov, p.gamma / (record.n_steps * cfg.h), p.y,
                             np.zeros(p.model.input_dim))
    return float(np.linalg.norm(record.reconstruction - target))


def run_experiment(cfg, write=True):
    """Run one experiment; returns its RunRecord and (optionally) writes outputs.

    Files written to the output directory: ``record.csv``, ``header.json``,
    ``reconstruction.csv``, ``config.json`` and, for Darcy, the truth and
    reconstructed log-permeability grids plus ``observations.json``.
    """
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    t0 = time.perf_counter()
    setup = build_problem(cfg)
    record = _run_algorithm(cfg, setup)
    wall = time.perf_counter() - t0

    record.config = cfg.to_dict()
    record.wall_time = wall
    loss_trace = record.extras.pop("loss_trace", None)
    if record.reconstruction is not None:
        recon = np.asarray(record.reconstruction)
        record.extras["final_rel_error"] = relative_error(setup.truth, recon)
        record.extras["final_misfit"] = setup.problem.misfit(recon)
        record.extras["high_mode_energy"] = float(high_mode_energy_fraction(recon))
    record.extras["oracle_error"] = _oracle_error(cfg, setup, record)
    if record.final_ensemble is not None:
        record.extras["final_spread"] = ensemble_spread(record.final_ensemble)

    if write:
        out = _resolve_output_dir(cfg)
        record.save(out)
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        if loss_trace is not None:
            loss_trace.write_csv(out / "loss_trace.csv")
        if cfg.model == "darcy" and record.reconstruction is not None:
            meta = {"tau": cfg.tau, "M": cfg.modes, "seed": cfg.seed_data}
            save_field(out / "truth_field.csv", setup.basis.field(setup.truth), cfg.N,
                       alpha=cfg.truth_alpha, **meta)
            meta["seed"] = cfg.seed_algo
            save_field(out / "reconstruction_field.csv", setup.basis.field(record.reconstruction),
                       cfg.N, alpha=cfg.alpha, **meta)
            pts = setup.problem.model.problem.observation_points
            (out / "observations.json").write_text(json.dumps({"N": cfg.N, "indices": pts.tolist()}) + "\n")
        record.extras["output_dir"] = str(out)
    return record


# -- reports -------------------------------------------------------------------

def _overfitting(record, rise=0.1):
    """Misfit under the noise level while the relative error climbs off its minimum."""
    noise = record.whitened_noise_level
    rel = record.column("rel_error")
    mis = record.column("data_misfit")
    if noise is None or len(rel) < 2 or np.all(np.isnan(rel)):
        return False
    below = np.sqrt(mis[-1]) < noise
    rising = rel[-1] > (1.0 + rise) * np.nanmin(rel)
    return bool(below and rising)


def _iterations_to_noise(record):
    noise = record.whitened_noise_level
    if noise is None:
        return None
    hits = np.nonzero(np.sqrt(record.column("data_misfit")) <= noise)[0]
    return int(hits[0]) if hits.size else None


@dataclass
class ComparisonReport:
    labels: list
    steps: np.ndarray
    rel_error: np.ndarray   # (n_steps, n_records), NaN-padded
    misfit: np.ndarray
    summary: list
    pairwise: list
    noise_level: float = None
    whitened_noise_level: float = None

    def overfitting(self):
        return {s["label"]: s["overfitting"] for s in self.summary}

    def table_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step"] + [f"{lab}:{m}" for lab in self.labels for m in ("rel_error", "data_misfit")])
        for i, s in enumerate(self.steps):
            row = [int(s)]
            for k in range(len(self.labels)):
                row += [_fmt_nan(self.rel_error[i, k]), _fmt_nan(self.misfit[i, k])]
            w.writerow(row)
        return buf.getvalue()

    def summary_csv(self):
        return _dicts_to_csv(self.summary)

    def pairwise_csv(self):
        return _dicts_to_csv(self.pairwise)

    def write(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "comparison.csv").write_text(self.table_csv())
        (directory / "summary.csv").write_text(self.summary_csv())
        (directory / "pairwise.csv").write_text(self.pairwise_csv())
        (directory / "comparison.txt").write_text(self.to_text())
        return directory

    def to_text(self):
        lines = []
        if self.whitened_noise_level is not None:
            w = self.whitened_noise_level
            lines.append(f"noise level |eta| = {self.noise_level:.6g}   "
                         f"whitened |Gamma^-1/2 eta| = {w:.6g}   (squared {w * w:.6g}, the misfit scale)")
        head = f"{'run':<20} {'final rel err':>14} {'min misfit':>12} {'iters->noise':>13}  overfitting"
        lines += [head, "-" * len(head)]
        for s in self.summary:
            it = "-" if s["iterations_to_noise"] is None else str(s["iterations_to_noise"])
            lines.append(f"{s['label']:<20} {_num(s['final_rel_error']):>14} "
                         f"{_num(s['min_misfit']):>12} {it:>13}  {'YES' if s['overfitting'] else 'no'}")
        if self.pairwise:
            lines += ["", f"{'pair':<36} {'d final rel err':>16} {'d final misfit':>15}"]
            for p in self.pairwise:
                lines.append(f"{p['a'] + ' vs ' + p['b']:<36} {_num(p['diff_final_rel_error']):>16} "
                             f"{_num(p['diff_final_misfit']):>15}")
        return "\n".join(lines) + "\n"


def _num(x):
    return "-" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6g}"


def _fmt_nan(x):
    return "" if np.isnan(x) else format_float(x)


def _dicts_to_csv(rows):
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: format_float(v) if isinstance(v, float) else ("" if v is None else v)
                        for k, v in r.items()})
    return buf.getvalue()


def _last(col):
    ok = col[~np.isnan(col)]
    return float(ok[-1]) if ok.size else None


def compare(records, labels=None):
    """Align metric traces of 2+ runs on the same model and data and summarize them."""
    records = list(records)
    if len(records) < 2:
        raise ValueError("compare needs at least two records")
    keys = [(r.config.get("model"), r.config.get("seed_data")) for r in records]
    if len(set(keys)) > 1:
        raise ValueError(
            "records come from different problems (model, seed_data) = "
            f"{sorted(set(keys), key=str)}; metrics are only comparable on identical data"
        )
    if labels is None:
        base = [r.config.get("name") or r.config.get("algorithm") or f"run{i}"
                for i, r in enumerate(records)]
        labels = [b if base.count(b) == 1 else f"{b}#{i}" for i, b in enumerate(base)]
    n = max(len(r.rows) for r in records)
    rel = np.full((n, len(records)), np.nan)
    mis = np.full((n, len(records)), np.nan)
    for k, r in enumerate(records):
        rel[: len(r.rows), k] = r.column("rel_error")
        mis[: len(r.rows), k] = r.column("data_misfit")
    summary = []
    for k, (lab, r) in enumerate(zip(labels, records)):
        m = mis[:, k]
        summary.append({
            "label": lab,
            "final_rel_error": _last(rel[:, k]),
            "final_misfit": _last(m),
            "min_misfit": float(np.nanmin(m)) if np.any(~np.isnan(m)) else None,
            "iterations_to_noise": _iterations_to_noise(r),
            "overfitting": _overfitting(r),
            "status": r.status,
        })
    pairwise = []
    for i, j in itertools.combinations(range(len(records)), 2):
        a, b = summary[i], summary[j]
        pairwise.append({
            "a": a["label"], "b": b["label"],
            "diff_final_rel_error": _diff(a["final_rel_error"], b["final_rel_error"]),
            "diff_final_misfit": _diff(a["final_misfit"], b["final_misfit"]),
            "max_abs_diff_rel_error": float(np.nanmax(np.abs(rel[:, i] - rel[:, j]), initial=0.0)),
            "max_abs_diff_misfit": float(np.nanmax(np.abs(mis[:, i] - mis[:, j]), initial=0.0)),
        })
    return ComparisonReport(labels, np.arange(n), rel, mis, summary, pairwise,
                            records[0].noise_level, records[0].whitened_noise_level)


def _diff(a, b):
    return None if a is None or b is None else a - b


@dataclass
class SweepReport:
    parameter: str
    values: list
    records: list = field(repr=False)

    def rows(self):
        out = []
        for v, r in zip(self.values, self.records):
            ex = r.extras
            out.append({
                self.parameter: v,
                "final_rel_error": ex.get("final_rel_error"),
                "final_misfit": ex.get("final_misfit"),
                "oracle_error": ex.get("oracle_error"),
                "high_mode_energy": ex.get("high_mode_energy"),
                "final_spread": ex.get("final_spread"),
                "status": r.status,
            })
        return out

    def column(self, name):
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows()], dtype=float)

    def to_csv(self):
        return _dicts_to_csv(self.rows())


def _sweep_one(args):
    data, write = args
    return run_experiment(ExperimentConfig.from_dict(data), write=write)


def sweep(cfg, parameter, values, write=True, workers=1):
    """Run ``cfg`` once per value of ``parameter`` with the seeds held fixed."""
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    if parameter not in ExperimentConfig.field_names() or parameter in ("output_dir", "name"):
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    base = cfg.to_dict()
    root = _resolve_output_dir(cfg) / f"sweep-{parameter}"
    jobs = []
    for v in values:
        data = {**base, parameter: v, "name": f"{cfg.label}-{parameter}={v}"}
        data["output_dir"] = str(root / f"{parameter}={v}")
        errors = validate_config(data)
        if errors:
            raise ConfigError(errors)
        jobs.append((data, write))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_sweep_one, jobs))
    else:
        records = [_sweep_one(j) for j in jobs]
    report = SweepReport(parameter, values, records)
    if write:
        root.mkdir(parents=True, exist_ok=True)
        (root / "sweep.csv").write_text(report.to_csv())
    return report
