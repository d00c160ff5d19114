import json

import numpy as np
import pytest

from ekinv.harness import (OUTPUT_ROOT_ENV, ConfigError, ExperimentConfig, build_problem, compare,
                           run_experiment, sweep, validate_config)
from ekinv.models import synthesize_data
from ekinv.records import RunRecord

from helpers import pinned_darcy_records

TINY = dict(model="linear", algorithm="eki", seed_data=1, seed_algo=2, N=8, M=6, K=5, J=8, n_max=4)


def tiny(**kw):
    return ExperimentConfig.from_dict({**TINY, **kw})


class TestValidation:
    def test_valid(self):
        assert validate_config(TINY) == []

    def test_every_violation_listed(self):
        errors = validate_config({"model": "plasma", "algorithm": "eki", "seed_data": 0, "J": 1,
                                  "gamma": -1.0, "tau": "big", "colour": "red"})
        fields = {e.split(":")[0] for e in errors}
        assert fields == {"model", "seed_algo", "J", "gamma", "tau", "colour"}

    def test_seeds_mandatory(self):
        errors = validate_config({"model": "linear", "algorithm": "eki"})
        assert {e.split(":")[0] for e in errors} == {"seed_data", "seed_algo"}

    @pytest.mark.parametrize("patch, field", [
        (dict(model="darcy", K=50), "K"),
        (dict(model="darcy", N=6, K=4), "N"),
        (dict(model="darcy", N=8, K=81), "K"),
        (dict(algorithm="sqrt", model="sinusoid"), "model"),
        (dict(M=65), "M"),
        (dict(vartheta=1.0), "vartheta"),
        (dict(perturb_mode="always"), "perturb_mode"),
        (dict(n_max=2.5), "n_max"),
        (dict(seed_data=True), "seed_data"),
    ])
    def test_semantic_checks(self, patch, field):
        errors = validate_config({**TINY, **patch})
        assert errors and all(e.startswith(field) for e in errors)

    def test_from_dict_raises_with_list(self):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict({**TINY, "J": 0, "h": 0})
        assert len(exc.value.errors) == 2

    def test_round_trip(self):
        cfg = tiny(name="x")
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
        assert cfg.replace(J=9).J == 9


class TestRun:
    def test_zero_iterations(self):
        rec = run_experiment(tiny(n_max=0), write=False)
        assert len(rec.rows) == 1 and rec.rows[0]["step"] == 0

    def test_noise_level_is_exact(self):
        cfg = tiny()
        setup = build_problem(cfg)
        _, eta = synthesize_data(setup.problem.model, setup.truth, setup.problem.gamma, cfg.seed_data)
        rec = run_experiment(cfg, write=False)
        assert rec.noise_level == np.linalg.norm(eta)

    def test_seed_roles(self):
        a = build_problem(tiny())
        b = build_problem(tiny(seed_algo=99))
        c = build_problem(tiny(seed_data=99))
        np.testing.assert_array_equal(a.problem.y, b.problem.y)
        assert np.any(a.problem.y != c.problem.y)

    @pytest.mark.parametrize("algorithm", ["eki", "teki", "eki-reg", "eks", "leks", "sqrt", "enkf-twin"])
    def test_bitwise_determinism(self, algorithm, tmp_path):
        extra = dict(T=0.2, dt=0.01) if algorithm in ("eks", "leks") else {}
        for d in ("a", "b"):
            run_experiment(tiny(algorithm=algorithm, output_dir=str(tmp_path / d), **extra))
        for name in ("record.csv", "reconstruction.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_darcy_outputs(self, tmp_path):
        rec = run_experiment(dict(model="darcy", algorithm="eki", seed_data=0, seed_algo=0, N=8, K=16,
                                  J=6, n_max=2, output_dir=str(tmp_path)))
        names = {p.name for p in tmp_path.iterdir()}
        assert {"truth_field.csv", "reconstruction_field.csv", "observations.json"} <= names
        assert np.loadtxt(tmp_path / "truth_field.csv", delimiter=",").shape == (8, 8)
        assert len(json.loads((tmp_path / "observations.json").read_text())["indices"]) == 16
        assert rec.extras["output_dir"] == str(tmp_path)

    def test_sqrt_writes_loss_trace(self, tmp_path):
        run_experiment(tiny(algorithm="sqrt", output_dir=str(tmp_path)))
        assert (tmp_path / "loss_trace.csv").read_text().startswith("n,loss_gap,mean_error_sq")

    def test_output_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
        rec = run_experiment(tiny(output_dir="rel"))
        assert rec.extras["output_dir"] == str(tmp_path / "rel")
        rec = run_experiment(tiny())
        assert rec.extras["output_dir"].startswith(str(tmp_path))

    def test_reference_protocol(self):
        # 100x100 grid, 64 equidistant observations, gamma = 0.01, J = 50, 24 iterations
        cfg = ExperimentConfig.from_dict(dict(model="darcy", algorithm="eki", seed_data=0, seed_algo=0,
                                              N=100, K=64, J=50, n_max=24, gamma=0.01))
        setup = build_problem(cfg)
        assert setup.problem.model.problem.N == 100 and setup.problem.y.size == 64
        np.testing.assert_array_equal(setup.problem.gamma, 0.01 * np.eye(64))
        rec = run_experiment(cfg, write=False)
        assert rec.status == "ok" and len(rec.rows) == 25
        assert rec.extras["final_misfit"] < rec.rows[0]["data_misfit"]

    def test_divergence_is_recorded(self):
        rec = run_experiment(tiny(gamma=1e-300, J=3), write=False)
        assert rec.diverged and rec.message

    def test_sampler_divergence_is_recorded(self):
        rec = run_experiment(tiny(algorithm="eks", gamma=1e-300, dt=1e3, T=1e4), write=False)
        assert rec.diverged

    def test_saved_record_loads(self, tmp_path):
        rec = run_experiment(tiny(output_dir=str(tmp_path)))
        back = RunRecord.load(tmp_path)
        assert back.rows == rec.rows and back.config == rec.config


class TestCompare:
    def test_self_comparison(self):
        rec = run_experiment(tiny(), write=False)
        rep = compare([rec, rec])
        assert rep.labels == ["eki#0", "eki#1"]
        p = rep.pairwise[0]
        assert p["diff_final_rel_error"] == 0.0 and p["diff_final_misfit"] == 0.0
        assert p["max_abs_diff_rel_error"] == 0.0 and p["max_abs_diff_misfit"] == 0.0

    def test_three_records(self, tmp_path):
        recs = [run_experiment(tiny(algorithm=a), write=False) for a in ("eki", "teki", "eki-reg")]
        rep = compare(recs)
        assert len(rep.pairwise) == 3 and rep.labels == ["eki", "teki", "eki-reg"]
        rep.write(tmp_path)
        assert len((tmp_path / "pairwise.csv").read_text().splitlines()) == 4
        assert "eki-reg" in (tmp_path / "comparison.txt").read_text()
        header = (tmp_path / "comparison.csv").read_text().splitlines()[0]
        assert header.startswith("step,eki:rel_error,eki:data_misfit")

    def test_ragged_traces(self):
        a = run_experiment(tiny(n_max=2), write=False)
        b = run_experiment(tiny(n_max=5), write=False)
        rep = compare([a, b])
        assert rep.rel_error.shape == (6, 2) and np.isnan(rep.rel_error[5, 0])

    def test_mismatched_data_refused(self):
        a = run_experiment(tiny(), write=False)
        b = run_experiment(tiny(seed_data=5), write=False)
        with pytest.raises(ValueError, match="different problems"):
            compare([a, b])
        with pytest.raises(ValueError):
            compare([a])

    def test_overfitting_flags_eki_not_teki_on_pinned_darcy(self):
        eki, teki = pinned_darcy_records()
        flags = compare([eki, teki]).overfitting()
        assert flags == {"eki": True, "teki": False}

    def test_teki_tail_monotone_on_pinned_darcy(self):
        eki, teki = pinned_darcy_records()
        assert np.all(np.diff(teki.column("rel_error")[-5:]) <= 0)
        assert np.sqrt(eki.column("data_misfit")[-1]) < eki.whitened_noise_level


class TestSweep:
    def test_errors(self):
        with pytest.raises(ValueError):
            sweep(tiny(), "J", [], write=False)
        with pytest.raises(ValueError):
            sweep(tiny(), "colour", [1], write=False)
        with pytest.raises(ConfigError):
            sweep(tiny(), "J", [10, 1], write=False)

    def test_writes_csv(self, tmp_path):
        rep = sweep(tiny(output_dir=str(tmp_path)), "h", [0.5, 1.0])
        lines = (tmp_path / "sweep-h" / "sweep.csv").read_text().splitlines()
        assert lines[0].startswith("h,final_rel_error") and len(lines) == 3
        assert (tmp_path / "sweep-h" / "h=0.5" / "record.csv").exists()
        assert [r.config["h"] for r in rep.records] == [0.5, 1.0]

    def test_parallel_matches_serial(self):
        a = sweep(tiny(), "J", [5, 6], write=False)
        b = sweep(tiny(), "J", [5, 6], write=False, workers=2)
        assert [r.rows for r in a.records] == [r.rows for r in b.records]

    def test_ensemble_size_rate(self):
        Js = [10, 100, 1000, 10_000]
        base = dict(model="linear", algorithm="eki", seed_data=0, M=4, n_max=1)
        logs = [np.log10(sweep(dict(base, seed_algo=s), "J", Js, write=False).column("oracle_error"))
                for s in range(5)]
        slope = np.polyfit(np.log10(Js), np.mean(logs, axis=0), 1)[0]
        assert -0.7 <= slope <= -0.3

    def test_teki_lambda_smoothness(self):
        rep = sweep(dict(model="linear", algorithm="teki", seed_data=0, seed_algo=0), "lam", [0.1, 1.0, 10.0],
                    write=False)
        assert len(rep.records) == 3
        assert np.all(np.diff(rep.column("high_mode_energy")) < 0)
