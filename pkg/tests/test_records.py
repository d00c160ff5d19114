import csv
from pathlib import Path

import numpy as np
import pytest

from ekinv.eki import EkiConfig, run_eki
from ekinv.ensemble import Ensemble
from ekinv.harness import ExperimentConfig, run_experiment
from ekinv.records import COLUMNS, RunRecord, format_float, iterate, relative_error

from helpers import linear_problem

GOLDEN = Path(__file__).parent / "data" / "golden_linear_record.csv"
GOLDEN_CONFIG = dict(model="linear", algorithm="eki", seed_data=0, seed_algo=0, N=8, M=4, K=3, J=5, n_max=3)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestFormatting:
    def test_round_trip_exact(self):
        for x in (0.1, 1 / 3, np.pi * 1e-300, 2.0**60, -7.25):
            assert float(format_float(x)) == x

    def test_blank_and_int(self):
        assert format_float(None) == ""
        assert format_float(np.int64(3)) == "3"

    def test_relative_error(self):
        assert relative_error([3.0, 4.0], [3.0, 4.0]) == 0.0
        assert relative_error([3.0, 4.0], [0.0, 0.0]) == 1.0
        assert relative_error([2.0, 0.0], [2.0, 1.0]) == 0.5


class TestRecord:
    def test_unknown_column(self):
        with pytest.raises(KeyError):
            RunRecord().append(step=0, loss=1.0)

    def test_save_load_round_trip(self, tmp_path):
        prob, truth = linear_problem()
        rec = run_eki(prob, np.random.default_rng(0).normal(size=(6, 8)), EkiConfig(n_max=4, seed=2), truth)
        rec.save(tmp_path)
        back = RunRecord.load(tmp_path)
        assert back.rows == rec.rows
        np.testing.assert_array_equal(back.reconstruction, rec.reconstruction)
        assert back.noise_level == rec.noise_level and back.status == "ok"
        assert back.config == rec.config

    def test_load_rejects_foreign_csv(self, tmp_path):
        (tmp_path / "record.csv").write_text("a,b\n1,2\n")
        (tmp_path / "header.json").write_text("{}")
        with pytest.raises(ValueError):
            RunRecord.load(tmp_path)

    def test_iterate_records_divergence(self):
        prob, truth = linear_problem()
        ens = np.random.default_rng(1).normal(size=(4, 8))

        def step(e, n):
            if n == 2:
                raise np.linalg.LinAlgError("singular")
            return e

        rec = iterate(prob, Ensemble(ens), step, 5, truth)
        assert rec.diverged and rec.n_steps == 2 and "singular" in rec.message

    def test_iterate_bound(self):
        prob, _ = linear_problem()
        rec = iterate(prob, Ensemble(np.eye(8)[:3]), lambda e, n: Ensemble(e.particles * 1e13), 3)
        assert rec.diverged and rec.n_steps == 0


class TestGolden:
    def test_schema_and_values(self, tmp_path):
        cfg = ExperimentConfig.from_dict(dict(GOLDEN_CONFIG, output_dir=str(tmp_path)))
        run_experiment(cfg)
        got, want = read_rows(tmp_path / "record.csv"), read_rows(GOLDEN)
        assert tuple(got[0]) == COLUMNS == tuple(want[0])
        assert len(got) == len(want) == GOLDEN_CONFIG["n_max"] + 2
        for g, w in zip(got[1:], want[1:]):
            assert g[0] == w[0] and g[1] == w[1] == "" and g[5] == w[5] == ""
            # 12 digits survive a change of BLAS; the file itself is bitwise stable on one machine
            np.testing.assert_allclose([float(x) for x in g[2:5]], [float(x) for x in w[2:5]], rtol=1e-12)

    def test_outputs_present(self, tmp_path):
        cfg = ExperimentConfig.from_dict(dict(GOLDEN_CONFIG, output_dir=str(tmp_path)))
        run_experiment(cfg)
        assert {p.name for p in tmp_path.iterdir()} >= {"record.csv", "header.json", "reconstruction.csv",
                                                        "config.json"}
