import json
import math

import numpy as np
import pytest

from addpoisson import model as modelfile
from addpoisson.cli import main
from addpoisson.empirical import extract_joint_events
from addpoisson.evaluation import kl_to_truth
from addpoisson.io import read_events, read_intensity, write_events


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def mixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("mix")
    assert run("simulate", "--kind", "mixture", "--dims", 2, "--components", 10, "--count", 3000,
               "--duration", 10, "--bins", 40, "--seed", 5, "--out", out) == 0
    return out


class TestSimulate:
    def test_zero_constant_rate(self, tmp_path):
        assert run("simulate", "--kind", "constant", "--level", 0, "--seed", 1, "--out", tmp_path) == 0
        streams, T = read_events(tmp_path / "events.csv")
        assert T == 10.0 and sum(len(s) for s in streams) == 0
        np.testing.assert_array_equal(read_intensity(tmp_path / "truth_1.csv"), 0.0)

    def test_sinusoidal_truth(self, tmp_path):
        assert run("simulate", "--kind", "sinusoidal", "--amplitude", 50, "--frequency", 2 * math.pi,
                   "--duration", 2, "--bins", 8, "--seed", 3, "--out", tmp_path) == 0
        truth = read_intensity(tmp_path / "truth_1.csv")
        centers = (np.arange(8) + 0.5) * 2 / 8
        np.testing.assert_allclose(truth, 25 * (1 + np.sin(2 * math.pi * centers)), rtol=1e-12)

    def test_mixture_outputs(self, mixture_dir):
        names = sorted(p.name for p in mixture_dir.iterdir())
        assert names == ["events.csv", "truth_1-2.csv", "truth_1.csv", "truth_2.csv"]
        streams, _ = read_events(mixture_dir / "events.csv")
        assert [len(s) for s in streams] == [3000, 3000]

    def test_same_seed_same_file(self, tmp_path):
        for d in ("a", "b"):
            run("simulate", "--kind", "bernoulli", "--dims", 2, "--duration", 50, "--seed", 9,
                "--out", tmp_path / d)
        assert (tmp_path / "a/events.csv").read_bytes() == (tmp_path / "b/events.csv").read_bytes()

    def test_missing_level(self, tmp_path):
        assert run("simulate", "--kind", "constant", "--seed", 1, "--out", tmp_path) == 2

    def test_seed_required(self, tmp_path):
        with pytest.raises(SystemExit):
            run("simulate", "--kind", "constant", "--level", 1, "--out", tmp_path)


class TestFit:
    def test_order_zero_rejected(self, mixture_dir, tmp_path):
        assert run("fit", "--input", mixture_dir / "events.csv", "--order", 0, "--bins", 10,
                   "--out", tmp_path / "m") == 2

    def test_missing_input(self, tmp_path):
        assert run("fit", "--input", tmp_path / "nope.csv", "--order", 1, "--bins", 10,
                   "--out", tmp_path / "m") == 2

    def test_byte_identical_refits(self, mixture_dir, tmp_path):
        for name in ("a", "b"):
            assert run("fit", "--input", mixture_dir / "events.csv", "--order", 2, "--bins", 20,
                       "--bandwidth", 0.4, "--out", tmp_path / name) == 0
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_json_format_loads(self, mixture_dir, tmp_path, capsys):
        assert run("fit", "--input", mixture_dir / "events.csv", "--order", 1, "--bins", 10,
                   "--format", "json", "--out", tmp_path / "m.json") == 0
        assert capsys.readouterr().out.startswith("converged")
        assert json.loads((tmp_path / "m.json").read_text())["k"] == 1
        assert modelfile.load(tmp_path / "m.json").k == 1


class TestEval:
    def test_kl_requires_truth(self, mixture_dir, tmp_path):
        run("fit", "--input", mixture_dir / "events.csv", "--order", 1, "--bins", 40,
            "--out", tmp_path / "m")
        assert run("eval", "--model", tmp_path / "m", "--subset", "1", "--metric", "kl") == 2

    def test_full_order_reproduces_empirical(self, mixture_dir, tmp_path, capsys):
        ev = mixture_dir / "events.csv"
        run("fit", "--input", ev, "--order", 2, "--bins", 20, "--bandwidth", 0.5, "--tol", 1e-10,
            "--out", tmp_path / "m")
        capsys.readouterr()
        assert run("eval", "--model", tmp_path / "m", "--test", ev, "--subset", "1,2",
                   "--metric", "empirical-kl") == 0
        assert float(capsys.readouterr().out.strip().split(",")[-1]) < 1e-8

    def test_constant_nll_closed_form(self, tmp_path, capsys):
        # a single stream fitted with one bin gives the flat rate N/T
        write_events(tmp_path / "e.csv", [np.linspace(0.5, 9.5, 20)], 10.0)
        run("fit", "--input", tmp_path / "e.csv", "--order", 1, "--bins", 1, "--out", tmp_path / "m")
        capsys.readouterr()
        assert run("eval", "--model", tmp_path / "m", "--test", tmp_path / "e.csv", "--subset", "1",
                   "--metric", "nll", "--format", "json", "--append", tmp_path / "r.csv") == 0
        value = json.loads(capsys.readouterr().out)["value"]
        assert value == pytest.approx(20 - 20 * math.log(2.0), rel=1e-12)
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "model,subset,metric,value" and len(lines) == 2

    def test_second_order_wins_on_dense_joint(self, tmp_path, capsys):
        run("simulate", "--kind", "mixture", "--dims", 2, "--components", 20, "--count", 100000,
            "--duration", 10, "--bins", 100, "--seed", 6, "--out", tmp_path / "sim")
        ev = tmp_path / "sim" / "events.csv"
        scores = {}
        for k in (1, 2):
            run("fit", "--input", ev, "--order", k, "--bins", 100, "--bandwidth", 0.1,
                "--out", tmp_path / f"m{k}")
            capsys.readouterr()
            run("eval", "--model", tmp_path / f"m{k}", "--truth", tmp_path / "sim" / "truth_1-2.csv",
                "--subset", "1,2", "--metric", "kl")
            scores[k] = float(capsys.readouterr().out.strip().split(",")[-1])
        assert scores[2] < scores[1]


class TestGridsearch:
    def test_single_cell_table(self, mixture_dir, tmp_path, capsys):
        assert run("gridsearch", "--input", mixture_dir / "events.csv", "--h-grid", "0.5",
                   "--M-grid", "10", "--order", 1, "--out", tmp_path / "g.csv") == 0
        assert capsys.readouterr().out.strip() == "--bandwidth 0.5 --bins 10"
        rows = (tmp_path / "g.csv").read_text().splitlines()
        assert rows[0] == "h,M,score" and len(rows) == 2

    def test_folds_json(self, mixture_dir, tmp_path):
        assert run("gridsearch", "--input", mixture_dir / "events.csv", "--h-grid", "0.3,0.6",
                   "--M-grid", "10,20", "--order", 1, "--folds", 2, "--format", "json",
                   "--out", tmp_path / "g.json") == 0
        doc = json.loads((tmp_path / "g.json").read_text())
        assert len(doc["table"]) == 4
        assert min(doc["table"], key=lambda r: r["score"])["score"] == min(r["score"] for r in doc["table"])

    def test_bad_grid(self, mixture_dir, tmp_path):
        assert run("gridsearch", "--input", mixture_dir / "events.csv", "--h-grid", "-1",
                   "--M-grid", "10", "--order", 1, "--out", tmp_path / "g.csv") == 2


class TestIntensity:
    def test_uniform_model_is_flat(self, tmp_path):
        write_events(tmp_path / "e.csv", [np.linspace(0.25, 9.75, 20)], 10.0)
        run("fit", "--input", tmp_path / "e.csv", "--order", 1, "--bins", 1, "--out", tmp_path / "m")
        assert run("intensity", "--model", tmp_path / "m", "--subset", "1", "--out", tmp_path / "i.csv") == 0
        np.testing.assert_allclose(read_intensity(tmp_path / "i.csv"), [2.0], rtol=1e-12)

    def test_empty_subset_warns(self, tmp_path, capsys):
        write_events(tmp_path / "e.csv", [np.array([1.0, 2.0]), np.array([6.0])], 10.0)
        run("fit", "--input", tmp_path / "e.csv", "--order", 2, "--bins", 5, "--bandwidth", 1.0,
            "--out", tmp_path / "m")
        capsys.readouterr()
        assert run("intensity", "--model", tmp_path / "m", "--subset", "1,2", "--out", tmp_path / "i.csv") == 0
        assert "no events" in capsys.readouterr().err
        np.testing.assert_array_equal(read_intensity(tmp_path / "i.csv"), 0.0)

    def test_unknown_subset(self, tmp_path):
        write_events(tmp_path / "e.csv", [np.array([1.0, 2.0])], 10.0)
        run("fit", "--input", tmp_path / "e.csv", "--order", 1, "--bins", 5, "--out", tmp_path / "m")
        assert run("intensity", "--model", tmp_path / "m", "--subset", "3", "--out", tmp_path / "i.csv") == 2

    def test_export_matches_in_process_kl(self, mixture_dir, tmp_path, capsys):
        run("fit", "--input", mixture_dir / "events.csv", "--order", 2, "--bins", 40,
            "--bandwidth", 0.3, "--out", tmp_path / "m")
        run("intensity", "--model", tmp_path / "m", "--subset", "1", "--out", tmp_path / "i.csv")
        capsys.readouterr()
        run("eval", "--model", tmp_path / "m", "--truth", mixture_dir / "truth_1.csv",
            "--subset", "1", "--metric", "kl")
        cli_value = float(capsys.readouterr().out.strip().split(",")[-1])
        exported = read_intensity(tmp_path / "i.csv")
        assert kl_to_truth(exported, read_intensity(mixture_dir / "truth_1.csv")) == cli_value
        m = modelfile.load(tmp_path / "m")
        np.testing.assert_array_equal(exported, m.intensity(1)[0])
