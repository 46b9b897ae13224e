import json

import numpy as np
import pytest

from netma import io as nio
from netma.cli import main
from netma.graph import PairSet
from netma.metrics import CandidatePredictions, average_predictions, predict_pairs
from netma.simulate import SimConfig, gen_network
from netma.rng import stream


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def toy(tmp_path):
    edges = tmp_path / "toy.tsv"
    edges.write_text("# nodes=3\n1\t2\n2\t3\n")
    cfg = write_json(tmp_path / "fit.json", {"m_candidates": 1, "k_folds": 2, "seed": 1, "max_iters": 30})
    return str(edges), cfg


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    root = tmp_path_factory.mktemp("sim")
    cfg = write_json(root / "sim.json", {"n": 40, "d0": [2], "avg_degree": 10.0, "m_candidates": 3,
                                         "k_folds": 3, "seed": 2, "max_iters": 40})
    assert main(["simulate", "--config", cfg, "--out", str(root / "data")]) == 0
    assert main(["fit", "--edges", str(root / "data" / "edges.tsv"), "--config",
                 str(root / "data" / "fit_config.json"), "--out", str(root / "fits")]) == 0
    return root


class TestFit:
    def test_toy_single_candidate(self, toy, tmp_path):
        edges, cfg = toy
        assert main(["fit", "--edges", edges, "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        table = nio.read_weight_table(tmp_path / "o" / "weights.csv")
        assert table["netma"] == {1: 1.0}
        assert sorted(p.name for p in (tmp_path / "o").glob("params_*")) == ["params_d1.txt"]

    def test_rerun_is_byte_identical(self, toy, tmp_path):
        edges, cfg = toy
        for name in ("a", "b"):
            assert main(["fit", "--edges", edges, "--config", cfg, "--out", str(tmp_path / name)]) == 0
        for f in ("weights.csv", "params_d1.txt", "partition.tsv", "qp.json", "manifest.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_four_layers(self, tmp_path):
        cfg = SimConfig(n=30, t_layers=4, d0=(1, 2, 2, 3), avg_degree=8.0, q_reps=1)
        layers, _ = gen_network(cfg, stream(0, "network", 0))
        paths = []
        for t, layer in enumerate(layers):
            paths.append(str(tmp_path / f"e{t}.tsv"))
            nio.write_edge_list(paths[-1], layer)
        fit_cfg = write_json(tmp_path / "f.json", {"m_candidates": 6, "k_folds": 5, "max_iters": 30})
        assert main(["fit", "--edges", ",".join(paths), "--config", fit_cfg, "--out", str(tmp_path / "o")]) == 0
        w = nio.read_weight_table(tmp_path / "o" / "weights.csv")["netma"]
        assert len(w) == 6 and abs(sum(w.values()) - 1) <= 1e-10
        assert json.loads((tmp_path / "o" / "manifest.json").read_text())["n_layers"] == 4

    def test_partition_from_simulate_is_used(self, simulated):
        got, folds = nio.read_partition(simulated / "fits" / "partition.tsv")
        orig, _ = nio.read_partition(simulated / "data" / "partition.tsv")
        assert got.psi2 == orig.psi2 and folds.k_folds == 3


class TestPredict:
    def test_matches_library_average(self, simulated, tmp_path):
        out = tmp_path / "pred.csv"
        assert main(["predict", "--fits", str(simulated / "fits"), "--pairs",
                     str(simulated / "data" / "pairs.tsv"), "--out", str(out)]) == 0
        manifest = json.loads((simulated / "fits" / "manifest.json").read_text())
        target = nio.read_pairs(simulated / "data" / "pairs.tsv")
        params = [nio.read_params(simulated / "fits" / f) for f in manifest["params"]]
        w = nio.read_weight_table(simulated / "fits" / "weights.csv")["netma"]
        vals = np.stack([predict_pairs(p, target, manifest["p"]) for p in params])
        ref = average_predictions(CandidatePredictions(target, vals, manifest["p"]),
                                  [w[d] for d in manifest["candidates"]])
        got = nio.read_predictions(out)
        for idx, (i, j) in enumerate(target.to_list()):
            assert abs(got[(i, j, 0)] - ref[0, idx]) <= 1e-12

    def test_vertex_weights_reproduce_candidate(self, simulated, tmp_path):
        wfile = tmp_path / "w.csv"
        nio.write_weight_table(wfile, [("netma", d, float(d == 2)) for d in (1, 2, 3)])
        out = tmp_path / "pred.csv"
        assert main(["predict", "--fits", str(simulated / "fits"), "--weights", str(wfile), "--pairs",
                     str(simulated / "data" / "pairs.tsv"), "--out", str(out)]) == 0
        target = nio.read_pairs(simulated / "data" / "pairs.tsv")
        p = json.loads((simulated / "fits" / "manifest.json").read_text())["p"]
        ref = predict_pairs(nio.read_params(simulated / "fits" / "params_d2.txt"), target, p)
        got = nio.read_predictions(out)
        np.testing.assert_array_equal([got[(i, j, 0)] for i, j in target.to_list()], ref[0])

    def test_empty_target_writes_header(self, simulated, tmp_path):
        empty = tmp_path / "none.tsv"
        nio.write_pairs(empty, PairSet.empty(40))
        out = tmp_path / "pred.csv"
        assert main(["predict", "--fits", str(simulated / "fits"), "--pairs", str(empty), "--out", str(out)]) == 0
        assert out.read_text().splitlines() == ["i,j,probability"]

    def test_missing_candidate_file(self, simulated, tmp_path):
        import shutil
        broken = tmp_path / "fits"
        shutil.copytree(simulated / "fits", broken)
        (broken / "params_d3.txt").unlink()
        assert main(["predict", "--fits", str(broken), "--out", str(tmp_path / "p.csv")]) == 3


class TestEvaluate:
    def test_round_trip(self, simulated, tmp_path):
        pred = tmp_path / "pred.csv"
        main(["predict", "--fits", str(simulated / "fits"), "--pairs", str(simulated / "data" / "pairs.tsv"),
              "--out", str(pred)])
        out = tmp_path / "m.csv"
        assert main(["evaluate", "--pred", str(pred), "--truth", str(simulated / "data" / "truth.tsv"),
                     "--out", str(out), "--label", "netma"]) == 0
        got = nio.read_metrics(out)
        assert {m for _, m in got} == {"auroc", "aupr", "mlogf", "mse", "relative_risk", "mse_truth"}
        assert 0 <= got[("netma", "auroc")][0] <= 1

    def test_missing_predictions(self, simulated, tmp_path):
        pred = tmp_path / "pred.csv"
        pred.write_text("i,j,probability\n1,2,0.5\n")
        assert main(["evaluate", "--pred", str(pred), "--truth", str(simulated / "data" / "truth.tsv"),
                     "--out", str(tmp_path / "m.csv")]) == 3


class TestExitCodes:
    def test_config_error(self, toy, tmp_path):
        edges, _ = toy
        bad = write_json(tmp_path / "bad.json", {"k_folds": 1})
        assert main(["fit", "--edges", edges, "--config", bad, "--out", str(tmp_path / "o")]) == 2
        unknown = write_json(tmp_path / "u.json", {"nodes": 3})
        assert main(["fit", "--edges", edges, "--config", unknown, "--out", str(tmp_path / "o")]) == 2

    def test_data_errors(self, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("1\tx\n")
        assert main(["fit", "--edges", str(bad), "--out", str(tmp_path / "o")]) == 3
        assert main(["fit", "--edges", str(tmp_path / "absent.tsv"), "--out", str(tmp_path / "o")]) == 3

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["fit"])
        assert info.value.code == 2


class TestExperiment:
    def test_single_replication_smoke(self, tmp_path):
        cfg = write_json(tmp_path / "e.json", {"n": 25, "d0": [2], "avg_degree": 6.0, "m_candidates": 2,
                                               "k_folds": 2, "q_reps": 1, "max_iters": 20})
        assert main(["experiment", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
        lines = (tmp_path / "r" / "results.csv").read_text().splitlines()
        assert lines[0] == "case,method,n,d0,m,metric,mean,stderr"
        assert {l.split(",")[1] for l in lines[1:]} >= {"oracle", "equal", "ecv", "netma"}
        manifest = json.loads((tmp_path / "r" / "manifest.json").read_text())
        assert manifest["replications"] == 1 and manifest["failed_replications"] == 0
