import json

import numpy as np
import pytest

from netma import io as nio
from netma.errors import ConfigError, ParseError, ShapeError
from netma.graph import AdjacencyView, PairSet, assign_folds, enumerate_pairs, split_pairs
from netma.lsm import LsmParams
from netma.qp import QpDiagnostics, QpProblem
from netma.simulate import SimConfig, run_case


def random_graph(n, seed):
    rng = np.random.default_rng(seed)
    up = np.triu(rng.random((n, n)) < 0.3, 1).astype(float)
    return AdjacencyView(up + up.T)


class TestFormatting:
    def test_seventeen_digits_round_trip(self):
        for v in (0.1, 1 / 3, 1e-300, 2.0 ** 0.5, -7.25):
            assert float(nio.fmt(v)) == v
        assert nio.fmt(float("nan")) == "nan"


class TestEdgeLists:
    def test_round_trip(self, tmp_path):
        a = random_graph(15, 0)
        nio.write_edge_list(tmp_path / "e.tsv", a)
        assert nio.read_edge_list(tmp_path / "e.tsv") == a

    def test_isolated_trailing_nodes_kept(self, tmp_path):
        a = AdjacencyView.from_edges(6, PairSet.from_pairs(6, [(0, 1)]))
        nio.write_edge_list(tmp_path / "e.tsv", a)
        assert nio.read_edge_list(tmp_path / "e.tsv").n == 6

    def test_parse_error_has_line_number(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("# nodes=4\n1\t2\n3\tx\n")
        with pytest.raises(ParseError) as info:
            nio.read_edge_list(path)
        assert info.value.line == 3

    def test_out_of_range_and_self_loop(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("# nodes=3\n1\t4\n")
        with pytest.raises(ParseError):
            nio.read_edge_list(path)
        path.write_text("# nodes=3\n2\t2\n")
        with pytest.raises(ParseError):
            nio.read_edge_list(path)

    def test_layers_must_agree(self, tmp_path):
        nio.write_edge_list(tmp_path / "a.tsv", random_graph(5, 1))
        nio.write_edge_list(tmp_path / "b.tsv", random_graph(6, 2))
        with pytest.raises(ShapeError):
            nio.read_layers([tmp_path / "a.tsv", tmp_path / "b.tsv"])


class TestPartitions:
    def test_round_trip_with_folds(self, tmp_path):
        part = split_pairs(enumerate_pairs(12), (7, 3), 4)
        folds = assign_folds(part.psi1, 3, 5)
        nio.write_partition(tmp_path / "p.tsv", part, folds)
        got, got_folds = nio.read_partition(tmp_path / "p.tsv")
        assert got.psi1 == part.psi1 and got.psi2 == part.psi2
        np.testing.assert_array_equal(got_folds.labels, folds.labels)
        assert got_folds.k_folds == 3

    def test_round_trip_without_folds(self, tmp_path):
        part = split_pairs(enumerate_pairs(7), (7, 3), 1)
        nio.write_partition(tmp_path / "p.tsv", part)
        got, folds = nio.read_partition(tmp_path / "p.tsv")
        assert folds is None and got.psi2 == part.psi2

    def test_incomplete_partition(self, tmp_path):
        path = tmp_path / "p.tsv"
        path.write_text("# nodes=3\n1\t2\t1\n1\t3\t2\n")
        with pytest.raises(ParseError):
            nio.read_partition(path)

    def test_pairs_round_trip(self, tmp_path):
        ps = PairSet.from_pairs(9, [(0, 8), (2, 3), (4, 5)])
        nio.write_pairs(tmp_path / "x.tsv", ps)
        assert nio.read_pairs(tmp_path / "x.tsv") == ps


class TestParamsAndCovariates:
    def test_params_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        params = LsmParams(rng.normal(size=7), (rng.normal(size=(7, 3)), rng.normal(size=(7, 1))), 0.123456789)
        nio.write_params(tmp_path / "p.txt", params)
        assert nio.read_params(tmp_path / "p.txt") == params
        plain = LsmParams(rng.normal(size=4), (rng.normal(size=(4, 2)),))
        nio.write_params(tmp_path / "q.txt", plain)
        assert nio.read_params(tmp_path / "q.txt") == plain

    def test_truncated_params(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("alpha\n0.1,0.2\nbeta\nnone\nz,1,1\n0.5\n")
        with pytest.raises(ParseError):
            nio.read_params(path)

    def test_covariates_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        x = np.triu(rng.uniform(size=(6, 6)), 1)
        x = x + x.T
        nio.write_covariates(tmp_path / "x.tsv", x)
        np.testing.assert_array_equal(nio.read_covariates(tmp_path / "x.tsv"), x)


class TestTables:
    def test_weight_table(self, tmp_path):
        rows = [("netma", 1, 0.25), ("netma", 2, 0.75), ("ecv", 1, 0.0), ("ecv", 2, 1.0)]
        nio.write_weight_table(tmp_path / "w.csv", rows)
        got = nio.read_weight_table(tmp_path / "w.csv")
        assert got == {"netma": {1: 0.25, 2: 0.75}, "ecv": {1: 0.0, 2: 1.0}}
        assert (tmp_path / "w.csv").read_text().splitlines()[0] == "method,candidate_dim,mean_weight"

    def test_predictions(self, tmp_path):
        ps = PairSet.from_pairs(5, [(0, 1), (2, 4)])
        vals = np.array([[0.1, 1 / 3], [0.5, 0.9]])
        nio.write_predictions(tmp_path / "p.csv", ps, vals, with_layer=True)
        got = nio.read_predictions(tmp_path / "p.csv")
        assert got[(2, 4, 0)] == 1 / 3 and got[(0, 1, 1)] == 0.5
        nio.write_predictions(tmp_path / "q.csv", ps, vals[:1], with_layer=False)
        assert (tmp_path / "q.csv").read_text().splitlines()[0] == "i,j,probability"

    def test_truth(self, tmp_path):
        ps = PairSet.from_pairs(4, [(0, 3), (1, 2)])
        nio.write_truth(tmp_path / "t.tsv", ps, np.array([[1, 0]]), np.array([[0.7, 0.2]]))
        got = nio.read_truth(tmp_path / "t.tsv")
        assert got == {(0, 3, 0): (1, 0.7), (1, 2, 0): (0, 0.2)}

    def test_bad_truth_label(self, tmp_path):
        path = tmp_path / "t.tsv"
        path.write_text("1\t2\t1\t3\n")
        with pytest.raises(ParseError):
            nio.read_truth(path)

    def test_metrics(self, tmp_path):
        nio.write_metrics(tmp_path / "m.csv", [("netma", "auroc", 0.8, 0.01), ("netma", "mse", 0.1, float("nan"))])
        got = nio.read_metrics(tmp_path / "m.csv")
        assert got[("netma", "auroc")] == (0.8, 0.01)

    def test_qp_dump(self, tmp_path):
        qp = QpProblem([[2.0, 0.5], [0.5, 1.0]], [1.0, 0.3])
        nio.write_qp(tmp_path / "qp.json", qp, QpDiagnostics(3, 0.0, -0.1, "apg"), [0.4, 0.6])
        got = nio.read_qp(tmp_path / "qp.json")
        np.testing.assert_array_equal(got.h_matrix, qp.h_matrix)
        doc = json.loads((tmp_path / "qp.json").read_text())
        assert doc["weights"] == [0.4, 0.6] and doc["diagnostics"]["source"] == "apg"


class TestConfigs:
    def test_sim_config_and_sweep(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"n": 50, "d0": [3], "m_candidates": 4, "sweep": [2, 3]}))
        cfg, sweep = nio.sim_config_from_dict(nio.load_json(path))
        assert cfg.n == 50 and cfg.d0 == (3,) and sweep == [2, 3]

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            nio.sim_config_from_dict({"nodes": 5})

    def test_missing_and_invalid_json(self, tmp_path):
        with pytest.raises(ConfigError):
            nio.load_json(tmp_path / "none.json")
        (tmp_path / "x.json").write_text("{")
        with pytest.raises(ConfigError):
            nio.load_json(tmp_path / "x.json")

    def test_hash_tracks_every_field(self):
        base = SimConfig(q_reps=3).to_dict()
        h = nio.config_hash(base)
        assert nio.config_hash(dict(base)) == h
        for key, value in [("n", 201), ("seed", 1), ("ratio", [8, 2]), ("debias_mode", "full")]:
            assert nio.config_hash({**base, key: value}) != h


class TestExperimentOutput:
    def test_columns(self, tmp_path):
        cfg = SimConfig(n=25, d0=(2,), avg_degree=6.0, m_candidates=2, k_folds=2, q_reps=1, max_iters=20)
        nio.write_experiment(tmp_path, [run_case(cfg)])
        lines = (tmp_path / "results.csv").read_text().splitlines()
        assert lines[0] == "case,method,n,d0,m,metric,mean,stderr"
        methods = {l.split(",")[1] for l in lines[1:]}
        assert {"oracle", "equal", "ecv", "netma", "candidate_1", "candidate_2"} <= methods
        metrics = {l.split(",")[5] for l in lines[1:]}
        assert {"auroc", "aupr", "mlogf", "mse", "relative_risk"} <= metrics
        w = (tmp_path / "weights.csv").read_text().splitlines()
        assert w[0] == "case,n,d0,m,method,candidate_dim,mean_weight" and len(w) == 1 + 3 * 2
        assert (tmp_path / "replications.csv").exists()
