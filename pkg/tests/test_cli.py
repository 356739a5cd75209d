import json

import numpy as np
import pytest

from polyfeat import FeatureMap
from polyfeat.cli import main
from polyfeat.grouped import CoefficientTensor


@pytest.fixture
def bench_config(tmp_path):
    cfg = {"a": 2, "m": 2, "n_x": [2], "n_y": 5, "n_test": 40,
           "realizations": 1, "seed": 5, "baseline_max_iter": 10}
    path = tmp_path / "bench.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture
def diag_tensor(tmp_path):
    data = np.zeros((3, 3))
    np.fill_diagonal(data, [3.0, 2.0, 1.0])
    t = CoefficientTensor(dims=(3, 3), data=data)
    path = tmp_path / "tensor.json"
    t.save(path)
    return path


class TestBench:
    def test_minimal_run(self, bench_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["bench", "--config", str(bench_config), "--out", str(out)]) == 0
        results = (out / "results.csv").read_text().splitlines()
        assert results[0].startswith("method,a,m,n_train,realization")
        assert len(results) == 1 + 2  # header + one row per method
        quantiles = (out / "quantiles.csv").read_text().splitlines()
        assert quantiles[0] == "method,n_train,metric,q50,q90,q100"
        assert len(quantiles) == 1 + 2 * 4  # methods x metrics
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["schema-version"] == "1"
        assert manifest["config"]["seed"] == 5

    def test_missing_config(self, tmp_path):
        assert main(["bench", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 1

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"a": 2, "bogus": 1}))
        assert main(["bench", "--config", str(path), "--out", str(tmp_path / "o")]) == 1

    def test_byte_identical_rerun(self, bench_config, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["bench", "--config", str(bench_config), "--out", str(out1)]) == 0
        assert main(["bench", "--config", str(bench_config), "--out", str(out2)]) == 0
        assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()
        assert (out1 / "quantiles.csv").read_bytes() == (out2 / "quantiles.csv").read_bytes()

    def test_seed_override_changes_results(self, bench_config, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["bench", "--config", str(bench_config), "--out", str(out1)]) == 0
        assert main(["bench", "--config", str(bench_config), "--out", str(out2),
                     "--seed-override", "99"]) == 0
        assert (out1 / "results.csv").read_bytes() != (out2 / "results.csv").read_bytes()


class TestFeatures:
    def test_write_and_reload(self, tmp_path):
        cfg = tmp_path / "f.json"
        cfg.write_text(json.dumps({"a": 3, "m": 3, "n_x": 10, "seed": 1}))
        out = tmp_path / "fm.json"
        assert main(["features", "--config", str(cfg), "--out", str(out)]) == 0
        fm = FeatureMap.load(out)
        R = fm.basis.gram_matrix()
        assert np.max(np.abs(fm.G.T @ R @ fm.G - np.eye(3))) <= 1e-8

    def test_m_exceeding_dictionary_rejected(self, tmp_path):
        cfg = tmp_path / "f.json"
        cfg.write_text(json.dumps({"a": 3, "m": 45, "n_x": 10}))
        assert main(["features", "--config", str(cfg), "--out", str(tmp_path / "x.json")]) == 1

    def test_round_trip_identical(self, tmp_path):
        cfg = tmp_path / "f.json"
        cfg.write_text(json.dumps({"a": 2, "m": 2, "n_x": 5, "seed": 4}))
        out = tmp_path / "fm.json"
        assert main(["features", "--config", str(cfg), "--out", str(out)]) == 0
        fm = FeatureMap.load(out)
        again = tmp_path / "fm2.json"
        fm.save(again)
        assert out.read_bytes() == again.read_bytes()


class TestDemo:
    def test_demo_passes_and_writes_report(self, tmp_path, capsys):
        out = tmp_path / "demo.json"
        assert main(["demo-feature-rank", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["passed"] is True
        assert len(doc["entries"]) == 3
        text = capsys.readouterr().out
        assert "eps1" in text


class TestSvd2:
    def test_diagonal_tensor(self, diag_tensor, tmp_path, capsys):
        out = tmp_path / "svd.json"
        assert main(["svd2", "--tensor", str(diag_tensor), "--m", "2",
                     "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["singular_values"] == pytest.approx([3.0, 2.0])
        assert doc["tail_energy"] == pytest.approx(1.0)
        assert "singular values" in capsys.readouterr().out

    def test_m_too_large(self, diag_tensor, tmp_path):
        assert main(["svd2", "--tensor", str(diag_tensor), "--m", "4"]) == 1

    def test_missing_tensor(self, tmp_path):
        assert main(["svd2", "--tensor", str(tmp_path / "no.json"), "--m", "1"]) == 1


class TestHosvd:
    def test_rank_exceeding_dim_rejected(self, diag_tensor):
        assert main(["hosvd", "--tensor", str(diag_tensor), "--ranks", "4,1"]) == 1

    def test_wrong_rank_count_rejected(self, diag_tensor):
        assert main(["hosvd", "--tensor", str(diag_tensor), "--ranks", "1,1,1"]) == 1

    def test_valid_run(self, diag_tensor, tmp_path):
        out = tmp_path / "h.json"
        assert main(["hosvd", "--tensor", str(diag_tensor), "--ranks", "2,2",
                     "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["error"] == pytest.approx(1.0)  # dropped singular value

    def test_order3(self, tmp_path):
        rng = np.random.default_rng(0)
        t = CoefficientTensor(dims=(3, 4, 2), data=rng.standard_normal((3, 4, 2)))
        path = tmp_path / "t3.json"
        t.save(path)
        assert main(["hosvd", "--tensor", str(path), "--ranks", "2,2,2"]) == 0
        assert main(["svd2", "--tensor", str(path), "--m", "2",
                     "--left-modes", "0,1"]) == 0
