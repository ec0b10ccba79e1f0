import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from bipartite_ustat import sim
from bipartite_ustat.errors import ValidationError

MODEL_III = {"type": "named", "which": "III"}


def config(tmp_path, name="out", **kw):
    kw.setdefault("model", MODEL_III)
    kw.setdefault("output_dir", str(tmp_path / name))
    return sim.ExperimentConfig(**kw)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def tree_bytes(root):
    return {p.name: p.read_bytes() for p in sorted(Path(root).iterdir())}


class TestHelpers:
    def test_binomial_band(self):
        lo, hi = sim.binomial_band(500, 0.95)
        assert (round(lo, 4), round(hi, 4)) == (0.9309, 0.9691)
        lo, hi = sim.binomial_band(100)
        assert (round(lo, 4), round(hi, 4)) == (0.9073, 0.9927)

    def test_band_errors(self):
        with pytest.raises(ValidationError):
            sim.binomial_band(0)
        with pytest.raises(ValidationError):
            sim.binomial_band(10, 1.0)

    def test_split_size(self):
        assert sim.split_size(512, 0.5) == (256, 256)
        assert sim.split_size(100, 0.3) == (30, 70)

    def test_cell_name(self):
        assert sim.cell_name(128, 0.5, None) == "N128_rho0.5"
        assert sim.cell_name(128, 0.5, 1.5) == "N128_rho0.5_eps1.5"

    def test_replicate_seeds_distinct(self):
        seeds = {sim.replicate_seed(2024, "qq", 128, 0.5, None, k) for k in range(1000)}
        assert len(seeds) == 1000
        assert sim.replicate_seed(1, "qq", 8, 0.5, None, 0) != sim.replicate_seed(1, "coverage", 8, 0.5, None, 0)


class TestConfig:
    def test_from_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"experiment": "qq", "model": MODEL_III, "K": 5}))
        cfg = sim.ExperimentConfig.from_json(path)
        assert cfg.K == 5 and cfg.alpha == 0.95

    @pytest.mark.parametrize("doc", [
        {"experiment": "qq"},
        {"experiment": "plot", "model": MODEL_III},
        {"experiment": "qq", "model": MODEL_III, "bogus": 1},
        {"experiment": "qq", "model": MODEL_III, "K": 0},
        {"experiment": "qq", "model": MODEL_III, "rho_list": [1.0]},
        {"experiment": "qq", "model": MODEL_III, "N_list": [4]},
        {"experiment": "bench", "model": MODEL_III, "algorithms": ["Z"]},
    ])
    def test_invalid(self, doc):
        with pytest.raises(ValidationError):
            sim.ExperimentConfig.from_json(json.dumps(doc))

    def test_missing_truth(self, tmp_path):
        cfg = config(tmp_path, experiment="coverage", model={"type": "bedd", "lambda": 1}, statistic="d", K=2)
        sim.run(cfg)  # d = 0 is known for a product model
        lbm = {"type": "lbm", "alpha": [1], "beta": [1], "pi": [[0.5]], "emission": "bernoulli"}
        with pytest.raises(ValidationError):
            sim.truth_for(sim.ExperimentConfig("qq", lbm).model_for(None), "nonsense")


class TestQQ:
    def test_k_one(self, tmp_path):
        res = sim.run(config(tmp_path, experiment="qq", N_list=[40], K=1))
        (z,) = res.values()
        assert z.shape == (1,) and np.isfinite(z).all()
        rows = read_csv(tmp_path / "out" / "qq_N40_rho0.5.csv")
        assert float(rows[0]["theoretical_q"]) == 0.0

    def test_files_and_order(self, tmp_path):
        res = sim.run(config(tmp_path, experiment="qq", N_list=[30, 40], K=6))
        assert set(res) == {"N30_rho0.5", "N40_rho0.5"}
        rows = read_csv(tmp_path / "out" / "qq_N30_rho0.5.csv")
        z = [float(r["z"]) for r in rows]
        assert z == sorted(z) and sorted(int(r["replicate"]) for r in rows) == list(range(6))
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["seed"] == 2024 and "versions" in summary

    def test_degenerate_replicates_counted(self, tmp_path):
        model = {"type": "lbm", "alpha": [1], "beta": [1], "pi": [[0.0]], "emission": "poisson"}
        res = sim.run(config(tmp_path, experiment="qq", model=model, statistic="hD", N_list=[10], K=3,
                             mc_budget=1000))
        assert res["N10_rho0.5"].size == 0
        rows = read_csv(tmp_path / "out" / "qq_N10_rho0.5.csv")
        assert all(r["z"] == "nan" for r in rows)
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["degenerate_counts"] == {"N10_rho0.5": 3}

    def test_gaussian_mode_is_normal(self, tmp_path):
        res = sim.run(config(tmp_path, experiment="qq", mode="gaussian", N_list=[100], K=400))
        z = res["N100_rho0.5"]
        assert stats.kstest(z, "norm").pvalue > 0.001

    def test_deterministic_across_threads(self, tmp_path):
        a = config(tmp_path, "a", experiment="qq", N_list=[30], epsilon_list=[0.0, 1.0],
                   model={"type": "named", "which": "II"}, K=6, threads=1)
        b = config(tmp_path, "b", experiment="qq", N_list=[30], epsilon_list=[0.0, 1.0],
                   model={"type": "named", "which": "II"}, K=6, threads=8)
        sim.run(a)
        sim.run(b)
        sim.run(config(tmp_path, "c", experiment="qq", N_list=[30], epsilon_list=[0.0, 1.0],
                       model={"type": "named", "which": "II"}, K=6, threads=1))
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b") == tree_bytes(tmp_path / "c")
        assert (tmp_path / "a" / "qq_N30_rho0.5_eps1.csv").exists()


class TestCoverage:
    def test_gaussian_injection_within_band(self, tmp_path):
        (row,) = sim.run(config(tmp_path, experiment="coverage", mode="gaussian", N_list=[64], K=500))
        assert row.band_lo <= row.coverage <= row.band_hi
        assert row.degenerate_count == 0 and row.truth == 0.0

    def test_csv(self, tmp_path):
        rows = sim.run(config(tmp_path, experiment="coverage", N_list=[40], rho_list=[0.5, 0.25], K=4))
        table = read_csv(tmp_path / "out" / "coverage.csv")
        assert len(table) == 2 == len(rows)
        assert set(table[0]) >= {"N", "rho", "covered_count", "K", "coverage", "band_lo", "band_hi", "truth"}
        assert float(table[0]["truth"]) == pytest.approx(3.0)

    def test_degenerate_count_as_uncovered(self, tmp_path):
        model = {"type": "lbm", "alpha": [1], "beta": [1], "pi": [[0.0]], "emission": "poisson"}
        (row,) = sim.run(config(tmp_path, experiment="coverage", model=model, statistic="hD", N_list=[10],
                                K=3, mc_budget=1000))
        assert row.covered_count == 0 and row.degenerate_count == 3 and row.coverage == 0.0


class TestBench:
    def test_small(self, tmp_path):
        rows, runs = sim.run(config(tmp_path, experiment="bench", statistic="h1", N_list=[11], K=2, warmup=1))
        assert [r.algorithm for r in rows] == ["A", "B", "C"]
        assert all(math.isfinite(r.mean_seconds) and math.isfinite(r.estimate_mean) for r in rows)
        by = {r["algorithm"]: [] for r in runs}
        for r in runs:
            by[r["algorithm"]].append(r["estimate"])
        np.testing.assert_allclose(by["B"], by["C"], rtol=1e-9)
        assert (tmp_path / "out" / "bench.csv").exists()

    def test_cap_skip(self, tmp_path):
        rows, _ = sim.run(config(tmp_path, experiment="bench", statistic="hD", N_list=[30], K=1, warmup=0,
                                 algorithms=["A", "C"]))
        skipped = [r for r in rows if r.skipped]
        assert len(skipped) == 1 and skipped[0].algorithm == "A" and "cap" in skipped[0].skipped
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["skipped"] == [skipped[0].skipped]
