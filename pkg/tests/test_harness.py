import math

import numpy as np
import pytest

from iccl import harness, regressor
from iccl.errors import InvalidArgument
from iccl.harness import ExperimentConfig, SweepRow
from iccl.train import TrainConfig


class TestRmse:
    def test_perfect(self):
        assert harness.rmse([[1, 2], [3, 4]], [[1, 2], [3, 4]]) == 0.0

    def test_three_four_five(self):
        assert harness.rmse([[3, 4]], [[0, 0]]) == pytest.approx(5.0)

    def test_zero_and_ten(self):
        assert harness.rmse([[0, 0], [10, 0]], [[0, 0], [0, 0]]) == pytest.approx(math.sqrt(50))

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgument):
            harness.rmse([[0, 0]], [[0, 0], [1, 1]])
        with pytest.raises(InvalidArgument):
            harness.rmse(np.zeros((0, 2)), np.zeros((0, 2)))


class TestConfig:
    @pytest.mark.parametrize("kw", [{"n_realizations": 0}, {"anchor_counts": ()}, {"snr_db": ()},
                                    {"n_nodes": 20}, {"anchor_counts": (2, 5)}, {"algorithms": ("knn",)}])
    def test_invariants(self, kw):
        with pytest.raises(InvalidArgument):
            ExperimentConfig(**kw)

    def test_noise_levels_decrease_with_snr(self):
        cfg = ExperimentConfig()
        powers = [cfg.noise_power(s) for s in cfg.snr_db]
        assert all(b > a for a, b in zip(powers, powers[1:]))
        assert cfg.snr_db == tuple(float(v) for v in range(40, -1, -5))

    def test_overrides(self):
        cfg = harness.with_overrides(ExperimentConfig(), n_realizations=3, train_epochs=2)
        assert cfg.n_realizations == 3 and cfg.train.epochs == 2


ROWS = [
    SweepRow("iccl", 20, -72.04119982655925, 3.5, 0.25, 100, 0.0),
    SweepRow("dfpl", 20, -72.04119982655925, 6.125, 0.5, 100, 0.0),
    SweepRow("iccl", 3, -32.04119982655925, 17.0, 1.0, 98, 0.02),
]

GOLDEN = """algorithm,m_a,noise_power_dbm,rmse_m,stderr_m,n_realizations,failure_rate
iccl,20,-72.0412,3.500000,0.250000,100,0.0000
dfpl,20,-72.0412,6.125000,0.500000,100,0.0000
iccl,3,-32.0412,17.000000,1.000000,98,0.0200
"""


class TestOutput:
    def test_golden_csv(self, tmp_path):
        path = harness.emit_results(ROWS, tmp_path / "r.csv")
        assert path.read_bytes() == GOLDEN.encode()

    def test_read_back(self, tmp_path):
        harness.emit_results(ROWS, tmp_path / "r.csv")
        back = harness.read_results(tmp_path / "r.csv")
        assert [(r.algorithm, r.m_a, r.rmse_m, r.n_realizations) for r in back] == \
            [(r.algorithm, r.m_a, r.rmse_m, r.n_realizations) for r in ROWS]

    def test_wrong_columns(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n")
        with pytest.raises(InvalidArgument):
            harness.read_results(tmp_path / "x.csv")

    def test_plot_blocks(self):
        text = harness.plot_data(ROWS, "noise")
        blocks = text.strip().split("\n\n\n")
        assert len(blocks) == 3
        assert blocks[0].splitlines()[0] == "# iccl m_a=20"
        assert blocks[0].splitlines()[2] == "-72.0412 3.500000 0.250000"
        rows = np.loadtxt(blocks[1].splitlines())
        assert rows.tolist() == [-72.0412, 6.125, 0.5]

    def test_summary_stderr(self):
        row = harness._summarize("x", 3, 0.0, [1.0, 9.0, 4.0, 16.0], 1, 5)
        mean = 7.5
        assert row.rmse_m == pytest.approx(math.sqrt(mean))
        assert row.stderr_m == pytest.approx(np.std([1, 9, 4, 16], ddof=1) / 2 / (2 * math.sqrt(mean)))
        assert row.n_realizations == 4 and row.failure_rate == pytest.approx(0.2)


@pytest.fixture(scope="module")
def tiny_setup():
    cfg = ExperimentConfig(
        n_waypoints=24, train_positions=20, pretrain_positions=20, n_nodes=25, anchor_counts=(3, 5),
        noise_anchor_count=5, snr_db=(40.0, 0.0), n_realizations=3, seed=11,
        train=TrainConfig(epochs=1, finetune_epochs=1, batch_size=64),
    )
    train, pre = harness.make_datasets(cfg)
    models = harness.prepare_models(cfg, train, pre)
    return cfg, models


class TestPipelines:
    def test_rows_cover_grid(self, tiny_setup):
        cfg, models = tiny_setup
        rows = harness.sweep_noise(cfg, models)
        assert {r.algorithm for r in rows} == set(cfg.algorithms)
        assert len(rows) == len(cfg.algorithms) * len(cfg.snr_db)
        assert all(r.rmse_m >= 0 and r.n_realizations == 3 for r in rows)
        rows = harness.sweep_anchors(cfg, models)
        assert len(rows) == 2 * 2 * 2

    def test_deterministic_and_paired(self, tiny_setup, tmp_path):
        cfg, models = tiny_setup
        a = harness.format_results(harness.sweep_noise(cfg, models))
        b = harness.format_results(harness.sweep_noise(cfg, models))
        assert a == b
        # the same realization schedule feeds every algorithm: DFPL alone reproduces its rows
        solo = harness.run_baseline_pipeline(cfg, models, "dfpl")
        together = [r for r in harness.sweep_noise(cfg, models) if r.algorithm == "dfpl"]
        assert [r.rmse_m for r in solo if r.m_a == 5] == [r.rmse_m for r in together]

    def test_worker_count_does_not_matter(self, tiny_setup):
        cfg, models = tiny_setup
        one = harness.format_results(harness.sweep_noise(cfg, models, workers=1))
        two = harness.format_results(harness.sweep_noise(cfg, models, workers=2))
        assert one == two

    def test_seed_changes_results(self, tiny_setup):
        cfg, models = tiny_setup
        other = harness.with_overrides(cfg, seed=12)
        assert harness.format_results(harness.sweep_noise(cfg, models)) != \
            harness.format_results(harness.sweep_noise(other, models))

    def test_collinear_anchors_are_counted(self, tiny_setup, monkeypatch):
        cfg, models = tiny_setup
        from iccl import multilateration
        from iccl.errors import DegenerateGeometry

        def boom(*a, **k):
            raise DegenerateGeometry("collinear")

        monkeypatch.setattr(multilateration, "locate", boom)
        rows = harness.evaluate(cfg, models, ("iccl",), (3,), (40.0,))
        assert rows[0].failure_rate == 1.0 and rows[0].n_realizations == 0 and math.isnan(rows[0].rmse_m)

    def test_missing_model(self, tiny_setup):
        cfg, _ = tiny_setup
        with pytest.raises(InvalidArgument):
            harness.evaluate(cfg, harness.Models(), ("iccl",), (3,), (40.0,))

    def test_baseline_name_check(self, tiny_setup):
        cfg, models = tiny_setup
        with pytest.raises(InvalidArgument):
            harness.run_baseline_pipeline(cfg, models, "iccl")

    def test_iccl_rows_use_trained_regressor(self, tiny_setup):
        cfg, models = tiny_setup
        assert models.iccl.kind == "iccl" and models.iccl.arch.n_waypoints == 24
        assert isinstance(regressor.fit_normalization(harness.make_datasets(cfg)[1]).target_scale, float)
