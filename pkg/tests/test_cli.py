"""End-to-end tests of the command-line pipeline and its file artifacts."""

import json
import os

import numpy as np
import pytest

from kinflow import datasets, net, sampler
from kinflow.cli import (EXIT_CHECK_FAILURE, EXIT_INVALID_CONFIG, EXIT_OK,
                         ExperimentConfig, config_hash, emit_plots, main,
                         run_pipeline)

TINY = {
    "dataset": {"kind": "dense_sparse", "n": 60, "seed": 7},
    "train": {"iterations": 40, "batch_size": 32, "seed": 1},
    "solver": {"method": "euler", "steps": 10, "m": 32, "seed": 5},
    "diagnostics": {"knn_k": 10},
}


@pytest.fixture(scope="module")
def tiny_artifacts(tmp_path_factory):
    """A tiny but complete data/model/traces tree shared across CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data.csv"
    model = root / "model.ckpt"
    traces = root / "traces"
    assert main(["gen-data", "--kind", "dense_sparse", "--n", "60",
                 "--seed", "7", "--out", str(data)]) == EXIT_OK
    assert main(["train", "--data", str(data), "--iters", "40",
                 "--batch", "32", "--seed", "1", "--out", str(model)]) == EXIT_OK
    assert main(["sample", "--model", str(model), "--solver", "euler",
                 "--steps", "10", "--m", "40", "--seed", "5",
                 "--out", str(traces)]) == EXIT_OK
    return {"root": root, "data": data, "model": model, "traces": traces}


class TestGenData:
    def test_writes_csv(self, tmp_path):
        out = tmp_path / "d.csv"
        code = main(["gen-data", "--kind", "sandwich", "--n", "50",
                     "--seed", "3", "--out", str(out)])
        assert code == EXIT_OK
        loaded = datasets.load_csv(out)
        assert loaded.n == 50 and loaded.kind == "sandwich"

    def test_invalid_n_exit_code(self, tmp_path):
        code = main(["gen-data", "--kind", "sandwich", "--n", "5",
                     "--seed", "3", "--out", str(tmp_path / "d.csv")])
        assert code == EXIT_INVALID_CONFIG


class TestTrainCommand:
    def test_checkpoint_and_loss_curve(self, tiny_artifacts):
        model = tiny_artifacts["model"]
        params = net.load_checkpoint(model)
        assert params.weights[0].shape == (18, 128)
        loss_csv = str(model).replace(".ckpt", "_loss.csv")
        lines = open(loss_csv).read().strip().splitlines()
        assert lines[0] == "iter,loss"
        assert len(lines) == 41

    def test_missing_data_file(self, tmp_path):
        code = main(["train", "--data", str(tmp_path / "nope.csv"),
                     "--iters", "1", "--out", str(tmp_path / "m.ckpt")])
        assert code == EXIT_INVALID_CONFIG


class TestSampleCommand:
    def test_trace_files(self, tiny_artifacts):
        traces = tiny_artifacts["traces"]
        rows = open(traces / "traces.csv").read().splitlines()
        assert rows[0] == "traj_id,t,x,y,power,cum_kpe"
        assert len(rows) == 1 + 40 * 11
        summary = json.loads((traces / "summary.json").read_text())
        assert len(summary["trajectories"]) == 40
        assert summary["solver"]["field"] == "neural"

    def test_efm_source_defaults_delta_cut(self, tiny_artifacts, tmp_path):
        out = tmp_path / "efm_traces"
        code = main(["sample", "--efm", str(tiny_artifacts["data"]),
                     "--solver", "midpoint", "--steps", "20", "--m", "6",
                     "--seed", "2", "--out", str(out)])
        assert code == EXIT_OK
        back = sampler.load_traces(out / "traces.csv")
        assert back[0]["t"][-1] == pytest.approx(0.999)

    def test_zero_gain_equals_unflagged(self, tiny_artifacts, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        common = ["sample", "--model", str(tiny_artifacts["model"]),
                  "--steps", "8", "--m", "5", "--seed", "4"]
        assert main(common + ["--out", str(a)]) == EXIT_OK
        assert main(common + ["--alpha0", "0", "--beta0", "0",
                              "--out", str(b)]) == EXIT_OK
        assert (a / "traces.csv").read_bytes() == (b / "traces.csv").read_bytes()
        assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


class TestDiagnoseCommand:
    def test_report_schema(self, tiny_artifacts, tmp_path):
        out = tmp_path / "report.json"
        code = main(["diagnose", "--traces", str(tiny_artifacts["traces"]),
                     "--data", str(tiny_artifacts["data"]),
                     "--k", "10", "--out", str(out)])
        assert code == EXIT_OK
        report = json.loads(out.read_text())
        for key in ("rho_knn", "rho_kde", "cliffs_delta", "mwu_u", "mwu_p",
                    "f_mem", "w2", "n", "config"):
            assert key in report
        assert report["n"] == 40
        assert report["w2"] is None  # no heldout set given


class TestVerifyTheoryCommand:
    def test_report_and_exit_code(self, tiny_artifacts, tmp_path):
        out = tmp_path / "theory.json"
        code = main(["verify-theory", "--data", str(tiny_artifacts["data"]),
                     "--eps", "0.1", "--dims", "1,2", "--atoms", "12",
                     "--out", str(out)])
        report = json.loads(out.read_text())
        assert report["linear_slopes_exact"]
        assert all(b["pass_rate"] == 1.0 for b in report["bounds"])
        assert code == EXIT_OK if report["all_passed"] else EXIT_CHECK_FAILURE
        assert report["all_passed"]


class TestKtsSweepCommand:
    def test_zero_grid_reproduces_baseline(self, tiny_artifacts, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(["kts-sweep", "--model", str(tiny_artifacts["model"]),
                     "--data", str(tiny_artifacts["data"]),
                     "--alpha0-grid", "0", "--beta0-grid", "0",
                     "--steps", "10", "--m", "8", "--out", str(out)])
        assert code == EXIT_OK
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "alpha0,beta0,w2,f_mem,kpe_early,kpe_late"
        assert len(lines) == 3  # header + baseline + the (0, 0) cell
        assert lines[1] == lines[2]

    def test_grid_rows(self, tiny_artifacts, tmp_path):
        out = tmp_path / "sweep4.csv"
        code = main(["kts-sweep", "--model", str(tiny_artifacts["model"]),
                     "--data", str(tiny_artifacts["data"]),
                     "--alpha0-grid", "0,0.02", "--beta0-grid", "0,0.02",
                     "--steps", "10", "--m", "8", "--out", str(out)])
        assert code == EXIT_OK
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 1 + 1 + 4  # header + baseline + 2x2 grid


class TestPlotCommand:
    def test_deterministic_render(self, tiny_artifacts, tmp_path):
        out1 = tmp_path / "p1"
        out2 = tmp_path / "p2"
        traces = str(tiny_artifacts["traces"] / "traces.csv")
        for out in (out1, out2):
            code = main(["plot", "--traces", traces, "--labels", "base",
                         "--data", str(tiny_artifacts["data"]),
                         "--out", str(out)])
            assert code == EXIT_OK
        for name in ("cumulative_energy.svg", "instant_power.svg",
                     "kpe_by_stratum_base.svg"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_constant_velocity_cumulative_is_linear(self, tmp_path):
        field = lambda x, t: np.array([3.0, 4.0])
        cfg = sampler.SolverConfig(steps=20, seed=0)
        trajs = sampler.sample_batch(field, 2, cfg)
        path = tmp_path / "t.csv"
        sampler.save_traces(trajs, path)
        back = sampler.load_traces(path)
        cum = back[0]["cum_kpe"]
        ts = back[0]["t"]
        assert np.allclose(cum, 12.5 * ts, rtol=1e-12)

    def test_empty_traces_invalid(self, tmp_path):
        code = main(["plot", "--traces", "", "--out", str(tmp_path / "p")])
        assert code == EXIT_INVALID_CONFIG

    def test_efm_mean_power_peaks_at_final_grid_point(self, tiny_artifacts,
                                                      tmp_path):
        # the closed-form field's 1/(1-t) factor keeps growing past the
        # concentration time, so the batch-mean power is largest on the
        # final step of the cut grid
        out = tmp_path / "efm_peak"
        assert main(["sample", "--efm", str(tiny_artifacts["data"]),
                     "--solver", "midpoint", "--steps", "50", "--m", "30",
                     "--seed", "3", "--out", str(out)]) == EXIT_OK
        back = sampler.load_traces(out / "traces.csv")
        mean_power = np.stack([tr["power"][1:] for tr in back]).mean(axis=0)
        assert int(mean_power.argmax()) == len(mean_power) - 1


class TestRunPipeline:
    def test_full_tiny_pipeline(self, tmp_path):
        cfg = ExperimentConfig.from_dict(TINY)
        outdir = tmp_path / "run"
        manifest = run_pipeline(cfg, str(outdir))
        assert set(manifest["stages"]) == {"gen", "train", "sample",
                                           "diagnose", "verify"}
        for stage in manifest["stages"].values():
            assert not stage["skipped"]
            for path in stage["outputs"].values():
                assert os.path.exists(path)
        assert (outdir / "run_manifest.json").exists()

    def test_rerun_skips_everything(self, tmp_path):
        cfg = ExperimentConfig.from_dict(TINY)
        outdir = tmp_path / "run"
        first = run_pipeline(cfg, str(outdir))
        second = run_pipeline(cfg, str(outdir))
        assert all(s["skipped"] for s in second["stages"].values())
        assert first["config_hash"] == second["config_hash"]

    def test_config_change_invalidates_downstream(self, tmp_path):
        cfg = ExperimentConfig.from_dict(TINY)
        outdir = tmp_path / "run"
        run_pipeline(cfg, str(outdir))
        changed = ExperimentConfig.from_dict(
            {**TINY, "solver": {**TINY["solver"], "seed": 9}})
        manifest = run_pipeline(changed, str(outdir))
        assert manifest["stages"]["train"]["skipped"]
        assert not manifest["stages"]["sample"]["skipped"]

    def test_lock_file_guards_directory(self, tmp_path):
        outdir = tmp_path / "run"
        outdir.mkdir()
        (outdir / ".lock").touch()
        from kinflow.cli import StageFailure
        with pytest.raises(StageFailure):
            run_pipeline(ExperimentConfig.from_dict(TINY), str(outdir))

    def test_cli_run_command(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(TINY))
        code = main(["run", "--config", str(cfg_path),
                     "--out", str(tmp_path / "out")])
        assert code == EXIT_OK

    def test_stage_failure_exit_code(self, tmp_path):
        # diagnose needs at least 30 trajectories; m=12 aborts that stage
        bad = {**TINY, "solver": {**TINY["solver"], "m": 12}}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(bad))
        code = main(["run", "--config", str(cfg_path),
                     "--out", str(tmp_path / "out")])
        assert code == 3


class TestExperimentConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig.from_dict(TINY)
        again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg
        assert config_hash(again.to_dict()) == config_hash(cfg.to_dict())

    def test_profiles(self):
        cfg = ExperimentConfig().with_profile("ci")
        assert cfg.dataset.n == 500
        assert cfg.train.iterations == 5000
        assert cfg.solver.m == 200
        full = ExperimentConfig().with_profile("full")
        assert full.train.iterations == 50_000

    def test_master_seed(self):
        cfg = ExperimentConfig().with_master_seed(100)
        assert (cfg.dataset.seed, cfg.train.seed, cfg.solver.seed) == (100, 101, 102)
